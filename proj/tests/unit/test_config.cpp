#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "eclipse/config.hpp"

using namespace eclipse;

namespace {

std::string error_key(const ConfigMap& map) {
  try {
    build_run_config(map);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, DefaultsValidateAndListEveryBaseline) {
  const RunConfig c = build_run_config({});
  EXPECT_EQ(c.synth.t_min, 20u);
  EXPECT_EQ(c.train.adam.lr, 3e-4);
  EXPECT_EQ(c.eval.cost.fine, 7.8);
  EXPECT_EQ(c.eval.cost.coarse, 0.3);
  EXPECT_EQ(c.eval.cost.overhead, 0.01);
  std::vector<std::string> names;
  for (const auto& p : c.ablate_policies) names.push_back(p.name());
  for (const char* want : {"eclipse", "final_step", "coarse_only", "fine_only", "uniform_1", "avgpool", "text_only",
                           "random"}) {
    EXPECT_EQ(std::count(names.begin(), names.end(), want), 1) << want;
  }
}

TEST(Config, ParsesCommentsWhitespaceAndLastAssignmentWins) {
  const ConfigMap map = parse_config_text("# header\n  train.lr = 0.001  # inline\n\ntrain.lr=0.002\nsynth.rho = 1\n", "t");
  const RunConfig c = build_run_config(map);
  EXPECT_EQ(c.train.adam.lr, 0.002);
  EXPECT_EQ(c.synth.rho, 1.0);
}

TEST(Config, OverridesBeatFileValues) {
  ConfigMap map = parse_config_text("train.epochs = 10\n", "t");
  apply_overrides(map, {"train.epochs=3", "eval.policy = uniform_2"});
  const RunConfig c = build_run_config(map);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.eval.policy.name(), "uniform_2");
  EXPECT_THROW(apply_overrides(map, {"novalue"}), ConfigError);
}

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(error_key({{"synth.bogus", "1"}}), "synth.bogus");
  EXPECT_EQ(error_key({{"train.lr", "fast"}}), "train.lr");
  EXPECT_EQ(error_key({{"train.epochs", "-3"}}), "train.epochs");
  EXPECT_EQ(error_key({{"model.shared_text_encoder", "maybe"}}), "model.shared_text_encoder");
  EXPECT_EQ(error_key({{"synth.rho", "1.5"}}), "synth.rho");
  EXPECT_EQ(error_key({{"synth.evidence", "30"}}), "synth.evidence");
  EXPECT_EQ(error_key({{"synth.setting", "open"}}), "synth.setting");
  EXPECT_EQ(error_key({{"eval.policy", "uniform_0"}}), "eval.policy");
  EXPECT_EQ(error_key({{"eval.exit_threshold", "2"}}), "eval.exit_threshold");
  EXPECT_EQ(error_key({{"ablate.policies", "eclipse,eclipse"}}), "ablate.policies");
  EXPECT_EQ(error_key({{"cost.fine", "-1"}}), "cost.fine");
  EXPECT_EQ(error_key({{"train.tau_init", "0"}}), "train.tau_init");
}

TEST(Config, MalformedLinesAndMissingFilesAreConfigErrors) {
  EXPECT_THROW(parse_config_text("train.lr 0.1\n", "t"), ConfigError);
  EXPECT_THROW(parse_config_text("= 3\n", "t"), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/eclipse.cfg"), ConfigError);
}

TEST(Config, RenderParsesBackToTheSameConfig) {
  ConfigMap map;
  apply_overrides(map, {"train.lr=0.000123456789", "synth.setting=binary", "synth.rho_mode=bernoulli",
                        "ablate.policies=random,uniform_4", "run.out_dir=out/x", "cost.fine=7.7"});
  const RunConfig a = build_run_config(map);
  const std::string text = render_config(a);
  const RunConfig b = build_run_config(parse_config_text(text, "rendered"));
  EXPECT_EQ(render_config(b), text);
  EXPECT_EQ(b.train.adam.lr, 0.000123456789);
  EXPECT_EQ(b.synth.setting, Setting::kBinary);
  EXPECT_EQ(b.ablate_policies.size(), 2u);
  EXPECT_EQ(config_keys().size(), static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(Config, ResolvedModelFollowsTheTask) {
  ConfigMap map;
  apply_overrides(map, {"synth.t_max=30", "synth.raw_dim=24", "synth.coarse_dims=8", "synth.setting=binary",
                        "train.t_steps=4", "train.seed=9"});
  const RunConfig c = build_run_config(map);
  const ModelConfig m = c.resolved_model();
  EXPECT_EQ(m.t_max, 30u);
  EXPECT_EQ(m.raw_dim, 24u);
  EXPECT_EQ(m.coarse_input_dims, 8u);
  EXPECT_EQ(m.num_answers, 1u);
  EXPECT_EQ(m.num_classes, 2u);
  EXPECT_EQ(m.vocab_size, synth_vocab(c.synth).size());
  EXPECT_EQ(c.eval_options().infer.t_steps, 4u);
  EXPECT_EQ(c.eval_options().seed, 9u);
}
