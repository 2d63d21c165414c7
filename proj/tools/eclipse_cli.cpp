#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eclipse/config.hpp"
#include "eclipse/engine.hpp"
#include "eclipse/io.hpp"
#include "eclipse/synthtask.hpp"
#include "eclipse/trainer.hpp"

namespace fs = std::filesystem;
using namespace eclipse;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kNumerics = 3, kIo = 4 };

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string seed;
};

struct Splits {
  SynthDataset train, val, test;
};

RunConfig resolve_config(const CommonArgs& args) {
  ConfigMap map;
  if (!args.config_path.empty()) map = load_config_file(args.config_path);
  apply_overrides(map, args.overrides);
  if (!args.seed.empty()) map["train.seed"] = args.seed;
  RunConfig config = build_run_config(map);
  if (!args.out_dir.empty()) {
    config.out_dir = args.out_dir;
  } else if (const char* env = std::getenv("ECLIPSE_OUTPUT_DIR"); env && *env) {
    config.out_dir = env;
  }
  return config;
}

SynthDataset make_split(const RunConfig& c, const std::string& name, std::size_t first, std::size_t count) {
  SynthDataset d;
  d.spec = c.synth;
  d.seed = c.data_seed;
  d.split = name;
  d.episodes = generate(c.synth, c.data_seed, count, first);
  return d;
}

// Splits come from disjoint index ranges of one seeded generator.
Splits generate_splits(const RunConfig& c) {
  const SynthSpec& s = c.synth;
  return {make_split(c, "train", 0, s.train_size), make_split(c, "val", s.train_size, s.val_size),
          make_split(c, "test", s.train_size + s.val_size, s.test_size)};
}

SynthDataset load_split(const RunConfig& c, const fs::path& dir, const std::string& name) {
  SynthDataset d = read_dataset(dir / (name + ".bin"));
  if (d.spec.to_json() != c.synth.to_json()) {
    throw ConfigError("synth", "dataset " + (dir / (name + ".bin")).string() +
                                   " was generated with a different synth.* configuration");
  }
  return d;
}

Splits obtain_splits(const RunConfig& c, const std::string& data_dir) {
  if (data_dir.empty()) return generate_splits(c);
  return {load_split(c, data_dir, "train"), load_split(c, data_dir, "val"), load_split(c, data_dir, "test")};
}

void print_split_summary(const SynthDataset& d) {
  std::size_t frames = 0, fine = 0, slots = 0;
  std::size_t t_lo = SIZE_MAX, t_hi = 0;
  std::vector<std::size_t> gt(d.spec.setting == Setting::kBinary ? 2 : d.spec.num_answers, 0);
  for (const auto& ep : d.episodes) {
    const std::size_t T = ep.episode.video.length();
    frames += T;
    t_lo = std::min(t_lo, T);
    t_hi = std::max(t_hi, T);
    ++gt[static_cast<std::size_t>(ep.episode.qa.gt)];
    for (int f : ep.latent.fine_only) fine += static_cast<std::size_t>(f);
    slots += ep.latent.fine_only.size();
  }
  std::printf("%-5s episodes=%zu", d.split.c_str(), d.episodes.size());
  if (d.episodes.empty()) {
    std::printf("\n");
    return;
  }
  std::printf(" T=[%zu,%zu] mean_T=%.2f fine_only_evidence=%.3f gt_histogram=", t_lo, t_hi,
              static_cast<double>(frames) / static_cast<double>(d.episodes.size()),
              slots ? static_cast<double>(fine) / static_cast<double>(slots) : 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i) std::printf("%s%zu", i ? "/" : "", gt[i]);
  std::printf("\n");
}

void write_report_files(const fs::path& dir, const Report& r) {
  write_file_atomic(dir / "metrics.json", report_json(r));
  write_file_atomic(dir / "metrics.csv", report_csv_header() + report_csv_row(r));
  write_file_atomic(dir / "histogram.csv", histogram_csv(r));
  write_file_atomic(dir / "traces.jsonl", trace_log(r.traces));
}

void print_report_line(const Report& r) {
  std::printf("%-12s accuracy=%.4f mean_cost=%.4f mean_steps=%.3f fine_usage=%.3f margin_gain=%.4f\n",
              r.policy.c_str(), r.accuracy, r.mean_cost, r.mean_steps, r.fine_usage_rate, r.mean_margin_gain);
}

void train_model(Model& model, const RunConfig& c, const Splits& s, const fs::path& out, const std::string& resume) {
  const auto train = s.train.plain();
  const auto val = s.val.plain();
  Trainer trainer(model, c.train, train, val, c.eval_options());
  if (!resume.empty()) trainer.resume(resume);
  trainer.fit(out, [](const EpochLog& e) {
    std::printf("epoch %3zu tau=%.4f loss=%.4f pred=%.4f exit=%.4f incre=%.4f feat=%.4f train_acc=%.4f val_acc=%.4f\n",
                e.epoch, e.tau, e.loss.total, e.loss.pred, e.loss.exit, e.loss.incre, e.loss.feat, e.train_accuracy,
                e.val_accuracy);
    std::fflush(stdout);
  });
  std::printf("best val accuracy %.4f; checkpoints in %s\n", trainer.best_val_accuracy(), out.string().c_str());
}

int cmd_gen(const RunConfig& c) {
  const fs::path out = fs::path(c.out_dir) / "data";
  const Splits s = generate_splits(c);
  fs::create_directories(out);
  for (const SynthDataset* d : {&s.train, &s.val, &s.test}) {
    write_dataset(out / (d->split + ".bin"), *d);
    print_split_summary(*d);
  }
  write_file_atomic(fs::path(c.out_dir) / "config.cfg", render_config(c));
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int cmd_train(const RunConfig& c, const std::string& data_dir, const std::string& resume) {
  const Splits s = obtain_splits(c, data_dir);
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  write_file_atomic(out / "config.cfg", render_config(c));
  Model model(c.resolved_model(), c.train.seed);
  train_model(model, c, s, out, resume);
  return kOk;
}

int cmd_eval(const RunConfig& c, const std::string& data_dir, const std::string& checkpoint,
             const std::string& split) {
  const Splits s = obtain_splits(c, data_dir);
  const SynthDataset& d = split == "train" ? s.train : split == "val" ? s.val : s.test;
  Model model(c.resolved_model(), c.train.seed);
  load_checkpoint(checkpoint, model.params());
  const auto episodes = d.plain();
  const Report r = evaluate(model, episodes, c.eval_options());
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  write_report_files(out, r);
  print_report_line(r);
  return kOk;
}

int cmd_ablate(const RunConfig& c, const std::string& data_dir, const std::string& checkpoint) {
  const Splits s = obtain_splits(c, data_dir);
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  write_file_atomic(out / "config.cfg", render_config(c));
  Model model(c.resolved_model(), c.train.seed);
  if (checkpoint.empty()) {
    train_model(model, c, s, out, "");
    load_checkpoint(out / "best.ckpt", model.params());
  } else {
    load_checkpoint(checkpoint, model.params());
  }
  const bool retrain = checkpoint.empty() && c.ablate_retrain_granularity;
  const auto episodes = s.test.plain();
  std::string csv = report_csv_header();
  std::string json = "[\n";
  for (std::size_t i = 0; i < c.ablate_policies.size(); ++i) {
    const Policy& policy = c.ablate_policies[i];
    EvalOptions o = c.eval_options();
    o.infer.policy = policy;
    const bool pinned = policy.kind == PolicyKind::kCoarseOnly || policy.kind == PolicyKind::kFineOnly;
    Report r;
    if (retrain && pinned) {
      RunConfig pc = c;
      pc.train.granularity = policy.kind == PolicyKind::kFineOnly ? Granularity::kFine : Granularity::kCoarse;
      const fs::path dir = out / policy.name();
      fs::create_directories(dir);
      std::printf("training the %s model\n", policy.name().c_str());
      Model pinned_model(pc.resolved_model(), pc.train.seed);
      train_model(pinned_model, pc, s, dir, "");
      load_checkpoint(dir / "best.ckpt", pinned_model.params());
      r = evaluate(pinned_model, episodes, o);
    } else {
      r = evaluate(model, episodes, o);
    }
    csv += report_csv_row(r);
    json += report_json(r) + (i + 1 < c.ablate_policies.size() ? ",\n" : "");
    if (policy.kind == PolicyKind::kEclipse) write_file_atomic(out / "histogram.csv", histogram_csv(r));
    print_report_line(r);
  }
  write_file_atomic(out / "ablation.csv", csv);
  write_file_atomic(out / "ablation.json", json + "]\n");
  return kOk;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(read_file(path));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
  std::string md;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    md += "|";
    for (const auto& cell : rows[r]) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (r > 0 && end && *end == '\0' && !cell.empty() && cell.find('.') != std::string::npos) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        md += " " + std::string(buf) + " |";
      } else {
        md += " " + cell + " |";
      }
    }
    md += "\n";
    if (r == 0) {
      md += "|";
      for (std::size_t i = 0; i < rows[r].size(); ++i) md += "---|";
      md += "\n";
    }
  }
  return md;
}

int cmd_report(const RunConfig& c, const std::string& in_dir) {
  const fs::path dir = in_dir.empty() ? fs::path(c.out_dir) : fs::path(in_dir);
  std::string md;
  bool any = false;
  if (fs::exists(dir / "ablation.csv")) {
    md += "## Ablation\n\n" + markdown_table(read_csv(dir / "ablation.csv")) + "\n";
    any = true;
  } else if (fs::exists(dir / "metrics.csv")) {
    md += "## Evaluation\n\n" + markdown_table(read_csv(dir / "metrics.csv")) + "\n";
    any = true;
  }
  if (fs::exists(dir / "train_log.csv")) {
    const auto rows = read_csv(dir / "train_log.csv");
    md += "## Training\n\n" + std::to_string(rows.size() - 1) + " epochs logged";
    if (rows.size() > 1) md += "; last row:\n\n" + markdown_table({rows.front(), rows.back()});
    md += "\n";
    any = true;
  }
  if (fs::exists(dir / "histogram.csv")) {
    md += "## Frame-location histogram (steps 1-3)\n\nSee histogram.csv.\n";
  }
  if (!any) throw IoError("no ablation.csv, metrics.csv or train_log.csv in " + dir.string());
  write_file_atomic(dir / "report.md", md);
  std::cout << md;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive frame-glimpse video QA workbench"};
  app.require_subcommand(1);
  CommonArgs common;
  std::string data_dir, checkpoint, resume, split = "test", in_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "config file (key = value lines)");
    sub->add_option("-s,--set", common.overrides, "override, key=value (repeatable)");
    sub->add_option("-o,--out", common.out_dir, "output directory (beats ECLIPSE_OUTPUT_DIR and run.out_dir)");
    sub->add_option("--seed", common.seed, "training / model seed (sets train.seed)");
  };
  CLI::App* gen = app.add_subcommand("gen", "generate synthetic train/val/test datasets");
  CLI::App* train = app.add_subcommand("train", "train a model; writes checkpoints and train_log.csv");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint with eval.policy");
  CLI::App* ablate = app.add_subcommand("ablate", "evaluate every ablate.policies row on one trained model");
  CLI::App* report = app.add_subcommand("report", "summarise an output directory as report.md");
  for (CLI::App* sub : {gen, train, eval, ablate, report}) add_common(sub);
  for (CLI::App* sub : {train, eval, ablate}) sub->add_option("--data", data_dir, "dataset directory from `gen`");
  train->add_option("--resume", resume, "resume from a last.ckpt");
  eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ablate->add_option("--checkpoint", checkpoint, "skip training and use this checkpoint");
  report->add_option("--in", in_dir, "directory to summarise (default: the output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const RunConfig config = resolve_config(common);
    if (gen->parsed()) return cmd_gen(config);
    if (train->parsed()) return cmd_train(config, data_dir, resume);
    if (eval->parsed()) return cmd_eval(config, data_dir, checkpoint, split);
    if (ablate->parsed()) return cmd_ablate(config, data_dir, checkpoint);
    return cmd_report(config, in_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericsError& e) {
    std::cerr << "numerics failure: " << e.what() << "\n";
    return kNumerics;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
