#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "eclipse/engine.hpp"
#include "eclipse/synthtask.hpp"
#include "eclipse/trainer.hpp"

namespace eclipse {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument(key.empty() ? message : key + ": " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Everything one experiment needs. Model shape fields that follow from the
// task (vocabulary, answers, classes, t_max, raw dims) are derived.
struct RunConfig {
  SynthSpec synth;
  std::uint64_t data_seed = 1;
  ModelConfig model;
  TrainConfig train;
  InferOptions eval;
  std::vector<Policy> ablate_policies;
  // coarse_only / fine_only rows get their own model trained with that granularity pinned.
  bool ablate_retrain_granularity = true;
  std::string out_dir = "runs/default";

  ModelConfig resolved_model() const;
  EvalOptions eval_options() const;
  void validate() const;
};

// Flat "key = value" lines; '#' starts a comment. Later assignments win.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text, const std::string& source);
ConfigMap load_config_file(const std::filesystem::path& path);
// "key=value" strings, as given on the command line.
void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides);

// Starts from the defaults, applies every entry and validates. Unknown keys
// and unparsable values raise ConfigError naming the key.
RunConfig build_run_config(const ConfigMap& map);

// Canonical text of a resolved config; parsing it back yields the same config.
std::string render_config(const RunConfig& config);

// Every key the parser accepts, in canonical order.
std::vector<std::string> config_keys();

}  // namespace eclipse
