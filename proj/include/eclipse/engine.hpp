#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eclipse/episode.hpp"
#include "eclipse/frame_encoders.hpp"
#include "eclipse/objectives.hpp"
#include "eclipse/qa_bank.hpp"
#include "eclipse/reasoning_core.hpp"

namespace eclipse {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t text_hidden = 8;  // d; every feature row is 2d wide
  std::size_t core_hidden = 48;
  std::size_t raw_dim = 32;
  std::size_t coarse_input_dims = 16;
  std::size_t fine_width = 64;
  std::size_t coarse_width = 16;
  std::size_t feat_dim = 32;
  std::size_t t_max = 40;
  std::size_t num_answers = 4;  // answers fused per question (1 in the binary setting)
  std::size_t num_classes = 4;
  bool shared_text_encoder = true;

  void validate() const;
};

// All trainable modules over one parameter set. Modules hold pointers into
// the set, so a model is neither copyable nor movable.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const QABank& qa() const { return qa_; }
  const EncoderPair& encoders() const { return encoders_; }
  const ReasoningCore& core() const { return core_; }

 private:
  ModelConfig config_;
  ParameterSet params_;
  Rng init_rng_;
  QABank qa_;
  EncoderPair encoders_;
  ReasoningCore core_;
};

struct TrainStepOptions {
  std::size_t t_steps = 5;
  double tau = 5.0;
  double lambda = 0.01;
  double mu = 0.1;
  std::optional<Granularity> granularity;  // pins every observation, the first one included
};

struct TrainRollout {
  LossGraph loss;
  EpisodeTrace trace;  // p_t, margins and decisions of the fixed-length rollout
  ExitLabels labels;
};

// Fixed-length rollout over the pre-encoded feature bank. With a null rng the
// glimpse decisions are noise-free.
TrainRollout rollout_train(const Model& model, const Episode& episode, const TrainStepOptions& options, Tape& tape,
                           Rng* rng);

enum class PolicyKind { kEclipse, kFinalStep, kCoarseOnly, kFineOnly, kUniform, kAvgPool, kTextOnly, kRandom };

struct Policy {
  PolicyKind kind = PolicyKind::kEclipse;
  std::size_t n = 0;  // frame count of kUniform

  std::string name() const;
  // "eclipse", "final_step", "coarse_only", "fine_only", "uniform_<n>",
  // "avgpool", "text_only" or "random".
  static Policy parse(const std::string& name);
  bool operator==(const Policy&) const = default;
};

struct InferOptions {
  Policy policy;
  std::size_t t_steps = 5;
  double exit_threshold = 0.5;
  bool stochastic_glimpse = false;
  double tau = 0.05;  // only used for stochastic glimpses
  CostModel cost;
};

// Inference rollout with lazy extraction and online cost accounting. The rng
// feeds stochastic glimpses and the random baseline; it may be null otherwise.
EpisodeTrace rollout_infer(const Model& model, const Episode& episode, const InferOptions& options, Rng* rng);

struct EvalOptions {
  InferOptions infer;
  std::uint64_t seed = 0;
  std::size_t histogram_steps = 3;
  bool keep_traces = true;
};

struct Report {
  std::string policy;
  std::size_t episodes = 0;
  double accuracy = 0.0;
  double mean_cost = 0.0;
  double mean_steps = 0.0;
  double fine_usage_rate = 0.0;   // fine extractions / all extractions
  double mean_margin_gain = 0.0;  // mean of m_last - m_1 over episodes with a step
  // histogram[s][i]: episodes whose step s+1 used frame i; the final column
  // counts episodes that had no extracted frame at that step.
  std::vector<std::vector<std::size_t>> histogram;
  std::vector<EpisodeTrace> traces;
};

Report evaluate(const Model& model, std::span<const Episode> episodes, const EvalOptions& options);

std::string report_json(const Report& report);
std::string report_csv_header();
std::string report_csv_row(const Report& report);
std::string histogram_csv(const Report& report);
// One JSON object per line: video id, per-step tuples, cost, answer, correctness.
std::string trace_log(std::span<const EpisodeTrace> traces);

}  // namespace eclipse
