#include "eclipse/engine.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace eclipse {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEvalStream = 0xE7A1;

QABankConfig qa_config(const ModelConfig& c) {
  return {c.vocab_size, c.embed_dim, c.text_hidden, c.shared_text_encoder};
}

EncoderConfig encoder_config(const ModelConfig& c) {
  return {c.raw_dim, c.coarse_input_dims, c.fine_width, c.coarse_width, c.feat_dim, 2 * c.text_hidden};
}

CoreConfig core_config(const ModelConfig& c) {
  return {2 * c.text_hidden, c.core_hidden, c.num_answers, c.num_classes, c.t_max};
}

void check_episode(const Model& model, const Episode& ep) {
  const ModelConfig& c = model.config();
  ep.video.validate();
  if (ep.video.raw_dim() != c.raw_dim) {
    throw DimensionError("video " + ep.video.id + " has D_raw = " + std::to_string(ep.video.raw_dim()) +
                         ", model expects " + std::to_string(c.raw_dim));
  }
  if (ep.video.length() > c.t_max) {
    throw ValidationError("video " + ep.video.id + " has " + std::to_string(ep.video.length()) +
                          " frames, model.t_max is " + std::to_string(c.t_max));
  }
  if (ep.qa.answers.size() != c.num_answers || static_cast<std::size_t>(ep.qa.num_classes) != c.num_classes) {
    throw ValidationError("episode " + ep.video.id + " has " + std::to_string(ep.qa.answers.size()) + " answers / " +
                          std::to_string(ep.qa.num_classes) + " classes, model expects " +
                          std::to_string(c.num_answers) + " / " + std::to_string(c.num_classes));
  }
}

int argmax(std::span<const double> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TraceStep make_step(const StepOutput& out, int gt, int frame, Granularity g) {
  TraceStep s;
  s.frame = frame;
  s.granularity = g;
  s.p = to_vector(out.p.value());
  s.margin = margin(s.p, gt);
  s.exit_score = out.exit_score.value()[0];
  return s;
}

void finish_trace(EpisodeTrace& trace, const Episode& ep) {
  trace.video_id = ep.video.id;
  trace.gt = ep.qa.gt;
  if (!trace.steps.empty()) trace.answer = argmax(trace.steps.back().p);
  trace.correct = trace.answer == trace.gt;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 3) throw ValidationError("model.vocab_size must cover pad, unknown and at least one token");
  if (embed_dim == 0) throw ValidationError("model.embed_dim must be positive");
  if (text_hidden == 0) throw ValidationError("model.text_hidden must be positive");
  if (core_hidden == 0) throw ValidationError("model.core_hidden must be positive");
  if (t_max == 0) throw ValidationError("model.t_max must be positive");
  if (num_answers == 0) throw ValidationError("model.num_answers must be positive");
  if (num_classes < 2) throw ValidationError("model.num_classes must be at least 2");
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      init_rng_(make_rng(seed, {kInitStream})),
      qa_(params_, qa_config(config), init_rng_),
      encoders_(params_, encoder_config(config), init_rng_),
      core_(params_, core_config(config), init_rng_) {}

TrainRollout rollout_train(const Model& model, const Episode& ep, const TrainStepOptions& options, Tape& tape,
                           Rng* rng) {
  check_episode(model, ep);
  if (options.t_steps == 0) throw ValidationError("train.t_steps must be positive");
  const ReasoningCore& core = model.core();
  const int gt = ep.qa.gt;
  const std::size_t T = ep.video.length();

  const TextMemory text = model.qa().encode(tape, ep.qa);
  const Var bank = model.encoders().feature_bank(tape, ep.video);

  GlimpseState state;
  state.lstm = core.initial_state(tape);
  Granularity granularity = options.granularity.value_or(Granularity::kCoarse);
  const std::size_t first_row = static_cast<std::size_t>(granularity);
  Var frame = slice_rows(bank, first_row, first_row + 1);
  int frame_index = 0;
  JointDecision consumed;
  bool has_decision = false;

  TrainRollout out;
  std::vector<StepLossTerms> terms;
  std::vector<Var> exit_scores;
  Var prev_margin;
  for (std::size_t t = 1; t <= options.t_steps; ++t) {
    const StepOutput step = core.step(frame, text, state);
    Var m = margin(step.p, gt);
    StepLossTerms term;
    term.pred = loss_pred(step.p, gt);
    if (has_decision) {
      term.incre = loss_incre(m, prev_margin);
      term.feat = loss_feat(consumed);
    }
    terms.push_back(term);
    exit_scores.push_back(step.exit_score);
    out.trace.steps.push_back(make_step(step, gt, frame_index, granularity));
    state.margins.push_back(out.trace.steps.back().margin);
    prev_margin = m;

    if (t == options.t_steps) break;
    consumed = core.glimpse_decide(step.h, T, options.tau, rng, options.granularity);
    has_decision = true;
    frame = matmul(consumed.selection, bank);
    frame_index = static_cast<int>(consumed.frame);
    granularity = consumed.granularity;
  }

  if (options.t_steps >= 2) {
    out.labels = exit_labels(state.margins, options.mu);
  } else {
    out.labels = {{0}, options.mu};
  }
  for (std::size_t t = 0; t < terms.size(); ++t) terms[t].exit = loss_exit(exit_scores[t], out.labels.y[t]);
  out.loss = loss_total(terms, options.lambda);
  finish_trace(out.trace, ep);
  return out;
}

std::string Policy::name() const {
  switch (kind) {
    case PolicyKind::kEclipse: return "eclipse";
    case PolicyKind::kFinalStep: return "final_step";
    case PolicyKind::kCoarseOnly: return "coarse_only";
    case PolicyKind::kFineOnly: return "fine_only";
    case PolicyKind::kUniform: return "uniform_" + std::to_string(n);
    case PolicyKind::kAvgPool: return "avgpool";
    case PolicyKind::kTextOnly: return "text_only";
    case PolicyKind::kRandom: return "random";
  }
  return "unknown";
}

Policy Policy::parse(const std::string& name) {
  static const std::pair<const char*, PolicyKind> fixed[] = {
      {"eclipse", PolicyKind::kEclipse},       {"final_step", PolicyKind::kFinalStep},
      {"coarse_only", PolicyKind::kCoarseOnly}, {"fine_only", PolicyKind::kFineOnly},
      {"avgpool", PolicyKind::kAvgPool},        {"text_only", PolicyKind::kTextOnly},
      {"random", PolicyKind::kRandom}};
  for (const auto& [label, kind] : fixed) {
    if (name == label) return {kind, 0};
  }
  const std::string prefix = "uniform_";
  if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
    const std::string digits = name.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) && digits.size() < 6) {
      const auto n = static_cast<std::size_t>(std::stoul(digits));
      if (n > 0) return {PolicyKind::kUniform, n};
    }
  }
  throw ValidationError("unknown policy '" + name + "'");
}

namespace {

EpisodeTrace infer_glimpsing(const Model& model, const Episode& ep, const InferOptions& options, Rng* rng) {
  const ReasoningCore& core = model.core();
  const PolicyKind kind = options.policy.kind;
  const bool adaptive = kind != PolicyKind::kFinalStep;
  std::optional<Granularity> pinned;
  if (kind == PolicyKind::kCoarseOnly) pinned = Granularity::kCoarse;
  if (kind == PolicyKind::kFineOnly) pinned = Granularity::kFine;

  Tape tape(false);
  const TextMemory text = model.qa().encode(tape, ep.qa);
  CostLedger ledger;
  GlimpseState state;
  state.lstm = core.initial_state(tape);
  std::size_t frame_index = 0;
  Granularity granularity = pinned.value_or(Granularity::kCoarse);
  Rng* noise = options.stochastic_glimpse ? rng : nullptr;

  EpisodeTrace trace;
  for (std::size_t t = 1; t <= options.t_steps; ++t) {
    const Var frame = model.encoders().extract(tape, ep.video, frame_index, granularity, &ledger);
    const StepOutput step = core.step(frame, text, state);
    ledger.record_step();
    trace.steps.push_back(make_step(step, ep.qa.gt, static_cast<int>(frame_index), granularity));
    if (t == options.t_steps || (adaptive && trace.steps.back().exit_score > options.exit_threshold)) {
      trace.steps.back().exited = true;
      break;
    }
    const JointDecision d = core.glimpse_decide(step.h, ep.video.length(), options.tau, noise, pinned);
    frame_index = d.frame;
    granularity = d.granularity;
  }
  trace.total_cost = ledger.total(options.cost);
  return trace;
}

EpisodeTrace infer_uniform(const Model& model, const Episode& ep, const InferOptions& options) {
  const std::size_t n = options.policy.n;
  const std::size_t T = ep.video.length();
  Tape tape(false);
  const TextMemory text = model.qa().encode(tape, ep.qa);
  CostLedger ledger;
  GlimpseState state;
  state.lstm = model.core().initial_state(tape);
  EpisodeTrace trace;
  for (std::size_t k = 0; k < n; ++k) {
    const auto frame_index = static_cast<std::size_t>(std::floor((static_cast<double>(k) + 0.5) * T / n));
    const Var frame = model.encoders().extract(tape, ep.video, std::min(frame_index, T - 1), Granularity::kFine,
                                               &ledger);
    const StepOutput step = model.core().step(frame, text, state);
    ledger.record_step();
    trace.steps.push_back(make_step(step, ep.qa.gt, static_cast<int>(std::min(frame_index, T - 1)),
                                    Granularity::kFine));
  }
  trace.steps.back().exited = true;
  trace.total_cost = ledger.total(options.cost);
  return trace;
}

// One step per frame from a fresh state; the answer comes from the mean of
// the per-frame predictions.
EpisodeTrace infer_avgpool(const Model& model, const Episode& ep, const InferOptions& options) {
  Tape tape(false);
  const TextMemory text = model.qa().encode(tape, ep.qa);
  CostLedger ledger;
  EpisodeTrace trace;
  std::vector<double> mean(model.config().num_classes, 0.0);
  for (std::size_t i = 0; i < ep.video.length(); ++i) {
    GlimpseState state;
    state.lstm = model.core().initial_state(tape);
    const Var frame = model.encoders().extract(tape, ep.video, i, Granularity::kFine, &ledger);
    const StepOutput step = model.core().step(frame, text, state);
    ledger.record_step();
    trace.steps.push_back(make_step(step, ep.qa.gt, static_cast<int>(i), Granularity::kFine));
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += trace.steps.back().p[c];
  }
  for (auto& x : mean) x /= static_cast<double>(ep.video.length());
  trace.steps.back().exited = true;
  trace.total_cost = ledger.total(options.cost);
  finish_trace(trace, ep);
  trace.answer = argmax(mean);
  trace.correct = trace.answer == trace.gt;
  return trace;
}

EpisodeTrace infer_text_only(const Model& model, const Episode& ep, const InferOptions& options) {
  Tape tape(false);
  const TextMemory text = model.qa().encode(tape, ep.qa);
  CostLedger ledger;
  GlimpseState state;
  state.lstm = model.core().initial_state(tape);
  const Var blank = tape.constant(Tensor::zeros(1, 2 * model.config().text_hidden));
  EpisodeTrace trace;
  for (std::size_t t = 0; t < options.t_steps; ++t) {
    const StepOutput step = model.core().step(blank, text, state);
    ledger.record_step();
    trace.steps.push_back(make_step(step, ep.qa.gt, -1, Granularity::kCoarse));
  }
  trace.steps.back().exited = true;
  trace.total_cost = ledger.total(options.cost);
  return trace;
}

}  // namespace

EpisodeTrace rollout_infer(const Model& model, const Episode& ep, const InferOptions& options, Rng* rng) {
  check_episode(model, ep);
  options.cost.validate();
  if (options.t_steps == 0) throw ValidationError("eval.t_steps must be positive");
  EpisodeTrace trace;
  switch (options.policy.kind) {
    case PolicyKind::kEclipse:
    case PolicyKind::kFinalStep:
    case PolicyKind::kCoarseOnly:
    case PolicyKind::kFineOnly:
      trace = infer_glimpsing(model, ep, options, rng);
      break;
    case PolicyKind::kUniform:
      if (options.policy.n == 0) throw ValidationError("uniform baseline needs n > 0");
      trace = infer_uniform(model, ep, options);
      break;
    case PolicyKind::kAvgPool:
      return infer_avgpool(model, ep, options);
    case PolicyKind::kTextOnly:
      trace = infer_text_only(model, ep, options);
      break;
    case PolicyKind::kRandom: {
      if (!rng) throw ValidationError("random baseline needs an rng");
      finish_trace(trace, ep);
      trace.answer = static_cast<int>(uniform_index(*rng, model.config().num_classes));
      trace.correct = trace.answer == trace.gt;
      return trace;
    }
  }
  finish_trace(trace, ep);
  return trace;
}

Report evaluate(const Model& model, std::span<const Episode> episodes, const EvalOptions& options) {
  if (episodes.empty()) throw ValidationError("evaluation set is empty");
  Report r;
  r.policy = options.infer.policy.name();
  r.episodes = episodes.size();
  const std::size_t columns = model.config().t_max + 1;
  r.histogram.assign(options.histogram_steps, std::vector<std::size_t>(columns, 0));

  std::size_t correct = 0, steps = 0, fine = 0, extracted = 0, with_steps = 0;
  double cost = 0.0, gain = 0.0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    Rng rng = make_rng(options.seed, {kEvalStream, i});
    EpisodeTrace trace = rollout_infer(model, episodes[i], options.infer, &rng);
    correct += trace.correct;
    cost += trace.total_cost;
    steps += trace.steps_used();
    for (std::size_t s = 0; s < options.histogram_steps; ++s) {
      const bool has = s < trace.steps.size() && trace.steps[s].extracted();
      ++r.histogram[s][has ? static_cast<std::size_t>(trace.steps[s].frame) : columns - 1];
    }
    for (const auto& st : trace.steps) {
      if (!st.extracted()) continue;
      ++extracted;
      fine += st.granularity == Granularity::kFine;
    }
    if (!trace.steps.empty()) {
      gain += trace.steps.back().margin - trace.steps.front().margin;
      ++with_steps;
    }
    if (options.keep_traces) r.traces.push_back(std::move(trace));
  }
  const auto n = static_cast<double>(episodes.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_cost = cost / n;
  r.mean_steps = static_cast<double>(steps) / n;
  r.fine_usage_rate = extracted ? static_cast<double>(fine) / static_cast<double>(extracted) : 0.0;
  r.mean_margin_gain = with_steps ? gain / static_cast<double>(with_steps) : 0.0;
  return r;
}

std::string report_json(const Report& r) {
  nlohmann::ordered_json j = {{"policy", r.policy},
                              {"episodes", r.episodes},
                              {"accuracy", r.accuracy},
                              {"mean_cost", r.mean_cost},
                              {"mean_steps", r.mean_steps},
                              {"fine_usage_rate", r.fine_usage_rate},
                              {"mean_margin_gain", r.mean_margin_gain},
                              {"histogram", r.histogram}};
  return j.dump(2) + "\n";
}

std::string report_csv_header() {
  return "policy,episodes,accuracy,mean_cost,mean_steps,fine_usage_rate,mean_margin_gain\n";
}

std::string report_csv_row(const Report& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.policy << ',' << r.episodes << ',' << r.accuracy << ',' << r.mean_cost << ',' << r.mean_steps << ','
     << r.fine_usage_rate << ',' << r.mean_margin_gain << '\n';
  return os.str();
}

std::string histogram_csv(const Report& r) {
  std::ostringstream os;
  os << "step";
  const std::size_t columns = r.histogram.empty() ? 0 : r.histogram.front().size();
  for (std::size_t i = 0; i + 1 < columns; ++i) os << ",f" << i;
  os << ",none\n";
  for (std::size_t s = 0; s < r.histogram.size(); ++s) {
    os << s + 1;
    for (std::size_t c : r.histogram[s]) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

std::string trace_log(std::span<const EpisodeTrace> traces) {
  std::string out;
  for (const auto& tr : traces) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& s : tr.steps) {
      steps.push_back({{"frame", s.frame},
                       {"granularity", granularity_name(s.granularity)},
                       {"p", s.p},
                       {"margin", s.margin},
                       {"exit_score", s.exit_score},
                       {"exited", s.exited}});
    }
    nlohmann::ordered_json j = {{"video_id", tr.video_id}, {"steps", steps}, {"cost", tr.total_cost},
                                {"answer", tr.answer},     {"gt", tr.gt},    {"correct", tr.correct}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace eclipse
