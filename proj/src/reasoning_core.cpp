#include "eclipse/reasoning_core.hpp"

#include <cmath>

namespace eclipse {

void CoreConfig::validate() const {
  if (text_dim == 0 || hidden == 0) throw ValidationError("core dimensions must be positive");
  if (num_answers == 0) throw ValidationError("core needs at least one fused answer");
  if (num_classes < 2) throw ValidationError("core needs at least two classes");
  if (t_max == 0) throw ValidationError("model.t_max must be positive");
}

JointDecision joint_gumbel_softmax(Var logits, double tau, Rng* rng) {
  if (!(tau > 0.0)) throw ParameterError("Gumbel-Softmax temperature must be positive, got " + std::to_string(tau));
  Tape& tape = *logits.tape;
  const std::size_t cells = logits.value().cols();
  if (logits.value().rows() != 1 || cells < 2 || cells % 2 != 0) {
    throw DimensionError("joint decision logits must be 1 x 2T, got " + shape_string(logits.value().shape()));
  }
  JointDecision d;
  d.logits = logits;
  d.pi = softmax(logits);
  Var log_pi = log_softmax(logits);

  Tensor noise = Tensor::zeros(1, cells);
  if (rng) {
    for (auto& g : noise.values()) g = -std::log(-std::log(uniform_open01(*rng)));
  }
  const Tensor& lp = log_pi.value();
  d.perturbed.resize(cells);
  std::size_t best = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    d.perturbed[i] = lp[i] + noise[i];
    if (d.perturbed[i] > d.perturbed[best]) best = i;
  }
  d.frame = best / 2;
  d.granularity = static_cast<Granularity>(best % 2);

  d.soft = softmax(scale(add(log_pi, tape.constant(std::move(noise))), 1.0 / tau));
  Tensor hard = Tensor::zeros(1, cells);
  hard[best] = 1.0;
  d.selection = straight_through(std::move(hard), d.soft);

  Tensor fine_mask = Tensor::zeros(1, cells);
  for (std::size_t i = 1; i < cells; i += 2) fine_mask[i] = 1.0;
  d.fine_mass = sum(mul(d.soft, tape.constant(std::move(fine_mask))));
  return d;
}

ReasoningCore::ReasoningCore(ParameterSet& params, const CoreConfig& config, Rng& rng) : config_(config) {
  config.validate();
  lstm_ = LstmCellParams(params, "core.lstm", config.num_answers * config.fused_dim(), config.hidden, rng);
  predict_ = Linear(params, "core.predict", config.hidden, config.num_classes, rng);
  glimpse_ = Linear(params, "core.glimpse", config.hidden, 2 * config.t_max, rng);
  exit_ = Linear(params, "core.exit", config.hidden, 1, rng);
}

Var ReasoningCore::context_query_fuse(Var frame, Var hq, Var ha) const {
  const Tensor& i = frame.value();
  if (i.rows() != 1 || i.cols() != hq.value().cols() || i.cols() != ha.value().cols()) {
    throw DimensionError("context_query_fuse: frame feature " + shape_string(i.shape()) +
                         " does not match text rows " + shape_string(hq.value().shape()) + " / " +
                         shape_string(ha.value().shape()));
  }
  auto attend = [&](Var text) {
    Var alpha = softmax(matmul(frame, transpose(text)));
    return matmul(alpha, text);
  };
  Var fq = attend(hq);
  Var fa = attend(ha);
  return concat({frame, fq, fa, mul(frame, fq), mul(frame, fa)}, 1);
}

Var ReasoningCore::fuse_all(Var frame, const TextMemory& text) const {
  if (text.ha.size() != config_.num_answers) {
    throw DimensionError("model fuses " + std::to_string(config_.num_answers) + " answers, instance has " +
                         std::to_string(text.ha.size()));
  }
  std::vector<Var> blocks;
  blocks.reserve(text.ha.size());
  for (Var ha : text.ha) blocks.push_back(context_query_fuse(frame, text.hq, ha));
  return blocks.size() == 1 ? blocks.front() : concat(blocks, 1);
}

LstmState ReasoningCore::interaction_step(Var v, const LstmState& prev) const { return lstm_step(lstm_, v, prev); }

Var ReasoningCore::predict(Var h) const { return softmax(predict_.forward(*h.tape, h)); }

Var ReasoningCore::exit_score(Var h) const { return sigmoid(exit_.forward(*h.tape, h)); }

Var ReasoningCore::glimpse_logits(Var h, std::size_t length) const {
  if (length == 0) throw ValidationError("glimpse over an empty video");
  if (length > config_.t_max) {
    throw ValidationError("video has " + std::to_string(length) + " frames but the glimpse head addresses only " +
                          std::to_string(config_.t_max));
  }
  Var z = glimpse_.forward(*h.tape, h);
  return length == config_.t_max ? z : slice_cols(z, 0, 2 * length);
}

JointDecision ReasoningCore::glimpse_decide(Var h, std::size_t length, double tau, Rng* rng,
                                           std::optional<Granularity> only) const {
  Var z = glimpse_logits(h, length);
  if (only) {
    // A large finite penalty instead of -inf keeps every value on the tape finite.
    Tensor mask = Tensor::zeros(1, 2 * length);
    const std::size_t off = *only == Granularity::kFine ? 0 : 1;
    for (std::size_t i = off; i < 2 * length; i += 2) mask[i] = -1e9;
    z = add(z, h.tape->constant(std::move(mask)));
  }
  return joint_gumbel_softmax(z, tau, rng);
}

StepOutput ReasoningCore::step(Var frame, const TextMemory& text, GlimpseState& state) const {
  Var v = fuse_all(frame, text);
  state.lstm = interaction_step(v, state.lstm);
  ++state.t;
  return {predict(state.lstm.h), exit_score(state.lstm.h), state.lstm.h};
}

}  // namespace eclipse
