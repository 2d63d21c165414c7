#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "eclipse/autodiff.hpp"
#include "eclipse/layers.hpp"
#include "eclipse/qa_bank.hpp"
#include "eclipse/rng.hpp"
#include "eclipse/trace.hpp"

namespace eclipse {

struct CoreConfig {
  std::size_t text_dim = 300;  // 2d
  std::size_t hidden = 300;    // interaction LSTM size
  std::size_t num_answers = 4;  // fused answer blocks
  std::size_t num_classes = 4;  // prediction head outputs
  std::size_t t_max = 40;       // frames addressable by the glimpse head

  std::size_t fused_dim() const { return 5 * text_dim; }
  void validate() const;
};

// One draw of the joint (frame, granularity) categorical. Cells are laid out
// frame-major: cell 2i + g is frame i at granularity g.
struct JointDecision {
  Var logits;     // 1 x 2T
  Var pi;         // softmax of the logits
  Var soft;       // relaxed sample: softmax((log pi + gumbel) / tau)
  Var selection;  // hard one-hot in the forward pass, gradient routed to `soft`
  Var fine_mass;  // sum of `soft` over the fine column
  std::vector<double> perturbed;  // log pi + gumbel noise, per cell
  std::size_t frame = 0;
  Granularity granularity = Granularity::kCoarse;

  std::size_t cell() const { return 2 * frame + static_cast<std::size_t>(granularity); }
};

// Samples the joint Gumbel-Softmax decision from 1 x 2T logits. With a null rng
// the noise is omitted and the hard choice is the argmax of pi.
JointDecision joint_gumbel_softmax(Var logits, double tau, Rng* rng);

struct GlimpseState {
  std::size_t t = 0;  // steps completed
  LstmState lstm;
  std::size_t current_frame = 0;
  Granularity current_granularity = Granularity::kCoarse;
  std::vector<double> margins;
};

struct StepOutput {
  Var p;
  Var exit_score;
  Var h;
};

class ReasoningCore {
 public:
  ReasoningCore(ParameterSet& params, const CoreConfig& config, Rng& rng);

  // [I; F_q; F_a; I*F_q; I*F_a] with F = softmax(I . H_j) weighted rows of H.
  Var context_query_fuse(Var frame, Var hq, Var ha) const;
  // Concatenation of the per-answer fusions, 1 x (N * 10d).
  Var fuse_all(Var frame, const TextMemory& text) const;
  LstmState interaction_step(Var v, const LstmState& prev) const;
  Var predict(Var h) const;
  Var exit_score(Var h) const;
  // Logits over the first `length` frames (cells beyond the video are dropped,
  // which is the same as masking them to -inf before the softmax).
  Var glimpse_logits(Var h, std::size_t length) const;
  // With `only` set, cells of the other granularity are masked out.
  JointDecision glimpse_decide(Var h, std::size_t length, double tau, Rng* rng,
                               std::optional<Granularity> only = std::nullopt) const;

  // Fuse, advance the interaction LSTM and evaluate both heads.
  StepOutput step(Var frame, const TextMemory& text, GlimpseState& state) const;

  LstmState initial_state(Tape& tape) const { return lstm_.zero_state(tape); }
  const CoreConfig& config() const { return config_; }

 private:
  CoreConfig config_;
  LstmCellParams lstm_;
  Linear predict_;
  Linear glimpse_;
  Linear exit_;
};

}  // namespace eclipse
