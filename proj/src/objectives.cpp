#include "eclipse/objectives.hpp"

#include <stdexcept>

namespace eclipse {

namespace {

void check_gt(std::size_t n, int gt) {
  if (n < 2) throw DimensionError("margin needs at least two classes");
  if (gt < 0 || static_cast<std::size_t>(gt) >= n) throw BoundsError("ground-truth index out of range");
}

double value_or_zero(Var v) { return v.valid() ? v.value().item() : 0.0; }

}  // namespace

double margin(std::span<const double> p, int gt) {
  check_gt(p.size(), gt);
  double best = -1.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (static_cast<int>(c) != gt && p[c] > best) best = p[c];
  }
  return p[static_cast<std::size_t>(gt)] - best;
}

Var margin(Var p, int gt) {
  check_gt(p.value().size(), gt);
  return sub(pick(p, static_cast<std::size_t>(gt)), max_excluding(p, static_cast<std::size_t>(gt)));
}

Var loss_pred(Var p, int gt) {
  if (gt < 0 || static_cast<std::size_t>(gt) >= p.value().size()) throw BoundsError("ground-truth index out of range");
  return neg(log(pick(p, static_cast<std::size_t>(gt))));
}

Var loss_incre(Var m_t, Var m_prev) { return neg(sub(m_t, m_prev)); }

Var loss_feat(const JointDecision& decision) { return decision.fine_mass; }

double loss_feat_hard(const JointDecision& decision) {
  return decision.granularity == Granularity::kFine ? 1.0 : 0.0;
}

ExitLabels exit_labels(std::span<const double> margins, double mu) {
  ExitLabels labels;
  labels.mu = mu;
  if (margins.empty()) return labels;
  const double last = margins.back();
  const double threshold = mu * (last - margins.front());
  labels.y.reserve(margins.size());
  for (double m : margins) labels.y.push_back(last - m < threshold ? 1 : 0);
  return labels;
}

Var loss_exit(Var e, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("exit label must be 0 or 1");
  constexpr double kEps = 1e-12;
  Var squeezed = add_scalar(scale(e, 1.0 - 2.0 * kEps), kEps);
  if (y == 1) return neg(log(squeezed));
  return neg(log(add_scalar(neg(squeezed), 1.0)));
}

StepLoss combine_step(double pred, double exit, double incre, double feat, double lambda) {
  StepLoss s;
  s.pred = pred;
  s.exit = exit;
  s.incre = incre;
  s.feat = feat;
  s.glimpse = incre + feat;
  s.total = pred + exit + lambda * s.glimpse;
  return s;
}

LossGraph loss_total(const std::vector<StepLossTerms>& steps, double lambda) {
  if (steps.empty()) throw std::invalid_argument("loss_total needs at least one step");
  LossGraph graph;
  Var total;
  for (const auto& s : steps) {
    Var step_total = add(s.pred, s.exit);
    if (s.incre.valid() || s.feat.valid()) {
      Var glimpse = s.incre.valid() && s.feat.valid() ? add(s.incre, s.feat) : (s.incre.valid() ? s.incre : s.feat);
      step_total = add(step_total, scale(glimpse, lambda));
    }
    total = total.valid() ? add(total, step_total) : step_total;
    StepLoss values = combine_step(s.pred.value().item(), s.exit.value().item(), value_or_zero(s.incre),
                                   value_or_zero(s.feat), lambda);
    graph.bundle.steps.push_back(values);
    graph.bundle.sum.pred += values.pred;
    graph.bundle.sum.exit += values.exit;
    graph.bundle.sum.incre += values.incre;
    graph.bundle.sum.feat += values.feat;
    graph.bundle.sum.glimpse += values.glimpse;
    graph.bundle.sum.total += values.total;
  }
  graph.total = total;
  return graph;
}

}  // namespace eclipse
