#pragma once

#include <span>
#include <vector>

#include "eclipse/autodiff.hpp"
#include "eclipse/reasoning_core.hpp"

namespace eclipse {

// m = p[gt] - max_{c != gt} p[c]. Ties with the gt probability give 0.
double margin(std::span<const double> p, int gt);
Var margin(Var p, int gt);

// -log p[gt]
Var loss_pred(Var p, int gt);

// -(m_t - m_prev)
Var loss_incre(Var m_t, Var m_prev);

// Training mode uses the differentiable fine mass of the relaxed sample; the
// reported value is the hard granularity flag.
Var loss_feat(const JointDecision& decision);
double loss_feat_hard(const JointDecision& decision);

struct ExitLabels {
  std::vector<int> y;  // y[t-1] for steps t = 1..T
  double mu = 0.1;
};

// y_t = 1 iff m_T - m_t < mu * (m_T - m_1), strict.
ExitLabels exit_labels(std::span<const double> margins, double mu);

// Binary cross-entropy of the exit score against its label. The score is
// squeezed into [1e-12, 1 - 1e-12] so saturated sigmoids stay finite.
Var loss_exit(Var e, int y);

// Differentiable pieces of one step; `incre` and `feat` are unset at step 1.
struct StepLossTerms {
  Var pred;
  Var exit;
  Var incre;
  Var feat;
};

struct StepLoss {
  double pred = 0.0;
  double incre = 0.0;
  double feat = 0.0;
  double glimpse = 0.0;
  double exit = 0.0;
  double total = 0.0;
};

struct LossBundle {
  std::vector<StepLoss> steps;
  StepLoss sum;  // component-wise sums over steps
};

// L_t = L_pred + L_exit + lambda * (L_incre + L_feat); the objective is sum_t L_t.
StepLoss combine_step(double pred, double exit, double incre, double feat, double lambda);

struct LossGraph {
  LossBundle bundle;
  Var total;  // scalar var of sum_t L_t
};

LossGraph loss_total(const std::vector<StepLossTerms>& steps, double lambda);

}  // namespace eclipse
