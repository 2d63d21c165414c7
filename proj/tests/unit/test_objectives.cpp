#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "eclipse/layers.hpp"
#include "eclipse/objectives.hpp"
#include "eclipse/optim.hpp"
#include "gradcheck.hpp"

using namespace eclipse;
using fd::random_tensor;

namespace {

std::vector<int> brute_force_labels(const std::vector<double>& m, double mu) {
  std::vector<int> y;
  const std::size_t T = m.size();
  for (std::size_t t = 0; t < T; ++t) {
    const double remaining = m[T - 1] - m[t];
    const double total_gain = m[T - 1] - m[0];
    y.push_back(remaining < mu * total_gain ? 1 : 0);
  }
  return y;
}

}  // namespace

TEST(Margin, DirectFormula) {
  const std::vector<double> a = {0.7, 0.2, 0.1};
  EXPECT_NEAR(margin(a, 0), 0.5, 1e-15);
  const std::vector<double> b = {0.1, 0.8, 0.1};
  EXPECT_NEAR(margin(b, 0), -0.7, 1e-15);
  const std::vector<double> u = {0.25, 0.25, 0.25, 0.25};
  for (int gt = 0; gt < 4; ++gt) EXPECT_EQ(margin(u, gt), 0.0);
}

TEST(Margin, VarMatchesValueAndRejectsBadGt) {
  Tape tape;
  Var p = tape.constant(Tensor::row({0.7, 0.2, 0.1}));
  EXPECT_EQ(margin(p, 0).value().item(), margin(p.value().values(), 0));
  EXPECT_THROW(margin(p, 3), BoundsError);
  const std::vector<double> single = {1.0};
  EXPECT_THROW(margin(single, 0), DimensionError);
}

TEST(LossPred, KnownValues) {
  Tape tape;
  EXPECT_NEAR(loss_pred(tape.constant(Tensor::row({0.25, 0.25, 0.25, 0.25})), 2).value().item(), std::log(4.0), 1e-15);
  EXPECT_EQ(loss_pred(tape.constant(Tensor::row({1.0, 0.0 + 1e-300})), 0).value().item(), 0.0);
}

TEST(LossIncre, KnownValues) {
  Tape tape;
  auto li = [&](double a, double b) {
    return loss_incre(tape.constant(Tensor::scalar(a)), tape.constant(Tensor::scalar(b))).value().item();
  };
  EXPECT_NEAR(li(0.5, 0.3), -0.2, 1e-15);
  EXPECT_EQ(li(0.4, 0.4), 0.0);
  EXPECT_NEAR(li(0.1, 0.4), 0.3, 1e-15);
}

TEST(LossFeat, HardAndSoftValues) {
  Rng rng = make_rng(81);
  Tape tape(false);
  JointDecision d = joint_gumbel_softmax(tape.constant(random_tensor(rng, 1, 8)), 1.0, &rng);
  d.granularity = Granularity::kFine;
  EXPECT_EQ(loss_feat_hard(d), 1.0);
  d.granularity = Granularity::kCoarse;
  EXPECT_EQ(loss_feat_hard(d), 0.0);
  double fine = 0.0;
  for (std::size_t i = 1; i < 8; i += 2) fine += d.soft.value()[i];
  EXPECT_NEAR(loss_feat(d).value().item(), fine, 1e-15);
}

TEST(LossFeat, SoftValueIsBoundedWithNonzeroGradient) {
  Rng rng = make_rng(82);
  for (double tau : {5.0, 1.0, 0.1}) {
    for (int i = 0; i < 50; ++i) {
      Tape tape;
      Var z = tape.variable(random_tensor(rng, 1, 8, -2, 2));
      JointDecision d = joint_gumbel_softmax(z, tau, &rng);
      const double v = loss_feat(d).value().item();
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
      tape.backward(loss_feat(d));
      double norm = 0.0;
      for (double g : tape.grad(z).values()) norm += std::abs(g);
      EXPECT_GT(norm, 0.0);
    }
  }
}

TEST(ExitLabels, WorkedExamples) {
  EXPECT_EQ(exit_labels(std::vector<double>{0.0, 0.58, 0.6}, 0.1).y, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(exit_labels(std::vector<double>{0.3, 0.3}, 0.1).y, (std::vector<int>{0, 0}));
  EXPECT_EQ(exit_labels(std::vector<double>{0.1, 0.5, 0.3}, 0.1).y, (std::vector<int>{0, 1, 1}));
}

TEST(ExitLabels, FinalStepIsOneWhenMarginsImproved) {
  Rng rng = make_rng(83);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> m(2 + uniform_index(rng, 6));
    for (auto& v : m) v = uniform(rng, -1, 1);
    if (m.back() > m.front()) {
      EXPECT_EQ(exit_labels(m, 0.1).y.back(), 1);
    }
  }
}

TEST(ExitLabels, AgreesWithBruteForce) {
  Rng rng = make_rng(84);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> m(2 + uniform_index(rng, 8));
    for (auto& v : m) v = uniform_index(rng, 4) == 0 ? 0.25 : uniform(rng, -1, 1);
    EXPECT_EQ(exit_labels(m, 0.1).y, brute_force_labels(m, 0.1));
  }
}

TEST(LossExit, KnownValues) {
  Tape tape;
  for (int y : {0, 1}) EXPECT_NEAR(loss_exit(tape.constant(Tensor::scalar(0.5)), y).value().item(), std::log(2.0), 1e-11);
  EXPECT_LT(loss_exit(tape.constant(Tensor::scalar(1.0 - 1e-9)), 1).value().item(), 1e-8);
  EXPECT_LT(loss_exit(tape.constant(Tensor::scalar(1e-9)), 0).value().item(), 1e-8);
  EXPECT_TRUE(std::isfinite(loss_exit(tape.constant(Tensor::scalar(1.0)), 0).value().item()));
}

TEST(LossTotal, WorkedExample) {
  const StepLoss s = combine_step(1.0, 0.5, -0.2, 1.0, 0.01);
  EXPECT_NEAR(s.total, 1.508, 1e-15);
  EXPECT_NEAR(s.glimpse, 0.8, 1e-15);
  EXPECT_EQ(combine_step(1.0, 0.5, -0.2, 1.0, 0.0).total, 1.5);
}

TEST(LossTotal, SumEqualsResummationOfSteps) {
  Rng rng = make_rng(85);
  Tape tape;
  std::vector<StepLossTerms> steps;
  for (int t = 0; t < 5; ++t) {
    StepLossTerms s;
    s.pred = tape.constant(Tensor::scalar(uniform(rng, 0, 2)));
    s.exit = tape.constant(Tensor::scalar(uniform(rng, 0, 1)));
    if (t > 0) {
      s.incre = tape.constant(Tensor::scalar(uniform(rng, -1, 1)));
      s.feat = tape.constant(Tensor::scalar(uniform(rng, 0, 1)));
    }
    steps.push_back(s);
  }
  LossGraph g = loss_total(steps, 0.01);
  double resum = 0.0;
  for (const auto& s : g.bundle.steps) resum += s.total;
  EXPECT_NEAR(g.bundle.sum.total, resum, 1e-14);
  EXPECT_NEAR(g.total.value().item(), resum, 1e-14);
  EXPECT_EQ(g.bundle.steps[0].incre, 0.0);
  EXPECT_EQ(g.bundle.steps[0].feat, 0.0);
  EXPECT_EQ(g.bundle.steps[0].total, g.bundle.steps[0].pred + g.bundle.steps[0].exit);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(86);
  for (int trial = 0; trial < 5; ++trial) {
    const int gt = static_cast<int>(uniform_index(rng, 4));
    auto r = fd::check_inputs(
        [&](Tape&, const std::vector<Var>& x) {
          Var p1 = softmax(x[0]);
          Var p2 = softmax(x[1]);
          Rng noise = make_rng(87, {static_cast<std::uint64_t>(trial)});
          JointDecision d = joint_gumbel_softmax(x[2], 0.7, &noise);
          std::vector<StepLossTerms> steps(2);
          steps[0] = {loss_pred(p1, gt), loss_exit(sigmoid(slice_cols(x[3], 0, 1)), 0), {}, {}};
          steps[1] = {loss_pred(p2, gt), loss_exit(sigmoid(slice_cols(x[3], 1, 2)), 1),
                      loss_incre(margin(p2, gt), margin(p1, gt)), loss_feat(d)};
          return loss_total(steps, 0.37).total;
        },
        {random_tensor(rng, 1, 4), random_tensor(rng, 1, 4), random_tensor(rng, 1, 6), random_tensor(rng, 1, 2)});
    EXPECT_LT(r.max_rel_err, 1e-5) << r.worst_analytic << " vs " << r.worst_numeric;
  }
}

// Optimizing only the margin-increment loss on a toy with fixed glimpses
// widens the margin gap between the first and last step.
TEST(LossIncre, TrainingIncreasesMarginGain) {
  Rng rng = make_rng(88);
  ParameterSet params;
  Linear head(params, "head", 4, 3, rng);
  std::vector<std::array<Tensor, 3>> episodes;
  std::vector<int> gts;
  for (int i = 0; i < 20; ++i) {
    episodes.push_back({random_tensor(rng, 1, 4), random_tensor(rng, 1, 4), random_tensor(rng, 1, 4)});
    gts.push_back(static_cast<int>(uniform_index(rng, 3)));
  }
  auto mean_gain = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      Tape tape(false);
      const double m1 = margin(softmax(head.forward(tape, tape.constant(episodes[i][0]))), gts[i]).value().item();
      const double m3 = margin(softmax(head.forward(tape, tape.constant(episodes[i][2]))), gts[i]).value().item();
      total += m3 - m1;
    }
    return total / static_cast<double>(episodes.size());
  };
  const double before = mean_gain();
  Adam opt(params, {.lr = 0.01, .weight_decay = 0.0});
  for (int epoch = 0; epoch < 100; ++epoch) {
    Tape tape;
    Var loss;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      std::vector<Var> m;
      for (const auto& x : episodes[i]) m.push_back(margin(softmax(head.forward(tape, tape.constant(x))), gts[i]));
      for (std::size_t t = 1; t < m.size(); ++t) {
        Var l = loss_incre(m[t], m[t - 1]);
        loss = loss.valid() ? add(loss, l) : l;
      }
    }
    opt.step(tape.backward(loss));
  }
  EXPECT_GT(mean_gain(), before);
}
