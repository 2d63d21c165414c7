#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "eclipse/autodiff.hpp"
#include "eclipse/layers.hpp"
#include "eclipse/optim.hpp"
#include "gradcheck.hpp"

using namespace eclipse;
using fd::check_inputs;
using fd::check_params;
using fd::random_tensor;
using fd::weighted_sum;

namespace {

constexpr double kGradTol = 1e-6;

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("eclipse_test_" + name);
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng = make_rng(1);
  Tape tape;
  Tensor m = random_tensor(rng, 3, 3);
  Var out = matmul(tape.constant(Tensor::identity(3)), tape.constant(m));
  EXPECT_EQ(out.value(), m);
}

TEST(Matmul, HandArithmetic) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  Var c = matmul(a, b);
  EXPECT_EQ(c.value(), Tensor::matrix(2, 1, {3, 7}));
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros(2, 3));
  Var b = tape.constant(Tensor::zeros(2, 3));
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(2);
  auto r = check_inputs([](Tape&, const std::vector<Var>& x) { return weighted_sum(matmul(x[0], x[1]), 7); },
                        {random_tensor(rng, 4, 5), random_tensor(rng, 5, 2)}, {.h = 1e-5, .order = 2});
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst_analytic << " vs " << r.worst_numeric;
  EXPECT_EQ(r.checked, 30u);
}

TEST(Softmax, SymmetricInput) {
  Tape tape;
  Var p = softmax(tape.constant(Tensor::row({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(p.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.value()[1], 0.5);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  Tape tape;
  Var p = softmax(tape.constant(Tensor::row({1000.0, 0.0})));
  EXPECT_NEAR(p.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(p.value()[1], 0.0, 1e-12);
  EXPECT_TRUE(p.value().all_finite());
}

TEST(Softmax, ProbabilityVectorForRandomInputs) {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Tape tape;
    const double mag = trial % 2 ? 1e3 : 5.0;
    Var p = softmax(tape.constant(random_tensor(rng, 1, 9, -mag, mag)));
    double total = 0.0;
    for (double v : p.value().values()) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, ColumnAxisNormalizesColumns) {
  Rng rng = make_rng(4);
  Tape tape;
  Var p = softmax(tape.constant(random_tensor(rng, 3, 4)), 0);
  for (std::size_t c = 0; c < 4; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < 3; ++r) total += p.value()(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Elementwise, MultiplyByOnesIsIdentity) {
  Rng rng = make_rng(5);
  Tape tape;
  Tensor x = random_tensor(rng, 1, 6);
  EXPECT_EQ(mul(tape.constant(x), tape.constant(Tensor::filled(1, 6, 1.0))).value(), x);
}

TEST(Elementwise, SigmoidOfZero) {
  Tape tape;
  EXPECT_DOUBLE_EQ(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item(), 0.5);
}

TEST(Elementwise, LogOfNonPositiveIsDomainError) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::row({1.0, 0.0}))), DomainError);
  EXPECT_THROW(log(tape.constant(Tensor::row({-2.0}))), DomainError);
}

TEST(Elementwise, ConcatMismatchIsDimensionError) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros(2, 3));
  Var b = tape.constant(Tensor::zeros(3, 3));
  EXPECT_THROW(concat({a, b}, 1), DimensionError);
  EXPECT_NO_THROW(concat({a, b}, 0));
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(6);
  const std::vector<std::pair<const char*, fd::InputFn>> cases = {
      {"add", [](Tape&, const std::vector<Var>& x) { return weighted_sum(add(x[0], x[1]), 1); }},
      {"add_broadcast",
       [](Tape&, const std::vector<Var>& x) { return weighted_sum(add(x[0], slice_rows(x[1], 0, 1)), 2); }},
      {"sub", [](Tape&, const std::vector<Var>& x) { return weighted_sum(sub(x[0], x[1]), 3); }},
      {"mul", [](Tape&, const std::vector<Var>& x) { return weighted_sum(mul(x[0], x[1]), 4); }},
      {"sigmoid", [](Tape&, const std::vector<Var>& x) { return weighted_sum(sigmoid(x[0]), 5); }},
      {"tanh", [](Tape&, const std::vector<Var>& x) { return weighted_sum(tanh(x[0]), 6); }},
      {"log", [](Tape&, const std::vector<Var>& x) { return weighted_sum(log(exp(x[0])), 7); }},
      {"exp", [](Tape&, const std::vector<Var>& x) { return weighted_sum(exp(x[1]), 8); }},
      {"softmax_rows", [](Tape&, const std::vector<Var>& x) { return weighted_sum(softmax(x[0], 1), 9); }},
      {"softmax_cols", [](Tape&, const std::vector<Var>& x) { return weighted_sum(softmax(x[0], 0), 10); }},
      {"log_softmax", [](Tape&, const std::vector<Var>& x) { return weighted_sum(log_softmax(x[0]), 11); }},
      {"concat_cols", [](Tape&, const std::vector<Var>& x) { return weighted_sum(concat({x[0], x[1]}, 1), 12); }},
      {"concat_rows", [](Tape&, const std::vector<Var>& x) { return weighted_sum(concat({x[0], x[1]}, 0), 13); }},
      {"transpose", [](Tape&, const std::vector<Var>& x) { return weighted_sum(transpose(x[0]), 14); }},
      {"slice", [](Tape&, const std::vector<Var>& x) { return weighted_sum(slice_cols(x[0], 1, 3), 15); }},
      {"interleave", [](Tape&, const std::vector<Var>& x) { return weighted_sum(interleave_rows(x[0], x[1]), 16); }},
      {"max_excluding", [](Tape&, const std::vector<Var>& x) { return max_excluding(x[0], 2); }},
      {"scale_shift", [](Tape&, const std::vector<Var>& x) { return weighted_sum(add_scalar(scale(x[0], -1.7), 0.3), 17); }},
  };
  for (const auto& [name, fn] : cases) {
    auto r = check_inputs(fn, {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)});
    EXPECT_LT(r.max_rel_err, kGradTol) << name << " " << r.worst_analytic << " vs " << r.worst_numeric;
  }
}

TEST(Elementwise, EmbeddingGradientOnlyTouchesUsedRows) {
  Rng rng = make_rng(7);
  const std::vector<int> ids = {3, 1, 3};
  auto r = check_inputs(
      [&](Tape&, const std::vector<Var>& x) { return weighted_sum(embedding_lookup(x[0], ids), 18); },
      {random_tensor(rng, 5, 4)});
  EXPECT_LT(r.max_rel_err, kGradTol) << r.worst_analytic << " vs " << r.worst_numeric;

  Tape tape;
  Var table = tape.variable(random_tensor(rng, 5, 4));
  tape.backward(weighted_sum(embedding_lookup(table, ids), 18));
  const Tensor g = tape.grad(table);
  for (std::size_t row : {0u, 2u, 4u}) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g(row, c), 0.0);
  }
}

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  Rng rng = make_rng(8);
  ParameterSet params;
  LstmCellParams cell(params, "cell", 3, 5, rng);
  for (auto& p : params) p.value.fill(0.0);
  Tape tape;
  LstmState out = lstm_step(cell, tape.constant(random_tensor(rng, 1, 3)), cell.zero_state(tape));
  for (double v : out.h.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : out.c.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, HiddenStaysInOpenUnitInterval) {
  Rng rng = make_rng(9);
  ParameterSet params;
  LstmCellParams cell(params, "cell", 4, 6, rng);
  Tape tape;
  LstmState s = cell.zero_state(tape);
  for (int t = 0; t < 20; ++t) {
    s = lstm_step(cell, tape.constant(random_tensor(rng, 1, 4, -5, 5)), s);
    for (double v : s.h.value().values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Lstm, ParameterGradientsMatchFiniteDifferences) {
  Rng rng = make_rng(10);
  ParameterSet params;
  LstmCellParams cell(params, "cell", 3, 4, rng);
  for (auto& p : params) {
    for (auto& v : p.value.values()) v = uniform(rng, -0.8, 0.8);
  }
  const Tensor x1 = random_tensor(rng, 1, 3);
  const Tensor x2 = random_tensor(rng, 1, 3);
  auto r = check_params(
      [&](Tape& tape) {
        LstmState s = lstm_step(cell, tape.constant(x1), cell.zero_state(tape));
        s = lstm_step(cell, tape.constant(x2), s);
        return add(weighted_sum(s.h, 19), weighted_sum(s.c, 20));
      },
      params);
  EXPECT_LT(r.max_rel_err, 1e-5) << r.worst_analytic << " vs " << r.worst_numeric;
}

TEST(Backward, SecondCallThrows) {
  Tape tape;
  Var x = tape.variable(Tensor::row({1.0, 2.0}));
  Var loss = sum(mul(x, x));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var x = tape.variable(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), DimensionError);
}

TEST(Backward, GradientsForEveryParameterUsed) {
  Rng rng = make_rng(11);
  ParameterSet params;
  Linear a(params, "a", 3, 2, rng);
  Linear b(params, "b", 3, 2, rng);
  Tape tape;
  Var x = tape.constant(random_tensor(rng, 1, 3));
  Gradients g = tape.backward(sum(a.forward(tape, x)));
  EXPECT_TRUE(g.has(a.weight().index));
  EXPECT_TRUE(g.has(a.bias().index));
  EXPECT_FALSE(g.has(b.weight().index));
}

TEST(Backward, NanGuardAbortsForward) {
  Tape tape;
  Var x = tape.variable(Tensor::row({1e300}));
  EXPECT_THROW(mul(x, x), NumericsError);
}

TEST(Backward, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng = make_rng(12);
    ParameterSet params;
    LstmCellParams cell(params, "cell", 3, 4, rng);
    Linear head(params, "head", 4, 2, rng);
    Tape tape;
    LstmState s = cell.zero_state(tape);
    for (int t = 0; t < 3; ++t) s = lstm_step(cell, tape.constant(random_tensor(rng, 1, 3)), s);
    Var loss = sum(log(softmax(head.forward(tape, s.h))));
    const double value = loss.value().item();
    Gradients g = tape.backward(loss);
    std::vector<double> flat{value};
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.has(i)) flat.insert(flat.end(), g[i].values().begin(), g[i].values().end());
    }
    return flat;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParameterSet params;
  params.add("w", Tensor::row({0.5, -1.5}));
  Gradients g(1);
  g[0] = Tensor::zeros(1, 2);
  AdamState state;
  adam_step(params, g, {.lr = 0.1, .weight_decay = 0.0}, state);
  EXPECT_EQ(params.at("w").value, Tensor::row({0.5, -1.5}));
  EXPECT_EQ(state.m[0], Tensor::zeros(1, 2));
  EXPECT_EQ(state.v[0], Tensor::zeros(1, 2));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet params;
  params.add("w", Tensor::scalar(2.0));
  Gradients g(1);
  g[0] = Tensor::scalar(1.0);
  AdamState state;
  adam_step(params, g, {.lr = 0.1, .weight_decay = 0.0}, state);
  // m_hat = 1, v_hat = 1, so the step is lr * 1 / (1 + eps).
  EXPECT_NEAR(params.at("w").value.item(), 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, CoupledWeightDecayEntersTheGradient) {
  ParameterSet params;
  params.add("w", Tensor::scalar(1.0));
  Gradients g(1);
  g[0] = Tensor::scalar(0.0);
  AdamState state;
  adam_step(params, g, {.lr = 0.1, .weight_decay = 0.5}, state);
  // Effective gradient 0.5 > 0, so the parameter moves down by ~lr.
  EXPECT_NEAR(params.at("w").value.item(), 0.9, 1e-6);
}

TEST(Adam, FitsLinearToyRegression) {
  ParameterSet params;
  Parameter& w = params.add("w", Tensor::scalar(0.0));
  Parameter& b = params.add("b", Tensor::scalar(0.0));
  Adam opt(params, {.lr = 0.05, .weight_decay = 0.0});
  double mse = 0.0;
  for (int step = 0; step < 500; ++step) {
    Tape tape;
    Var loss;
    for (int i = 0; i < 10; ++i) {
      const double x = -1.0 + 0.2 * i;
      Var pred = add(scale(tape.parameter(w), x), tape.parameter(b));
      Var err = add_scalar(pred, -2.0 * x);
      Var sq = mul(err, err);
      loss = loss.valid() ? add(loss, sq) : sq;
    }
    loss = scale(loss, 0.1);
    mse = loss.value().item();
    opt.step(tape.backward(loss));
  }
  Tape tape;
  double final_mse = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double x = -1.0 + 0.2 * i;
    const double e = w.value.item() * x + b.value.item() - 2.0 * x;
    final_mse += 0.1 * e * e;
  }
  EXPECT_LT(final_mse, 1e-4) << "last training mse " << mse;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng = make_rng(13);
  ParameterSet params;
  LstmCellParams cell(params, "qa_bank.bilstm.fwd", 3, 4, rng);
  Linear head(params, "core.predict", 4, 2, rng);
  params[0].value[0] = 0.1 + 0.2;  // not exactly representable in short decimal
  AdamState state;
  Gradients g(params.size());
  for (auto& p : params) g[p.index] = random_tensor(rng, p.value.rows(), p.value.cols());
  adam_step(params, g, {}, state);

  const auto path = temp_path("ckpt.json");
  save_checkpoint(path, params, {.epoch = 7, .optimizer = &state, .metadata_json = R"({"note":"x"})"});

  ParameterSet restored;
  Rng other = make_rng(99);
  LstmCellParams cell2(restored, "qa_bank.bilstm.fwd", 3, 4, other);
  Linear head2(restored, "core.predict", 4, 2, other);
  LoadedCheckpoint loaded = load_checkpoint(path, restored);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i].value, restored[i].value) << params[i].name;
  EXPECT_EQ(loaded.epoch, 7);
  ASSERT_TRUE(loaded.has_optimizer);
  EXPECT_EQ(loaded.optimizer.step, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(loaded.optimizer.m[i], state.m[i]);
    EXPECT_EQ(loaded.optimizer.v[i], state.v[i]);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
  Rng rng = make_rng(14);
  ParameterSet params;
  Linear head(params, "core.predict", 4, 2, rng);
  const auto path = temp_path("ckpt_shape.json");
  save_checkpoint(path, params);
  ParameterSet other;
  Linear wrong(other, "core.predict", 4, 3, rng);
  EXPECT_THROW(load_checkpoint(path, other), std::exception);
  std::filesystem::remove(path);
}
