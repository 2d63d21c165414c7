#include <gtest/gtest.h>

#include <filesystem>

#include "eclipse/qa_bank.hpp"
#include "gradcheck.hpp"

using namespace eclipse;

namespace {

QABank make_bank(ParameterSet& params, std::size_t hidden, bool shared = true, std::size_t vocab = 20) {
  Rng rng = make_rng(21);
  return QABank(params, {.vocab_size = vocab, .embed_dim = 8, .hidden = hidden, .shared_encoder = shared}, rng);
}

}  // namespace

TEST(Vocab, ReservedEntriesAndRoundTrip) {
  Vocab v;
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.add("car"), 2);
  EXPECT_EQ(v.add("turn"), 3);
  EXPECT_EQ(v.add("car"), 2);
  EXPECT_EQ(v.index("bicycle"), Vocab::kUnknown);
  EXPECT_EQ(v.encode({"turn", "car", "??"}), (std::vector<int>{3, 2, 1}));

  const auto path = std::filesystem::temp_directory_path() / "eclipse_test_vocab.txt";
  v.save(path);
  Vocab loaded = Vocab::load(path);
  EXPECT_EQ(loaded.size(), v.size());
  EXPECT_EQ(loaded.index("turn"), 3);
  EXPECT_EQ(loaded.token(2), "car");
  std::filesystem::remove(path);
}

TEST(QAInstance, ValidationRejectsBadInstances) {
  QAInstance ok{{2, 3}, {{4}, {5}}, 1, 2};
  EXPECT_NO_THROW(ok.validate());
  QAInstance empty_q{{}, {{4}, {5}}, 0, 2};
  EXPECT_THROW(empty_q.validate(), ValidationError);
  QAInstance empty_a{{2}, {{4}, {}}, 0, 2};
  EXPECT_THROW(empty_a.validate(), ValidationError);
  QAInstance bad_gt{{2}, {{4}, {5}}, 2, 2};
  EXPECT_THROW(bad_gt.validate(), ValidationError);
  QAInstance one_answer{{2}, {{4}}, 0, 1};
  EXPECT_THROW(one_answer.validate(), ValidationError);
}

TEST(QABank, QuestionShapeAtFullScale) {
  ParameterSet params;
  QABank bank = make_bank(params, 150);
  Tape tape(false);
  QAInstance inst{{2, 3, 4, 5, 6, 7, 8, 9}, {{2}, {3, 4}, {5}, {6}}, 0, 4};
  TextMemory mem = bank.encode(tape, inst);
  EXPECT_EQ(mem.hq.value().shape(), (Shape{8, 300}));
  ASSERT_EQ(mem.ha.size(), 4u);
  EXPECT_EQ(mem.ha[1].value().shape(), (Shape{2, 300}));
  EXPECT_EQ(mem.ha[0].value().shape(), (Shape{1, 300}));
}

TEST(QABank, SingleTokenUsesBothDirectionsOnThatToken) {
  ParameterSet params;
  QABank bank = make_bank(params, 6);
  Tape tape(false);
  Var h = bank.encode_sequence(tape, {5});
  ASSERT_EQ(h.value().shape(), (Shape{1, 12}));
  // With shared weights both directions are separate cells; each half is a
  // one-step LSTM on the same embedding, so it must be nonzero and finite.
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t c = 0; c < 6; ++c) fwd += std::abs(h.value()(0, c));
  for (std::size_t c = 6; c < 12; ++c) bwd += std::abs(h.value()(0, c));
  EXPECT_GT(fwd, 0.0);
  EXPECT_GT(bwd, 0.0);
}

TEST(QABank, ReversedSequenceSwapsDirections) {
  ParameterSet params;
  QABank bank = make_bank(params, 5);
  // Share weights between directions so that reversal is an exact symmetry.
  for (const char* part : {"W_ih", "W_hh", "b"}) {
    params.at(std::string("qa_bank.bilstm.bwd.") + part).value = params.at(std::string("qa_bank.bilstm.fwd.") + part).value;
  }
  const std::vector<int> q = {2, 7, 4, 9, 3};
  const std::vector<int> rq(q.rbegin(), q.rend());
  Tape tape(false);
  const Tensor h = bank.encode_sequence(tape, q).value();
  const Tensor hr = bank.encode_sequence(tape, rq).value();
  const std::size_t n = q.size(), d = 5;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      EXPECT_EQ(hr(n - 1 - j, c), h(j, d + c));
      EXPECT_EQ(hr(n - 1 - j, d + c), h(j, c));
    }
  }
}

TEST(QABank, OutOfVocabularyMapsToUnknown) {
  ParameterSet params;
  QABank bank = make_bank(params, 4);
  Tape tape(false);
  EXPECT_EQ(bank.encode_sequence(tape, {3, 999, -4}).value(),
            bank.encode_sequence(tape, {3, Vocab::kUnknown, Vocab::kUnknown}).value());
}

TEST(QABank, EmptySequenceIsValidationError) {
  ParameterSet params;
  QABank bank = make_bank(params, 4);
  Tape tape;
  EXPECT_THROW(bank.encode_sequence(tape, {}), ValidationError);
}

TEST(QABank, SeparateAnswerEncoderOption) {
  ParameterSet shared_params, split_params;
  make_bank(shared_params, 4, true);
  QABank split = make_bank(split_params, 4, false);
  EXPECT_FALSE(shared_params.contains("qa_bank.answer_bilstm.fwd.W_ih"));
  EXPECT_TRUE(split_params.contains("qa_bank.answer_bilstm.fwd.W_ih"));
  Tape tape(false);
  EXPECT_NE(split.encode_sequence(tape, {3, 4}, false).value(), split.encode_sequence(tape, {3, 4}, true).value());
}

TEST(QABank, EmbeddingGradientOnlyForPresentTokens) {
  ParameterSet params;
  QABank bank = make_bank(params, 4);
  Tape tape;
  QAInstance inst{{2, 3}, {{4}, {3}}, 0, 2};
  TextMemory mem = bank.encode(tape, inst);
  Var loss = add(fd::weighted_sum(mem.hq, 1), fd::weighted_sum(concat(mem.ha, 0), 2));
  Gradients g = tape.backward(loss);
  const Parameter& emb = params.at("qa_bank.embedding");
  ASSERT_TRUE(g.has(emb.index));
  for (std::size_t row = 0; row < emb.value.rows(); ++row) {
    double norm = 0.0;
    for (std::size_t c = 0; c < emb.value.cols(); ++c) norm += std::abs(g[emb.index](row, c));
    if (row >= 2 && row <= 4) {
      EXPECT_GT(norm, 0.0) << row;
    } else {
      EXPECT_EQ(norm, 0.0) << row;
    }
  }
}

TEST(QABank, GradientsMatchFiniteDifferences) {
  ParameterSet params;
  QABank bank = make_bank(params, 3, true, 6);
  QAInstance inst{{2, 3, 5}, {{4, 2}, {3}}, 0, 2};
  auto r = fd::check_params(
      [&](Tape& tape) {
        TextMemory mem = bank.encode(tape, inst);
        return add(fd::weighted_sum(mem.hq, 3), fd::weighted_sum(concat(mem.ha, 0), 4));
      },
      params);
  EXPECT_LT(r.max_rel_err, 1e-5) << r.worst_analytic << " vs " << r.worst_numeric;
}
