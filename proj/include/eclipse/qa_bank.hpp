#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "eclipse/autodiff.hpp"
#include "eclipse/layers.hpp"
#include "eclipse/rng.hpp"

namespace eclipse {

// Token vocabulary. Index 0 is padding, 1 is the unknown token; real tokens
// start at 2. The on-disk form is one token per line, line k holding index k+2.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  Vocab();

  int add(const std::string& token);
  int index(const std::string& token) const;  // unknown tokens map to kUnknown
  const std::string& token(int index) const;
  std::size_t size() const { return tokens_.size(); }
  std::vector<int> encode(const std::vector<std::string>& words) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// One reasoning problem. In the multiple-choice setting answers.size() ==
// num_classes >= 2; in the binary setting there is a single answer and
// num_classes == 2, gt being 1 for a correct pairing.
struct QAInstance {
  std::vector<int> question;
  std::vector<std::vector<int>> answers;
  int gt = 0;
  int num_classes = 0;

  bool binary() const { return answers.size() == 1 && num_classes == 2; }
  void validate() const;
};

struct TextMemory {
  Var hq;               // n_q x 2d
  std::vector<Var> ha;  // N entries, n_ai x 2d
};

struct QABankConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden = 150;  // d; rows of TextMemory are 2d wide
  bool shared_encoder = true;
};

// Embedding table followed by a bidirectional LSTM. Row j of an encoded
// sequence is [forward h_j ; backward h_j], the backward pass having consumed
// tokens n-1 .. j.
class QABank {
 public:
  QABank(ParameterSet& params, const QABankConfig& config, Rng& rng);

  TextMemory encode(Tape& tape, const QAInstance& instance) const;
  Var encode_sequence(Tape& tape, const std::vector<int>& tokens, bool answer_encoder = false) const;

  const QABankConfig& config() const { return config_; }
  std::size_t output_dim() const { return 2 * config_.hidden; }

 private:
  struct BiLstm {
    LstmCellParams fwd;
    LstmCellParams bwd;
  };

  QABankConfig config_;
  const Parameter* embedding_ = nullptr;
  BiLstm question_lstm_;
  BiLstm answer_lstm_;
};

}  // namespace eclipse
