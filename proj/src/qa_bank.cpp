#include "eclipse/qa_bank.hpp"

#include <fstream>
#include <stdexcept>

#include "eclipse/io.hpp"

namespace eclipse {

Vocab::Vocab() {
  tokens_ = {"<pad>", "<unk>"};
  index_ = {{"<pad>", kPad}, {"<unk>", kUnknown}};
}

int Vocab::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocab::token(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) return tokens_[kUnknown];
  return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(index(w));
  return ids;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::string out;
  for (std::size_t i = 2; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  write_file_atomic(path, out);
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (v.index_.count(line)) throw ValidationError("duplicate vocabulary token '" + line + "'");
    v.add(line);
  }
  return v;
}

void QAInstance::validate() const {
  if (question.empty()) throw ValidationError("question token sequence is empty");
  if (answers.empty()) throw ValidationError("instance has no candidate answers");
  for (const auto& a : answers) {
    if (a.empty()) throw ValidationError("candidate answer token sequence is empty");
  }
  if (answers.size() == 1) {
    if (num_classes != 2) throw ValidationError("single-answer instances must be binary (num_classes = 2)");
  } else if (static_cast<std::size_t>(num_classes) != answers.size()) {
    throw ValidationError("num_classes must equal the number of candidate answers");
  }
  if (num_classes < 2) throw ValidationError("at least two classes are required");
  if (gt < 0 || gt >= num_classes) throw ValidationError("ground-truth index out of range");
}

QABank::QABank(ParameterSet& params, const QABankConfig& config, Rng& rng) : config_(config) {
  if (config.vocab_size < 2 || config.embed_dim == 0 || config.hidden == 0) {
    throw ValidationError("qa_bank: vocab_size, embed_dim and hidden must be positive");
  }
  Tensor rows = Tensor::zeros(config.vocab_size, config.embed_dim);
  for (auto& v : rows.values()) v = uniform(rng, -1.0, 1.0);
  embedding_ = &params.add("qa_bank.embedding", std::move(rows));
  question_lstm_.fwd = LstmCellParams(params, "qa_bank.bilstm.fwd", config.embed_dim, config.hidden, rng);
  question_lstm_.bwd = LstmCellParams(params, "qa_bank.bilstm.bwd", config.embed_dim, config.hidden, rng);
  if (!config.shared_encoder) {
    answer_lstm_.fwd = LstmCellParams(params, "qa_bank.answer_bilstm.fwd", config.embed_dim, config.hidden, rng);
    answer_lstm_.bwd = LstmCellParams(params, "qa_bank.answer_bilstm.bwd", config.embed_dim, config.hidden, rng);
  }
}

Var QABank::encode_sequence(Tape& tape, const std::vector<int>& tokens, bool answer_encoder) const {
  if (tokens.empty()) throw ValidationError("cannot encode an empty token sequence");
  std::vector<int> ids(tokens);
  for (auto& id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) id = Vocab::kUnknown;
  }
  const BiLstm& lstm = (answer_encoder && !config_.shared_encoder) ? answer_lstm_ : question_lstm_;
  Var emb = embedding_lookup(tape.parameter(*embedding_), ids);
  const std::size_t n = ids.size();
  std::vector<Var> fwd(n), bwd(n);
  LstmState state = lstm.fwd.zero_state(tape);
  for (std::size_t j = 0; j < n; ++j) {
    state = lstm_step(lstm.fwd, slice_rows(emb, j, j + 1), state);
    fwd[j] = state.h;
  }
  state = lstm.bwd.zero_state(tape);
  for (std::size_t j = n; j-- > 0;) {
    state = lstm_step(lstm.bwd, slice_rows(emb, j, j + 1), state);
    bwd[j] = state.h;
  }
  std::vector<Var> rows(n);
  for (std::size_t j = 0; j < n; ++j) rows[j] = concat({fwd[j], bwd[j]}, 1);
  return n == 1 ? rows[0] : concat(rows, 0);
}

TextMemory QABank::encode(Tape& tape, const QAInstance& instance) const {
  instance.validate();
  TextMemory mem;
  mem.hq = encode_sequence(tape, instance.question, false);
  mem.ha.reserve(instance.answers.size());
  for (const auto& a : instance.answers) mem.ha.push_back(encode_sequence(tape, a, true));
  return mem;
}

}  // namespace eclipse
