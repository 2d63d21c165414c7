#pragma once

#include <cstddef>
#include <string>

#include "eclipse/autodiff.hpp"
#include "eclipse/rng.hpp"

namespace eclipse {

// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = x W + b with W stored fan_in x fan_out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

  Var forward(Tape& tape, Var x) const;
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  const Parameter& weight() const { return *weight_; }
  const Parameter& bias() const { return *bias_; }

 private:
  const Parameter* weight_ = nullptr;
  const Parameter* bias_ = nullptr;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

struct LstmState {
  Var c;
  Var h;
};

// Gate order inside the 4*hidden columns: input, forget, cell, output.
class LstmCellParams {
 public:
  LstmCellParams() = default;
  LstmCellParams(ParameterSet& params, const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  const Parameter& w_ih() const { return *w_ih_; }
  const Parameter& w_hh() const { return *w_hh_; }
  const Parameter& bias() const { return *bias_; }

  LstmState zero_state(Tape& tape) const;

 private:
  const Parameter* w_ih_ = nullptr;
  const Parameter* w_hh_ = nullptr;
  const Parameter* bias_ = nullptr;
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

// One LSTM step: gates = x W_ih + h W_hh + b; c' = f*c + i*g; h' = o*tanh(c').
LstmState lstm_step(const LstmCellParams& params, Var x, const LstmState& prev);

}  // namespace eclipse
