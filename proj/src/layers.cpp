#include "eclipse/layers.hpp"

#include <cmath>

namespace eclipse {

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w = Tensor::zeros(fan_in, fan_out);
  for (auto& v : w.values()) v = uniform(rng, -bound, bound);
  return w;
}

Linear::Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
  weight_ = &params.add(prefix + ".W", init_weight(in, out, rng));
  bias_ = &params.add(prefix + ".b", Tensor::zeros(1, out));
}

Var Linear::forward(Tape& tape, Var x) const {
  if (x.value().cols() != in_) {
    throw DimensionError("linear layer '" + weight_->name + "' expects " + std::to_string(in_) + " inputs, got " +
                         shape_string(x.value().shape()));
  }
  return add(matmul(x, tape.parameter(*weight_)), tape.parameter(*bias_));
}

LstmCellParams::LstmCellParams(ParameterSet& params, const std::string& prefix, std::size_t input,
                               std::size_t hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
  w_ih_ = &params.add(prefix + ".W_ih", init_weight(input, 4 * hidden, rng));
  // fan_in of the recurrent matrix is the hidden size
  w_hh_ = &params.add(prefix + ".W_hh", init_weight(hidden, 4 * hidden, rng));
  bias_ = &params.add(prefix + ".b", Tensor::zeros(1, 4 * hidden));
}

LstmState LstmCellParams::zero_state(Tape& tape) const {
  return {tape.constant(Tensor::zeros(1, hidden_)), tape.constant(Tensor::zeros(1, hidden_))};
}

LstmState lstm_step(const LstmCellParams& params, Var x, const LstmState& prev) {
  Tape& tape = *x.tape;
  const std::size_t hid = params.hidden_size();
  if (x.value().cols() != params.input_size() || x.value().rows() != 1) {
    throw DimensionError("lstm_step input " + shape_string(x.value().shape()) + " does not match input size " +
                         std::to_string(params.input_size()));
  }
  if (prev.h.value().cols() != hid || prev.c.value().cols() != hid) {
    throw DimensionError("lstm_step state does not match hidden size " + std::to_string(hid));
  }
  Var gates = add(add(matmul(x, tape.parameter(params.w_ih())), matmul(prev.h, tape.parameter(params.w_hh()))),
                  tape.parameter(params.bias()));
  Var in_gate = sigmoid(slice_cols(gates, 0, hid));
  Var forget_gate = sigmoid(slice_cols(gates, hid, 2 * hid));
  Var cell_in = tanh(slice_cols(gates, 2 * hid, 3 * hid));
  Var out_gate = sigmoid(slice_cols(gates, 3 * hid, 4 * hid));
  Var c = add(mul(forget_gate, prev.c), mul(in_gate, cell_in));
  Var h = mul(out_gate, tanh(c));
  return {c, h};
}

}  // namespace eclipse
