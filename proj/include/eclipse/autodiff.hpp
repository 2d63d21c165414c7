#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every forward op together with a closure that propagates the
// output gradient to its parents. Ops are free functions taking Var handles;
// their results live on the tape of their first operand. Parameters are
// referenced, not copied, so they must outlive any tape that uses them.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eclipse/tensor.hpp"

namespace eclipse {

class Tape;

struct Parameter {
  std::string name;
  Tensor value;
  std::size_t index = 0;
};

// Named, insertion-ordered parameter registry. References returned by add()
// stay valid for the lifetime of the set.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_scalars() const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Gradient map keyed by parameter index; entries of untouched parameters stay empty.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::size_t num_params) : grads_(num_params) {}

  std::size_t size() const { return grads_.size(); }
  bool has(std::size_t index) const { return index < grads_.size() && !grads_[index].empty(); }
  const Tensor& operator[](std::size_t index) const { return grads_[index]; }
  Tensor& operator[](std::size_t index) { return grads_[index]; }

  void resize(std::size_t num_params) { grads_.resize(num_params); }
  void accumulate(const Gradients& other);
  void scale(double factor);
  void clear();

 private:
  std::vector<Tensor> grads_;
};

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var parameter(const Parameter& param);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Runs the reverse sweep from a scalar loss. Each recorded op is visited at
  // most once; a second call on the same tape throws std::logic_error.
  Gradients backward(Var loss);

  // Gradient of a recorded value after backward(); zero-filled if nothing flowed into it.
  Tensor grad(Var v) const;

  // Op-author interface.
  Var record(Tensor value, std::initializer_list<Var> parents, const char* op, BackwardFn fn);
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    BackwardFn backward;
    std::int64_t param_index = -1;
    bool requires_grad = false;
  };

  const Tensor& node_value(const Node& n) const { return n.external ? *n.external : n.value; }

  std::deque<Node> nodes_;  // deque: value() references survive later records
  std::vector<std::int64_t> param_nodes_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

// ---- dense kernels (no tape) ----
// C = A * B, optionally accumulated into C. Each output row is computed with the
// same k-ordered accumulation regardless of how many rows A has.
void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
Tensor matmul_values(const Tensor& a, const Tensor& b);
std::vector<double> softmax_values(std::span<const double> x);

// ---- differentiable ops ----
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);  // b may be a 1 x n row broadcast over the rows of a
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // element-wise product
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var neg(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var log(Var a);
Var exp(Var a);
Var softmax(Var a, int axis = 1);
Var log_softmax(Var a);  // row-wise
Var sum(Var a);
Var concat(const std::vector<Var>& parts, int axis = 1);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var pick(Var a, std::size_t flat_index);
Var max_excluding(Var a, std::size_t excluded);  // max over the flattened entries except one
Var embedding_lookup(Var table, std::span<const int> ids);
Var interleave_rows(Var a, Var b);  // rows a0, b0, a1, b1, ...
// Forward value is `hard`; the incoming gradient is passed to `soft` unchanged.
Var straight_through(Tensor hard, Var soft);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace eclipse
