#include "eclipse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace eclipse {

// ---------------------------------------------------------------------------
// ParameterSet / Gradients

Parameter& ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t idx = params_.size();
  params_.push_back(Parameter{name, std::move(init), idx});
  index_.emplace(name, idx);
  return params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterSet::total_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Gradients::accumulate(const Gradients& other) {
  if (other.size() > grads_.size()) grads_.resize(other.size());
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (other[i].empty()) continue;
    if (grads_[i].empty()) {
      grads_[i] = other[i];
    } else {
      grads_[i] += other[i];
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (auto& v : g.values()) v *= factor;
  }
}

void Gradients::clear() {
  for (auto& g : grads_) g = Tensor();
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericsError("non-finite constant recorded on tape");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = grad_enabled_;
  return v;
}

Var Tape::parameter(const Parameter& param) {
  if (param_nodes_.size() <= param.index) param_nodes_.resize(param.index + 1, -1);
  if (param_nodes_[param.index] >= 0) {
    return Var{this, static_cast<std::uint32_t>(param_nodes_[param.index])};
  }
  Node n;
  n.external = &param.value;
  n.requires_grad = grad_enabled_;
  n.param_index = static_cast<std::int64_t>(param.index);
  nodes_.push_back(std::move(n));
  param_nodes_[param.index] = static_cast<std::int64_t>(nodes_.size() - 1);
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const { return node_value(nodes_[v.id]); }

Var Tape::record(Tensor value, std::initializer_list<Var> parents, const char* op, BackwardFn fn) {
  if (consumed_) throw std::logic_error(std::string("op '") + op + "' recorded on a tape after backward()");
  if (!value.all_finite()) {
    throw NumericsError(std::string("NaN guard: non-finite output from op '") + op + "' with shape " +
                        shape_string(value.shape()));
  }
  bool needs_grad = false;
  for (Var p : parents) {
    if (p.tape != this) throw std::logic_error(std::string("op '") + op + "' mixes vars from different tapes");
    needs_grad = needs_grad || nodes_[p.id].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor(node_value(n).shape());
  return n.grad;
}

Gradients Tape::backward(Var loss) {
  if (consumed_) throw std::logic_error("backward() called twice on the same tape; re-run the forward pass");
  if (loss.tape != this) throw std::logic_error("backward() on a var from another tape");
  if (value(loss).size() != 1) {
    throw DimensionError("backward() requires a scalar loss, got " + shape_string(value(loss).shape()));
  }
  consumed_ = true;
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    // Closures only touch grad buffers of earlier nodes; nodes_ never grows here.
    n.backward(*this, node_value(n), n.grad);
  }
  std::size_t num_params = param_nodes_.size();
  Gradients grads(num_params);
  for (std::size_t p = 0; p < num_params; ++p) {
    if (param_nodes_[p] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(param_nodes_[p])];
    if (!n.grad.empty()) grads[p] = n.grad;
  }
  return grads;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(node_value(n).shape());
  return n.grad;
}

// ---------------------------------------------------------------------------
// kernels

void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimension mismatch: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  if (c.rows() != m || c.cols() != n) throw DimensionError("matmul output shape mismatch");
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  if (!accumulate) std::fill(pc, pc + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  gemm(a, b, c);
  return c;
}

namespace {

// c (m x n) += a (m x k) * b^T where b is (n x k)
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      pc[i * n + j] += s;
    }
  }
}

// c (k x n) += a^T * b where a is (m x k), b is (m x n)
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      double* crow = pc + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tape& tape_of(Var v) {
  if (!v.tape) throw std::logic_error("operation on an unbound Var");
  return *v.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor like(const Tensor& t) { return Tensor::zeros(t.rows(), t.cols()); }

template <typename F, typename G>
Var unary(Var a, const char* op, F forward, G derivative) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor y = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  return tape.record(std::move(y), {a}, op, [a, derivative](Tape& t, const Tensor&, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    const Tensor& x = t.value(a);
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * derivative(x[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> softmax_values(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

// ---------------------------------------------------------------------------
// ops

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  Tensor c = matmul_values(a.value(), b.value());
  return tape.record(std::move(c), {a, b}, "matmul", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) gemm_nt_acc(g, t.value(b), t.grad_buffer(a));
    if (t.requires_grad(b)) gemm_tn_acc(t.value(a), g, t.grad_buffer(b));
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor y = Tensor::zeros(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(c, r) = x(r, c);
  return tape.record(std::move(y), {a}, "transpose", [a](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(c, r);
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const bool broadcast = y.rows() == 1 && x.rows() > 1 && y.cols() == x.cols();
  if (!broadcast) require_same_shape(x, y, "add");
  Tensor out = like(x);
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + (broadcast ? y[i % n] : y[i]);
  return tape.record(std::move(out), {a, b}, "add", [a, b, broadcast, n](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) t.grad_buffer(a) += g;
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      if (broadcast) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      } else {
        gb += g;
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "sub");
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return tape.record(std::move(out), {a, b}, "sub", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) t.grad_buffer(a) += g;
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return tape.record(std::move(out), {a, b}, "mul", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double x) { return x * factor; }, [factor](double) { return factor; });
}

Var add_scalar(Var a, double value) {
  return unary(a, "add_scalar", [value](double x) { return x + value; }, [](double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double x) {
    const double s = stable_sigmoid(x);
    return s * (1.0 - s);
  });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double x) {
    const double th = std::tanh(x);
    return 1.0 - th * th;
  });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var softmax(Var a, int axis) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (axis != 0 && axis != 1) throw DimensionError("softmax axis must be 0 or 1");
  const std::size_t cols = x.cols();
  const std::size_t groups = axis == 1 ? x.rows() : cols;
  const std::size_t len = axis == 1 ? cols : x.rows();
  auto at = [axis, cols](std::size_t grp, std::size_t i) { return axis == 1 ? grp * cols + i : i * cols + grp; };
  Tensor y = like(x);
  std::vector<double> buf(len);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    for (std::size_t i = 0; i < len; ++i) buf[i] = x[at(grp, i)];
    auto s = softmax_values(buf);
    for (std::size_t i = 0; i < len; ++i) y[at(grp, i)] = s[i];
  }
  return tape.record(std::move(y), {a}, "softmax",
                     [a, groups, len, at](Tape& t, const Tensor& y, const Tensor& g) {
                       Tensor& ga = t.grad_buffer(a);
                       for (std::size_t grp = 0; grp < groups; ++grp) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < len; ++i) dot += g[at(grp, i)] * y[at(grp, i)];
                         for (std::size_t i = 0; i < len; ++i) {
                           const std::size_t k = at(grp, i);
                           ga[k] += y[k] * (g[k] - dot);
                         }
                       }
                     });
}

Var log_softmax(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor y = like(x);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) y(r, c) = x(r, c) - lse;
  }
  return tape.record(std::move(y), {a}, "log_softmax", [a](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
    }
  });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return tape.record(Tensor::scalar(s), {a}, "sum", [a](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (auto& v : ga.values()) v += g[0];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw DimensionError("concat axis must be 0 or 1");
  Tape& tape = tape_of(parts.front());
  const Tensor& first = parts.front().value();
  std::size_t rows = 0, cols = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    if (axis == 1) {
      if (v.rows() != first.rows()) {
        throw DimensionError("concat along columns needs equal row counts: " + shape_string(first.shape()) +
                             " vs " + shape_string(v.shape()));
      }
      cols += v.cols();
    } else {
      if (v.cols() != first.cols()) {
        throw DimensionError("concat along rows needs equal column counts: " + shape_string(first.shape()) +
                             " vs " + shape_string(v.shape()));
      }
      rows += v.rows();
    }
  }
  if (axis == 1) rows = first.rows();
  else cols = first.cols();
  Tensor out = Tensor::zeros(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 1) out(r, offset + c) = v(r, c);
        else out(offset + r, c) = v(r, c);
      }
    offset += axis == 1 ? v.cols() : v.rows();
  }
  // record() derives requires_grad from the listed parents, so list one that
  // needs a gradient if any does; the closure walks every part.
  Var anchor = parts.front();
  for (Var p : parts) {
    if (p.tape != &tape) throw std::logic_error("concat mixes vars from different tapes");
    if (tape.requires_grad(p)) anchor = p;
  }
  return tape.record(std::move(out), {anchor}, "concat", [parts, axis](Tape& t, const Tensor&, const Tensor& g) {
    std::size_t offset = 0;
    for (Var p : parts) {
      const Tensor& v = t.value(p);
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) gp(r, c) += axis == 1 ? g(r, offset + c) : g(offset + r, c);
      }
      offset += axis == 1 ? v.cols() : v.rows();
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (begin >= end || end > x.cols()) throw DimensionError("slice_cols range out of bounds");
  Tensor out = Tensor::zeros(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
  return tape.record(std::move(out), {a}, "slice_cols", [a, begin](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (begin >= end || end > x.rows()) throw DimensionError("slice_rows range out of bounds");
  const std::size_t cols = x.cols();
  std::vector<double> data(x.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           x.values().begin() + static_cast<std::ptrdiff_t>(end * cols));
  Tensor out = Tensor::matrix(end - begin, cols, std::move(data));
  return tape.record(std::move(out), {a}, "slice_rows", [a, begin, cols](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

Var pick(Var a, std::size_t flat_index) {
  Tape& tape = tape_of(a);
  if (flat_index >= a.value().size()) throw DimensionError("pick index out of range");
  return tape.record(Tensor::scalar(a.value()[flat_index]), {a}, "pick",
                     [a, flat_index](Tape& t, const Tensor&, const Tensor& g) { t.grad_buffer(a)[flat_index] += g[0]; });
}

Var max_excluding(Var a, std::size_t excluded) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  if (x.size() < 2) throw DimensionError("max_excluding needs at least two entries");
  if (excluded >= x.size()) throw DimensionError("max_excluding index out of range");
  std::size_t best = excluded == 0 ? 1 : 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i != excluded && x[i] > x[best]) best = i;
  }
  return tape.record(Tensor::scalar(x[best]), {a}, "max_excluding",
                     [a, best](Tape& t, const Tensor&, const Tensor& g) { t.grad_buffer(a)[best] += g[0]; });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  Tape& tape = tape_of(table);
  const Tensor& w = table.value();
  if (ids.empty()) throw DimensionError("embedding_lookup with an empty id sequence");
  const std::size_t dim = w.cols();
  Tensor out = Tensor::zeros(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= w.rows()) {
      throw DimensionError("embedding id " + std::to_string(id) + " outside table of " + std::to_string(w.rows()));
    }
    for (std::size_t c = 0; c < dim; ++c) out(i, c) = w(static_cast<std::size_t>(id), c);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return tape.record(std::move(out), {table}, "embedding_lookup",
                     [table, idv = std::move(idv), dim](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& gw = t.grad_buffer(table);
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t c = 0; c < dim; ++c) gw(static_cast<std::size_t>(idv[i]), c) += g(i, c);
                     });
}

Var interleave_rows(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "interleave_rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(2 * rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      out(2 * r, c) = x(r, c);
      out(2 * r + 1, c) = y(r, c);
    }
  return tape.record(std::move(out), {a, b}, "interleave_rows", [a, b](Tape& t, const Tensor&, const Tensor& g) {
    const std::size_t cols = g.cols();
    for (int which = 0; which < 2; ++which) {
      Var p = which == 0 ? a : b;
      if (!t.requires_grad(p)) continue;
      Tensor& gp = t.grad_buffer(p);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) gp(r, c) += g(2 * r + static_cast<std::size_t>(which), c);
    }
  });
}

Var straight_through(Tensor hard, Var soft) {
  Tape& tape = tape_of(soft);
  require_same_shape(hard, soft.value(), "straight_through");
  return tape.record(std::move(hard), {soft}, "straight_through",
                     [soft](Tape& t, const Tensor&, const Tensor& g) { t.grad_buffer(soft) += g; });
}

}  // namespace eclipse
