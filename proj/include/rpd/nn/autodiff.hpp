#pragma once

// Tape-based reverse-mode differentiation over dense matrices. Only the
// operations the policy network and the training losses need are provided.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "rpd/nn/matrix.hpp"
#include "rpd/nn/params.hpp"

namespace rpd {

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), nullptr, false, nullptr); }

  // Leaf bound to a parameter; backward() accumulates into param.grad.
  Var leaf(Parameter& param) { return push(param.value, nullptr, true, &param); }

  Var record(Matrix value, BackwardFn fn, bool requires_grad) {
    return push(std::move(value), requires_grad ? std::move(fn) : BackwardFn{}, requires_grad, nullptr);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient slot of a node, allocated on first use.
  Matrix& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Propagates d(loss)/d(node) back to every parameter leaf. Gradients are
  // added to the parameter slots, so repeated calls accumulate.
  void backward(Var loss) {
    if (loss.tape() != this) throw UsageError("backward: variable belongs to another tape");
    if (loss.value().size() != 1) throw ConfigError("backward: loss must be a scalar, got " + shape_string(loss.value()));
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss.id())[0] += 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.param) {
        auto& pg = n.param->grad.values();
        const auto& g = n.grad.values();
        for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
      } else if (n.backward) {
        n.backward(*this, i);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  Var push(Matrix value, BackwardFn fn, bool requires_grad, Parameter* param) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(fn), requires_grad, param});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace ad {

namespace detail {
inline void check_same(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                      shape_string(b.value()));
}
inline bool any_grad(const Var& a) { return a.tape()->requires_grad(a.id()); }
inline bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

template <class F>
Var unary(const Var& a, Matrix out, F local_grad) {
  const std::size_t ia = a.id();
  return a.tape()->record(
      std::move(out),
      [ia, local_grad](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * local_grad(x[k], y[k]);
      },
      any_grad(a));
}
}  // namespace detail

// [n x k] * [k x m]
inline Var matmul(const Var& a, const Var& b) {
  Matrix out = rpd::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out),
      [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) kernels::gemm_nt_acc(g, t.value(ib), t.grad(ia));
        if (t.requires_grad(ib)) kernels::gemm_tn_acc(t.value(ia), g, t.grad(ib));
      },
      detail::any_grad(a, b));
}

// x: [n x m] plus row vector b: [1 x m] on every row.
inline Var add_row(const Var& x, const Var& b) {
  const Matrix& xv = x.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw ConfigError("add_row: bias " + shape_string(bv) + " does not match " + shape_string(xv));
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape()->record(
      std::move(out),
      [ix, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ix)) {
          Matrix& gx = t.grad(ix);
          for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
        }
        if (t.requires_grad(ib)) {
          Matrix& gb = t.grad(ib);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
          }
        }
      },
      detail::any_grad(x, b));
}

// Repeats a [1 x m] row vector n times.
inline Var broadcast_rows(const Var& v, std::size_t n) {
  const Matrix& vv = v.value();
  if (vv.rows() != 1) throw ConfigError("broadcast_rows: expected a row vector, got " + shape_string(vv));
  Matrix out(n, vv.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(vv.data(), vv.data() + vv.cols(), out.row(r).data());
  const std::size_t iv = v.id();
  return v.tape()->record(
      std::move(out),
      [iv](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Matrix& gv = t.grad(iv);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto row = g.row(r);
          for (std::size_t c = 0; c < row.size(); ++c) gv[c] += row[c];
        }
      },
      detail::any_grad(v));
}

inline Var add(const Var& a, const Var& b) {
  detail::check_same(a, b, "add");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out),
      [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) {
          Matrix& ga = t.grad(ia);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (t.requires_grad(ib)) {
          Matrix& gb = t.grad(ib);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        }
      },
      detail::any_grad(a, b));
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same(a, b, "sub");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out),
      [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) {
          Matrix& ga = t.grad(ia);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (t.requires_grad(ib)) {
          Matrix& gb = t.grad(ib);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
        }
      },
      detail::any_grad(a, b));
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::check_same(a, b, "mul");
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out),
      [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) {
          Matrix& ga = t.grad(ia);
          const Matrix& bv = t.value(ib);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[k];
        }
        if (t.requires_grad(ib)) {
          Matrix& gb = t.grad(ib);
          const Matrix& av = t.value(ia);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[k];
        }
      },
      detail::any_grad(a, b));
}

inline Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (auto& v : out.values()) v *= s;
  return detail::unary(a, std::move(out), [s](double, double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  Matrix out = a.value();
  for (auto& v : out.values()) v += s;
  return detail::unary(a, std::move(out), [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var tanh(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return detail::unary(a, std::move(out), [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return detail::unary(a, std::move(out), [](double, double y) { return y; });
}

inline Var square(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = v * v;
  return detail::unary(a, std::move(out), [](double x, double) { return 2.0 * x; });
}

// Subgradient 0 at the origin.
inline Var abs(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::abs(v);
  return detail::unary(a, std::move(out), [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

// Gradient passes only strictly inside (lo, hi).
inline Var clamp(const Var& a, double lo, double hi) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return detail::unary(a, std::move(out), [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

namespace detail {
template <bool TakeMin>
Var select(const Var& a, const Var& b) {
  check_same(a, b, TakeMin ? "minimum" : "maximum");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = TakeMin ? std::min(av[k], bv[k]) : std::max(av[k], bv[k]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out),
      [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(ib);
        Matrix* ga = t.requires_grad(ia) ? &t.grad(ia) : nullptr;
        Matrix* gb = t.requires_grad(ib) ? &t.grad(ib) : nullptr;
        for (std::size_t k = 0; k < g.size(); ++k) {
          // ties go to the first argument
          const bool pick_a = TakeMin ? (x[k] <= y[k]) : (x[k] >= y[k]);
          if (pick_a) {
            if (ga) (*ga)[k] += g[k];
          } else if (gb) {
            (*gb)[k] += g[k];
          }
        }
      },
      any_grad(a, b));
}
}  // namespace detail

inline Var minimum(const Var& a, const Var& b) { return detail::select<true>(a, b); }
inline Var maximum(const Var& a, const Var& b) { return detail::select<false>(a, b); }

// [n x m] -> [n x 1]
inline Var row_sums(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(
      std::move(out),
      [ia](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(ia);
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (auto& v : ga.row(r)) v += g[r];
      },
      detail::any_grad(a));
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(
      Matrix(1, 1, s),
      [ia](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad(ia).values()) v += g;
      },
      detail::any_grad(a));
}

inline Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ConfigError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

// Elementwise product with a constant matrix (no gradient to the constant).
inline Var mul_const(const Var& a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw ConfigError("mul_const: shape mismatch");
  Var cv = a.tape()->constant(c);
  return mul(a, cv);
}

inline Var sub_const(const Var& a, const Matrix& c) {
  if (!a.value().same_shape(c)) throw ConfigError("sub_const: shape mismatch");
  return sub(a, a.tape()->constant(c));
}

// Weighted scalar combination sum_i w_i * x_i of 1x1 nodes.
inline Var linear_combination(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw ConfigError("linear_combination: no terms");
  Var acc = scale(terms.front().second, terms.front().first);
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, scale(terms[i].second, terms[i].first));
  return acc;
}

}  // namespace ad
}  // namespace rpd
