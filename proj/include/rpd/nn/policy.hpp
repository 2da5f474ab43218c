#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rpd/nn/autodiff.hpp"
#include "rpd/nn/gaussian.hpp"
#include "rpd/nn/matrix.hpp"
#include "rpd/nn/params.hpp"
#include "rpd/random.hpp"

namespace rpd {

struct PolicyArch {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<std::size_t> hidden{256, 256};  // tanh trunk shared by both heads
  double init_log_std = 0.0;

  bool operator==(const PolicyArch&) const = default;
};

struct PolicyOutput {
  Matrix mean;                // [B x act_dim]
  std::vector<double> value;  // [B]
};

struct PolicyGraph {
  Var mean;     // [B x act_dim]
  Var log_std;  // [1 x act_dim]
  Var value;    // [B x 1]
};

namespace detail {

// Matrix with orthonormal rows or columns (whichever is shorter), scaled by gain.
inline Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const std::size_t n = tall ? rows : cols;  // vector length
  const std::size_t k = tall ? cols : rows;  // vector count
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis(k, std::vector<double>(n));
  for (auto& v : basis)
    for (auto& x : v) x = normal(rng);
  // modified Gram-Schmidt
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (std::size_t t = 0; t < n; ++t) d += basis[i][t] * basis[j][t];
      for (std::size_t t = 0; t < n; ++t) basis[i][t] -= d * basis[j][t];
    }
    double norm = 0.0;
    for (double x : basis[i]) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : basis[i]) x /= norm;
  }
  Matrix w(rows, cols);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t t = 0; t < n; ++t) {
      if (tall)
        w(t, i) = gain * basis[i][t];
      else
        w(i, t) = gain * basis[i][t];
    }
  return w;
}

}  // namespace detail

// MLP-backed diagonal Gaussian policy with a value head. Parameter
// declaration order: trunk (W, b) pairs, mean head (W, b), value head (W, b),
// log_std. Weights are stored [in x out].
class GaussianPolicy {
 public:
  inline static constexpr double kHiddenGain = 1.4142135623730951;
  inline static constexpr double kMeanGain = 0.01;
  inline static constexpr double kValueGain = 1.0;

  // Zero-initialized network.
  explicit GaussianPolicy(PolicyArch arch) : arch_(std::move(arch)) {
    if (arch_.obs_dim == 0 || arch_.act_dim == 0) throw ConfigError("GaussianPolicy: obs_dim and act_dim must be positive");
    std::size_t in = arch_.obs_dim;
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      const std::size_t h = arch_.hidden[i];
      if (h == 0) throw ConfigError("GaussianPolicy: hidden layer width must be positive");
      params_.add("trunk" + std::to_string(i) + ".weight", Matrix(in, h));
      params_.add("trunk" + std::to_string(i) + ".bias", Matrix(1, h));
      in = h;
    }
    mean_w_ = params_.add("mean.weight", Matrix(in, arch_.act_dim));
    params_.add("mean.bias", Matrix(1, arch_.act_dim));
    value_w_ = params_.add("value.weight", Matrix(in, 1));
    params_.add("value.bias", Matrix(1, 1));
    log_std_ = params_.add("log_std", Matrix(1, arch_.act_dim, arch_.init_log_std));
    params_.freeze();
  }

  // Orthogonal initialization from a seed; biases start at zero.
  GaussianPolicy(PolicyArch arch, std::uint64_t seed) : GaussianPolicy(std::move(arch)) {
    Rng rng(seed);
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      auto& w = params_[2 * i].value;
      w = detail::orthogonal_init(w.rows(), w.cols(), kHiddenGain, rng);
    }
    auto& mw = params_[mean_w_].value;
    mw = detail::orthogonal_init(mw.rows(), mw.cols(), kMeanGain, rng);
    auto& vw = params_[value_w_].value;
    vw = detail::orthogonal_init(vw.rows(), vw.cols(), kValueGain, rng);
  }

  const PolicyArch& arch() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::vector<double> log_std() const {
    const auto& v = params_[log_std_].value.values();
    std::vector<double> out(v);
    for (auto& l : out) l = std::clamp(l, kLogStdMin, kLogStdMax);
    return out;
  }

  // Plain forward pass (no tape).
  PolicyOutput forward(const Matrix& obs) const {
    check_obs(obs);
    Matrix h = obs;
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      h = dense(h, params_[2 * i].value, params_[2 * i + 1].value);
      for (auto& v : h.values()) v = std::tanh(v);
    }
    PolicyOutput out;
    out.mean = dense(h, params_[mean_w_].value, params_[mean_w_ + 1].value);
    Matrix v = dense(h, params_[value_w_].value, params_[value_w_ + 1].value);
    out.value = v.values();
    return out;
  }

  // Differentiable forward pass; parameters become tape leaves.
  PolicyGraph forward(Tape& tape, const Matrix& obs) {
    check_obs(obs);
    Var h = tape.constant(obs);
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      h = ad::add_row(ad::matmul(h, tape.leaf(params_[2 * i])), tape.leaf(params_[2 * i + 1]));
      h = ad::tanh(h);
    }
    PolicyGraph g;
    g.mean = ad::add_row(ad::matmul(h, tape.leaf(params_[mean_w_])), tape.leaf(params_[mean_w_ + 1]));
    g.value = ad::add_row(ad::matmul(h, tape.leaf(params_[value_w_])), tape.leaf(params_[value_w_ + 1]));
    g.log_std = ad::clamp(tape.leaf(params_[log_std_]), kLogStdMin, kLogStdMax);
    return g;
  }

  GaussianDist dist(const Matrix& means, std::size_t row) const {
    auto r = means.row(row);
    return GaussianDist(std::vector<double>(r.begin(), r.end()), log_std());
  }

 private:
  void check_obs(const Matrix& obs) const {
    if (obs.cols() != arch_.obs_dim)
      throw ConfigError("policy forward: expected obs_dim " + std::to_string(arch_.obs_dim) + ", got " +
                        std::to_string(obs.cols()));
  }

  static Matrix dense(const Matrix& x, const Matrix& w, const Matrix& b) {
    // same summation order as the tape path: (x * w) + b
    Matrix y(x.rows(), w.cols());
    kernels::gemm_nn_acc(x, w, y);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto row = y.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    return y;
  }

  PolicyArch arch_;
  ParamStore params_;
  std::size_t mean_w_ = 0;
  std::size_t value_w_ = 0;
  std::size_t log_std_ = 0;
};

// Mean actions and values for a batch of observations.
inline PolicyOutput mlp_forward(const GaussianPolicy& policy, const Matrix& obs_batch) {
  return policy.forward(obs_batch);
}

}  // namespace rpd
