#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rpd/nn/params.hpp"

namespace rpd {

struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  AdamState() = default;
  AdamState(const ParamStore& params, double lr) : learning_rate(lr) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.value.rows(), p.value.cols());
      second_moment.emplace_back(p.value.rows(), p.value.cols());
    }
  }
};

// One bias-corrected Adam update. Gradient slots are left untouched.
inline void adam_step(ParamStore& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) throw ConfigError("adam_step: state does not match parameters");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (!m.same_shape(p.value)) throw ConfigError("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (auto& p : params)
      for (auto& g : p.grad.values()) g *= s;
  }
  return norm;
}

}  // namespace rpd
