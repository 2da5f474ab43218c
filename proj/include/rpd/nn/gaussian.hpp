#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "rpd/errors.hpp"
#include "rpd/random.hpp"

namespace rpd {

using ActionVec = std::vector<double>;

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Diagonal Gaussian over actions. log_std is clamped to [-20, 2].
class GaussianDist {
 public:
  GaussianDist(std::vector<double> mean, std::vector<double> log_std)
      : mean_(std::move(mean)), log_std_(std::move(log_std)) {
    if (mean_.size() != log_std_.size()) throw ConfigError("GaussianDist: mean and log_std lengths differ");
    for (auto& l : log_std_) {
      if (!std::isfinite(l) && !std::isinf(l)) throw ConfigError("GaussianDist: log_std is NaN");
      l = std::clamp(l, kLogStdMin, kLogStdMax);
    }
  }

  static GaussianDist from_std(std::vector<double> mean, const std::vector<double>& stddev) {
    std::vector<double> ls(stddev.size());
    for (std::size_t i = 0; i < ls.size(); ++i) ls[i] = std::log(stddev[i]);
    return GaussianDist(std::move(mean), std::move(ls));
  }

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& log_std() const { return log_std_; }
  double stddev(std::size_t i) const { return std::exp(log_std_[i]); }

 private:
  std::vector<double> mean_;
  std::vector<double> log_std_;
};

inline double gaussian_log_prob(const GaussianDist& d, const ActionVec& a) {
  if (a.size() != d.dim()) throw ConfigError("gaussian_log_prob: action dimension mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z = (a[i] - d.mean()[i]) / d.stddev(i);
    lp += -0.5 * z * z - d.log_std()[i] - kHalfLog2Pi;
  }
  return lp;
}

inline double gaussian_entropy(const GaussianDist& d) {
  double h = 0.0;
  for (double ls : d.log_std()) h += 0.5 + kHalfLog2Pi + ls;
  return h;
}

// a = mean + std * z with z ~ N(0, I) drawn from rng.
inline ActionVec gaussian_sample(const GaussianDist& d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ActionVec a(d.dim());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = d.mean()[i] + d.stddev(i) * normal(rng);
  return a;
}

// KL(p || q) for diagonal Gaussians.
inline double gaussian_kl(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim()) throw ConfigError("gaussian_kl: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double vp = std::exp(2.0 * p.log_std()[i]);
    const double vq = std::exp(2.0 * q.log_std()[i]);
    const double dm = p.mean()[i] - q.mean()[i];
    kl += q.log_std()[i] - p.log_std()[i] + (vp + dm * dm) / (2.0 * vq) - 0.5;
  }
  return kl;
}

}  // namespace rpd
