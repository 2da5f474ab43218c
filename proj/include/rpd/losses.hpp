#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rpd/errors.hpp"
#include "rpd/nn/autodiff.hpp"
#include "rpd/nn/gaussian.hpp"
#include "rpd/nn/matrix.hpp"
#include "rpd/nn/policy.hpp"

namespace rpd {

enum class DistillVariant { None, RpdMse, RpdL1, RpdBc, PpdKl };

inline std::string to_string(DistillVariant v) {
  switch (v) {
    case DistillVariant::None: return "none";
    case DistillVariant::RpdMse: return "rpd_mse";
    case DistillVariant::RpdL1: return "rpd_l1";
    case DistillVariant::RpdBc: return "rpd_bc";
    case DistillVariant::PpdKl: return "ppd_kl";
  }
  return "none";
}

inline DistillVariant variant_from_string(const std::string& s) {
  for (auto v : {DistillVariant::None, DistillVariant::RpdMse, DistillVariant::RpdL1, DistillVariant::RpdBc,
                 DistillVariant::PpdKl})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown loss variant '" + s + "' (expected none, rpd_mse, rpd_l1, rpd_bc or ppd_kl)");
}

struct LossConfig {
  DistillVariant variant = DistillVariant::None;
  double distill_weight = 1.0;  // beta
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double ppd_lambda = 1.0;
  double ppd_clip = 0.2;
  double value_clip = 0.2;  // 0 disables value clipping

  void validate() const {
    if (!(distill_weight >= 0.0)) throw ConfigError("loss.distill_weight must be >= 0");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("loss.clip_eps must be in (0, 1)");
    if (!std::isfinite(value_coef)) throw ConfigError("loss.value_coef must be finite");
    if (!std::isfinite(entropy_coef)) throw ConfigError("loss.entropy_coef must be finite");
    if (!(ppd_lambda >= 0.0)) throw ConfigError("loss.ppd_lambda must be >= 0");
    if (!(ppd_clip >= 0.0)) throw ConfigError("loss.ppd_clip must be >= 0");
    if (!(value_clip >= 0.0)) throw ConfigError("loss.value_clip must be >= 0");
  }
};

namespace ad {

// Row log-densities [B x 1] of `actions` under N(mean, exp(log_std)^2).
inline Var gaussian_log_prob(const Var& mean, const Var& log_std, const Matrix& actions) {
  const std::size_t B = mean.rows(), A = mean.cols();
  if (!actions.same_shape(mean.value())) throw ConfigError("log_prob: action batch shape mismatch");
  if (log_std.rows() != 1 || log_std.cols() != A) throw ConfigError("log_prob: log_std must be [1 x act_dim]");
  const Var ls = broadcast_rows(log_std, B);
  const Var z = mul(sub(mean.tape()->constant(actions), mean), exp(neg(ls)));
  const Var per_dim = add(scale(square(z), -0.5), neg(ls));
  return add_scalar(row_sums(per_dim), -static_cast<double>(A) * kHalfLog2Pi);
}

// Entropy of the state-independent diagonal Gaussian (1 x 1).
inline Var gaussian_entropy(const Var& log_std) {
  return add_scalar(sum(log_std), static_cast<double>(log_std.cols()) * (0.5 + kHalfLog2Pi));
}

}  // namespace ad

namespace detail {
inline Matrix column(std::span<const double> v) { return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end())); }
}  // namespace detail

// Clipped surrogate, averaged over the batch (an objective to maximize).
inline Var ppo_clip_loss(const Var& new_log_probs, std::span<const double> old_log_probs,
                         std::span<const double> advantages, double eps) {
  const std::size_t B = new_log_probs.rows();
  if (new_log_probs.cols() != 1 || old_log_probs.size() != B || advantages.size() != B)
    throw ConfigError("ppo_clip_loss: batch shape mismatch");
  const Matrix adv = detail::column(advantages);
  const Var ratio = ad::exp(ad::sub_const(new_log_probs, detail::column(old_log_probs)));
  const Var unclipped = ad::mul_const(ratio, adv);
  const Var clipped = ad::mul_const(ad::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  return ad::mean(ad::minimum(unclipped, clipped));
}

// 0.5 * mean of max((v - R)^2, (v_clip - R)^2) with v_clip within clip of the
// rollout-time value; clip <= 0 gives the plain squared error.
inline Var value_loss(const Var& values, std::span<const double> old_values, std::span<const double> returns,
                      double clip) {
  const std::size_t B = values.rows();
  if (values.cols() != 1 || old_values.size() != B || returns.size() != B)
    throw ConfigError("value_loss: batch shape mismatch");
  const Matrix ret = detail::column(returns);
  const Var err = ad::square(ad::sub_const(values, ret));
  if (clip <= 0.0) return ad::scale(ad::mean(err), 0.5);
  const Matrix old = detail::column(old_values);
  const Var delta = ad::clamp(ad::sub_const(values, old), -clip, clip);
  const Var clipped = ad::add(delta, values.tape()->constant(old));
  const Var clipped_err = ad::square(ad::sub_const(clipped, ret));
  return ad::scale(ad::mean(ad::maximum(err, clipped_err)), 0.5);
}

// Mean over batch and action dimensions of (mu - teacher)^2.
inline Var mse_distill_loss(const Var& policy_means, const Matrix& teacher_means) {
  if (!policy_means.value().same_shape(teacher_means)) throw ConfigError("mse_distill_loss: shape mismatch");
  return ad::mean(ad::square(ad::sub_const(policy_means, teacher_means)));
}

inline Var l1_distill_loss(const Var& policy_means, const Matrix& teacher_means) {
  if (!policy_means.value().same_shape(teacher_means)) throw ConfigError("l1_distill_loss: shape mismatch");
  return ad::mean(ad::abs(ad::sub_const(policy_means, teacher_means)));
}

// Mean negative log-likelihood of teacher actions under the policy.
inline Var bc_nll_loss(const Var& policy_means, const Var& log_std, const Matrix& teacher_actions) {
  return ad::neg(ad::mean(ad::gaussian_log_prob(policy_means, log_std, teacher_actions)));
}

// Per-row KL(teacher_fit || policy) as a [B x 1] node.
inline Var teacher_kl_rows(const Var& policy_means, const Var& log_std, std::span<const GaussianDist> teacher_fit) {
  const std::size_t B = policy_means.rows(), A = policy_means.cols();
  if (teacher_fit.size() != B) throw ConfigError("ppd_kl_loss: one teacher fit per row expected");
  Matrix mu_p(B, A), var_p(B, A), log_sd_p(B, A);
  for (std::size_t b = 0; b < B; ++b) {
    if (teacher_fit[b].dim() != A) throw ConfigError("ppd_kl_loss: teacher fit dimension mismatch");
    for (std::size_t d = 0; d < A; ++d) {
      mu_p(b, d) = teacher_fit[b].mean()[d];
      log_sd_p(b, d) = teacher_fit[b].log_std()[d];
      var_p(b, d) = std::exp(2.0 * log_sd_p(b, d));
    }
  }
  Tape& t = *policy_means.tape();
  const Var ls = ad::broadcast_rows(log_std, B);
  const Var inv_var_q = ad::exp(ad::scale(ls, -2.0));
  const Var diff = ad::sub(t.constant(mu_p), policy_means);
  const Var spread = ad::add(t.constant(var_p), ad::square(diff));
  const Var per_dim = ad::add_scalar(ad::add(ad::sub_const(ls, log_sd_p), ad::scale(ad::mul(spread, inv_var_q), 0.5)), -0.5);
  return ad::row_sums(per_dim);
}

// Mean over rows of KL(teacher_fit || policy), each row capped at
// (1 + clip) times its value under the rollout-time policy.
inline Var ppd_kl_loss(const Var& policy_means, const Var& log_std, std::span<const GaussianDist> teacher_fit,
                       std::span<const double> rollout_kl, double clip) {
  const Var kl = teacher_kl_rows(policy_means, log_std, teacher_fit);
  if (rollout_kl.size() != kl.rows()) throw ConfigError("ppd_kl_loss: one rollout KL per row expected");
  Matrix cap(kl.rows(), 1);
  for (std::size_t b = 0; b < kl.rows(); ++b) cap(b, 0) = (1.0 + clip) * rollout_kl[b];
  return ad::mean(ad::minimum(kl, policy_means.tape()->constant(cap)));
}

inline Var ppd_kl_loss(const Var& policy_means, const Var& log_std, std::span<const GaussianDist> teacher_fit,
                       std::span<const GaussianDist> rollout_policy, double clip) {
  if (rollout_policy.size() != teacher_fit.size()) throw ConfigError("ppd_kl_loss: one rollout policy per row expected");
  std::vector<double> kl(teacher_fit.size());
  for (std::size_t b = 0; b < kl.size(); ++b) kl[b] = gaussian_kl(teacher_fit[b], rollout_policy[b]);
  return ppd_kl_loss(policy_means, log_std, teacher_fit, std::span<const double>(kl), clip);
}

// Everything the objective needs for one minibatch.
struct LossBatch {
  Matrix actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;  // already normalized
  std::vector<double> old_values;
  std::vector<double> returns;
  Matrix teacher_means;                   // rpd variants
  std::vector<GaussianDist> teacher_fit;  // ppd
  std::vector<double> teacher_fit_kl;     // ppd
};

struct LossTerms {
  Var total;
  Var ppo;
  Var value;
  Var entropy;
  std::optional<Var> distill;  // absent for variant none
};

struct LossDiagnostics {
  double total = 0.0;
  double ppo = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double distill = 0.0;
};

// total = -ppo + value_coef * value - entropy_coef * entropy + beta * distill.
inline LossTerms rpd_objective(const PolicyGraph& g, const LossBatch& b, const LossConfig& cfg,
                               LossDiagnostics* diag = nullptr) {
  LossTerms terms;
  const Var new_lp = ad::gaussian_log_prob(g.mean, g.log_std, b.actions);
  terms.ppo = ppo_clip_loss(new_lp, b.old_log_probs, b.advantages, cfg.clip_eps);
  terms.value = value_loss(g.value, b.old_values, b.returns, cfg.value_clip);
  terms.entropy = ad::gaussian_entropy(g.log_std);

  switch (cfg.variant) {
    case DistillVariant::None: break;
    case DistillVariant::RpdMse: terms.distill = mse_distill_loss(g.mean, b.teacher_means); break;
    case DistillVariant::RpdL1: terms.distill = l1_distill_loss(g.mean, b.teacher_means); break;
    case DistillVariant::RpdBc: terms.distill = bc_nll_loss(g.mean, g.log_std, b.teacher_means); break;
    case DistillVariant::PpdKl:
      terms.distill = ad::scale(ppd_kl_loss(g.mean, g.log_std, b.teacher_fit, std::span<const double>(b.teacher_fit_kl),
                                            cfg.ppd_clip),
                                cfg.ppd_lambda);
      break;
  }

  auto check = [](const char* name, const Var& v) {
    if (!std::isfinite(v.scalar())) throw NumericalError(name, std::string("non-finite loss term: ") + name);
  };
  check("ppo", terms.ppo);
  check("value", terms.value);
  check("entropy", terms.entropy);
  if (terms.distill) check("distill", *terms.distill);

  std::vector<std::pair<double, Var>> parts{{-1.0, terms.ppo}, {cfg.value_coef, terms.value}};
  if (cfg.entropy_coef != 0.0) parts.emplace_back(-cfg.entropy_coef, terms.entropy);
  if (terms.distill && cfg.distill_weight != 0.0) parts.emplace_back(cfg.distill_weight, *terms.distill);
  terms.total = ad::linear_combination(parts);
  check("total", terms.total);

  if (diag) {
    diag->total = terms.total.scalar();
    diag->ppo = terms.ppo.scalar();
    diag->value = terms.value.scalar();
    diag->entropy = terms.entropy.scalar();
    diag->distill = terms.distill ? terms.distill->scalar() : 0.0;
  }
  return terms;
}

}  // namespace rpd
