#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rpd/envs.hpp"
#include "rpd/errors.hpp"
#include "rpd/nn/gaussian.hpp"
#include "rpd/nn/matrix.hpp"
#include "rpd/nn/policy.hpp"
#include "rpd/random.hpp"
#include "rpd/teacher.hpp"

namespace rpd {

// Transitions stored time-major: row t * lanes + n.
struct RolloutBuffer {
  std::size_t steps = 0;
  std::size_t lanes = 0;

  Matrix observations;  // [T*N x obs_dim]
  Matrix actions;       // [T*N x act_dim]
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;

  Matrix teacher_means;                   // [T*N x act_dim], empty without a teacher
  std::vector<GaussianDist> teacher_fit;  // per row, PPD only
  std::vector<double> teacher_fit_kl;     // KL(teacher_fit || rollout policy) per row, PPD only

  std::vector<double> last_values;  // V(s_T) per lane
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return steps * lanes; }
  std::size_t index(std::size_t t, std::size_t n) const { return t * lanes + n; }
  bool has_teacher() const { return teacher_means.rows() == size() && size() > 0; }
  bool has_teacher_fit() const { return teacher_fit.size() == size() && size() > 0; }
};

struct TeacherBinding {
  TeacherPolicy* teacher = nullptr;  // nullptr: no queries
  std::string instruction;
  int sample_count = 1;
  bool fit = false;  // also fit a Gaussian per row (needs sample_count >= 2)
};

struct CollectStats {
  std::size_t teacher_queries = 0;  // observation rows sent to the teacher
  std::size_t episodes_finished = 0;
  std::size_t successes = 0;
  double reward_sum = 0.0;
};

// Persistent vectorized environment: lane states plus current observations.
struct VecEnv {
  EnvSpec spec;
  std::vector<EnvState> states;
  Matrix obs;

  VecEnv(EnvSpec s, std::size_t lanes, std::uint64_t seed) : spec(std::move(s)) {
    spec.validate();
    states = make_lanes(spec, lanes, seed, &obs);
  }
  std::size_t lanes() const { return states.size(); }
};

// Rolls the current policy for `horizon` steps across all lanes.
inline RolloutBuffer collect(const GaussianPolicy& policy, VecEnv& env, const TeacherBinding& teacher, int horizon,
                             Rng& rng, CollectStats* stats = nullptr) {
  if (horizon < 1) throw ConfigError("collect: horizon must be >= 1");
  const std::size_t T = static_cast<std::size_t>(horizon);
  const std::size_t N = env.lanes();
  const std::size_t O = env.spec.obs_dim();
  const std::size_t A = env.spec.act_dim();
  if (policy.arch().act_dim != A) throw ConfigError("collect: policy act_dim does not match the environment");
  if (teacher.teacher && teacher.teacher->act_dim() != A)
    throw ConfigError("collect: teacher act_dim does not match the environment");
  if (teacher.fit && teacher.sample_count < 2) throw ConfigError("collect: Gaussian fit needs sample_count >= 2");

  RolloutBuffer buf;
  buf.steps = T;
  buf.lanes = N;
  buf.observations = Matrix(T * N, O);
  buf.actions = Matrix(T * N, A);
  buf.log_probs.resize(T * N);
  buf.values.resize(T * N);
  buf.rewards.resize(T * N);
  buf.terminated.resize(T * N);
  buf.truncated.resize(T * N);
  if (teacher.teacher) buf.teacher_means = Matrix(T * N, A);
  if (teacher.fit) {
    buf.teacher_fit.reserve(T * N);
    buf.teacher_fit_kl.resize(T * N);
  }

  const auto log_std = policy.log_std();
  Matrix acts(N, A);
  for (std::size_t t = 0; t < T; ++t) {
    const auto out = policy.forward(env.obs);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = buf.index(t, n);
      std::copy(env.obs.row(n).begin(), env.obs.row(n).end(), buf.observations.row(i).begin());
      GaussianDist d(std::vector<double>(out.mean.row(n).begin(), out.mean.row(n).end()), log_std);
      const ActionVec a = gaussian_sample(d, rng);
      std::copy(a.begin(), a.end(), acts.row(n).begin());
      std::copy(a.begin(), a.end(), buf.actions.row(i).begin());
      buf.log_probs[i] = gaussian_log_prob(d, a);
      buf.values[i] = out.value[n];
    }

    if (teacher.teacher) {
      TeacherQuery q{env.obs, teacher.instruction, teacher.sample_count};
      const TeacherResponse r = teacher.teacher->act(q);
      if (r.batch != N || r.samples != static_cast<std::size_t>(teacher.sample_count) || r.act_dim != A)
        throw ProtocolError("collect: teacher response has the wrong shape");
      const Matrix mean = teacher_expectation(r);
      for (std::size_t n = 0; n < N; ++n)
        std::copy(mean.row(n).begin(), mean.row(n).end(), buf.teacher_means.row(buf.index(t, n)).begin());
      if (teacher.fit) {
        auto fits = fit_gaussian(r);
        for (std::size_t n = 0; n < N; ++n) {
          buf.teacher_fit_kl[buf.index(t, n)] = gaussian_kl(fits[n], policy.dist(out.mean, n));
          buf.teacher_fit.push_back(std::move(fits[n]));
        }
      }
      if (stats) stats->teacher_queries += N;
    }

    const auto results = vec_step(env.states, acts, env.spec);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = buf.index(t, n);
      const auto& r = results[n];
      buf.rewards[i] = r.reward;
      buf.terminated[i] = r.terminated;
      buf.truncated[i] = r.truncated;
      std::copy(r.observation.begin(), r.observation.end(), env.obs.row(n).begin());
      if (stats) {
        stats->reward_sum += r.reward;
        if (r.terminated || r.truncated) {
          stats->episodes_finished += 1;
          stats->successes += r.success;
        }
      }
    }
  }
  buf.last_values = policy.forward(env.obs).value;
  return buf;
}

// GAE over the buffer. Truncation ends the bootstrap (the time limit is part
// of the task). A terminated transition bootstraps from `terminal_value`, the
// value of the absorbing state it enters (0 for a plain terminal). The buffer
// tail bootstraps from last_values.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda, double terminal_value = 0.0) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("compute_gae: gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("compute_gae: lambda must be in [0, 1]");
  if (buf.last_values.size() != buf.lanes) throw ConfigError("compute_gae: last_values must have one entry per lane");
  const std::size_t n_total = buf.size();
  buf.advantages.assign(n_total, 0.0);
  buf.returns.assign(n_total, 0.0);
  for (std::size_t n = 0; n < buf.lanes; ++n) {
    double next_adv = 0.0;
    for (std::size_t tt = buf.steps; tt-- > 0;) {
      const std::size_t i = buf.index(tt, n);
      const bool done = buf.terminated[i] || buf.truncated[i];
      double next_value = tt + 1 < buf.steps ? buf.values[buf.index(tt + 1, n)] : buf.last_values[n];
      if (buf.terminated[i])
        next_value = terminal_value;
      else if (done)
        next_value = 0.0;
      const double live = done ? 0.0 : 1.0;
      const double delta = buf.rewards[i] + gamma * next_value - buf.values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      buf.advantages[i] = next_adv;
      buf.returns[i] = next_adv + buf.values[i];
    }
  }
  for (double a : buf.advantages)
    if (!std::isfinite(a)) throw NumericalError("advantage", "compute_gae: non-finite advantage");
}

// Shuffled partitions of [0, total) for each epoch. The last batch of an
// epoch is smaller when batch_size does not divide total.
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t total, std::size_t batch_size, int epochs,
                                                         Rng& rng) {
  if (batch_size == 0) throw ConfigError("minibatches: batch_size must be positive");
  if (epochs < 1) throw ConfigError("minibatches: epochs must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(total);
  for (int e = 0; e < epochs; ++e) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Fisher-Yates with an explicit draw so the order is portable across standard libraries.
    for (std::size_t i = total; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    for (std::size_t s = 0; s < total; s += batch_size)
      out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s),
                       idx.begin() + static_cast<std::ptrdiff_t>(std::min(total, s + batch_size)));
  }
  return out;
}

inline constexpr double kAdvantageEps = 1e-8;

// Standardizes to mean 0 and unit (n-1) standard deviation.
inline std::vector<double> normalize_advantages(const std::vector<double>& adv) {
  const std::size_t n = adv.size();
  std::vector<double> out(adv);
  if (n == 0) return out;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  for (auto& a : out) a = (a - mean) / (sd + kAdvantageEps);
  return out;
}

}  // namespace rpd
