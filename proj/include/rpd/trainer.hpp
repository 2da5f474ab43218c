#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <spdlog/spdlog.h>

#include "rpd/config.hpp"
#include "rpd/envs.hpp"
#include "rpd/losses.hpp"
#include "rpd/metrics.hpp"
#include "rpd/nn/adam.hpp"
#include "rpd/nn/checkpoint.hpp"
#include "rpd/nn/policy.hpp"
#include "rpd/protocol.hpp"
#include "rpd/random.hpp"
#include "rpd/rollout.hpp"
#include "rpd/teacher.hpp"

namespace rpd {

// Independent random streams derived from a run seed.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kEnv = 2;
inline constexpr std::uint64_t kAction = 3;
inline constexpr std::uint64_t kBatch = 4;
inline constexpr std::uint64_t kEval = 5;
}  // namespace streams

inline std::unique_ptr<TeacherPolicy> make_teacher(const ExperimentConfig& c) {
  switch (c.teacher.kind) {
    case TeacherKind::None: return nullptr;
    case TeacherKind::Scripted: return std::make_unique<ScriptedTeacher>(c.teacher.scripted, c.env);
    case TeacherKind::Remote: return std::make_unique<RemoteTeacher>(Endpoint::parse(c.teacher.endpoint), c.teacher.remote);
  }
  return nullptr;
}

struct EvalResult {
  double success_rate = 0.0;
  double mean_reward = 0.0;  // mean undiscounted episodic return

  bool operator==(const EvalResult&) const = default;
};

// Runs `episodes` episodes to completion; episode i starts from
// reset(spec, derive_seed(seed, i)). `actor` maps an observation batch to
// an action batch.
template <class Actor>
EvalResult run_episodes(const EnvSpec& spec, int episodes, std::uint64_t seed, Actor&& actor) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  const std::size_t n = static_cast<std::size_t>(episodes);
  Matrix obs;
  auto states = make_lanes(spec, n, seed, &obs);
  std::vector<double> returns(n, 0.0);
  std::size_t successes = 0;
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  while (!active.empty()) {
    Matrix batch(active.size(), spec.obs_dim());
    for (std::size_t k = 0; k < active.size(); ++k)
      std::copy(obs.row(active[k]).begin(), obs.row(active[k]).end(), batch.row(k).begin());
    const Matrix acts = actor(batch);
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      const auto r = step(states[i], acts.row(k), spec);
      returns[i] += r.reward;
      std::copy(r.observation.begin(), r.observation.end(), obs.row(i).begin());
      if (r.terminated || r.truncated)
        successes += r.success;
      else
        still.push_back(i);
    }
    active = std::move(still);
  }
  double total = 0.0;
  for (double r : returns) total += r;
  return {static_cast<double>(successes) / static_cast<double>(n), total / static_cast<double>(n)};
}

// Deterministic (mean-action) evaluation.
inline EvalResult evaluate(const GaussianPolicy& policy, const EnvSpec& spec, int episodes, std::uint64_t seed) {
  return run_episodes(spec, episodes, seed, [&](const Matrix& obs) { return policy.forward(obs).mean; });
}

// The teacher acting on its own (one sample per step).
inline EvalResult teacher_eval(TeacherPolicy& teacher, const EnvSpec& spec, int episodes, std::uint64_t seed,
                               const std::string& instruction = "") {
  const std::string instr = instruction.empty() ? default_instruction(spec.task) : instruction;
  return run_episodes(spec, episodes, seed, [&](const Matrix& obs) {
    return teacher_expectation(teacher.act(TeacherQuery{obs, instr, 1}));
  });
}

struct TrainOptions {
  TeacherPolicy* teacher = nullptr;  // used instead of building one from the config
  std::optional<std::filesystem::path> failure_checkpoint;
  std::function<void(const UpdateMetrics&)> on_update;
};

struct TrainResult {
  RunMetrics metrics;
  GaussianPolicy policy;
};

// Dense tasks treat success as absorbing with reward 1 per step, so reaching
// the goal is worth 1 / (1 - gamma) rather than a single reward.
inline double success_value(const ExperimentConfig& c) {
  const double g = c.resolved_gamma();
  if (c.env.reward_mode != RewardMode::Dense || g >= 1.0) return 0.0;
  return 1.0 / (1.0 - g);
}

inline std::uint64_t eval_seed(std::uint64_t run_seed) { return derive_seed(run_seed, streams::kEval); }

// One seeded training run.
inline TrainResult train(const ExperimentConfig& config, std::uint64_t seed, const TrainOptions& opts = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::unique_ptr<TeacherPolicy> owned;
  TeacherPolicy* teacher = nullptr;
  if (config.uses_teacher()) {
    teacher = opts.teacher;
    if (!teacher) {
      owned = make_teacher(config);
      teacher = owned.get();
    }
  }

  GaussianPolicy policy(config.resolved_arch(), derive_seed(seed, streams::kInit));
  AdamState adam(policy.params(), config.learning_rate);
  VecEnv env(config.env, static_cast<std::size_t>(config.lanes), derive_seed(seed, streams::kEnv));
  Rng action_rng(derive_seed(seed, streams::kAction));
  Rng batch_rng(derive_seed(seed, streams::kBatch));

  TeacherBinding binding;
  if (teacher) {
    binding.teacher = teacher;
    binding.instruction = config.resolved_instruction();
    binding.sample_count = config.resolved_sample_count();
    binding.fit = config.loss.variant == DistillVariant::PpdKl;
  }

  TrainResult result{RunMetrics{}, policy};
  if (teacher && config.teacher_eval_episodes > 0)
    result.metrics.teacher_success =
        teacher_eval(*teacher, config.env, config.teacher_eval_episodes, eval_seed(seed), binding.instruction)
            .success_rate;

  const int updates = config.updates();
  const double gamma = config.resolved_gamma();
  std::int64_t queries = 0;

  auto save_on_failure = [&] {
    if (opts.failure_checkpoint) {
      save_checkpoint(policy, *opts.failure_checkpoint);
      spdlog::error("training aborted; checkpoint written to {}", opts.failure_checkpoint->string());
    }
  };

  for (int u = 1; u <= updates; ++u) {
    CollectStats stats;
    RolloutBuffer buf;
    try {
      buf = collect(policy, env, binding, config.horizon, action_rng, &stats);
    } catch (const TeacherUnavailable&) {
      save_on_failure();
      throw;
    } catch (const ProtocolError&) {
      save_on_failure();
      throw;
    }
    queries += static_cast<std::int64_t>(stats.teacher_queries);
    compute_gae(buf, gamma, config.gae_lambda, success_value(config));

    LossDiagnostics sum;
    std::size_t batches = 0;
    for (const auto& idx : minibatches(buf.size(), static_cast<std::size_t>(config.minibatch_size), config.epochs,
                                       batch_rng)) {
      const std::size_t B = idx.size();
      Matrix obs(B, buf.observations.cols());
      LossBatch lb;
      lb.actions = Matrix(B, buf.actions.cols());
      std::vector<double> adv(B);
      for (std::size_t k = 0; k < B; ++k) {
        const std::size_t i = idx[k];
        std::copy(buf.observations.row(i).begin(), buf.observations.row(i).end(), obs.row(k).begin());
        std::copy(buf.actions.row(i).begin(), buf.actions.row(i).end(), lb.actions.row(k).begin());
        lb.old_log_probs.push_back(buf.log_probs[i]);
        lb.old_values.push_back(buf.values[i]);
        lb.returns.push_back(buf.returns[i]);
        adv[k] = buf.advantages[i];
      }
      lb.advantages = normalize_advantages(adv);
      if (buf.has_teacher()) {
        lb.teacher_means = Matrix(B, buf.teacher_means.cols());
        for (std::size_t k = 0; k < B; ++k)
          std::copy(buf.teacher_means.row(idx[k]).begin(), buf.teacher_means.row(idx[k]).end(),
                    lb.teacher_means.row(k).begin());
      }
      if (buf.has_teacher_fit()) {
        for (std::size_t k = 0; k < B; ++k) {
          lb.teacher_fit.push_back(buf.teacher_fit[idx[k]]);
          lb.teacher_fit_kl.push_back(buf.teacher_fit_kl[idx[k]]);
        }
      }

      Tape tape;
      const PolicyGraph g = policy.forward(tape, obs);
      LossDiagnostics d;
      const LossTerms terms = rpd_objective(g, lb, config.loss, &d);
      policy.params().zero_grad();
      tape.backward(terms.total);
      clip_grad_norm(policy.params(), config.max_grad_norm);
      adam_step(policy.params(), adam);

      sum.total += d.total;
      sum.ppo += d.ppo;
      sum.value += d.value;
      sum.entropy += d.entropy;
      sum.distill += d.distill;
      ++batches;
    }

    UpdateMetrics m;
    m.update = u;
    m.global_step = static_cast<std::int64_t>(u) * config.steps_per_update();
    m.train_reward = stats.reward_sum / static_cast<double>(buf.size());
    const double nb = static_cast<double>(batches);
    m.loss_total = sum.total / nb;
    m.loss_ppo = sum.ppo / nb;
    m.loss_value = sum.value / nb;
    m.loss_entropy = sum.entropy / nb;
    m.loss_distill = sum.distill / nb;
    m.teacher_queries = queries;
    if (u % config.eval_interval == 0 || u == updates) {
      const auto e = evaluate(policy, config.env, config.eval_episodes, eval_seed(seed));
      m.eval_success = e.success_rate;
      m.eval_reward = e.mean_reward;
    }
    if (config.record_wallclock)
      m.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (m.eval_success)
      spdlog::info("{} seed {} update {}/{} step {} eval_success {:.3f}", config.name, seed, u, updates, m.global_step,
                   *m.eval_success);
    else
      spdlog::debug("{} seed {} update {}/{} loss {:.4f}", config.name, seed, u, updates, m.loss_total);
    if (opts.on_update) opts.on_update(m);
    result.metrics.updates.push_back(m);
  }
  result.policy = std::move(policy);
  return result;
}

}  // namespace rpd
