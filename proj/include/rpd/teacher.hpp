#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rpd/envs.hpp"
#include "rpd/errors.hpp"
#include "rpd/nn/gaussian.hpp"
#include "rpd/nn/matrix.hpp"
#include "rpd/random.hpp"

namespace rpd {

struct TeacherQuery {
  Matrix observations;  // [B x obs_dim]
  std::string instruction;
  int sample_count = 1;
};

// Actions laid out [B][samples][act_dim].
struct TeacherResponse {
  std::size_t batch = 0;
  std::size_t samples = 0;
  std::size_t act_dim = 0;
  std::vector<double> actions;

  TeacherResponse() = default;
  TeacherResponse(std::size_t b, std::size_t k, std::size_t a) : batch(b), samples(k), act_dim(a), actions(b * k * a) {}

  double& at(std::size_t b, std::size_t k, std::size_t d) { return actions[(b * samples + k) * act_dim + d]; }
  double at(std::size_t b, std::size_t k, std::size_t d) const { return actions[(b * samples + k) * act_dim + d]; }
  std::span<const double> sample(std::size_t b, std::size_t k) const {
    return {actions.data() + (b * samples + k) * act_dim, act_dim};
  }
};

// Anything that returns actions for a batch of observations.
class TeacherPolicy {
 public:
  virtual ~TeacherPolicy() = default;
  virtual TeacherResponse act(const TeacherQuery& query) = 0;
  virtual std::size_t act_dim() const = 0;
};

inline std::string default_instruction(TaskId task) {
  switch (base_task(task)) {
    case TaskId::Reach2D: return "move the gripper to the goal";
    case TaskId::Push2D: return "push the cube away from the robot base";
    case TaskId::Pull2D: return "pull the cube towards the robot base";
    default: return "";
  }
}

// Mean over the sample axis: [B x act_dim].
inline Matrix teacher_expectation(const TeacherResponse& r) {
  if (r.samples == 0) throw ProtocolError("teacher_expectation: response has no samples");
  Matrix m(r.batch, r.act_dim);
  for (std::size_t b = 0; b < r.batch; ++b)
    for (std::size_t d = 0; d < r.act_dim; ++d) {
      double s = 0.0;
      for (std::size_t k = 0; k < r.samples; ++k) s += r.at(b, k, d);
      m(b, d) = s / static_cast<double>(r.samples);
    }
  return m;
}

inline constexpr double kFitStdFloor = 1e-3;

// Per-row diagonal Gaussian: sample mean and unbiased sample std, floored.
inline std::vector<GaussianDist> fit_gaussian(const TeacherResponse& r) {
  if (r.samples < 2) throw UsageError("fit_gaussian: need at least 2 samples per row");
  const Matrix mean = teacher_expectation(r);
  std::vector<GaussianDist> out;
  out.reserve(r.batch);
  for (std::size_t b = 0; b < r.batch; ++b) {
    std::vector<double> mu(r.act_dim), sd(r.act_dim);
    for (std::size_t d = 0; d < r.act_dim; ++d) {
      mu[d] = mean(b, d);
      double ss = 0.0;
      for (std::size_t k = 0; k < r.samples; ++k) {
        const double e = r.at(b, k, d) - mu[d];
        ss += e * e;
      }
      sd[d] = std::max(std::sqrt(ss / static_cast<double>(r.samples - 1)), kFitStdFloor);
    }
    out.push_back(GaussianDist::from_std(std::move(mu), sd));
  }
  return out;
}

struct ScriptedTeacherSpec {
  double competence = 1.0;        // fraction of goal configurations handled correctly
  double action_noise_std = 0.0;  // action units
  std::vector<double> systematic_bias;  // empty or act_dim entries
  bool observes_transformed = false;    // reads post-transform observations as if untransformed
  std::uint64_t seed = 0;

  void validate(std::size_t act_dim) const {
    if (!(competence >= 0.0 && competence <= 1.0)) throw ConfigError("teacher.competence must be in [0, 1]");
    if (!(action_noise_std >= 0.0)) throw ConfigError("teacher.action_noise_std must be >= 0");
    if (!systematic_bias.empty() && systematic_bias.size() != act_dim)
      throw ConfigError("teacher.systematic_bias must have " + std::to_string(act_dim) + " entries");
  }
};

// Waypoint controller standing in for a VLA. Stateless: actions depend only
// on the observation row, the sample index and the seed.
class ScriptedTeacher : public TeacherPolicy {
 public:
  // Distance by which a corrupted goal waypoint falls short of the true goal.
  inline static constexpr double kShortfall = 0.15;

  ScriptedTeacher(ScriptedTeacherSpec spec, EnvSpec env) : spec_(std::move(spec)), env_(std::move(env)) {
    env_.validate();
    spec_.validate(env_.act_dim());
    phase_ = hash_uniform(hash_combine(spec_.seed, 0xC0FFEEULL));
  }

  const ScriptedTeacherSpec& spec() const { return spec_; }
  const EnvSpec& env() const { return env_; }
  std::size_t act_dim() const override { return env_.act_dim(); }

  TeacherResponse act(const TeacherQuery& q) override {
    if (q.sample_count < 1) throw ProtocolError("sample_count must be >= 1");
    if (q.observations.cols() != env_.obs_dim())
      throw ConfigError("scripted teacher: observation width " + std::to_string(q.observations.cols()) +
                        " does not match the task layout (" + std::to_string(env_.obs_dim()) + ")");
    const std::size_t k = static_cast<std::size_t>(q.sample_count);
    const std::size_t a = act_dim();
    TeacherResponse r(q.observations.rows(), k, a);
    for (std::size_t b = 0; b < r.batch; ++b) {
      const auto row = q.observations.row(b);
      const auto nominal = nominal_action(row);
      const std::uint64_t row_hash = hash_doubles(spec_.seed, row);
      for (std::size_t s = 0; s < k; ++s)
        for (std::size_t d = 0; d < a; ++d) {
          double v = nominal[d];
          if (spec_.action_noise_std > 0.0)
            v += spec_.action_noise_std * hash_normal(hash_combine(hash_combine(row_hash, s), d));
          if (!spec_.systematic_bias.empty()) v += spec_.systematic_bias[d];
          r.at(b, s, d) = v;
        }
    }
    return r;
  }

  // Noise-free, bias-free controller output in the env's action layout.
  std::vector<double> nominal_action(std::span<const double> obs) const {
    std::vector<double> f;
    if (env_.obs_transform && !spec_.observes_transformed)
      f = env_.obs_transform->invert(obs);
    else
      f.assign(obs.begin(), obs.end());

    const TaskId task = base_task(env_.task);
    const Vec2 agent{f[0], f[1]};
    Vec2 cmd;
    double interact = 0.0;
    if (task == TaskId::Reach2D) {
      const Vec2 goal{f[4], f[5]};
      cmd = toward(agent, waypoint(task, goal));
    } else {
      const Vec2 object{f[4], f[5]};
      const Vec2 goal{f[6], f[7]};
      const Vec2 target = waypoint(task, goal);
      if (task == TaskId::Push2D) {
        cmd = push_command(agent, object, target);
      } else {
        cmd = pull_command(agent, object, target);
        interact = 1.0;
      }
    }
    std::vector<double> out(act_dim(), 0.0);
    out[0] = cmd.x;
    out[1] = cmd.y;
    out[env_.action_layout == ActionLayout::Native ? 2 : 6] = interact;
    return out;
  }

  // Whether the goal waypoint is corrupted for episodes with this goal. A
  // band of goal rows of relative width (1 - competence) is corrupted.
  bool corrupted(Vec2 goal) const {
    const auto box = geometry::layout(env_.task).goal;
    const double t = (goal.y - box.y_lo) / (box.y_hi - box.y_lo) + phase_;
    const double frac = t - std::floor(t);
    return frac < 1.0 - spec_.competence;
  }

 private:
  Vec2 waypoint(TaskId task, Vec2 goal) const {
    if (!corrupted(goal)) return goal;
    return goal - geometry::layout(task).push_direction * kShortfall;
  }

  // Unit-scaled command moving toward `target`, saturating at one full step.
  static Vec2 toward(Vec2 from, Vec2 target) {
    Vec2 c = (target - from) * (1.0 / geometry::kMaxStep);
    const double n = c.norm();
    return n > 1.0 ? c * (1.0 / n) : c;
  }

  // Smooth pushing: blend between a staging point behind the object and a
  // point beyond it by lateral alignment, and between that and a detour
  // around the object when the agent is not behind it.
  static Vec2 push_command(Vec2 agent, Vec2 object, Vec2 target) {
    const Vec2 d = target - object;
    const double dist = d.norm();
    if (dist < 1e-9) return {};
    const Vec2 u = d * (1.0 / dist);
    const Vec2 perp{-u.y, u.x};
    const Vec2 rel = agent - object;
    const double along = rel.dot(u);
    const double lateral = rel.dot(perp);

    const double aligned = std::clamp(1.0 - std::abs(lateral) / 0.06, 0.0, 1.0);
    const Vec2 stage = object - u * (geometry::kContact + 0.03);
    const Vec2 through = object + u * std::min(dist, geometry::kMaxStep);
    const Vec2 behind = stage * (1.0 - aligned) + through * aligned;

    const double side = lateral >= 0.0 ? 1.0 : -1.0;
    const Vec2 around = object + perp * (side * 0.12) - u * 0.10;
    const double ahead = smoothstep(-0.06, 0.0, along);
    return toward(agent, behind * (1.0 - ahead) + around * ahead);
  }

  static double smoothstep(double lo, double hi, double x) {
    const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
  }

  static Vec2 pull_command(Vec2 agent, Vec2 object, Vec2 target) {
    const Vec2 rel = agent - object;
    const double gap = rel.norm();
    if (gap <= geometry::kGrasp - 0.005) return toward(object, target);
    const Vec2 dir = gap > 1e-12 ? rel * (1.0 / gap) : Vec2{-1.0, 0.0};
    return toward(agent, object + dir * 0.085);
  }

  ScriptedTeacherSpec spec_;
  EnvSpec env_;
  double phase_ = 0.0;
};

}  // namespace rpd
