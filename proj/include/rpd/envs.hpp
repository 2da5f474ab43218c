#pragma once

// Desk-scale planar manipulation tasks. A point agent moves in the arena
// [-1, 1]^2 and reaches a goal, or pushes/pulls a disc-shaped object onto a
// goal. Distractor variants add extra pushable discs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rpd/errors.hpp"
#include "rpd/nn/matrix.hpp"
#include "rpd/random.hpp"

namespace rpd {

enum class TaskId { Reach2D, Push2D, Pull2D, PushDistract2D, PullDistract2D };
enum class RewardMode { Dense, Sparse };
// Native: (dx, dy, interact). Compat7: the 7-D (dpos, drot, gripper) layout
// with components 0, 1 and 6 used.
enum class ActionLayout { Native, Compat7 };

inline std::string to_string(TaskId t) {
  switch (t) {
    case TaskId::Reach2D: return "Reach2D";
    case TaskId::Push2D: return "Push2D";
    case TaskId::Pull2D: return "Pull2D";
    case TaskId::PushDistract2D: return "PushDistract2D";
    case TaskId::PullDistract2D: return "PullDistract2D";
  }
  return "?";
}

inline TaskId task_from_string(const std::string& s) {
  for (auto t : {TaskId::Reach2D, TaskId::Push2D, TaskId::Pull2D, TaskId::PushDistract2D, TaskId::PullDistract2D})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task '" + s + "'");
}

inline std::string to_string(RewardMode m) { return m == RewardMode::Dense ? "dense" : "sparse"; }
inline RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "dense") return RewardMode::Dense;
  if (s == "sparse") return RewardMode::Sparse;
  throw ConfigError("unknown reward_mode '" + s + "' (expected dense|sparse)");
}

inline bool is_pull(TaskId t) { return t == TaskId::Pull2D || t == TaskId::PullDistract2D; }
inline bool is_distract(TaskId t) { return t == TaskId::PushDistract2D || t == TaskId::PullDistract2D; }
inline bool has_object(TaskId t) { return t != TaskId::Reach2D; }

// Task without its distractors (the layout a base-task teacher is calibrated on).
inline TaskId base_task(TaskId t) {
  if (t == TaskId::PushDistract2D) return TaskId::Push2D;
  if (t == TaskId::PullDistract2D) return TaskId::Pull2D;
  return t;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

namespace geometry {
inline constexpr double kArena = 1.0;
inline constexpr double kMaxStep = 0.05;        // m per step
inline constexpr double kContact = 0.07;        // agent-disc center distance at contact
inline constexpr double kDiscContact = 0.10;    // disc-disc center distance at contact
inline constexpr double kGrasp = 0.10;          // pull tasks: attach range
inline constexpr double kSuccessRadius = 0.05;  // object (or agent) to goal

struct Box {
  double x_lo, x_hi, y_lo, y_hi;
  Vec2 center() const { return {0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)}; }
};

struct Layout {
  Box agent;
  Box object;
  Box goal;
  std::array<Box, 2> distractors;
  Vec2 push_direction;  // nominal object travel direction
};

inline Layout layout(TaskId t) {
  switch (base_task(t)) {
    case TaskId::Reach2D:
      return {{-0.8, -0.5, -0.4, 0.4}, {0, 0, 0, 0}, {0.1, 0.5, -0.4, 0.4}, {}, {1.0, 0.0}};
    case TaskId::Push2D:
      return {{-0.8, -0.6, -0.3, 0.3},
              {-0.35, -0.15, -0.2, 0.2},
              {0.15, 0.45, -0.3, 0.3},
              {Box{-0.05, 0.05, 0.05, 0.35}, Box{-0.05, 0.05, -0.35, -0.05}},
              {1.0, 0.0}};
    case TaskId::Pull2D:
      return {{-0.8, -0.6, -0.3, 0.3},
              {0.1, 0.3, -0.2, 0.2},
              {-0.45, -0.15, -0.3, 0.3},
              {Box{-0.1, 0.0, 0.05, 0.35}, Box{-0.1, 0.0, -0.35, -0.05}},
              {-1.0, 0.0}};
    default:
      break;
  }
  throw ConfigError("layout: unknown task");
}
}  // namespace geometry

// Orthogonal map plus offset applied to observations (camera-change analog).
struct ObsTransform {
  Matrix rotation;
  std::vector<double> offset;

  bool operator==(const ObsTransform&) const = default;

  std::vector<double> apply(std::span<const double> s) const {
    std::vector<double> out(offset);
    for (std::size_t i = 0; i < rotation.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < rotation.cols(); ++j) acc += rotation(i, j) * s[j];
      out[i] += acc;
    }
    return out;
  }

  // Inverse map rotation^T (o - offset).
  std::vector<double> invert(std::span<const double> o) const {
    std::vector<double> out(rotation.cols(), 0.0);
    for (std::size_t i = 0; i < rotation.rows(); ++i) {
      const double d = o[i] - offset[i];
      for (std::size_t j = 0; j < rotation.cols(); ++j) out[j] += rotation(i, j) * d;
    }
    return out;
  }
};

inline double determinant(Matrix a) {
  const std::size_t n = a.rows();
  if (n != a.cols()) throw ConfigError("determinant: matrix is not square");
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (a(piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(piv, k), a(c, k));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
    }
  }
  return det;
}

inline void validate(const ObsTransform& t, std::size_t obs_dim) {
  if (t.rotation.rows() != obs_dim || t.rotation.cols() != obs_dim || t.offset.size() != obs_dim)
    throw ConfigError("obs_transform: expected a " + std::to_string(obs_dim) + "x" + std::to_string(obs_dim) +
                      " rotation and offset of length " + std::to_string(obs_dim));
  const double det = determinant(t.rotation);
  if (std::abs(std::abs(det) - 1.0) > 1e-9)
    throw ConfigError("obs_transform: determinant " + std::to_string(det) + " is not +-1");
  for (std::size_t i = 0; i < obs_dim; ++i)
    for (std::size_t j = 0; j < obs_dim; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < obs_dim; ++k) d += t.rotation(k, i) * t.rotation(k, j);
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-9) throw ConfigError("obs_transform: rotation is not orthogonal");
    }
}

// Rotation by angle_deg inside a random 2-plane of observation space, plus a
// constant offset on every coordinate.
inline ObsTransform make_camera_shift(std::size_t obs_dim, std::uint64_t seed, double angle_deg = 20.0,
                                      double offset = 0.1) {
  if (obs_dim < 2) throw ConfigError("make_camera_shift: need at least 2 observation dimensions");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(obs_dim), v(obs_dim);
  for (auto& x : u) x = normal(rng);
  for (auto& x : v) x = normal(rng);
  auto normalize = [](std::vector<double>& w) {
    double n = 0.0;
    for (double x : w) n += x * x;
    n = std::sqrt(n);
    for (auto& x : w) x /= n;
  };
  normalize(u);
  double d = 0.0;
  for (std::size_t i = 0; i < obs_dim; ++i) d += u[i] * v[i];
  for (std::size_t i = 0; i < obs_dim; ++i) v[i] -= d * u[i];
  normalize(v);
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  ObsTransform t{Matrix::identity(obs_dim), std::vector<double>(obs_dim, offset)};
  for (std::size_t i = 0; i < obs_dim; ++i)
    for (std::size_t j = 0; j < obs_dim; ++j)
      t.rotation(i, j) += (c - 1.0) * (u[i] * u[j] + v[i] * v[j]) + s * (v[i] * u[j] - u[i] * v[j]);
  return t;
}

struct EnvSpec {
  TaskId task = TaskId::Push2D;
  RewardMode reward_mode = RewardMode::Dense;
  int max_episode_steps = 50;
  std::optional<ObsTransform> obs_transform;
  double dt = 0.1;  // s
  ActionLayout action_layout = ActionLayout::Native;
  int distractors = -1;  // -1: 2 for distractor tasks, 0 otherwise

  std::size_t distractor_count() const {
    if (!is_distract(task)) return 0;
    return distractors < 0 ? 2 : static_cast<std::size_t>(distractors);
  }
  std::size_t state_dim() const { return (has_object(task) ? 8 : 6) + 2 * distractor_count(); }
  std::size_t obs_dim() const { return state_dim(); }
  std::size_t act_dim() const { return action_layout == ActionLayout::Native ? 3 : 7; }

  void validate() const {
    if (max_episode_steps < 1) throw ConfigError("env.max_episode_steps must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("env.dt must be positive");
    if (is_distract(task) && distractors > 2) throw ConfigError("env.distractors must be at most 2");
    if (!is_distract(task) && distractors > 0) throw ConfigError("env.distractors requires a distractor task");
    if (obs_transform) rpd::validate(*obs_transform, obs_dim());
  }
};

struct EnvState {
  Vec2 agent_pos;
  Vec2 agent_vel;
  Vec2 object_pos;
  Vec2 goal_pos;
  std::vector<Vec2> distractors;
  int step = 0;
  bool done = false;
  std::uint64_t seed = 0;     // reset seed of this lane
  std::uint64_t episode = 0;  // episodes started from this seed

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;  // success
  bool truncated = false;   // time limit without success
  bool success = false;
};

// Flattened state: agent pos, agent vel, [object pos], goal pos, distractor positions.
inline std::vector<double> flatten_state(const EnvSpec& spec, const EnvState& s) {
  std::vector<double> v{s.agent_pos.x, s.agent_pos.y, s.agent_vel.x, s.agent_vel.y};
  if (has_object(spec.task)) {
    v.push_back(s.object_pos.x);
    v.push_back(s.object_pos.y);
  }
  v.push_back(s.goal_pos.x);
  v.push_back(s.goal_pos.y);
  for (const auto& d : s.distractors) {
    v.push_back(d.x);
    v.push_back(d.y);
  }
  return v;
}

inline std::vector<double> observe(const EnvSpec& spec, const EnvState& s) {
  auto flat = flatten_state(spec, s);
  return spec.obs_transform ? spec.obs_transform->apply(flat) : flat;
}

// Shaped dense reward in [0, 1] for a non-success state.
inline double dense_shaping(const EnvSpec& spec, const EnvState& s) {
  if (!has_object(spec.task)) return 1.0 - std::tanh(5.0 * distance(s.agent_pos, s.goal_pos));
  return 0.5 * (1.0 - std::tanh(5.0 * distance(s.agent_pos, s.object_pos))) +
         0.5 * (1.0 - std::tanh(5.0 * distance(s.object_pos, s.goal_pos)));
}

inline bool task_success(const EnvSpec& spec, const EnvState& s) {
  if (!has_object(spec.task)) return distance(s.agent_pos, s.goal_pos) <= geometry::kSuccessRadius;
  return distance(s.object_pos, s.goal_pos) <= geometry::kSuccessRadius;
}

// Samples agent, object, goal and distractors from disjoint boxes. Episode k
// of a lane seeded with `seed` is fully determined by (seed, k).
inline std::pair<EnvState, std::vector<double>> reset(const EnvSpec& spec, std::uint64_t seed,
                                                      std::uint64_t episode = 0) {
  const auto lay = geometry::layout(spec.task);
  Rng rng(derive_seed(seed, episode));
  auto sample = [&rng](const geometry::Box& b) { return Vec2{uniform(rng, b.x_lo, b.x_hi), uniform(rng, b.y_lo, b.y_hi)}; };
  EnvState s;
  s.seed = seed;
  s.episode = episode;
  s.agent_pos = sample(lay.agent);
  if (has_object(spec.task)) s.object_pos = sample(lay.object);
  s.goal_pos = sample(lay.goal);
  for (std::size_t i = 0; i < spec.distractor_count(); ++i) s.distractors.push_back(sample(lay.distractors[i]));
  auto obs = observe(spec, s);
  return {std::move(s), std::move(obs)};
}

namespace detail {
inline Vec2 clamp_arena(Vec2 p) {
  return {std::clamp(p.x, -geometry::kArena, geometry::kArena), std::clamp(p.y, -geometry::kArena, geometry::kArena)};
}

// Moves `disc` radially out of a pusher at `pusher` if closer than `reach`.
inline void resolve_push(Vec2 pusher, Vec2& disc, double reach, Vec2 fallback_dir) {
  const Vec2 d = disc - pusher;
  const double n = d.norm();
  if (n >= reach) return;
  Vec2 dir = n > 1e-12 ? d * (1.0 / n) : fallback_dir;
  if (dir.norm() < 1e-12) dir = {1.0, 0.0};
  disc = clamp_arena(pusher + dir * reach);
}
}  // namespace detail

// Advances one lane. The state is updated in place.
inline StepResult step(EnvState& s, std::span<const double> action, const EnvSpec& spec) {
  if (s.done) throw UsageError("step: episode already ended; call reset first");
  if (action.size() != spec.act_dim())
    throw ConfigError("step: action dimension " + std::to_string(action.size()) + " != " +
                      std::to_string(spec.act_dim()));
  const double ax = action[0], ay = action[1];
  const double interact = spec.action_layout == ActionLayout::Native ? action[2] : action[6];
  if (!std::isfinite(ax) || !std::isfinite(ay) || !std::isfinite(interact))
    throw UsageError("step: non-finite action");

  Vec2 disp{geometry::kMaxStep * ax, geometry::kMaxStep * ay};
  const double len = disp.norm();
  if (len > geometry::kMaxStep) disp = disp * (geometry::kMaxStep / len);

  const bool attached = is_pull(spec.task) && interact > 0.0 &&
                        distance(s.agent_pos, s.object_pos) <= geometry::kGrasp;
  const Vec2 old_agent = s.agent_pos;
  s.agent_pos = detail::clamp_arena(s.agent_pos + disp);
  const Vec2 moved = s.agent_pos - old_agent;
  const Vec2 dir = moved.norm() > 1e-12 ? moved * (1.0 / moved.norm()) : Vec2{};

  if (has_object(spec.task)) {
    if (attached)
      s.object_pos = detail::clamp_arena(s.object_pos + moved);
    else
      detail::resolve_push(s.agent_pos, s.object_pos, geometry::kContact, dir);
  }
  for (auto& d : s.distractors) {
    detail::resolve_push(s.agent_pos, d, geometry::kContact, dir);
    detail::resolve_push(s.object_pos, d, geometry::kDiscContact, dir);
  }
  s.agent_vel = moved * (1.0 / spec.dt);
  s.step += 1;

  StepResult r;
  r.success = task_success(spec, s);
  r.terminated = r.success;
  r.truncated = !r.success && s.step >= spec.max_episode_steps;
  s.done = r.terminated || r.truncated;
  if (spec.reward_mode == RewardMode::Dense)
    r.reward = r.success ? 1.0 : dense_shaping(spec, s);
  else
    r.reward = r.success ? 1.0 : (r.truncated ? -1.0 : 0.0);
  r.observation = observe(spec, s);
  return r;
}

// Steps N lanes. Lanes that finish are reset to their next episode; the
// returned observation is then the reset observation while the terminal
// flags and reward describe the finished step.
inline std::vector<StepResult> vec_step(std::vector<EnvState>& envs, const Matrix& actions, const EnvSpec& spec) {
  if (actions.rows() != envs.size()) throw ConfigError("vec_step: one action row per lane expected");
  std::vector<StepResult> out;
  out.reserve(envs.size());
  for (std::size_t i = 0; i < envs.size(); ++i) {
    auto r = step(envs[i], actions.row(i), spec);
    if (envs[i].done) {
      auto [next, obs] = reset(spec, envs[i].seed, envs[i].episode + 1);
      envs[i] = std::move(next);
      r.observation = std::move(obs);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// N lanes with per-lane seeds derived from one base seed.
inline std::vector<EnvState> make_lanes(const EnvSpec& spec, std::size_t n, std::uint64_t seed, Matrix* obs_out) {
  std::vector<EnvState> lanes;
  lanes.reserve(n);
  if (obs_out) *obs_out = Matrix(n, spec.obs_dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto [s, o] = reset(spec, derive_seed(seed, i));
    if (obs_out) std::copy(o.begin(), o.end(), obs_out->row(i).begin());
    lanes.push_back(std::move(s));
  }
  return lanes;
}

// One JSON-lines record of a trajectory dump.
inline std::string trajectory_line(int t, std::span<const double> obs, std::span<const double> action,
                                   const StepResult& r) {
  nlohmann::json j;
  j["t"] = t;
  j["obs"] = std::vector<double>(obs.begin(), obs.end());
  j["action"] = std::vector<double>(action.begin(), action.end());
  j["reward"] = r.reward;
  j["terminated"] = r.terminated;
  j["truncated"] = r.truncated;
  j["success"] = r.success;
  return j.dump();
}

}  // namespace rpd
