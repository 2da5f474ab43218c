#pragma once

// Experiment configuration (JSON). See README.md for the schema.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rpd/envs.hpp"
#include "rpd/errors.hpp"
#include "rpd/losses.hpp"
#include "rpd/protocol.hpp"
#include "rpd/teacher.hpp"

namespace rpd {

using json = nlohmann::json;

enum class TeacherKind { None, Scripted, Remote };

struct TeacherConfig {
  TeacherKind kind = TeacherKind::None;
  ScriptedTeacherSpec scripted;
  std::string endpoint;  // remote only
  RemoteOptions remote;
  std::string instruction;   // empty: task default
  int sample_count = 0;      // 0: 10 for ppd_kl, 1 otherwise
};

struct CameraShift {
  std::uint64_t seed = 0;
  double angle_deg = 20.0;
  double offset = 0.1;
};

struct ExperimentConfig {
  std::string name = "run";
  EnvSpec env;
  std::optional<CameraShift> camera_shift;  // resolved into env.obs_transform
  LossConfig loss;
  TeacherConfig teacher;
  PolicyArch policy;  // obs/act dims are filled from env

  std::int64_t total_steps = 1'000'000;
  int lanes = 32;
  int horizon = 50;
  int epochs = 4;
  int minibatch_size = 800;
  double learning_rate = 3e-4;
  std::optional<double> gamma;  // default 0.8 dense, 0.99 sparse
  bool gamma_override = false;
  double gae_lambda = 0.9;
  double max_grad_norm = 0.5;  // 0 disables clipping
  int eval_episodes = 100;
  int eval_interval = 10;
  int teacher_eval_episodes = 500;
  bool record_wallclock = false;
  std::vector<std::uint64_t> seeds{0};

  double resolved_gamma() const {
    if (gamma) return *gamma;
    return env.reward_mode == RewardMode::Sparse ? 0.99 : 0.8;
  }
  int resolved_sample_count() const {
    if (teacher.sample_count > 0) return teacher.sample_count;
    return loss.variant == DistillVariant::PpdKl ? 10 : 1;
  }
  std::string resolved_instruction() const {
    return teacher.instruction.empty() ? default_instruction(env.task) : teacher.instruction;
  }
  bool uses_teacher() const { return loss.variant != DistillVariant::None; }
  std::int64_t steps_per_update() const { return static_cast<std::int64_t>(lanes) * horizon; }
  int updates() const { return static_cast<int>(total_steps / steps_per_update()); }

  PolicyArch resolved_arch() const {
    PolicyArch a = policy;
    a.obs_dim = env.obs_dim();
    a.act_dim = env.act_dim();
    return a;
  }

  void validate() const {
    env.validate();
    loss.validate();
    auto positive = [](bool ok, const char* field) {
      if (!ok) throw ConfigError(std::string(field) + ": must be positive");
    };
    positive(lanes > 0, "train.lanes");
    positive(horizon > 0, "train.horizon");
    positive(epochs > 0, "train.epochs");
    positive(minibatch_size > 0, "train.minibatch_size");
    positive(learning_rate > 0.0, "train.learning_rate");
    positive(eval_episodes > 0, "train.eval_episodes");
    positive(eval_interval > 0, "train.eval_interval");
    if (total_steps < steps_per_update())
      throw ConfigError("train.total_steps: must be at least lanes * horizon (" + std::to_string(steps_per_update()) +
                        ")");
    if (teacher_eval_episodes < 0) throw ConfigError("train.teacher_eval_episodes: must be >= 0");
    const double g = resolved_gamma();
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("train.gamma: must be in [0, 1], got " + json(g).dump());
    if (env.reward_mode == RewardMode::Sparse && g != 0.99 && !gamma_override)
      throw ConfigError("train.gamma: sparse rewards require gamma = 0.99 unless train.gamma_override is true");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("train.gae_lambda: must be in [0, 1]");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("train.max_grad_norm: must be >= 0");
    if (policy.hidden.empty()) throw ConfigError("policy.hidden: at least one hidden layer is required");
    for (auto h : policy.hidden)
      if (h == 0) throw ConfigError("policy.hidden: layer widths must be positive");
    if (!std::isfinite(policy.init_log_std) || policy.init_log_std < kLogStdMin || policy.init_log_std > kLogStdMax)
      throw ConfigError("policy.init_log_std: must be in [-20, 2]");
    if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    if (uses_teacher() && teacher.kind == TeacherKind::None)
      throw ConfigError("teacher.kind: loss variant " + to_string(loss.variant) + " needs a teacher");
    if (teacher.sample_count < 0) throw ConfigError("teacher.sample_count: must be >= 1");
    if (loss.variant == DistillVariant::PpdKl && resolved_sample_count() < 2)
      throw ConfigError("teacher.sample_count: ppd_kl needs at least 2 samples");
    if (teacher.kind == TeacherKind::Scripted) teacher.scripted.validate(env.act_dim());
    if (teacher.kind == TeacherKind::Remote) Endpoint::parse(teacher.endpoint);
  }
};

namespace detail {

// Reads one JSON object, recording every key it consumed so unknown keys can
// be reported with their full path.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_[key].is_null();
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = j_[key];
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t def) {
    if (!has(key)) return def;
    const auto& v = j_[key];
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(field(key) + ": expected an integer");
  }

  int small_int(const std::string& key, int def) {
    const auto v = integer(key, def);
    if (v < -2'000'000'000 || v > 2'000'000'000) throw ConfigError(field(key) + ": out of range");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    if (!j_[key].is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return j_[key].get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    if (!j_[key].is_string()) throw ConfigError(field(key) + ": expected a string");
    return j_[key].get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    if (!has(key)) return {};
    const auto& v = j_[key];
    if (!v.is_array()) throw ConfigError(field(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(field(key) + ": expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::int64_t> integers(const std::string& key) {
    if (!has(key)) return {};
    const auto& v = j_[key];
    if (!v.is_array()) throw ConfigError(field(key) + ": expected an array of integers");
    std::vector<std::int64_t> out;
    for (const auto& x : v) {
      if (!x.is_number_integer()) throw ConfigError(field(key) + ": expected an array of integers");
      out.push_back(x.get<std::int64_t>());
    }
    return out;
  }

  Fields object(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    if (!j_.contains(key) || j_[key].is_null()) return Fields(empty, field(key));
    return Fields(j_[key], field(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  // Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto with_field(const std::string& field, F f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(field, 0) == 0) throw;
    throw ConfigError(field + ": " + msg);
  }
}

inline ObsTransform parse_obs_transform(Fields f, std::size_t obs_dim) {
  ObsTransform t;
  const auto& rot = f.raw("rotation");
  if (!rot.is_array()) throw ConfigError(f.field("rotation") + ": expected a square array of arrays");
  t.rotation = Matrix(rot.size(), rot.size());
  for (std::size_t i = 0; i < rot.size(); ++i) {
    if (!rot[i].is_array() || rot[i].size() != rot.size())
      throw ConfigError(f.field("rotation") + ": expected a square array of arrays");
    for (std::size_t j = 0; j < rot.size(); ++j) {
      if (!rot[i][j].is_number()) throw ConfigError(f.field("rotation") + ": entries must be numbers");
      t.rotation(i, j) = rot[i][j].get<double>();
    }
  }
  t.offset = f.numbers("offset");
  if (t.offset.empty()) t.offset.assign(rot.size(), 0.0);
  f.finish();
  with_field(f.field("rotation"), [&] {
    validate(t, obs_dim);
    return 0;
  });
  return t;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::Fields root(j, "");
  c.name = root.string("name", c.name);

  {
    auto f = root.object("env");
    c.env.task = detail::with_field("env.task", [&] { return task_from_string(f.string("task", "Push2D")); });
    c.env.reward_mode =
        detail::with_field("env.reward_mode", [&] { return reward_mode_from_string(f.string("reward_mode", "dense")); });
    c.env.max_episode_steps = f.small_int("max_episode_steps", c.env.max_episode_steps);
    c.env.dt = f.number("dt", c.env.dt);
    c.env.distractors = f.small_int("distractors", c.env.distractors);
    const auto layout = f.string("action_layout", "native");
    if (layout == "native")
      c.env.action_layout = ActionLayout::Native;
    else if (layout == "compat7")
      c.env.action_layout = ActionLayout::Compat7;
    else
      throw ConfigError("env.action_layout: expected 'native' or 'compat7'");
    if (f.has("camera_shift")) {
      auto cs = f.object("camera_shift");
      CameraShift shift;
      shift.seed = static_cast<std::uint64_t>(cs.integer("seed", 0));
      shift.angle_deg = cs.number("angle_deg", shift.angle_deg);
      shift.offset = cs.number("offset", shift.offset);
      cs.finish();
      c.camera_shift = shift;
    }
    if (f.has("obs_transform")) {
      if (c.camera_shift) throw ConfigError("env.obs_transform: cannot be combined with env.camera_shift");
      c.env.obs_transform = detail::parse_obs_transform(f.object("obs_transform"), c.env.obs_dim());
    }
    f.finish();
    if (c.camera_shift)
      c.env.obs_transform =
          make_camera_shift(c.env.obs_dim(), c.camera_shift->seed, c.camera_shift->angle_deg, c.camera_shift->offset);
  }

  {
    auto f = root.object("loss");
    c.loss.variant = detail::with_field("loss.variant", [&] { return variant_from_string(f.string("variant", "none")); });
    c.loss.distill_weight = f.number("distill_weight", c.loss.distill_weight);
    c.loss.clip_eps = f.number("clip_eps", c.loss.clip_eps);
    c.loss.value_coef = f.number("value_coef", c.loss.value_coef);
    c.loss.entropy_coef = f.number("entropy_coef", c.loss.entropy_coef);
    c.loss.ppd_lambda = f.number("ppd_lambda", c.loss.ppd_lambda);
    c.loss.ppd_clip = f.number("ppd_clip", c.loss.ppd_clip);
    c.loss.value_clip = f.number("value_clip", c.loss.value_clip);
    f.finish();
  }

  {
    auto f = root.object("teacher");
    const auto kind = f.string("kind", "none");
    if (kind == "none")
      c.teacher.kind = TeacherKind::None;
    else if (kind == "scripted")
      c.teacher.kind = TeacherKind::Scripted;
    else if (kind == "remote")
      c.teacher.kind = TeacherKind::Remote;
    else
      throw ConfigError("teacher.kind: expected 'none', 'scripted' or 'remote'");
    c.teacher.instruction = f.string("instruction", "");
    c.teacher.sample_count = f.small_int("sample_count", 0);
    if (f.has("sample_count") && c.teacher.sample_count < 1) throw ConfigError("teacher.sample_count: must be >= 1");
    if (c.teacher.kind == TeacherKind::Scripted) {
      auto& s = c.teacher.scripted;
      s.competence = f.number("competence", s.competence);
      s.action_noise_std = f.number("action_noise_std", s.action_noise_std);
      s.systematic_bias = f.numbers("systematic_bias");
      s.observes_transformed = f.boolean("observes_transformed", s.observes_transformed);
      s.seed = static_cast<std::uint64_t>(f.integer("seed", 0));
      detail::with_field("teacher", [&] {
        s.validate(c.env.act_dim());
        return 0;
      });
    }
    if (c.teacher.kind == TeacherKind::Remote) {
      c.teacher.endpoint = f.string("endpoint", "");
      detail::with_field("teacher.endpoint", [&] { return Endpoint::parse(c.teacher.endpoint); });
      c.teacher.remote.timeout_s = f.number("timeout_s", c.teacher.remote.timeout_s);
      c.teacher.remote.retries = f.small_int("retries", c.teacher.remote.retries);
      if (!(c.teacher.remote.timeout_s > 0.0)) throw ConfigError("teacher.timeout_s: must be positive");
      if (c.teacher.remote.retries < 0) throw ConfigError("teacher.retries: must be >= 0");
    }
    f.finish();
  }

  {
    auto f = root.object("train");
    c.total_steps = f.integer("total_steps", c.total_steps);
    c.lanes = f.small_int("lanes", c.lanes);
    c.horizon = f.small_int("horizon", c.horizon);
    c.epochs = f.small_int("epochs", c.epochs);
    c.minibatch_size = f.small_int("minibatch_size", c.minibatch_size);
    c.learning_rate = f.number("learning_rate", c.learning_rate);
    if (f.has("gamma")) c.gamma = f.number("gamma", 0.0);
    c.gamma_override = f.boolean("gamma_override", c.gamma_override);
    c.gae_lambda = f.number("gae_lambda", c.gae_lambda);
    c.max_grad_norm = f.number("max_grad_norm", c.max_grad_norm);
    c.eval_episodes = f.small_int("eval_episodes", c.eval_episodes);
    c.eval_interval = f.small_int("eval_interval", c.eval_interval);
    c.teacher_eval_episodes = f.small_int("teacher_eval_episodes", c.teacher_eval_episodes);
    c.record_wallclock = f.boolean("record_wallclock", c.record_wallclock);
    f.finish();
  }

  {
    auto f = root.object("policy");
    if (f.has("hidden")) {
      c.policy.hidden.clear();
      for (auto h : f.integers("hidden")) {
        if (h <= 0) throw ConfigError("policy.hidden: layer widths must be positive");
        c.policy.hidden.push_back(static_cast<std::size_t>(h));
      }
    }
    c.policy.init_log_std = f.number("init_log_std", c.policy.init_log_std);
    f.finish();
  }

  if (root.has("seeds") && root.has("seed")) throw ConfigError("seed: give either 'seed' or 'seeds', not both");
  if (root.has("seeds")) {
    c.seeds.clear();
    for (auto s : root.integers("seeds")) {
      if (s < 0) throw ConfigError("seeds: must be non-negative");
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else if (root.has("seed")) {
    const auto s = root.integer("seed", 0);
    if (s < 0) throw ConfigError("seed: must be non-negative");
    c.seeds = {static_cast<std::uint64_t>(s)};
  }
  root.finish();
  c.validate();
  return c;
}

// Fully resolved config; parsing it back yields an equivalent config.
inline json config_to_json(const ExperimentConfig& c) {
  json env = {{"task", to_string(c.env.task)},
               {"reward_mode", to_string(c.env.reward_mode)},
               {"max_episode_steps", c.env.max_episode_steps},
               {"dt", c.env.dt},
               {"distractors", static_cast<int>(c.env.distractor_count())},
               {"action_layout", c.env.action_layout == ActionLayout::Native ? "native" : "compat7"}};
  if (!is_distract(c.env.task)) env.erase("distractors");
  if (c.camera_shift) {
    env["camera_shift"] = {
        {"seed", c.camera_shift->seed}, {"angle_deg", c.camera_shift->angle_deg}, {"offset", c.camera_shift->offset}};
  } else if (c.env.obs_transform) {
    json rot = json::array();
    for (std::size_t i = 0; i < c.env.obs_transform->rotation.rows(); ++i) {
      auto r = c.env.obs_transform->rotation.row(i);
      rot.push_back(std::vector<double>(r.begin(), r.end()));
    }
    env["obs_transform"] = {{"rotation", rot}, {"offset", c.env.obs_transform->offset}};
  }

  json loss = {{"variant", to_string(c.loss.variant)}, {"distill_weight", c.loss.distill_weight},
               {"clip_eps", c.loss.clip_eps},          {"value_coef", c.loss.value_coef},
               {"entropy_coef", c.loss.entropy_coef},  {"ppd_lambda", c.loss.ppd_lambda},
               {"ppd_clip", c.loss.ppd_clip},          {"value_clip", c.loss.value_clip}};

  json teacher;
  switch (c.teacher.kind) {
    case TeacherKind::None: teacher = {{"kind", "none"}}; break;
    case TeacherKind::Scripted:
      teacher = {{"kind", "scripted"},
                 {"competence", c.teacher.scripted.competence},
                 {"action_noise_std", c.teacher.scripted.action_noise_std},
                 {"systematic_bias", c.teacher.scripted.systematic_bias},
                 {"observes_transformed", c.teacher.scripted.observes_transformed},
                 {"seed", c.teacher.scripted.seed}};
      break;
    case TeacherKind::Remote:
      teacher = {{"kind", "remote"},
                 {"endpoint", c.teacher.endpoint},
                 {"timeout_s", c.teacher.remote.timeout_s},
                 {"retries", c.teacher.remote.retries}};
      break;
  }
  if (c.teacher.kind != TeacherKind::None) {
    teacher["instruction"] = c.resolved_instruction();
    teacher["sample_count"] = c.resolved_sample_count();
  }

  json train = {{"total_steps", c.total_steps},
                {"lanes", c.lanes},
                {"horizon", c.horizon},
                {"epochs", c.epochs},
                {"minibatch_size", c.minibatch_size},
                {"learning_rate", c.learning_rate},
                {"gamma", c.resolved_gamma()},
                {"gamma_override", c.gamma_override},
                {"gae_lambda", c.gae_lambda},
                {"max_grad_norm", c.max_grad_norm},
                {"eval_episodes", c.eval_episodes},
                {"eval_interval", c.eval_interval},
                {"teacher_eval_episodes", c.teacher_eval_episodes},
                {"record_wallclock", c.record_wallclock}};

  json policy = {{"hidden", c.policy.hidden}, {"init_log_std", c.policy.init_log_std}};

  return {{"name", c.name}, {"env", env},       {"loss", loss},       {"teacher", teacher},
          {"train", train}, {"policy", policy}, {"seeds", c.seeds}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    // e.what() carries the line and column of the error
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Accepts a config file or a run manifest (whose "config" member is a config).
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    if (j.is_object() && j.contains("config") && j.contains("engine_version")) return config_from_json(j.at("config"));
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace rpd
