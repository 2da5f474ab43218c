#pragma once

// Run artifacts and seed sweeps.
//
// A run directory holds metrics.csv, checkpoint.bin and manifest.json. A sweep
// writes <output_dir>/<config>/seed_<s>/ per cell plus aggregate.csv,
// baselines.csv and teacher_eval.csv at the top level.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rpd/config.hpp"
#include "rpd/metrics.hpp"
#include "rpd/nn/checkpoint.hpp"
#include "rpd/plot.hpp"
#include "rpd/trainer.hpp"

#ifndef RPD_VERSION
#define RPD_VERSION "0.1.0"
#endif

namespace rpd {

inline constexpr std::string_view kEngineVersion = RPD_VERSION;

// Resolved config pinned to one seed, plus the engine version. load_config
// accepts it back unchanged.
inline json run_manifest(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = config;
  c.seeds = {seed};
  return json{{"engine_version", std::string(kEngineVersion)}, {"seed", seed}, {"config", config_to_json(c)}};
}

struct RunArtifacts {
  std::filesystem::path metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
};

inline RunArtifacts run_paths(const std::filesystem::path& dir) {
  return {dir / "metrics.csv", dir / "checkpoint.bin", dir / "manifest.json"};
}

// Trains one seed and writes its artifacts into `dir`. The manifest is written
// first so an aborted run still records what was attempted.
inline TrainResult run_to_dir(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& dir,
                              TeacherPolicy* teacher = nullptr) {
  const auto paths = run_paths(dir);
  std::filesystem::create_directories(dir);
  write_text(paths.manifest, run_manifest(config, seed).dump(2) + "\n");
  TrainOptions opts;
  opts.teacher = teacher;
  opts.failure_checkpoint = dir / "checkpoint.failed.bin";
  TrainResult r = train(config, seed, opts);
  write_text(paths.metrics, metrics_csv(r.metrics));
  save_checkpoint(r.policy, paths.checkpoint);
  return r;
}

struct SweepEntry {
  std::string name;
  ExperimentConfig config;
};

struct SweepSpec {
  std::vector<SweepEntry> configs;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "sweep";
  std::vector<Baseline> teacher_baselines;

  void validate() const {
    if (configs.empty()) throw ConfigError("configs: at least one config is required");
    if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const auto& e = configs[i];
      if (e.name.empty() || e.name.find_first_of("/\\,;") != std::string::npos || e.name == "." || e.name == "..")
        throw ConfigError("configs[" + std::to_string(i) + "].name: must be a non-empty name without / \\ , ;");
      for (std::size_t k = 0; k < i; ++k)
        if (configs[k].name == e.name) throw ConfigError("configs[" + std::to_string(i) + "].name: duplicate '" + e.name + "'");
      if (e.config.total_steps != configs.front().config.total_steps)
        throw ConfigError("configs[" + std::to_string(i) + "]: total_steps differs from '" + configs.front().name +
                          "'; configs in a sweep share one step budget");
    }
  }
};

// {"base": {config}, "configs": [{"name": ..., "override": {merge patch}}],
//  "seeds": 5 | [s...], "output_dir": "...", "teacher_baselines": [{"name": ..., "value": ...}]}
inline SweepSpec sweep_from_json(const json& j, const std::filesystem::path& relative_to = {}) {
  detail::Fields f(j, "");
  SweepSpec s;
  json base = json::object();
  if (f.has("base")) {
    base = f.raw("base");
    if (!base.is_object()) throw ConfigError("base: expected an object");
  }
  if (!f.has("configs") || !f.raw("configs").is_array()) throw ConfigError("configs: expected an array");
  const json& list = f.raw("configs");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "configs[" + std::to_string(i) + "]";
    detail::Fields cf(list[i], where);
    SweepEntry e;
    e.name = cf.string("name", "");
    json merged = base;
    if (cf.has("override")) {
      const json& patch = cf.raw("override");
      if (!patch.is_object()) throw ConfigError(where + ".override: expected an object");
      merged.merge_patch(patch);
    }
    cf.finish();
    try {
      e.config = config_from_json(merged);
    } catch (const ConfigError& err) {
      throw ConfigError(where + " (" + e.name + "): " + err.what());
    }
    e.config.name = e.name;
    s.configs.push_back(std::move(e));
  }
  if (f.has("seeds")) {
    const json& v = f.raw("seeds");
    if (v.is_number_integer()) {
      const auto n = v.get<std::int64_t>();
      if (n < 1) throw ConfigError("seeds: must be >= 1");
      s.seeds.clear();
      for (std::int64_t k = 0; k < n; ++k) s.seeds.push_back(static_cast<std::uint64_t>(k));
    } else {
      const auto xs = f.integers("seeds");
      s.seeds.clear();
      for (auto x : xs) {
        if (x < 0) throw ConfigError("seeds: must be non-negative");
        s.seeds.push_back(static_cast<std::uint64_t>(x));
      }
    }
  }
  if (f.has("output_dir")) {
    std::filesystem::path p = f.string("output_dir", "");
    s.output_dir = p.is_relative() && !relative_to.empty() ? relative_to / p : p;
  }
  if (f.has("teacher_baselines")) {
    const json& v = f.raw("teacher_baselines");
    if (!v.is_array()) throw ConfigError("teacher_baselines: expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      detail::Fields bf(v[i], "teacher_baselines[" + std::to_string(i) + "]");
      Baseline b{bf.string("name", "teacher"), bf.number("value", 0.0)};
      if (!bf.has("value")) throw ConfigError(bf.field("value") + ": required");
      bf.finish();
      s.teacher_baselines.push_back(b);
    }
  }
  f.finish();
  s.validate();
  return s;
}

// output_dir in the file is taken relative to the current directory.
inline SweepSpec load_sweep(const std::filesystem::path& path) {
  try {
    return sweep_from_json(read_json_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct SweepResult {
  std::vector<std::pair<std::string, std::vector<SeedRun>>> runs;
  std::vector<std::string> failures;  // "<config> seed <s>: <error>"
  std::string aggregate;

  bool ok() const { return failures.empty(); }
};

inline std::string baselines_csv(const std::vector<Baseline>& bs) {
  std::string out = "name,value\n";
  for (const auto& b : bs) out += b.name + "," + format_number(b.value) + "\n";
  return out;
}

inline std::vector<Baseline> parse_baselines_csv(const std::string& text) {
  const auto t = parse_csv(text);
  const auto cn = t.column("name"), cv = t.column("value");
  std::vector<Baseline> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto v = t.number(r, cv);
    if (!v) throw ConfigError("baselines csv: empty value for '" + t.rows[r][cn] + "'");
    out.push_back({t.rows[r][cn], *v});
  }
  return out;
}

// Runs every (config, seed) cell on at most `jobs` threads. A failing cell is
// logged and recorded as missing; the remaining cells still run.
inline SweepResult run_sweep(const SweepSpec& spec, int jobs = 1) {
  spec.validate();
  if (jobs < 1) throw ConfigError("--jobs: must be >= 1");
  struct Cell {
    std::size_t config;
    std::size_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < spec.configs.size(); ++c)
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) cells.push_back({c, s});

  SweepResult result;
  for (const auto& e : spec.configs) {
    std::vector<SeedRun> runs;
    for (auto seed : spec.seeds) runs.push_back({seed, std::nullopt});
    result.runs.emplace_back(e.name, std::move(runs));
  }
  std::vector<std::optional<double>> teacher_success(cells.size());
  std::vector<std::string> errors(cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < cells.size();) {
      const auto [c, s] = cells[k];
      const auto& e = spec.configs[c];
      const auto seed = spec.seeds[s];
      const auto dir = spec.output_dir / e.name / ("seed_" + std::to_string(seed));
      try {
        auto r = run_to_dir(e.config, seed, dir);
        teacher_success[k] = r.metrics.teacher_success;
        result.runs[c].second[s].metrics = std::move(r.metrics);
      } catch (const std::exception& ex) {
        errors[k] = ex.what();
        spdlog::error("sweep cell {} seed {} failed: {}", e.name, seed, ex.what());
        try {
          write_text(dir / "error.txt", std::string(ex.what()) + "\n");
        } catch (...) {
        }
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string teacher_rows = "config,seed,teacher_success\n";
  std::vector<std::pair<double, int>> measured(spec.configs.size(), {0.0, 0});
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& e = spec.configs[cells[k].config];
    const auto seed = spec.seeds[cells[k].seed];
    if (!errors[k].empty()) result.failures.push_back(e.name + " seed " + std::to_string(seed) + ": " + errors[k]);
    if (teacher_success[k]) {
      teacher_rows += e.name + "," + std::to_string(seed) + "," + format_number(*teacher_success[k]) + "\n";
      measured[cells[k].config].first += *teacher_success[k];
      measured[cells[k].config].second += 1;
    }
  }
  // configured baselines first, then the measured teacher of each config
  auto baselines = spec.teacher_baselines;
  for (std::size_t c = 0; c < spec.configs.size(); ++c)
    if (measured[c].second > 0)
      baselines.push_back({"teacher (" + spec.configs[c].name + ")", measured[c].first / measured[c].second});
  result.aggregate = aggregate_csv(result.runs);
  write_text(spec.output_dir / "aggregate.csv", result.aggregate);
  write_text(spec.output_dir / "baselines.csv", baselines_csv(baselines));
  write_text(spec.output_dir / "teacher_eval.csv", teacher_rows);
  return result;
}

}  // namespace rpd
