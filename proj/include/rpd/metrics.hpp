#pragma once

// metrics.csv columns (fixed order):
//   update,global_step,eval_success,eval_reward,train_reward,loss_total,
//   loss_ppo,loss_value,loss_entropy,loss_distill,teacher_queries,wallclock_s
// Empty cells mean "not measured at this update".

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpd/errors.hpp"

namespace rpd {

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"update",       "global_step",  "eval_success", "eval_reward",
                                             "train_reward", "loss_total",   "loss_ppo",     "loss_value",
                                             "loss_entropy", "loss_distill", "teacher_queries", "wallclock_s"};
  return cols;
}

struct UpdateMetrics {
  int update = 0;
  std::int64_t global_step = 0;
  std::optional<double> eval_success;
  std::optional<double> eval_reward;
  double train_reward = 0.0;
  double loss_total = 0.0;
  double loss_ppo = 0.0;
  double loss_value = 0.0;
  double loss_entropy = 0.0;
  double loss_distill = 0.0;
  std::int64_t teacher_queries = 0;  // cumulative observation rows sent to the teacher
  std::optional<double> wallclock_s;

  bool operator==(const UpdateMetrics&) const = default;
};

struct RunMetrics {
  std::vector<UpdateMetrics> updates;
  std::optional<double> teacher_success;  // teacher_eval baseline, when a teacher is configured
};

// Shortest round-trip decimal text.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw UsageError("format_number: conversion failed");
  return std::string(buf, end);
}

inline std::string format_cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

inline std::string join_csv(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s;
}

inline std::string metrics_csv(const RunMetrics& m) {
  std::string out = join_csv(metrics_columns()) + "\n";
  for (const auto& u : m.updates) {
    out += join_csv({std::to_string(u.update), std::to_string(u.global_step), format_cell(u.eval_success),
                     format_cell(u.eval_reward), format_number(u.train_reward), format_number(u.loss_total),
                     format_number(u.loss_ppo), format_number(u.loss_value), format_number(u.loss_entropy),
                     format_number(u.loss_distill), std::to_string(u.teacher_queries), format_cell(u.wallclock_s)});
    out += "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("csv: bad number '" + s + "'");
  return v;
}

// Header plus raw text cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("csv: no column '" + name + "'");
  }
  std::optional<double> number(std::size_t row, std::size_t col) const { return parse_cell(rows[row][col]); }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv: empty file");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) throw ConfigError("csv: row has the wrong number of cells");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline RunMetrics parse_metrics_csv(const std::string& text) {
  const auto t = parse_csv(text);
  if (t.header != metrics_columns()) throw ConfigError("metrics csv: unexpected header");
  RunMetrics m;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<std::optional<double>> r;
    for (std::size_t c = 0; c < t.header.size(); ++c) r.push_back(t.number(i, c));
    UpdateMetrics u;
    u.update = static_cast<int>(r[0].value_or(0));
    u.global_step = static_cast<std::int64_t>(r[1].value_or(0));
    u.eval_success = r[2];
    u.eval_reward = r[3];
    u.train_reward = r[4].value_or(0);
    u.loss_total = r[5].value_or(0);
    u.loss_ppo = r[6].value_or(0);
    u.loss_value = r[7].value_or(0);
    u.loss_entropy = r[8].value_or(0);
    u.loss_distill = r[9].value_or(0);
    u.teacher_queries = static_cast<std::int64_t>(r[10].value_or(0));
    u.wallclock_s = r[11];
    m.updates.push_back(u);
  }
  return m;
}

// aggregate.csv: one row per (config, update) with mean and population std
// across the seeds that produced a value.
//   config,update,global_step,seeds,missing_seeds,<metric>_mean,<metric>_std...
inline const std::vector<std::string>& aggregated_metrics() {
  static const std::vector<std::string> m{"eval_success", "eval_reward", "train_reward", "loss_total",
                                          "loss_ppo",     "loss_value",  "loss_entropy", "loss_distill",
                                          "teacher_queries"};
  return m;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  r.n = xs.size();
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return r;
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<RunMetrics> metrics;  // nullopt: the cell failed
};

inline std::string aggregate_csv(const std::vector<std::pair<std::string, std::vector<SeedRun>>>& configs) {
  std::vector<std::string> header{"config", "update", "global_step", "seeds", "missing_seeds"};
  for (const auto& m : aggregated_metrics()) {
    header.push_back(m + "_mean");
    header.push_back(m + "_std");
  }
  std::string out = join_csv(header) + "\n";
  for (const auto& [name, runs] : configs) {
    std::string missing;
    std::map<int, std::vector<const UpdateMetrics*>> by_update;
    for (const auto& r : runs) {
      if (!r.metrics) {
        missing += (missing.empty() ? "" : ";") + std::to_string(r.seed);
        continue;
      }
      for (const auto& u : r.metrics->updates) by_update[u.update].push_back(&u);
    }
    if (by_update.empty()) {
      std::vector<std::string> cells{name, "", "", "0", missing};
      cells.resize(header.size());
      out += join_csv(cells) + "\n";
      continue;
    }
    for (const auto& [update, rows] : by_update) {
      std::vector<std::string> cells{name, std::to_string(update), std::to_string(rows.front()->global_step),
                                     std::to_string(rows.size()), missing};
      auto add = [&](auto get) {
        std::vector<double> xs;
        for (const auto* u : rows)
          if (auto v = get(*u)) xs.push_back(*v);
        if (xs.empty()) {
          cells.emplace_back();
          cells.emplace_back();
          return;
        }
        const auto ms = mean_std(xs);
        cells.push_back(format_number(ms.mean));
        cells.push_back(format_number(ms.std));
      };
      using O = std::optional<double>;
      add([](const UpdateMetrics& u) { return u.eval_success; });
      add([](const UpdateMetrics& u) { return u.eval_reward; });
      add([](const UpdateMetrics& u) { return O(u.train_reward); });
      add([](const UpdateMetrics& u) { return O(u.loss_total); });
      add([](const UpdateMetrics& u) { return O(u.loss_ppo); });
      add([](const UpdateMetrics& u) { return O(u.loss_value); });
      add([](const UpdateMetrics& u) { return O(u.loss_entropy); });
      add([](const UpdateMetrics& u) { return O(u.loss_distill); });
      add([](const UpdateMetrics& u) { return O(static_cast<double>(u.teacher_queries)); });
      out += join_csv(cells) + "\n";
    }
  }
  return out;
}

}  // namespace rpd
