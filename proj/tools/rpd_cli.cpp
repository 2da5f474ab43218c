// rpd: command-line front end.
//
//   rpd run <config.json> [--out DIR] [--seed S]
//   rpd sweep <sweep.json> [--jobs N] [--out DIR]
//   rpd plot <aggregate.csv> <out.svg> [--metric M] [--baseline NAME=VALUE]... [--baselines FILE] [--title T]
//   rpd eval <checkpoint> <config.json> [--seed S] [--episodes N]
//   rpd serve-scripted-teacher <spec.json> [--port P] [--host H]
//
// RPD_LOG=debug|info|warn|error|off sets the log level (default info).

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rpd/config.hpp"
#include "rpd/experiment.hpp"
#include "rpd/plot.hpp"
#include "rpd/protocol.hpp"
#include "rpd/teacher.hpp"
#include "rpd/trainer.hpp"

namespace fs = std::filesystem;
using namespace rpd;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("rpd");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("RPD_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("RPD_LOG: unknown level '{}', using info", env);
    else
      spdlog::set_level(lvl);
  }
}

int cmd_run(const fs::path& config_path, std::optional<fs::path> out, std::optional<std::uint64_t> seed) {
  const ExperimentConfig c = load_config(config_path);
  c.validate();
  const fs::path dir = out ? *out : fs::path("runs") / c.name;
  const std::vector<std::uint64_t> seeds = seed ? std::vector<std::uint64_t>{*seed} : c.seeds;
  for (auto s : seeds) {
    const fs::path d = seeds.size() == 1 ? dir : dir / ("seed_" + std::to_string(s));
    const auto r = run_to_dir(c, s, d);
    const auto& last = r.metrics.updates.back();
    std::cout << "seed " << s << ": final eval_success " << format_cell(last.eval_success) << ", metrics "
              << run_paths(d).metrics.string() << "\n";
  }
  return 0;
}

int cmd_sweep(const fs::path& path, int jobs, std::optional<fs::path> out) {
  SweepSpec spec = load_sweep(path);
  if (out) spec.output_dir = *out;
  const auto r = run_sweep(spec, jobs);
  std::cout << "aggregate: " << (spec.output_dir / "aggregate.csv").string() << "\n";
  if (!r.ok()) {
    for (const auto& f : r.failures) std::cerr << "failed: " << f << "\n";
    return 1;
  }
  return 0;
}

Baseline parse_baseline_flag(const std::string& s) {
  const auto eq = s.rfind('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--baseline: expected NAME=VALUE, got '" + s + "'");
  const auto v = parse_cell(s.substr(eq + 1));
  if (!v) throw ConfigError("--baseline: missing value in '" + s + "'");
  return {s.substr(0, eq), *v};
}

int cmd_plot(const fs::path& aggregate, const fs::path& svg, const PlotOptions& opt,
             const std::vector<std::string>& flags, std::optional<fs::path> baselines_file) {
  std::vector<Baseline> bs;
  if (!baselines_file && flags.empty() && fs::exists(aggregate.parent_path() / "baselines.csv"))
    baselines_file = aggregate.parent_path() / "baselines.csv";
  if (baselines_file) bs = parse_baselines_csv(read_text(*baselines_file));
  for (const auto& f : flags) bs.push_back(parse_baseline_flag(f));
  write_text(svg, plot_aggregate(read_text(aggregate), bs, opt));
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& config_path, std::optional<std::uint64_t> seed,
             std::optional<int> episodes) {
  ExperimentConfig c = load_config(config_path);
  if (episodes) c.eval_episodes = *episodes;
  c.validate();
  const GaussianPolicy policy = load_checkpoint(checkpoint);
  if (!(policy.arch().obs_dim == c.env.obs_dim() && policy.arch().act_dim == c.env.act_dim()))
    throw ConfigError("checkpoint dimensions do not match the config's environment");
  const std::uint64_t s = seed ? *seed : c.seeds.front();
  const auto r = evaluate(policy, c.env, c.eval_episodes, eval_seed(s));
  std::cout << json{{"success_rate", r.success_rate}, {"mean_reward", r.mean_reward}, {"episodes", c.eval_episodes},
                    {"seed", s}}
                   .dump()
            << "\n";
  return 0;
}

TeacherServer* g_server = nullptr;

int cmd_serve(const fs::path& spec_path, int port, const std::string& host) {
  const ExperimentConfig c = load_config(spec_path);
  if (c.teacher.kind != TeacherKind::Scripted) throw ConfigError("teacher.kind: serve-scripted-teacher needs 'scripted'");
  ScriptedTeacher teacher(c.teacher.scripted, c.env);
  TeacherServer server(teacher);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->interrupt();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->interrupt();
  });
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Refined policy distillation engine"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_path, aggregate_path, svg_path, checkpoint_path, baselines_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  int jobs = 1, port = 0;
  std::string host = "127.0.0.1";
  PlotOptions plot_opt;
  std::vector<std::string> baseline_flags;

  auto* run = app.add_subcommand("run", "Train one config (every seed in it, or --seed)");
  run->add_option("config", config_path, "Config or manifest JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (default runs/<name>)");
  run->add_option("--seed", seed, "Run only this seed");

  auto* sweep = app.add_subcommand("sweep", "Run configs x seeds and aggregate");
  sweep->add_option("sweep", sweep_path, "Sweep JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--jobs,-j", jobs, "Parallel cells")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "Override output_dir");

  auto* plot = app.add_subcommand("plot", "Render aggregate.csv as an SVG learning curve");
  plot->add_option("aggregate", aggregate_path, "aggregate.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("svg", svg_path, "Output SVG")->required();
  plot->add_option("--metric", plot_opt.metric, "Metric column prefix (eval_success, eval_reward, ...)");
  plot->add_option("--title", plot_opt.title, "Chart title");
  plot->add_option("--baseline", baseline_flags, "Dashed baseline NAME=VALUE (repeatable)");
  plot->add_option("--baselines", baselines_path, "CSV of name,value baselines")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with mean actions");
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("config", config_path, "Config or manifest JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--seed", seed, "Run seed whose evaluation stream to use");
  eval->add_option("--episodes", episodes, "Episode count")->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve-scripted-teacher", "Serve a scripted teacher over HTTP");
  serve->add_option("spec", config_path, "Config JSON with env and a scripted teacher")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto out = out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir);
    if (*run) return cmd_run(config_path, out, seed);
    if (*sweep) return cmd_sweep(sweep_path, jobs, out);
    if (*plot)
      return cmd_plot(aggregate_path, svg_path, plot_opt, baseline_flags,
                      baselines_path.empty() ? std::nullopt : std::optional<fs::path>(baselines_path));
    if (*eval) return cmd_eval(checkpoint_path, config_path, seed, episodes);
    if (*serve) return cmd_serve(config_path, port, host);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
