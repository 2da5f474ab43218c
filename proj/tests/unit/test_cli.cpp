#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <filesystem>
#include <sstream>

#include "process.hpp"
#include "rpd/experiment.hpp"
#include "rpd/protocol.hpp"

using namespace rpd;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({"name": "tiny", "env": {"task": "Reach2D"},
  "train": {"total_steps": 600, "lanes": 3, "horizon": 20, "minibatch_size": 20, "eval_interval": 5,
            "eval_episodes": 5},
  "policy": {"hidden": [8]}, "seeds": [2]})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rpd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& text) {
    write_text(dir_ / name, text);
    return dir_ / name;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunWritesArtifacts) {
  const auto cfg = file("c.json", kSmallConfig);
  const auto r = proc::run({"run", cfg.string(), "--out", (dir_ / "out").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto text = read_text(dir_ / "out" / "metrics.csv");
  EXPECT_EQ(text.rfind("update,global_step,eval_success", 0), 0u);
  EXPECT_EQ(parse_metrics_csv(text).updates.size(), 10u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "checkpoint.bin"));
  const auto manifest = read_json_file(dir_ / "out" / "manifest.json");
  EXPECT_EQ(manifest["seed"], 2);
  EXPECT_EQ(manifest["engine_version"], std::string(kEngineVersion));
}

TEST_F(Cli, RerunIsByteIdenticalAndManifestReproduces) {
  const auto cfg = file("c.json", kSmallConfig);
  ASSERT_EQ(proc::run({"run", cfg.string(), "--out", (dir_ / "a").string()}).exit_code, 0);
  ASSERT_EQ(proc::run({"run", cfg.string(), "--out", (dir_ / "b").string()}).exit_code, 0);
  ASSERT_EQ(proc::run({"run", (dir_ / "a" / "manifest.json").string(), "--out", (dir_ / "m").string()}).exit_code, 0);
  const auto a = read_text(dir_ / "a" / "metrics.csv");
  EXPECT_EQ(a, read_text(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(a, read_text(dir_ / "m" / "metrics.csv"));
}

TEST_F(Cli, MultipleSeedsGetSubdirectories) {
  const auto cfg = file("c.json", R"({"env": {"task": "Reach2D"}, "train": {"total_steps": 120, "lanes": 3,
    "horizon": 20, "minibatch_size": 20, "eval_episodes": 2}, "policy": {"hidden": [4]}, "seeds": [0, 1]})");
  const auto r = proc::run({"run", cfg.string(), "--out", (dir_ / "o").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "o" / "seed_0" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "o" / "seed_1" / "metrics.csv"));
}

TEST_F(Cli, InvalidGammaNamesTheField) {
  const auto cfg = file("bad.json", R"({"train": {"gamma": 1.5}})");
  const auto r = proc::run({"run", cfg.string(), "--out", (dir_ / "x").string()});
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("train.gamma"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "x" / "metrics.csv"));
}

TEST_F(Cli, SyntaxErrorsReportLineAndColumn) {
  const auto cfg = file("bad.json", "{\n  \"train\": {\n    \"lanes\": ,\n  }\n}\n");
  const auto r = proc::run({"run", cfg.string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(proc::run({}).exit_code, 0);
  EXPECT_NE(proc::run({"fly"}).exit_code, 0);
  EXPECT_NE(proc::run({"run", (dir_ / "missing.json").string()}).exit_code, 0);
  const auto v = proc::run({"--version"});
  EXPECT_EQ(v.exit_code, 0);
  EXPECT_NE(v.out.find(std::string(kEngineVersion)), std::string::npos);
}

TEST_F(Cli, SweepProducesCellsAndAggregate) {
  const auto sweep = file("s.json", R"({
    "base": {"env": {"task": "Reach2D"}, "train": {"total_steps": 240, "lanes": 3, "horizon": 20,
             "minibatch_size": 20, "eval_interval": 2, "eval_episodes": 3}, "policy": {"hidden": [4]}},
    "configs": [{"name": "ppo"}, {"name": "rpd_mse", "override": {"loss": {"variant": "rpd_mse"},
                 "teacher": {"kind": "scripted", "competence": 0.6}, "train": {"teacher_eval_episodes": 20}}}],
    "seeds": 2, "output_dir": "out"})");
  const auto r = proc::run({"sweep", sweep.string(), "--jobs", "2", "--out", (dir_ / "out").string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  int metrics = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "out"))
    if (e.path().filename() == "metrics.csv") ++metrics;
  EXPECT_EQ(metrics, 4);
  const auto agg = parse_csv(read_text(dir_ / "out" / "aggregate.csv"));
  EXPECT_EQ(agg.rows.size(), 2u * 4u);
  for (std::size_t i = 0; i < agg.rows.size(); ++i) {
    EXPECT_EQ(agg.rows[i][agg.column("seeds")], "2");
    EXPECT_EQ(agg.rows[i][agg.column("missing_seeds")], "");
  }
  EXPECT_TRUE(fs::exists(dir_ / "out" / "teacher_eval.csv"));

  // aggregate equals a hand computation from the per-cell files
  const auto a = parse_metrics_csv(read_text(dir_ / "out" / "ppo" / "seed_0" / "metrics.csv"));
  const auto b = parse_metrics_csv(read_text(dir_ / "out" / "ppo" / "seed_1" / "metrics.csv"));
  const double x = a.updates[1].train_reward, y = b.updates[1].train_reward;
  EXPECT_NEAR(*agg.number(1, agg.column("train_reward_mean")), (x + y) / 2, 1e-12);
  EXPECT_NEAR(*agg.number(1, agg.column("train_reward_std")), std::abs(x - y) / 2, 1e-12);

  const auto svg = dir_ / "curve.svg";
  const auto p = proc::run({"plot", (dir_ / "out" / "aggregate.csv").string(), svg.string(), "--title", "Reach"});
  ASSERT_EQ(p.exit_code, 0) << p.err;
  std::istringstream in(read_text(svg));
  boost::property_tree::ptree tree;
  EXPECT_NO_THROW(boost::property_tree::read_xml(in, tree));
  const auto text = read_text(svg);
  EXPECT_NE(text.find("stroke-dasharray"), std::string::npos);  // teacher baseline from baselines.csv
}

TEST_F(Cli, FailedCellIsMarkedMissing) {
  const auto sweep = file("s.json", R"({
    "base": {"env": {"task": "Reach2D"}, "train": {"total_steps": 120, "lanes": 3, "horizon": 20,
             "minibatch_size": 20, "eval_episodes": 2}, "policy": {"hidden": [4]}},
    "configs": [{"name": "ok"}, {"name": "broken", "override": {"loss": {"variant": "rpd_mse"},
                 "teacher": {"kind": "remote", "endpoint": "http://127.0.0.1:1", "retries": 0, "timeout_s": 0.5}}}],
    "seeds": [0, 1], "output_dir": "out"})");
  const auto r = proc::run({"sweep", sweep.string(), "--out", (dir_ / "out").string()});
  EXPECT_NE(r.exit_code, 0);
  const auto agg = parse_csv(read_text(dir_ / "out" / "aggregate.csv"));
  bool saw_ok = false, saw_broken = false;
  for (std::size_t i = 0; i < agg.rows.size(); ++i) {
    const auto& name = agg.rows[i][agg.column("config")];
    if (name == "ok") {
      saw_ok = true;
      EXPECT_EQ(agg.rows[i][agg.column("missing_seeds")], "");
    }
    if (name == "broken") {
      saw_broken = true;
      EXPECT_EQ(agg.rows[i][agg.column("missing_seeds")], "0;1");
      EXPECT_EQ(agg.rows[i][agg.column("seeds")], "0");
    }
  }
  EXPECT_TRUE(saw_ok);
  EXPECT_TRUE(saw_broken);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "broken" / "seed_0" / "error.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "ok" / "seed_1" / "metrics.csv"));
}

TEST_F(Cli, PlotWithExplicitBaselines) {
  const auto agg = file("aggregate.csv",
                        "config,update,global_step,seeds,missing_seeds,eval_success_mean,eval_success_std\n"
                        "a,1,10,1,,0.5,0\na,2,20,1,,0.5,0\n");
  const auto svg = dir_ / "p.svg";
  const auto r = proc::run({"plot", agg.string(), svg.string(), "--baseline", "octo=0.3", "--baseline", "vla=0.7"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto text = read_text(svg);
  std::size_t lines = 0;
  for (auto pos = text.find("<line"); pos != std::string::npos; pos = text.find("<line", pos + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
  EXPECT_NE(proc::run({"plot", agg.string(), svg.string(), "--baseline", "novalue"}).exit_code, 0);
  EXPECT_NE(proc::run({"plot", agg.string(), svg.string(), "--metric", "nothing"}).exit_code, 0);
}

TEST_F(Cli, EvalMatchesInProcessEvaluation) {
  const auto cfg = file("c.json", kSmallConfig);
  ASSERT_EQ(proc::run({"run", cfg.string(), "--out", (dir_ / "r").string()}).exit_code, 0);
  const auto ckpt = (dir_ / "r" / "checkpoint.bin").string();
  const auto r = proc::run({"eval", ckpt, cfg.string(), "--episodes", "12"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = json::parse(r.out);
  const auto c = load_config(cfg);
  const auto want = evaluate(load_checkpoint(ckpt), c.env, 12, eval_seed(2));
  EXPECT_EQ(j["success_rate"].get<double>(), want.success_rate);
  EXPECT_EQ(j["mean_reward"].get<double>(), want.mean_reward);
  EXPECT_EQ(j["episodes"], 12);
  EXPECT_EQ(proc::run({"eval", ckpt, cfg.string(), "--episodes", "12"}).out, r.out);

  const auto push = file("push.json", R"({"env": {"task": "Push2D"}})");
  EXPECT_NE(proc::run({"eval", ckpt, push.string()}).exit_code, 0);
}

TEST_F(Cli, ServeScriptedTeacherLoopback) {
  const auto spec = file("teacher.json", R"({"env": {"task": "Push2D"},
    "teacher": {"kind": "scripted", "competence": 0.7, "action_noise_std": 0.05, "seed": 3}})");
  proc::Background server({"serve-scripted-teacher", spec.string(), "--port", "0"});
  const int port = proc::port_from_banner(server.read_line(std::chrono::seconds(10)));
  ASSERT_GT(port, 0);

  const auto c = load_config(spec);
  ScriptedTeacher local(c.teacher.scripted, c.env);
  RemoteTeacher remote(Endpoint{"127.0.0.1", port});
  EXPECT_EQ(remote.act_dim(), 3u);
  for (int sc : {1, 10})
    for (std::uint64_t s = 0; s < 10; ++s) {
      Matrix obs;
      make_lanes(c.env, 1 + s % 5, s, &obs);
      const TeacherQuery q{obs, "push", sc};
      const auto a = local.act(q), b = remote.act(q);
      ASSERT_EQ(a.actions.size(), b.actions.size());
      for (std::size_t i = 0; i < a.actions.size(); ++i) ASSERT_NEAR(a.actions[i], b.actions[i], 1e-12);
    }
  EXPECT_EQ(teacher_eval(local, c.env, 40, 5).success_rate, teacher_eval(remote, c.env, 40, 5).success_rate);
  EXPECT_THROW(remote.act({Matrix(0, 8), "", 1}), ProtocolError);

  // a second server on the same port fails with a clear message
  const auto clash = proc::run({"serve-scripted-teacher", spec.string(), "--port", std::to_string(port)});
  EXPECT_NE(clash.exit_code, 0);
  EXPECT_NE(clash.err.find("port"), std::string::npos) << clash.err;

  EXPECT_EQ(server.terminate(SIGINT, std::chrono::seconds(5)), 0);
}

TEST_F(Cli, ServeNeedsAScriptedTeacher) {
  const auto spec = file("none.json", R"({"env": {"task": "Push2D"}})");
  EXPECT_EQ(proc::run({"serve-scripted-teacher", spec.string()}).exit_code, 2);
}

TEST_F(Cli, LogLevelFromEnvironment) {
  const auto cfg = file("c.json", kSmallConfig);
  const auto quiet = proc::run({"run", cfg.string(), "--out", (dir_ / "q").string()}, "RPD_LOG=off");
  ASSERT_EQ(quiet.exit_code, 0);
  EXPECT_EQ(quiet.err, "");
  const auto debug = proc::run({"run", cfg.string(), "--out", (dir_ / "d").string()}, "RPD_LOG=debug");
  ASSERT_EQ(debug.exit_code, 0);
  EXPECT_NE(debug.err.find("debug"), std::string::npos);
}
