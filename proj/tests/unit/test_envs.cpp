#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rpd/envs.hpp"
#include "rpd/teacher.hpp"

using namespace rpd;

namespace {

EnvSpec spec_for(TaskId t, RewardMode m = RewardMode::Dense) {
  EnvSpec s;
  s.task = t;
  s.reward_mode = m;
  return s;
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

bool in_arena(Vec2 p) { return std::abs(p.x) <= geometry::kArena && std::abs(p.y) <= geometry::kArena; }

}  // namespace

TEST(Envs, ResetIsDeterministic) {
  for (auto t : {TaskId::Reach2D, TaskId::Push2D, TaskId::Pull2D, TaskId::PushDistract2D, TaskId::PullDistract2D}) {
    const auto spec = spec_for(t);
    const auto a = reset(spec, 17, 3), b = reset(spec, 17, 3), c = reset(spec, 18, 3);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    EXPECT_NE(a.second, c.second);
    EXPECT_EQ(a.second.size(), spec.obs_dim());
  }
}

TEST(Envs, IdentityTransformObservesFlattenedState) {
  auto spec = spec_for(TaskId::Push2D);
  const auto [s0, plain] = reset(spec, 5);
  EXPECT_EQ(plain, flatten_state(spec, s0));
  spec.obs_transform = ObsTransform{Matrix::identity(8), std::vector<double>(8, 0.0)};
  EXPECT_EQ(reset(spec, 5).second, plain);
}

TEST(Envs, GoalSamplingIsUniformOverItsBox) {
  const auto spec = spec_for(TaskId::Push2D);
  const auto box = geometry::layout(TaskId::Push2D).goal;
  const int n = 10000;
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto s = reset(spec, 99, static_cast<std::uint64_t>(i)).first;
    ASSERT_GE(s.goal_pos.x, box.x_lo);
    ASSERT_LE(s.goal_pos.x, box.x_hi);
    sx += s.goal_pos.x;
    sy += s.goal_pos.y;
  }
  const double sdx = (box.x_hi - box.x_lo) / std::sqrt(12.0), sdy = (box.y_hi - box.y_lo) / std::sqrt(12.0);
  EXPECT_NEAR(sx / n, box.center().x, 3 * sdx / std::sqrt(n));
  EXPECT_NEAR(sy / n, box.center().y, 3 * sdy / std::sqrt(n));
}

TEST(Envs, ZeroActionOnFreshState) {
  for (auto mode : {RewardMode::Dense, RewardMode::Sparse}) {
    const auto spec = spec_for(TaskId::Push2D, mode);
    auto [s, obs] = reset(spec, 3);
    const auto before = s;
    const auto r = step(s, zeros(3), spec);
    EXPECT_EQ(s.agent_pos, before.agent_pos);
    EXPECT_EQ(s.object_pos, before.object_pos);
    if (mode == RewardMode::Dense) {
      const double da = distance(s.agent_pos, s.object_pos), dg = distance(s.object_pos, s.goal_pos);
      EXPECT_DOUBLE_EQ(r.reward, 0.5 * (1 - std::tanh(5 * da)) + 0.5 * (1 - std::tanh(5 * dg)));
    } else {
      EXPECT_EQ(r.reward, 0.0);
    }
  }
}

TEST(Envs, FiftyZeroActionsTruncateWithMinusOne) {
  const auto spec = spec_for(TaskId::Push2D, RewardMode::Sparse);
  auto s = reset(spec, 4).first;
  StepResult r;
  for (int t = 0; t < 50; ++t) {
    ASSERT_FALSE(s.done);
    r = step(s, zeros(3), spec);
    if (t < 49) EXPECT_EQ(r.reward, 0.0);
  }
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.terminated);
  EXPECT_EQ(r.reward, -1.0);
  EXPECT_THROW(step(s, zeros(3), spec), UsageError);
}

TEST(Envs, ScriptedPushCompletesWithSparseRewardOne) {
  const auto spec = spec_for(TaskId::Push2D, RewardMode::Sparse);
  ScriptedTeacher teacher({}, spec);
  int solved = 0;
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    auto [s, obs] = reset(spec, 11, ep);
    StepResult r;
    while (!s.done) r = step(s, teacher.nominal_action(obs), spec), obs = r.observation;
    if (r.terminated) {
      ++solved;
      EXPECT_EQ(r.reward, 1.0);
      EXPECT_TRUE(r.success);
    }
  }
  EXPECT_GE(solved, 19);
}

TEST(Envs, VecStepSingleLaneMatchesStepPlusReset) {
  const auto spec = spec_for(TaskId::Reach2D);
  Matrix obs;
  auto lanes = make_lanes(spec, 1, 8, &obs);
  auto single = lanes[0];
  Rng rng(1);
  for (int t = 0; t < 120; ++t) {
    Matrix a(1, 3);
    for (auto& v : a.values()) v = uniform(rng, -1, 1);
    const auto rv = vec_step(lanes, a, spec)[0];
    auto r = step(single, a.row(0), spec);
    if (single.done) {
      auto next = reset(spec, single.seed, single.episode + 1);
      single = next.first;
      r.observation = next.second;
    }
    EXPECT_EQ(rv.observation, r.observation);
    EXPECT_EQ(rv.reward, r.reward);
    EXPECT_EQ(lanes[0], single);
  }
}

TEST(Envs, IdenticalLanesGiveIdenticalResults) {
  const auto spec = spec_for(TaskId::Push2D);
  std::vector<EnvState> lanes(32, reset(spec, 5).first);
  Matrix a(32, 3);
  for (std::size_t i = 0; i < 32; ++i) a.row(i)[0] = 0.7, a.row(i)[1] = -0.2;
  const auto rs = vec_step(lanes, a, spec);
  for (const auto& r : rs) {
    EXPECT_EQ(r.observation, rs[0].observation);
    EXPECT_EQ(r.reward, rs[0].reward);
  }
}

TEST(Envs, VecStepMatchesSequentialEnvs) {
  const auto spec = spec_for(TaskId::PushDistract2D, RewardMode::Sparse);
  Matrix obs;
  auto lanes = make_lanes(spec, 8, 21, &obs);
  auto singles = lanes;
  Rng rng(2);
  for (int t = 0; t < 150; ++t) {
    Matrix a(8, 3);
    for (auto& v : a.values()) v = uniform(rng, -1.5, 1.5);
    const auto rv = vec_step(lanes, a, spec);
    for (std::size_t i = 0; i < 8; ++i) {
      auto r = step(singles[i], a.row(i), spec);
      if (singles[i].done) singles[i] = reset(spec, singles[i].seed, singles[i].episode + 1).first;
      EXPECT_EQ(rv[i].reward, r.reward);
      EXPECT_EQ(lanes[i], singles[i]);
    }
  }
}

TEST(Envs, RandomFuzzKeepsRewardsAndPositionsInRange) {
  Rng rng(77);
  for (auto t : {TaskId::Reach2D, TaskId::Push2D, TaskId::Pull2D, TaskId::PushDistract2D, TaskId::PullDistract2D}) {
    for (auto mode : {RewardMode::Dense, RewardMode::Sparse}) {
      const auto spec = spec_for(t, mode);
      auto s = reset(spec, 1).first;
      double sparse_sum = 0.0;
      for (int k = 0; k < 10000; ++k) {
        const std::vector<double> a{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -1, 1)};
        const auto r = step(s, a, spec);
        ASSERT_TRUE(in_arena(s.agent_pos));
        ASSERT_TRUE(in_arena(s.object_pos));
        for (auto d : s.distractors) ASSERT_TRUE(in_arena(d));
        ASSERT_GE(s.step, 0);
        ASSERT_LE(s.step, spec.max_episode_steps);
        if (mode == RewardMode::Dense) {
          ASSERT_GE(r.reward, 0.0);
          ASSERT_LE(r.reward, 1.0);
        } else {
          ASSERT_TRUE(r.reward == 0.0 || r.reward == 1.0 || r.reward == -1.0);
          if (r.reward != 0.0) ASSERT_TRUE(r.terminated || r.truncated);
          sparse_sum += r.reward;
        }
        if (s.done) {
          ASSERT_LE(std::abs(sparse_sum), 1.0);
          sparse_sum = 0.0;
          s = reset(spec, 1, s.episode + 1).first;
        }
      }
    }
  }
}

TEST(Envs, DistractorTaskWithoutDistractorsMatchesBaseTask) {
  auto base = spec_for(TaskId::Push2D);
  auto dis = spec_for(TaskId::PushDistract2D);
  dis.distractors = 0;
  Rng rng(3);
  auto a = reset(base, 9).first, b = reset(dis, 9).first;
  EXPECT_EQ(flatten_state(base, a), flatten_state(dis, b));
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> act{uniform(rng, -1, 1), uniform(rng, -1, 1), 0.0};
    const auto ra = step(a, act, base), rb = step(b, act, dis);
    ASSERT_EQ(ra.observation, rb.observation);
    ASSERT_EQ(ra.reward, rb.reward);
    if (a.done) a = reset(base, 9, a.episode + 1).first, b = reset(dis, 9, b.episode + 1).first;
  }
}

TEST(Envs, CompatLayoutReadsComponents016) {
  auto native = spec_for(TaskId::Pull2D);
  auto compat = native;
  compat.action_layout = ActionLayout::Compat7;
  EXPECT_EQ(compat.act_dim(), 7u);
  auto a = reset(native, 2).first, b = reset(compat, 2).first;
  Rng rng(4);
  for (int t = 0; t < 50 && !a.done; ++t) {
    const double x = uniform(rng, -1, 1), y = uniform(rng, -1, 1), g = uniform(rng, -1, 1);
    const auto ra = step(a, std::vector<double>{x, y, g}, native);
    const auto rb = step(b, std::vector<double>{x, y, 9.0, -9.0, 4.0, 2.0, g}, compat);
    ASSERT_EQ(ra.observation, rb.observation);
  }
}

TEST(Envs, ActionIsClampedToMaxStep) {
  const auto spec = spec_for(TaskId::Reach2D);
  auto s = reset(spec, 1).first;
  const Vec2 p0 = s.agent_pos;
  step(s, std::vector<double>{10.0, 10.0, 0.0}, spec);
  EXPECT_NEAR(distance(p0, s.agent_pos), geometry::kMaxStep, 1e-12);
}

TEST(Envs, CameraShiftIsOrthogonalAndInvertible) {
  const auto t = make_camera_shift(8, 42);
  EXPECT_NO_THROW(validate(t, 8));
  std::vector<double> x{0.1, -0.2, 0.3, 0.0, 0.5, -0.6, 0.7, 0.2};
  const auto back = t.invert(t.apply(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back[i], x[i], 1e-12);
  double n0 = 0.0, n1 = 0.0;
  const auto y = t.apply(x);
  for (std::size_t i = 0; i < 8; ++i) n0 += x[i] * x[i], n1 += (y[i] - 0.1) * (y[i] - 0.1);
  EXPECT_NEAR(n0, n1, 1e-12);
  ObsTransform bad{Matrix(8, 8, 0.5), std::vector<double>(8, 0.0)};
  EXPECT_THROW(validate(bad, 8), ConfigError);
}

TEST(Envs, SpecValidation) {
  auto s = spec_for(TaskId::Push2D);
  s.max_episode_steps = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = spec_for(TaskId::Push2D);
  s.distractors = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(task_from_string("Stack2D"), ConfigError);
  EXPECT_EQ(task_from_string("PullDistract2D"), TaskId::PullDistract2D);
}

TEST(Envs, NonFiniteActionRejected) {
  const auto spec = spec_for(TaskId::Push2D);
  auto s = reset(spec, 1).first;
  EXPECT_THROW(step(s, std::vector<double>{NAN, 0.0, 0.0}, spec), UsageError);
  EXPECT_THROW(step(s, std::vector<double>{0.0, 0.0}, spec), ConfigError);
}
