#include "mml/eval.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mml {
namespace {

TEST(Mer, ClosedFormCases) {
  EpisodeRecord constant;
  constant.rewards.assign(200, 1.0);
  EXPECT_DOUBLE_EQ(mer({constant}), 200.0);

  EpisodeRecord a, b;
  a.rewards = {4.0, 6.0};          // return 10
  b.rewards = {10.0, 15.0, 5.0};   // return 30
  EXPECT_DOUBLE_EQ(mer({a, b}), 20.0);

  EXPECT_THROW(mer({}), ConfigError);
}

TEST(Mer, MatchesIndependentSummation) {
  Rng rng(1);
  std::vector<EpisodeRecord> records(37);
  long double total = 0.0L;
  for (auto& r : records) {
    const int n = int(rng.uniform_int(10, 200));
    for (int i = 0; i < n; ++i) {
      r.rewards.push_back(rng.uniform(0, 1));
      total += r.rewards.back();
    }
  }
  const double expected = double(total / records.size());
  EXPECT_NEAR(mer(records), expected, 1e-12 * std::max(1.0, std::abs(expected)));
}

TEST(RollNorm, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(roll_norm(std::vector<double>(200, 0.0)), 0.0);
  EXPECT_DOUBLE_EQ(roll_norm(std::vector<double>(200, 2.0)), 2.0);
  std::vector<double> alternating(200);
  for (size_t i = 0; i < alternating.size(); ++i) alternating[i] = (i % 2 ? 3.0 : -3.0);
  EXPECT_DOUBLE_EQ(roll_norm(alternating), 3.0);
}

// Synthetic runner: perfect tracking, reward 1 every tick.
EpisodeRecord perfect_episode(const EpisodeRequest& req) {
  EpisodeRecord r;
  r.robot_index = req.robot_index;
  r.v_cmd = req.command.v_cmd;
  r.ticks = req.ticks;
  r.rewards.assign(req.ticks, 1.0);
  r.roll_deg.assign(req.ticks, 0.0);
  r.final_status = EpisodeStatus::timeout;
  return r;
}

TEST(WalkTest, PerfectPolicyUpperBound) {
  const MetricReport report = walk_test(perfect_episode, 4, 0.3, 200, 16, 5);
  EXPECT_DOUBLE_EQ(report.aggregate_mer, 200.0);
  EXPECT_DOUBLE_EQ(report.aggregate_roll_norm, 0.0);
  EXPECT_EQ(report.episodes.size(), 16u);
  for (const auto& [robot, count] : report.per_robot_episodes) EXPECT_EQ(count, 4);
  EXPECT_EQ(report.collapse_count, 0);
}

TEST(WalkTest, AllocationAndHiddenResetPattern) {
  std::vector<EpisodeRequest> seen;
  auto recorder = [&](const EpisodeRequest& req) {
    seen.push_back(req);
    return perfect_episode(req);
  };
  walk_test(recorder, 3, 0.2, 50, 12, 5);
  ASSERT_EQ(seen.size(), 12u);
  int resets = 0;
  std::map<int, std::map<double, int>> cells;
  for (size_t i = 0; i < seen.size(); ++i) {
    resets += seen[i].reset_recurrent_state;
    cells[seen[i].robot_index][seen[i].command.v_cmd] += 1;
    if (i > 0 && seen[i].robot_index == seen[i - 1].robot_index)
      EXPECT_FALSE(seen[i].reset_recurrent_state);  // preserved within a robot
  }
  EXPECT_EQ(resets, 3);  // one per robot switch
  for (auto& [robot, directions] : cells) {
    EXPECT_EQ(directions.size(), 2u);
    for (auto& [cmd, count] : directions) EXPECT_EQ(count, 2);
  }
}

TEST(WalkTest, RejectsIndivisibleEpisodeCount) {
  EXPECT_THROW(walk_test(perfect_episode, 3, 0.2, 50, 13, 5), ConfigError);
}

TEST(MassCurriculum, ScheduleFactors) {
  std::vector<EpisodeRequest> seen;
  auto recorder = [&](const EpisodeRequest& req) {
    seen.push_back(req);
    return perfect_episode(req);
  };
  // 8 s = 400 ticks, events at 100, 200, 300.
  mass_curriculum_test(recorder, 1, 0.8, 0.3, 400, 100, true, 2, 6);
  ASSERT_FALSE(seen.empty());
  ASSERT_EQ(seen[0].mass_scale_schedule.size(), 3u);
  for (const auto& [tick, factor] : seen[0].mass_scale_schedule) EXPECT_DOUBLE_EQ(factor, 0.8);
  EXPECT_EQ(seen[0].mass_scale_schedule[0].first, 100);
  EXPECT_EQ(seen[0].mass_scale_schedule[2].first, 300);

  seen.clear();
  mass_curriculum_test(recorder, 1, 0.8, 0.3, 400, 100, false, 2, 6);
  ASSERT_EQ(seen[0].mass_scale_schedule.size(), 3u);
  EXPECT_DOUBLE_EQ(seen[0].mass_scale_schedule[0].second, 0.8);  // re-based mode
  EXPECT_DOUBLE_EQ(seen[0].mass_scale_schedule[1].second, 1.0);
  EXPECT_DOUBLE_EQ(seen[0].mass_scale_schedule[2].second, 1.0);
}

RunConfig tiny_run_config() {
  RunConfig cfg = RunConfig::defaults(test::template_dir());
  cfg.train_count = 2;
  cfg.test_count = 2;
  return cfg;
}

TEST(EvalHarness, AppliedMassScalesMatchSimulator) {
  RunConfig cfg = tiny_run_config();
  Rng rng(2);
  const Policy policy = Policy::create(cfg.policy, rng);
  auto robots = cfg.test_population();
  EvalHarness harness(policy, robots, cfg, true, 7);
  EpisodeRequest req;
  req.robot_index = 0;
  req.command = {0.0, 0.0};
  req.ticks = 40;
  req.mass_scale_schedule = {{10, 0.8}, {20, 0.8}, {30, 0.8}};
  const EpisodeRecord record = harness(req);
  // Cumulative factors logged by the harness match the compounding sequence.
  ASSERT_GE(record.applied_mass_scales.size(), 1u);
  if (record.ticks > 30) {
    ASSERT_EQ(record.applied_mass_scales.size(), 3u);
    EXPECT_NEAR(record.applied_mass_scales[0], 0.8, 1e-12);
    EXPECT_NEAR(record.applied_mass_scales[1], 0.64, 1e-12);
    EXPECT_NEAR(record.applied_mass_scales[2], 0.512, 1e-12);
  }
}

TEST(EvalHarness, FreshRandomPolicyProducesFiniteReport) {
  RunConfig cfg = tiny_run_config();
  Rng rng(3);
  const Policy policy = Policy::create(cfg.policy, rng);
  auto robots = cfg.test_population();
  EvalHarness harness(policy, robots, cfg, true, 9);
  const MetricReport report = walk_test([&](const EpisodeRequest& r) { return harness(r); },
                                        int(robots->size()), 0.3, 50, 4, 9);
  EXPECT_TRUE(std::isfinite(report.aggregate_mer));
  EXPECT_GE(report.aggregate_mer, 0.0);
  EXPECT_LE(report.aggregate_mer, 50.0);  // perfect-policy bound
}

TEST(EvalHarness, DeterministicReportsInDeterministicMode) {
  RunConfig cfg = tiny_run_config();
  Rng rng(4);
  const Policy policy = Policy::create(cfg.policy, rng);
  auto robots = cfg.test_population();
  auto run = [&] {
    EvalHarness harness(policy, robots, cfg, true, 11);
    return walk_test([&](const EpisodeRequest& r) { return harness(r); }, int(robots->size()),
                     0.2, 30, 4, 11)
        .to_json()
        .dump();
  };
  EXPECT_EQ(run(), run());
}

TEST(MetricReport, AggregatesEqualRecomputation) {
  Rng rng(5);
  MetricReport report;
  report.protocol_id = "synthetic";
  for (int i = 0; i < 60; ++i) {
    EpisodeRecord e;
    e.robot_index = i % 5;
    const int n = int(rng.uniform_int(20, 100));
    for (int t = 0; t < n; ++t) {
      e.rewards.push_back(rng.uniform(0, 1));
      e.roll_deg.push_back(rng.uniform(-5, 5));
    }
    e.final_status = (i % 7 == 0) ? EpisodeStatus::collapsed : EpisodeStatus::timeout;
    report.episodes.push_back(std::move(e));
  }
  report.finalize();
  long double total = 0.0L;
  for (const auto& e : report.episodes) total += e.episodic_return();
  EXPECT_NEAR(report.aggregate_mer, double(total / report.episodes.size()), 1e-12);
  int collapses = 0;
  for (const auto& e : report.episodes) collapses += (e.final_status == EpisodeStatus::collapsed);
  EXPECT_EQ(report.collapse_count, collapses);
  // Per-robot MER: recompute for robot 0.
  long double r0 = 0.0L;
  int n0 = 0;
  for (const auto& e : report.episodes)
    if (e.robot_index == 0) {
      r0 += e.episodic_return();
      ++n0;
    }
  EXPECT_NEAR(report.per_robot_mer.at(0), double(r0 / n0), 1e-12);
}

TEST(MovingAverage, WindowSemantics) {
  const std::vector<double> xs = {1, 2, 3, 4, 5};
  const auto ma = moving_average(xs, 3);
  EXPECT_DOUBLE_EQ(ma[0], 1.0);
  EXPECT_DOUBLE_EQ(ma[1], 1.5);
  EXPECT_DOUBLE_EQ(ma[2], 2.0);
  EXPECT_DOUBLE_EQ(ma[3], 3.0);
  EXPECT_DOUBLE_EQ(ma[4], 4.0);
}

TEST(AblationGrid, CellsPerKind) {
  const RunConfig cfg = tiny_run_config();
  const auto arch = ablation_grid(AblationKind::architecture, cfg);
  ASSERT_EQ(arch.size(), 3u);
  EXPECT_EQ(arch[0].name, "gru");
  EXPECT_EQ(arch[1].name, "mlp");
  EXPECT_EQ(arch[2].name, "mlp_history");
  EXPECT_EQ(arch[2].config.policy.arch, ArchKind::mlp_history);

  const auto sizes = ablation_grid(AblationKind::train_set_size, cfg);
  ASSERT_EQ(sizes.size(), 2u);
  EXPECT_EQ(sizes[0].config.train_count, 8);
  EXPECT_EQ(sizes[1].config.train_count, 32);

  const auto ks = ablation_grid(AblationKind::meta_k, cfg);
  ASSERT_EQ(ks.size(), 3u);
  EXPECT_EQ(ks[0].config.env.meta_episode_length, 1);
  EXPECT_EQ(ks[2].config.env.meta_episode_length, 5);
}

}  // namespace
}  // namespace mml
