#include "mml/env.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

namespace mml {
namespace {

RobotMorphology nominal_small() {
  return generate_morphology(test::small_template(), 0, {1.0, 1.0, 0.85});
}

Env make_env(const RobotMorphology& m, uint64_t seed = 1, EnvConfig cfg = {},
             RandomizationConfig rand = {}) {
  return Env(m, cfg, RewardConfig{}, SimParams{}, rand, seed);
}

TEST(RbfKernel, ClosedFormPoints) {
  EXPECT_DOUBLE_EQ(rbf_kernel(0.3, 0.3, 0.05), 1.0);
  EXPECT_NEAR(rbf_kernel(0.05, 0.0, 0.05), std::exp(-1.0), 1e-12);
  const Vec2 err(0.3, 0.1);
  EXPECT_NEAR(rbf_kernel(err, Vec2::Zero(), Vec2(0.3, 0.1)), std::exp(-2.0), 1e-12);
  EXPECT_THROW(rbf_kernel(VecX::Zero(2), VecX::Zero(3), VecX::Ones(2)), ConfigError);
}

RewardInputs perfect_inputs() {
  RewardInputs in;
  in.base_height = 0.34;
  in.ref_height = 0.34;
  in.base_vel_world = Vec3(0.4, 0.0, 0.0);
  in.ref_vel_world = Vec3(0.4, 0.0, 0.0);
  in.yaw = 0.0;
  in.ref_yaw = 0.0;
  in.yaw_rate = 0.1;
  in.ref_yaw_rate = 0.1;
  in.base_pos = Vec3(1.0, 2.0, 0.34);
  in.ref_base_pos = in.base_pos;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    in.foot_pos[leg] = Vec3(0.2 * leg, -0.1 * leg, 0.0);
    in.ref_foot_pos[leg] = in.foot_pos[leg];
    in.foot_vel[leg] = Vec3::Zero();
    in.foot_in_contact[leg] = (leg % 2 == 0);
  }
  return in;
}

TEST(ComputeReward, PerfectTrackingGivesOne) {
  const VecX a = VecX::Constant(12, 0.2);
  const RewardBreakdown r = compute_reward(perfect_inputs(), a, a, RewardConfig{});
  EXPECT_DOUBLE_EQ(r.height, 1.0);
  EXPECT_DOUBLE_EQ(r.velocity, 1.0);
  EXPECT_DOUBLE_EQ(r.yaw_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.feet_position, 1.0);
  EXPECT_DOUBLE_EQ(r.action_rate, 1.0);
  EXPECT_DOUBLE_EQ(r.slip, 1.0);
  EXPECT_DOUBLE_EQ(r.pitch_roll, 1.0);
  EXPECT_DOUBLE_EQ(r.total(), 1.0);
}

TEST(ComputeReward, SigmaUnitErrorsCompose) {
  RewardInputs in = perfect_inputs();
  in.base_height += 0.05;  // one sigma_h
  const VecX a = VecX::Zero(12);
  RewardBreakdown r = compute_reward(in, a, a, RewardConfig{});
  EXPECT_NEAR(r.total(), std::exp(-1.0), 1e-12);

  in.pitch = 0.5;  // one sigma_pitch_roll
  r = compute_reward(in, a, a, RewardConfig{});
  EXPECT_NEAR(r.total(), std::exp(-2.0), 1e-12);
}

TEST(ComputeReward, SlipCountsOnlyContactFeet) {
  RewardInputs in = perfect_inputs();
  for (int leg = 0; leg < kNumLegs; ++leg) {
    in.foot_vel[leg] = Vec3(0.1, 0, 0);
    in.foot_in_contact[leg] = false;
  }
  const VecX a = VecX::Zero(12);
  EXPECT_DOUBLE_EQ(compute_reward(in, a, a, RewardConfig{}).slip, 1.0);
  in.foot_in_contact[2] = true;
  const double expected = std::exp(-square(0.1 / 0.1));
  EXPECT_NEAR(compute_reward(in, a, a, RewardConfig{}).slip, expected, 1e-12);
}

TEST(ComputeReward, BoundedAndMaximalOnlyAtZeroError) {
  Rng rng(3);
  const RewardConfig cfg;
  for (int trial = 0; trial < 100000; ++trial) {
    RewardInputs in = perfect_inputs();
    in.base_height += rng.uniform(-0.3, 0.3);
    in.base_vel_world += Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    in.yaw_rate += rng.uniform(-1, 1);
    in.pitch = rng.uniform(-0.8, 0.8);
    in.roll = rng.uniform(-0.8, 0.8);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      in.foot_pos[leg] += Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                               rng.uniform(-0.1, 0.1));
      in.foot_vel[leg] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      in.foot_in_contact[leg] = rng.uniform01() < 0.5;
    }
    VecX a = VecX::Zero(12), pa = VecX::Zero(12);
    for (int j = 0; j < 12; ++j) a[j] = rng.uniform(-1, 1);
    const RewardBreakdown r = compute_reward(in, a, pa, cfg);
    for (double term : {r.height, r.velocity, r.yaw_rate, r.feet_position, r.action_rate,
                        r.slip, r.pitch_roll}) {
      EXPECT_GT(term, 0.0);
      EXPECT_LE(term, 1.0);
    }
    EXPECT_GT(r.total(), 0.0);
    EXPECT_LE(r.total(), 1.0);
    EXPECT_NEAR(r.total(),
                r.height * r.velocity * r.yaw_rate * r.feet_position * r.action_rate * r.slip *
                    r.pitch_roll,
                1e-15);
  }
}

TEST(ComputeReward, MonotoneInEachError) {
  const RewardConfig cfg;
  const VecX a = VecX::Zero(12);
  RewardInputs in = perfect_inputs();
  double prev = compute_reward(in, a, a, cfg).total();
  for (double h_err : {0.01, 0.03, 0.09, 0.2}) {
    RewardInputs bumped = perfect_inputs();
    bumped.base_height += h_err;
    const double r = compute_reward(bumped, a, a, cfg).total();
    EXPECT_LT(r, prev);
    prev = r;
  }
  prev = compute_reward(in, a, a, cfg).total();
  for (double roll : {0.1, 0.3, 0.9}) {
    RewardInputs bumped = perfect_inputs();
    bumped.roll = roll;
    const double r = compute_reward(bumped, a, a, cfg).total();
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Observation, NominalStandingValues) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  const Observation obs = env.build_observation();
  ASSERT_EQ(obs.size(), ObservationLayout::kDim);
  EXPECT_NEAR(obs[ObservationLayout::kHeight], m.h_ref, 0.004);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(obs[ObservationLayout::kLinVel + k], 0.0, 1e-12);
    EXPECT_NEAR(obs[ObservationLayout::kAngVel + k], 0.0, 1e-12);
  }
  EXPECT_NEAR(obs[ObservationLayout::kGravity + 0], 0.0, 1e-12);
  EXPECT_NEAR(obs[ObservationLayout::kGravity + 1], 0.0, 1e-12);
  EXPECT_NEAR(obs[ObservationLayout::kGravity + 2], -9.81, 1e-12);
  for (int j = 0; j < 12; ++j) {
    EXPECT_NEAR(obs[ObservationLayout::kJointPos + j], m.default_pose[j], 1e-6);
    EXPECT_EQ(obs[ObservationLayout::kPrevAction + j], 0.0);
  }
}

TEST(Observation, YawedBaseRotatesVelocity) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  SimState s = env.simulator().state();
  s.base_quat = Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()));
  s.base_vel_world = Vec3(1, 0, 0);
  env.simulator().reset(s);
  const Observation obs = env.build_observation();
  EXPECT_NEAR(obs[ObservationLayout::kLinVel + 0], 0.0, 1e-12);
  EXPECT_NEAR(obs[ObservationLayout::kLinVel + 1], -1.0, 1e-12);
  EXPECT_NEAR(obs[ObservationLayout::kLinVel + 2], 0.0, 1e-12);
}

TEST(Observation, NoiseBoundedByTableRange) {
  const RobotMorphology m = nominal_small();
  RandomizationConfig rand;
  rand.enabled = true;
  // Isolate joint-position noise at the full table range.
  rand.terrain_height_m = {0.0, 0.0};
  rand.latency_s = {0.0, 0.0};
  rand.projected_gravity_mps2 = {0.0, 0.0};
  Env env = make_env(m, 2, {}, rand);
  env.reset_with_command({0.0, 0.0}, 0);
  const VecX q = env.simulator().state().q;
  double max_dev = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Observation obs = env.build_observation();
    for (int j = 0; j < 12; ++j)
      max_dev = std::max(max_dev, std::abs(obs[ObservationLayout::kJointPos + j] - q[j]));
  }
  EXPECT_LE(max_dev, 0.01 + 1e-12);
}

TEST(RsiReset, ZeroCommandTickZeroIsDefaultStanding) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  const SimState& s = env.simulator().state();
  EXPECT_NEAR(s.base_pos.z(), m.h_ref, 0.004);  // minus the contact preload
  EXPECT_EQ(s.base_vel_world.norm(), 0.0);
  for (int j = 0; j < 12; ++j) EXPECT_NEAR(s.q[j], m.default_pose[j], 1e-6);
}

TEST(RsiReset, CommandDistributionIsUniform) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m, 7);
  const int n = 10000;
  std::vector<double> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    env.reset();
    samples.push_back(env.command().v_cmd);
  }
  std::sort(samples.begin(), samples.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = (samples[i] - (-0.5)) / 1.5;
    ks = std::max(ks, std::max(std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)));
  }
  EXPECT_LT(ks, 0.02);
}

TEST(RsiReset, DeterministicInSeed) {
  const RobotMorphology m = nominal_small();
  Env a = make_env(m, 11), b = make_env(m, 11);
  const Observation oa = a.reset(), ob = b.reset();
  EXPECT_EQ(oa, ob);
  EXPECT_EQ(a.command().v_cmd, b.command().v_cmd);
  EXPECT_EQ(a.simulator().state().q, b.simulator().state().q);
}

TEST(Termination, StatesMapToStatus) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  EXPECT_EQ(check_termination(env.simulator().state(), false, 5, 128), EpisodeStatus::running);
  EXPECT_EQ(check_termination(env.simulator().state(), true, 5, 128), EpisodeStatus::collapsed);
  EXPECT_EQ(check_termination(env.simulator().state(), false, 128, 128), EpisodeStatus::timeout);

  // Base dropped below the terrain: corner probes report non-foot contact.
  SimState s = env.simulator().state();
  s.base_pos.z() = 0.01;
  env.simulator().reset(s);
  EXPECT_TRUE(env.simulator().contact_report().non_foot_contact);
}

TEST(EnvStep, ZeroActionStandingKeepsRewardHigh) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  const VecX zero = VecX::Zero(12);
  double min_r = 1.0;
  for (int t = 0; t < 128; ++t) {
    const Env::StepResult r = env.step(zero);
    min_r = std::min(min_r, r.reward);
    ASSERT_NE(r.status, EpisodeStatus::collapsed) << "tick " << t;
  }
  EXPECT_EQ(env.status(), EpisodeStatus::timeout);
  EXPECT_GT(min_r, 0.5);
}

TEST(EnvStep, OutOfRangeActionsAreClampedNotFatal) {
  const RobotMorphology m = nominal_small();
  Env env = make_env(m);
  env.reset_with_command({0.0, 0.0}, 0);
  const VecX huge = VecX::Constant(12, 50.0);
  const Env::StepResult r = env.step(huge);
  EXPECT_TRUE(r.obs.allFinite());
  // Targets were clamped to the joint limits: held target within limits.
  const SimState& s = env.simulator().state();
  for (int j = 0; j < 12; ++j) {
    EXPECT_GE(s.held_target[j], m.joints[j].pos_lo - 1e-12);
    EXPECT_LE(s.held_target[j], m.joints[j].pos_hi + 1e-12);
  }
}

TEST(EnvStep, DeterministicAcrossInstances) {
  const RobotMorphology m = generate_morphology(test::small_template(), 9);
  Env a = make_env(m, 5), b = make_env(m, 5);
  a.reset();
  b.reset();
  Rng actions(3);
  for (int t = 0; t < 40; ++t) {
    VecX act(12);
    for (int j = 0; j < 12; ++j) act[j] = actions.uniform(-0.3, 0.3);
    const auto ra = a.step(act);
    const auto rb = b.step(act);
    ASSERT_EQ(ra.reward, rb.reward);
    ASSERT_EQ(ra.obs, rb.obs);
    if (ra.status != EpisodeStatus::running) break;
  }
}

TEST(Observation, RobotAgnosticAcrossMorphologies) {
  // Two different morphologies placed in the identical physical state must
  // produce identical observations (the layout encodes no scale factors).
  const RobotMorphology ma = generate_morphology(test::small_template(), 3);
  const RobotMorphology mb = generate_morphology(test::small_template(), 4);
  Env ea = make_env(ma), eb = make_env(mb);
  ea.reset_with_command({0.2, 0.1}, 0);
  eb.reset_with_command({0.2, 0.1}, 0);
  SimState s = ea.simulator().state();
  eb.simulator().reset(s);
  const Observation oa = ea.build_observation();
  const Observation ob = eb.build_observation();
  EXPECT_EQ(oa, ob);
}

TEST(MetaEnv, BoundaryBookkeeping) {
  auto population = std::make_shared<std::vector<RobotMorphology>>(
      generate_population({test::small_template(), test::large_template()}, 4, 5));
  EnvConfig cfg;
  cfg.episode_length = 6;  // fast timeouts
  cfg.meta_episode_length = 5;
  MetaEnv meta(population, cfg, RewardConfig{}, SimParams{}, RandomizationConfig{}, 21);
  const VecX zero = VecX::Zero(12);
  int episode_ends = 0, meta_ends = 0;
  for (int t = 0; t < 400; ++t) {
    const auto r = meta.step(zero);
    episode_ends += r.done;
    meta_ends += r.meta_boundary;
    if (r.meta_boundary) EXPECT_TRUE(r.done);
    EXPECT_EQ(meta_ends, episode_ends / 5);
  }
  EXPECT_GT(episode_ends, 10);
}

TEST(MetaEnv, KOneZeroesEveryEpisode) {
  auto population = std::make_shared<std::vector<RobotMorphology>>(
      generate_population({test::small_template(), test::large_template()}, 4, 5));
  EnvConfig cfg;
  cfg.episode_length = 4;
  cfg.meta_episode_length = 1;
  MetaEnv meta(population, cfg, RewardConfig{}, SimParams{}, RandomizationConfig{}, 22);
  const VecX zero = VecX::Zero(12);
  for (int t = 0; t < 40; ++t) {
    const auto r = meta.step(zero);
    if (r.done) EXPECT_TRUE(r.meta_boundary);
  }
}

TEST(MetaEnv, MorphologyFixedWithinMetaEpisode) {
  auto population = std::make_shared<std::vector<RobotMorphology>>(
      generate_population({test::small_template(), test::large_template()}, 8, 5));
  EnvConfig cfg;
  cfg.episode_length = 4;
  cfg.meta_episode_length = 3;
  MetaEnv meta(population, cfg, RewardConfig{}, SimParams{}, RandomizationConfig{}, 23);
  const VecX zero = VecX::Zero(12);
  int current = meta.morph_index();
  std::vector<int> indices{current};
  for (int t = 0; t < 200; ++t) {
    const auto r = meta.step(zero);
    if (r.meta_boundary) {
      current = meta.morph_index();
      indices.push_back(current);
    } else {
      EXPECT_EQ(meta.morph_index(), current);
    }
  }
  // Resampling actually moves across the population.
  EXPECT_GT(std::set<int>(indices.begin(), indices.end()).size(), 1u);
}

}  // namespace
}  // namespace mml
