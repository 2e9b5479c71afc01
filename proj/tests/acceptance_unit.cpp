// Unit/oracle acceptance suite: every criterion prints one PASS/FAIL line
// with the measured value against its pinned tolerance. Exit code 0 only if
// all criteria pass. Total runtime well under ten minutes.

#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mml/config.hpp"
#include "mml/dynamics.hpp"
#include "mml/env.hpp"
#include "mml/eval.hpp"
#include "mml/net.hpp"
#include "mml/rppo.hpp"
#include "test_support.hpp"

namespace mml {
namespace {

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> run;
};

// --------------------------------------------------------------------------
// 1. Physical-mode box inertia vs 100^3-cell voxel integration, 100 links.

bool check_inertia_oracle(std::string& detail) {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mass = rng.uniform(0.05, 20.0);
    const Vec3 dims(rng.uniform(0.02, 0.6), rng.uniform(0.02, 0.6), rng.uniform(0.02, 0.6));
    const Mat3 closed = cuboid_inertia(mass, dims, InertiaMode::physical);
    const Mat3 oracle = test::voxel_box_inertia(mass, dims, 100);
    for (int d = 0; d < 3; ++d)
      worst = std::max(worst, std::abs(closed(d, d) - oracle(d, d)) / oracle(d, d));
  }
  std::ostringstream os;
  os << "max rel err " << worst << " (tol 0.005)";
  detail = os.str();
  return worst < 0.005;
}

// --------------------------------------------------------------------------
// 2. Foot-below-hip on 1000 generated morphologies: horizontal offset < 1e-6.

bool check_foot_below_hip(std::string& detail) {
  const auto tpl_small = test::small_template();
  const auto tpl_large = test::large_template();
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    const RobotMorphology m = generate_morphology(seed % 2 ? tpl_large : tpl_small, seed);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Vec3 foot = foot_position_in_base(m, leg, m.default_pose);
      const Vec3 hip = m.hip_extension_origin_in_base(leg);
      worst = std::max(worst, (foot - hip).head<2>().norm());
    }
  }
  std::ostringstream os;
  os << "max horizontal offset " << worst << " m (tol 1e-6)";
  detail = os.str();
  return worst < 1e-6;
}

// --------------------------------------------------------------------------
// 3. RBF kernel closed-form points.

bool check_rbf_kernel(std::string& detail) {
  const bool exact_one = rbf_kernel(0.37, 0.37, 0.05) == 1.0;
  const double unit = rbf_kernel(0.05, 0.0, 0.05);
  const double err = std::abs(unit - std::exp(-1.0));
  std::ostringstream os;
  os << "zero-error value " << rbf_kernel(0.37, 0.37, 0.05) << ", |sigma-unit - e^-1| = "
     << err << " (tol 1e-12)";
  detail = os.str();
  return exact_one && err < 1e-12;
}

// --------------------------------------------------------------------------
// 4. Reward product in (0,1] on 1e5 random pairs; r == 1 iff zero error.

RewardInputs random_reward_inputs(Rng& rng, bool zero_error) {
  RewardInputs in;
  in.base_height = 0.34;
  in.ref_height = 0.34;
  in.base_vel_world = Vec3(0.3, 0.0, 0.0);
  in.ref_vel_world = in.base_vel_world;
  in.base_pos = Vec3(0.5, -0.2, 0.34);
  in.ref_base_pos = in.base_pos;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    in.foot_pos[leg] = Vec3(0.1 * leg, 0.05 * leg, 0.0);
    in.ref_foot_pos[leg] = in.foot_pos[leg];
    in.foot_vel[leg] = Vec3::Zero();
    in.foot_in_contact[leg] = true;
  }
  if (!zero_error) {
    in.base_height += rng.uniform(-2, 2);
    in.base_vel_world += Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    in.yaw_rate = rng.uniform(-3, 3);
    in.pitch = rng.uniform(-1.5, 1.5);
    in.roll = rng.uniform(-1.5, 1.5);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      in.foot_pos[leg] += Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      in.foot_vel[leg] = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    }
  }
  return in;
}

bool check_reward_product(std::string& detail) {
  Rng rng(104);
  const RewardConfig cfg;
  const VecX zero_action = VecX::Zero(12);
  int in_range = 0, strictly_below_one = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const RewardInputs in = random_reward_inputs(rng, false);
    VecX action(12), prev(12);
    for (int k = 0; k < 12; ++k) {
      action[k] = rng.uniform(-2, 2);
      prev[k] = rng.uniform(-2, 2);
    }
    const double r = compute_reward(in, action, prev, cfg).total();
    if (r > 0.0 && r <= 1.0) ++in_range;
    if (r < 1.0) ++strictly_below_one;
  }
  const RewardInputs perfect = random_reward_inputs(rng, true);
  const double r_perfect = compute_reward(perfect, zero_action, zero_action, cfg).total();
  std::ostringstream os;
  os << in_range << "/" << n << " in (0,1], " << strictly_below_one
     << " below 1 with nonzero error, r(zero error) = " << r_perfect;
  detail = os.str();
  return in_range == n && strictly_below_one == n && r_perfect == 1.0;
}

// --------------------------------------------------------------------------
// 5. GAE vs brute-force discounted-sum oracle on 100 random buffers.

bool check_gae_oracle(std::string& detail) {
  Rng rng(105);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int horizon = int(rng.uniform_int(8, 64));
    RolloutBuffer buf;
    buf.num_envs = 1;
    buf.horizon = horizon;
    buf.streams.assign(1, {});
    buf.bootstrap_value = VecX::Zero(1);
    buf.bootstrap_value[0] = rng.uniform(-1, 1);
    std::vector<int> cuts;
    for (int k = 0; k < 2; ++k) cuts.push_back(int(rng.uniform_int(0, horizon - 1)));
    for (int t = 0; t < horizon; ++t) {
      Transition tr;
      tr.reward = rng.uniform(-1, 1);
      tr.value = rng.uniform(-1, 1);
      tr.done = std::count(cuts.begin(), cuts.end(), t) > 0;
      buf.streams[0].push_back(tr);
    }
    compute_gae(buf, 0.95, 0.95);
    const auto& s = buf.streams[0];
    auto delta = [&](int t) {
      const double nv = (t + 1 < horizon) ? s[t + 1].value : buf.bootstrap_value[0];
      return s[t].reward + 0.95 * nv * (s[t].done ? 0.0 : 1.0) - s[t].value;
    };
    for (int t = 0; t < horizon; ++t) {
      double acc = 0.0, w = 1.0;
      for (int l = t; l < horizon; ++l) {
        acc += w * delta(l);
        if (s[l].done) break;
        w *= 0.95 * 0.95;
      }
      worst = std::max(worst, std::abs(s[t].advantage - acc));
    }
  }
  std::ostringstream os;
  os << "max abs err " << worst << " (tol 1e-10)";
  detail = os.str();
  return worst < 1e-10;
}

// --------------------------------------------------------------------------
// 6. BPTT gradients vs central finite differences, all three architectures.

double fd_worst_rel_err(ArchKind arch) {
  PolicyConfig cfg;
  cfg.arch = arch;
  cfg.obs_dim = 6;
  cfg.act_dim = 3;
  cfg.gru_hidden = 8;
  cfg.trunk_hidden = 16;
  cfg.history_hidden = {12, 10};
  cfg.history_len = 5;
  Rng rng(106);
  PolicyNet net = PolicyNet::create(cfg, cfg.act_dim, rng);
  const int T = 4, B = 2;
  std::vector<MatX> xs(T);
  for (auto& x : xs) {
    x.resize(cfg.obs_dim, B);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  }
  MatX s0 = MatX::Zero(cfg.state_dim(), B);
  for (int i = 0; i < s0.size(); ++i) s0.data()[i] = rng.uniform(-0.5, 0.5);
  auto loss = [&](const PolicyNet& n) {
    const SequenceResult r = forward_sequence(cfg, n, xs, s0);
    double l = 0;
    for (const MatX& y : r.outputs) l += y.squaredNorm();
    return l;
  };
  SequenceCache cache;
  const SequenceResult r = forward_sequence(cfg, net, xs, s0, &cache);
  std::vector<MatX> dy(T);
  for (int t = 0; t < T; ++t) dy[t] = 2.0 * r.outputs[t];
  PolicyNet grad = PolicyNet::zeros_like(net);
  backward_sequence(cfg, net, cache, dy, grad);
  std::vector<TensorView> pv, gv;
  append_views("n.", net, pv);
  append_views("n.", grad, gv);
  const double eps = 1e-5;
  double worst = 0.0;
  for (size_t v = 0; v < pv.size(); ++v) {
    for (int i = 0; i < pv[v].size(); i += std::max(1, pv[v].size() / 25)) {
      const double saved = pv[v].data[i];
      pv[v].data[i] = saved + eps;
      const double lp = loss(net);
      pv[v].data[i] = saved - eps;
      const double lm = loss(net);
      pv[v].data[i] = saved;
      const double fd = (lp - lm) / (2 * eps);
      const double an = gv[v].data[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
  }
  return worst;
}

bool check_bptt_gradients(std::string& detail) {
  const double gru = fd_worst_rel_err(ArchKind::gru);
  const double mlp = fd_worst_rel_err(ArchKind::mlp);
  const double hist = fd_worst_rel_err(ArchKind::mlp_history);
  std::ostringstream os;
  os << "worst rel err: gru " << gru << ", mlp " << mlp << ", mlp_history " << hist
     << " (tol 1e-4)";
  detail = os.str();
  return gru < 1e-4 && mlp < 1e-4 && hist < 1e-4;
}

// --------------------------------------------------------------------------
// 7. PPO ratio identity before the first parameter update.

bool check_ratio_identity(std::string& detail) {
  auto population = std::make_shared<const std::vector<RobotMorphology>>(
      generate_population({test::small_template()}, 2, 107));
  PolicyConfig pc;
  pc.gru_hidden = 16;
  pc.trunk_hidden = 64;
  EnvConfig ec;
  ec.episode_length = 32;
  RolloutCollector collector(population, ec, RewardConfig{}, SimParams{}, RandomizationConfig{},
                             pc, 4, 107);
  Rng prng(107);
  Policy policy = Policy::create(pc, prng);
  Adam adam(policy, 5e-5);
  RolloutBuffer buffer = collector.collect(policy, 32, 1).buffer;
  compute_gae(buffer, 0.95, 0.95);
  PpoConfig cfg;
  cfg.minibatch_size = 128;
  cfg.sequence_length = 16;
  cfg.num_epochs = 1;
  Rng mb(1);
  const UpdateResult r = ppo_update(policy, adam, buffer, cfg, mb);
  std::ostringstream os;
  os << "max |rho - 1| = " << r.max_ratio_deviation << " (tol 1e-6)";
  detail = os.str();
  return r.max_ratio_deviation < 1e-6;
}

// --------------------------------------------------------------------------
// 8. Simulator oracles: pendulum accelerations, energy drift, momentum rate.

struct TwoLink {
  double m1, m2, r1, r2, l1, i1, i2;
  Vec2 accel(const Vec2& th, const Vec2& w, const Vec2& tau) const {
    const double g = 9.81;
    const double alpha = i1 + m1 * r1 * r1 + m2 * l1 * l1;
    const double beta = i2 + m2 * r2 * r2;
    const double gamma = m2 * l1 * r2;
    const double c2 = std::cos(th[1]), s2 = std::sin(th[1]);
    Eigen::Matrix2d m;
    m << alpha + beta + 2 * gamma * c2, beta + gamma * c2, beta + gamma * c2, beta;
    Vec2 cvec(-gamma * s2 * w[1] * (2 * w[0] + w[1]), gamma * s2 * w[0] * w[0]);
    const double s1 = std::sin(th[0]), s12 = std::sin(th[0] + th[1]);
    Vec2 gvec((m1 * r1 + m2 * l1) * g * s1 + m2 * r2 * g * s12, m2 * r2 * g * s12);
    return m.inverse() * (tau - cvec - gvec);
  }
};

RigidBodyModel two_link_model(const TwoLink& p) {
  RigidBodyModel model;
  model.floating = false;
  model.bodies.resize(3);
  model.bodies[1].parent = 0;
  model.bodies[1].joint_axis = Vec3::UnitY();
  model.bodies[1].mass = p.m1;
  model.bodies[1].com = Vec3(0, 0, -p.r1);
  model.bodies[1].inertia_com = Vec3(0.01, p.i1, 0.01).asDiagonal();
  model.bodies[2].parent = 1;
  model.bodies[2].joint_origin = Vec3(0, 0, -p.l1);
  model.bodies[2].joint_axis = Vec3::UnitY();
  model.bodies[2].mass = p.m2;
  model.bodies[2].com = Vec3(0, 0, -p.r2);
  model.bodies[2].inertia_com = Vec3(0.006, p.i2, 0.006).asDiagonal();
  return model;
}

bool check_simulator_oracles(std::string& detail) {
  // (a) Two-link pendulum accelerations vs analytic Lagrangian.
  Rng rng(108);
  double worst_acc = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    TwoLink p{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.05, 0.3),
              rng.uniform(0.05, 0.3), rng.uniform(0.1, 0.5), rng.uniform(0.001, 0.05),
              rng.uniform(0.001, 0.05)};
    const RigidBodyModel model = two_link_model(p);
    RbdState s;
    s.q = Vec2(rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi));
    s.u = Vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Vec2 tau(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const auto kin = compute_kinematics(model, s);
    const VecX udot = forward_dynamics(model, s, kin, tau, {}, Vec3(0, 0, -9.81));
    const Vec2 oracle = p.accel(s.q, s.u, tau);
    worst_acc =
        std::max(worst_acc, (Vec2(udot) - oracle).norm() / std::max(1.0, oracle.norm()));
  }

  // (b) Passive-pendulum energy drift over 10 s at the physics step.
  TwoLink p{1.2, 0.8, 0.15, 0.12, 0.3, 0.01, 0.006};
  const RigidBodyModel model = two_link_model(p);
  RbdState s;
  s.q = Vec2(0.4, 0.264);
  s.u = Vec2::Zero();
  const Vec3 g(0, 0, -9.81);
  RbdState hang = s;
  hang.q = Vec2::Zero();
  const double pe_min = potential_energy(model, compute_kinematics(model, hang), g);
  auto energy = [&](const RbdState& st) {
    const auto kin = compute_kinematics(model, st);
    return kinetic_energy(model, kin) + potential_energy(model, kin, g) - pe_min;
  };
  const double e0 = energy(s);
  const double dt = 2.5e-3;
  double drift = 0.0;
  for (int k = 0; k < int(10.0 / dt); ++k) {
    const auto kin = compute_kinematics(model, s);
    const VecX udot = forward_dynamics(model, s, kin, VecX::Zero(2), {}, g);
    s.u += dt * udot;
    s.q += dt * s.u;
    drift = std::max(drift, std::abs(energy(s) - e0));
  }
  const double drift_rel = drift / e0;

  // (c) Momentum rate under internal torques, gravity off: the solved
  // accelerations, pushed back through inverse dynamics, must produce zero
  // net force on the system.
  const auto tpl = test::small_template();
  double worst_mom = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RobotMorphology m = generate_morphology(tpl, 5000 + trial);
    const RigidBodyModel robot = RigidBodyModel::from_morphology(m);
    RbdState rs;
    rs.q = VecX::Zero(12);
    rs.u = VecX::Zero(18);
    for (int i = 0; i < 12; ++i) rs.q[i] = m.default_pose[i] + rng.uniform(-0.3, 0.3);
    for (int i = 0; i < 18; ++i) rs.u[i] = rng.uniform(-1, 1);
    rs.R = Eigen::AngleAxisd(rng.uniform(-kPi, kPi),
                             Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
                                 .normalized())
               .toRotationMatrix();
    VecX tau(12);
    for (int i = 0; i < 12; ++i) tau[i] = rng.uniform(-20, 20);
    const auto kin = compute_kinematics(robot, rs);
    const VecX udot = forward_dynamics(robot, rs, kin, tau, {}, Vec3::Zero());
    const VecX check = rnea(robot, rs, kin, udot, Vec3::Zero());
    const Vec3 force_world = rs.R * Vec3(check.segment<3>(3));
    const Vec3 momentum = linear_momentum(robot, kin);
    worst_mom = std::max(worst_mom,
                         force_world.norm() / std::max(momentum.norm(), robot.total_mass()));
  }

  std::ostringstream os;
  os << "pendulum rel err " << worst_acc << " (tol 1e-6); energy drift " << drift_rel
     << " (tol 0.02); momentum rate " << worst_mom << " /s (tol 1e-8)";
  detail = os.str();
  return worst_acc < 1e-6 && drift_rel < 0.02 && worst_mom < 1e-8;
}

// --------------------------------------------------------------------------
// 9. Determinism: two (seed, config)-identical 1e4-step smoke runs produce
// identical stats CSVs.

bool check_train_determinism(std::string& detail) {
  auto run = [] {
    auto population = std::make_shared<const std::vector<RobotMorphology>>(
        generate_population({test::small_template(), test::large_template()}, 4, 109));
    PolicyConfig pc;  // full-size policy
    PpoConfig ppo;
    ppo.num_envs = 4;
    ppo.total_timesteps = 10000;
    ppo.seed = 109;
    EnvConfig ec;  // H = 128
    Trainer trainer(population, pc, ppo, ec, RewardConfig{}, SimParams{},
                    RandomizationConfig{});
    std::string csv = TrainStats::csv_header() + "\n";
    for (const auto& s : trainer.run(2)) csv += s.csv_row() + "\n";
    return csv;
  };
  const std::string a = run();
  const std::string b = run();
  std::ostringstream os;
  os << "stats CSVs " << (a == b ? "identical" : "DIFFER") << " over "
     << std::count(a.begin(), a.end(), '\n') - 1 << " iterations";
  detail = os.str();
  return a == b;
}

}  // namespace
}  // namespace mml

int main() {
  using mml::Criterion;
  std::vector<Criterion> criteria = {
      {"inertia_vs_voxel_oracle", mml::check_inertia_oracle},
      {"foot_below_hip_1000_morphologies", mml::check_foot_below_hip},
      {"rbf_kernel_closed_form", mml::check_rbf_kernel},
      {"reward_product_range_and_maximum", mml::check_reward_product},
      {"gae_vs_brute_force", mml::check_gae_oracle},
      {"bptt_vs_finite_differences", mml::check_bptt_gradients},
      {"ppo_ratio_identity", mml::check_ratio_identity},
      {"simulator_oracles", mml::check_simulator_oracles},
      {"training_determinism_smoke", mml::check_train_determinism},
  };
  int failures = 0;
  for (auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
