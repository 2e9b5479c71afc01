#pragma once

#include <array>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "mml/dynamics.hpp"
#include "mml/rng.hpp"
#include "mml/terrain.hpp"

namespace mml {

struct ActuatorModel {
  double kp = 100.0;      // N m / rad
  double kd = 2.0;        // N m s / rad
  double tau_max = 33.5;  // N m
  double latency = 0.0;   // s

  void validate() const {
    if (kp < 0 || kd < 0 || !(tau_max > 0) || latency < 0)
      throw ConfigError("actuator: need kp, kd >= 0, tau_max > 0, latency >= 0");
  }
};

inline VecX pd_torques(const VecX& q, const VecX& qd, const VecX& q_target,
                       const ActuatorModel& act) {
  VecX tau = act.kp * (q_target - q) - act.kd * qd;
  return tau.cwiseMax(-act.tau_max).cwiseMin(act.tau_max);
}

struct SimParams {
  double dt_physics = 2.5e-3;
  double dt_pd = 5e-3;       // 200 Hz PD
  double dt_control = 0.02;  // 50 Hz policy
  double contact_kn = 2.0e4;  // N/m
  double contact_cn = 4.0e2;  // N s/m
  double contact_kt = 1.0e3;  // N s/m
  double default_friction = 0.8;
  ActuatorModel actuator;
  Vec3 gravity = Vec3(0, 0, -kGravity);

  void validate() const {
    actuator.validate();
    auto near_multiple = [](double big, double small) {
      const double k = big / small;
      return std::abs(k - std::round(k)) < 1e-9 && k >= 1.0 - 1e-9;
    };
    if (!(dt_physics > 0) || !near_multiple(dt_pd, dt_physics) ||
        !near_multiple(dt_control, dt_pd))
      throw ConfigError("sim: dt_control must be a multiple of dt_pd, dt_pd of dt_physics");
    if (!(contact_kn > 0) || contact_cn < 0 || contact_kt < 0)
      throw ConfigError("sim: bad contact parameters");
  }
};

// Domain-randomization ranges; defaults follow the hardware-experiment table.
struct RandomizationConfig {
  bool enabled = false;
  Vec2 terrain_frequency = {0.0, 0.9};
  Vec2 terrain_height_m = {0.0, 0.1};
  Vec2 friction = {0.5, 1.25};
  Vec2 projected_gravity_mps2 = {-1.70, 1.70};
  Vec2 latency_s = {0.005, 0.040};
  Vec2 joint_pos_noise_rad = {-0.01, 0.01};
  Vec2 joint_vel_noise_rad_s = {-1.5, 1.5};
  Vec2 lin_vel_noise_mps = {-0.01, 0.01};
  Vec2 ang_vel_noise_rad_s = {-0.2, 0.2};
  Vec2 height_noise_frac = {-0.05, 0.05};  // x nominal base height
  Vec2 lin_impulse_mps = {-1.5, 1.5};
  Vec2 ang_impulse_rad_s = {-1.5, 1.5};
  Vec2 impulse_interval_s = {2.0, 4.0};

  void validate() const {
    for (const Vec2* r : {&terrain_frequency, &terrain_height_m, &friction,
                          &projected_gravity_mps2, &latency_s, &joint_pos_noise_rad,
                          &joint_vel_noise_rad_s, &lin_vel_noise_mps, &ang_vel_noise_rad_s,
                          &height_noise_frac, &lin_impulse_mps, &ang_impulse_rad_s,
                          &impulse_interval_s})
      if (!((*r)[0] <= (*r)[1])) throw ConfigError("randomization: range lo > hi");
  }
};

struct ScheduledImpulse {
  double time = 0.0;  // episode-relative, s
  Vec3 dv_world = Vec3::Zero();
  Vec3 domega_body = Vec3::Zero();
};

// Everything sampled once per episode; serialized alongside episode logs so
// any trajectory is reproducible.
struct EpisodeRandomization {
  double friction = 0.8;
  double terrain_frequency = 0.0;
  double terrain_amplitude = 0.0;
  uint64_t terrain_seed = 0;
  double latency = 0.0;
  Vec3 gravity = Vec3(0, 0, -kGravity);
  double noise_q = 0.0, noise_qd = 0.0, noise_v = 0.0, noise_w = 0.0, noise_h = 0.0;
  std::vector<ScheduledImpulse> impulses;

  nlohmann::json to_json() const {
    nlohmann::json imp = nlohmann::json::array();
    for (const auto& i : impulses)
      imp.push_back({{"time", i.time},
                     {"dv_world", {i.dv_world.x(), i.dv_world.y(), i.dv_world.z()}},
                     {"domega_body",
                      {i.domega_body.x(), i.domega_body.y(), i.domega_body.z()}}});
    return {{"friction", friction},
            {"terrain_frequency", terrain_frequency},
            {"terrain_amplitude", terrain_amplitude},
            {"terrain_seed", terrain_seed},
            {"latency", latency},
            {"gravity", {gravity.x(), gravity.y(), gravity.z()}},
            {"noise_q", noise_q},
            {"noise_qd", noise_qd},
            {"noise_v", noise_v},
            {"noise_w", noise_w},
            {"noise_h", noise_h},
            {"impulses", imp}};
  }

  static EpisodeRandomization from_json(const nlohmann::json& j) {
    EpisodeRandomization e;
    e.friction = j.at("friction").get<double>();
    e.terrain_frequency = j.at("terrain_frequency").get<double>();
    e.terrain_amplitude = j.at("terrain_amplitude").get<double>();
    e.terrain_seed = j.at("terrain_seed").get<uint64_t>();
    e.latency = j.at("latency").get<double>();
    const auto& g = j.at("gravity");
    e.gravity = Vec3(g[0].get<double>(), g[1].get<double>(), g[2].get<double>());
    e.noise_q = j.at("noise_q").get<double>();
    e.noise_qd = j.at("noise_qd").get<double>();
    e.noise_v = j.at("noise_v").get<double>();
    e.noise_w = j.at("noise_w").get<double>();
    e.noise_h = j.at("noise_h").get<double>();
    for (const auto& ij : j.at("impulses")) {
      ScheduledImpulse imp;
      imp.time = ij.at("time").get<double>();
      const auto& dv = ij.at("dv_world");
      imp.dv_world = Vec3(dv[0].get<double>(), dv[1].get<double>(), dv[2].get<double>());
      const auto& dw = ij.at("domega_body");
      imp.domega_body = Vec3(dw[0].get<double>(), dw[1].get<double>(), dw[2].get<double>());
    }
    return e;
  }
};

// Noise scales are drawn per episode; per-tick noise is uniform within the
// drawn scale, so magnitudes never exceed the configured table ranges.
inline EpisodeRandomization randomize_episode(Rng& rng, const RandomizationConfig& cfg,
                                              double h_ref, double episode_duration,
                                              double nominal_friction = 0.8) {
  cfg.validate();
  EpisodeRandomization e;
  if (!cfg.enabled) {
    e.friction = nominal_friction;
    return e;
  }
  e.friction = rng.uniform(cfg.friction[0], cfg.friction[1]);
  e.terrain_frequency = rng.uniform(cfg.terrain_frequency[0], cfg.terrain_frequency[1]);
  e.terrain_amplitude = rng.uniform(cfg.terrain_height_m[0], cfg.terrain_height_m[1]);
  e.terrain_seed = rng.next_u64();
  e.latency = rng.uniform(cfg.latency_s[0], cfg.latency_s[1]);
  e.gravity = Vec3(rng.uniform(cfg.projected_gravity_mps2[0], cfg.projected_gravity_mps2[1]),
                   rng.uniform(cfg.projected_gravity_mps2[0], cfg.projected_gravity_mps2[1]),
                   -kGravity);
  e.noise_q = rng.uniform(0.0, cfg.joint_pos_noise_rad[1]);
  e.noise_qd = rng.uniform(0.0, cfg.joint_vel_noise_rad_s[1]);
  e.noise_v = rng.uniform(0.0, cfg.lin_vel_noise_mps[1]);
  e.noise_w = rng.uniform(0.0, cfg.ang_vel_noise_rad_s[1]);
  e.noise_h = rng.uniform(0.0, cfg.height_noise_frac[1]) * h_ref;
  double t = rng.uniform(cfg.impulse_interval_s[0], cfg.impulse_interval_s[1]);
  while (t < episode_duration) {
    ScheduledImpulse imp;
    imp.time = t;
    for (int k = 0; k < 3; ++k) {
      imp.dv_world[k] = rng.uniform(cfg.lin_impulse_mps[0], cfg.lin_impulse_mps[1]);
      imp.domega_body[k] = rng.uniform(cfg.ang_impulse_rad_s[0], cfg.ang_impulse_rad_s[1]);
    }
    e.impulses.push_back(imp);
    t += rng.uniform(cfg.impulse_interval_s[0], cfg.impulse_interval_s[1]);
  }
  return e;
}

struct PendingCommand {
  double t_effective = 0.0;
  VecX targets;
};

struct SimState {
  Vec3 base_pos = Vec3::Zero();
  Quat base_quat = Quat::Identity();   // body -> world
  Vec3 base_vel_world = Vec3::Zero();
  Vec3 base_omega_body = Vec3::Zero();
  VecX q, qd;
  double time = 0.0;
  std::vector<PendingCommand> latency_buffer;
  VecX held_target;  // zero-order-hold PD target

  bool finite() const {
    return base_pos.allFinite() && base_quat.coeffs().allFinite() &&
           base_vel_world.allFinite() && base_omega_body.allFinite() && q.allFinite() &&
           qd.allFinite();
  }

  nlohmann::json to_json() const {
    auto vec = [](const auto& v) {
      nlohmann::json a = nlohmann::json::array();
      for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
      return a;
    };
    nlohmann::json buf = nlohmann::json::array();
    for (const auto& c : latency_buffer)
      buf.push_back({{"t_effective", c.t_effective}, {"targets", vec(c.targets)}});
    return {{"base_pos", vec(base_pos)},
            {"base_quat", {base_quat.w(), base_quat.x(), base_quat.y(), base_quat.z()}},
            {"base_vel_world", vec(base_vel_world)},
            {"base_omega_body", vec(base_omega_body)},
            {"q", vec(q)},
            {"qd", vec(qd)},
            {"time", time},
            {"latency_buffer", buf},
            {"held_target", vec(held_target)}};
  }

  static SimState from_json(const nlohmann::json& j) {
    auto vecx = [](const nlohmann::json& a) {
      VecX v(a.size());
      for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
      return v;
    };
    SimState s;
    const VecX p = vecx(j.at("base_pos"));
    s.base_pos = Vec3(p[0], p[1], p[2]);
    const auto& quat = j.at("base_quat");
    s.base_quat = Quat(quat[0].get<double>(), quat[1].get<double>(), quat[2].get<double>(),
                       quat[3].get<double>());
    const VecX v = vecx(j.at("base_vel_world"));
    s.base_vel_world = Vec3(v[0], v[1], v[2]);
    const VecX w = vecx(j.at("base_omega_body"));
    s.base_omega_body = Vec3(w[0], w[1], w[2]);
    s.q = vecx(j.at("q"));
    s.qd = vecx(j.at("qd"));
    s.time = j.at("time").get<double>();
    for (const auto& c : j.at("latency_buffer"))
      s.latency_buffer.push_back({c.at("t_effective").get<double>(), vecx(c.at("targets"))});
    s.held_target = vecx(j.at("held_target"));
    return s;
  }
};

struct ContactProbe {
  int body = 0;
  Vec3 local = Vec3::Zero();
  int foot_index = -1;  // leg index for feet, -1 otherwise
};

inline std::vector<ContactProbe> quadruped_probes(const RobotMorphology& m) {
  std::vector<ContactProbe> probes;
  for (int leg = 0; leg < kNumLegs; ++leg)
    probes.push_back({m.calf_link(leg), m.foot_offset_in_calf(leg), leg});
  const Vec3 half = 0.5 * m.links[0].dims;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1})
        probes.push_back(
            {0, m.links[0].com_offset + Vec3(sx * half.x(), sy * half.y(), sz * half.z()), -1});
  for (int leg = 0; leg < kNumLegs; ++leg) {
    probes.push_back({m.hip_link(leg), m.links[m.hip_link(leg)].com_offset, -1});
    probes.push_back({m.calf_link(leg), Vec3::Zero(), -1});  // knee
  }
  return probes;
}

struct FootContact {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  bool in_contact = false;
  Vec3 force = Vec3::Zero();
};

struct ContactReport {
  std::array<FootContact, kNumLegs> feet;
  bool non_foot_contact = false;
  double total_normal_force = 0.0;
};

// Penalty-contact floating-base simulator. One instance per environment;
// deterministic given (model, initial state, action sequence, episode record).
class Simulator {
 public:
  Simulator(RigidBodyModel model, std::vector<ContactProbe> probes, const SimParams& params)
      : model_(std::move(model)), probes_(std::move(probes)), params_(params) {
    params_.validate();
    gravity_ = params_.gravity;
    terrain_ = Terrain::flat(params_.default_friction);
    latency_ = params_.actuator.latency;
    q_lo_ = VecX::Constant(model_.nj(), -1e9);
    q_hi_ = VecX::Constant(model_.nj(), 1e9);
    state_.q = VecX::Zero(model_.nj());
    state_.qd = VecX::Zero(model_.nj());
    state_.held_target = VecX::Zero(model_.nj());
  }

  static Simulator for_morphology(const RobotMorphology& m, const SimParams& params) {
    Simulator sim(RigidBodyModel::from_morphology(m), quadruped_probes(m), params);
    for (int j = 0; j < kNumJoints; ++j) {
      sim.q_lo_[j] = m.joints[j].pos_lo;
      sim.q_hi_[j] = m.joints[j].pos_hi;
    }
    return sim;
  }

  const RigidBodyModel& model() const { return model_; }
  const SimParams& params() const { return params_; }
  const SimState& state() const { return state_; }
  const Terrain& terrain() const { return terrain_; }
  double trunk_mass_scale() const { return trunk_scale_; }
  double latency() const { return latency_; }
  const EpisodeRandomization& episode() const { return episode_; }

  // Re-anchors the impulse schedule at the new state time.
  void reset(const SimState& s) {
    state_ = s;
    if (state_.held_target.size() != model_.nj()) state_.held_target = state_.q;
    fault_ = false;
    episode_start_time_ = state_.time;
    next_impulse_ = 0;
    record_.clear();
  }

  // Applies an episode randomization record: terrain, friction, latency,
  // gravity, impulse schedule (times relative to the current state time).
  void set_episode(const EpisodeRandomization& e) {
    episode_ = e;
    if (e.terrain_amplitude > 0.0 && e.terrain_frequency > 0.0)
      terrain_ = Terrain::perlin(e.terrain_frequency, e.terrain_amplitude, e.terrain_seed,
                                 e.friction);
    else
      terrain_ = Terrain::flat(e.friction);
    latency_ = e.latency;
    gravity_ = e.gravity;
    episode_start_time_ = state_.time;
    next_impulse_ = 0;
  }

  void set_terrain(const Terrain& t) { terrain_ = t; }
  void set_gravity(const Vec3& g) { gravity_ = g; }

  void scale_trunk_mass(double s) {
    if (!(s > 0)) throw ConfigError("scale_trunk_mass: factor must be > 0");
    model_.bodies[0].mass *= s;
    model_.bodies[0].inertia_com *= s;
    trunk_scale_ *= s;
  }

  void apply_impulse(const Vec3& dv_world, const Vec3& domega_body) {
    state_.base_vel_world += dv_world;
    state_.base_omega_body += domega_body;
  }

  // One 50 Hz control tick: enqueue the target through the latency buffer,
  // then run the 200 Hz PD loop with physics substeps.
  void step_control_tick(const VecX& joint_targets) {
    if (fault_) throw SimFault("step_control_tick: simulator in fault state");
    if (joint_targets.size() != model_.nj())
      throw ConfigError("step_control_tick: target dimension mismatch");
    state_.latency_buffer.push_back({state_.time + latency_, joint_targets});
    const int pd_updates = int(std::round(params_.dt_control / params_.dt_pd));
    const int substeps = int(std::round(params_.dt_pd / params_.dt_physics));
    for (int pd = 0; pd < pd_updates; ++pd) {
      pop_effective_target();
      // Position feedback is sampled at the PD rate; the damping term is
      // evaluated inside each substep (implicitly) for stiffness robustness.
      const VecX kp_term =
          params_.actuator.kp * (state_.held_target - state_.q);
      for (int s = 0; s < substeps; ++s) substep(kp_term);
    }
    if (!state_.finite()) {
      fault_ = true;
      throw SimFault("step_control_tick: non-finite state");
    }
    if (recording_) append_record_row();
  }

  ContactReport contact_report() const {
    ContactReport report;
    const RbdState rbd = to_rbd_state();
    const auto kin = compute_kinematics(model_, rbd);
    for (const auto& probe : probes_) {
      const Vec3 p = point_position_world(kin, probe.body, probe.local);
      const Vec3 v = point_velocity_world(kin, probe.body, probe.local);
      Vec3 force = Vec3::Zero();
      const bool touching = penalty_force(p, v, force);
      if (probe.foot_index >= 0) {
        auto& foot = report.feet[probe.foot_index];
        foot.position = p;
        foot.velocity = v;
        foot.in_contact = touching;
        foot.force = force;
      } else if (touching) {
        report.non_foot_contact = true;
      }
      report.total_normal_force += force.z();
    }
    return report;
  }

  std::array<Vec3, kNumLegs> foot_positions() const {
    const auto kin = compute_kinematics(model_, to_rbd_state());
    std::array<Vec3, kNumLegs> out;
    for (const auto& probe : probes_)
      if (probe.foot_index >= 0)
        out[probe.foot_index] = point_position_world(kin, probe.body, probe.local);
    return out;
  }

  double terrain_height_at(double x, double y) const { return terrain_.height(x, y); }

  // Per-control-tick trajectory recording (time, base pose/twist, joints,
  // foot positions and forces); cleared on reset.
  void set_recording(bool on) {
    recording_ = on;
    record_.clear();
  }

  std::string recorded_csv() const {
    std::ostringstream os;
    os << "time,base_x,base_y,base_z,quat_w,quat_x,quat_y,quat_z,vx,vy,vz,wx,wy,wz";
    for (int j = 0; j < model_.nj(); ++j) os << ",q" << j;
    for (int j = 0; j < model_.nj(); ++j) os << ",qd" << j;
    for (int leg = 0; leg < kNumLegs; ++leg)
      os << "," << kLegNames[leg] << "_foot_x," << kLegNames[leg] << "_foot_y,"
         << kLegNames[leg] << "_foot_z," << kLegNames[leg] << "_force_x," << kLegNames[leg]
         << "_force_y," << kLegNames[leg] << "_force_z";
    os << "\n";
    for (const std::string& row : record_) os << row << "\n";
    return os.str();
  }

  nlohmann::json snapshot() const {
    return {{"state", state_.to_json()},
            {"episode", episode_.to_json()},
            {"trunk_scale", trunk_scale_},
            {"episode_start_time", episode_start_time_},
            {"next_impulse", next_impulse_}};
  }

  void restore(const nlohmann::json& j) {
    const double trunk = j.at("trunk_scale").get<double>();
    // Re-derive the base inertial parameters from the stored cumulative scale.
    model_.bodies[0].mass *= trunk / trunk_scale_;
    model_.bodies[0].inertia_com *= trunk / trunk_scale_;
    trunk_scale_ = trunk;
    reset(SimState::from_json(j.at("state")));
    set_episode(EpisodeRandomization::from_json(j.at("episode")));
    episode_start_time_ = j.at("episode_start_time").get<double>();
    next_impulse_ = j.at("next_impulse").get<int>();
  }

 private:
  void append_record_row() {
    const ContactReport report = contact_report();
    std::ostringstream os;
    os.precision(17);
    os << state_.time << "," << state_.base_pos.x() << "," << state_.base_pos.y() << ","
       << state_.base_pos.z() << "," << state_.base_quat.w() << "," << state_.base_quat.x()
       << "," << state_.base_quat.y() << "," << state_.base_quat.z() << ","
       << state_.base_vel_world.x() << "," << state_.base_vel_world.y() << ","
       << state_.base_vel_world.z() << "," << state_.base_omega_body.x() << ","
       << state_.base_omega_body.y() << "," << state_.base_omega_body.z();
    for (int j = 0; j < model_.nj(); ++j) os << "," << state_.q[j];
    for (int j = 0; j < model_.nj(); ++j) os << "," << state_.qd[j];
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const FootContact& f = report.feet[leg];
      os << "," << f.position.x() << "," << f.position.y() << "," << f.position.z() << ","
         << f.force.x() << "," << f.force.y() << "," << f.force.z();
    }
    record_.push_back(os.str());
  }

  RbdState to_rbd_state() const {
    RbdState s;
    s.R = state_.base_quat.toRotationMatrix();
    s.p = state_.base_pos;
    s.q = state_.q;
    s.u = VecX(model_.nv());
    s.u.head<3>() = state_.base_omega_body;
    s.u.segment<3>(3) = s.R.transpose() * state_.base_vel_world;
    s.u.tail(model_.nj()) = state_.qd;
    return s;
  }


  void pop_effective_target() {
    size_t consumed = 0;
    for (const auto& cmd : state_.latency_buffer) {
      if (cmd.t_effective <= state_.time + 1e-12) {
        state_.held_target = cmd.targets;
        ++consumed;
      } else {
        break;
      }
    }
    if (consumed > 0)
      state_.latency_buffer.erase(state_.latency_buffer.begin(),
                                  state_.latency_buffer.begin() + consumed);
  }

  bool penalty_force(const Vec3& p, const Vec3& v, Vec3& force) const {
    const double depth = terrain_.height(p.x(), p.y()) - p.z();
    if (depth <= 0.0) return false;
    double normal = params_.contact_kn * depth + params_.contact_cn * std::max(0.0, -v.z());
    normal = std::max(normal, 0.0);
    Vec2 tangent = -params_.contact_kt * Vec2(v.x(), v.y());
    const double max_tangent = terrain_.friction() * normal;
    const double t_norm = tangent.norm();
    if (t_norm > max_tangent && t_norm > 0.0) tangent *= max_tangent / t_norm;
    force = Vec3(tangent.x(), tangent.y(), normal);
    return true;
  }

  // All damping terms (actuator kd, contact c_n and k_t) are evaluated at the
  // post-step velocity (linearly implicit): M_eff = M + dt J^T D J with
  // D >= 0. Force laws are unchanged; this keeps the stiff penalty gains and
  // PD damping stable at the 2.5 ms physics step. Saturated torques and
  // friction-cone-saturated contacts are constant forces and stay explicit.
  void substep(const VecX& kp_term) {
    const RbdState rbd = to_rbd_state();
    const auto kin = compute_kinematics(model_, rbd);

    VecX rhs = -rnea(model_, rbd, kin, VecX::Zero(model_.nv()), gravity_);
    MatX m_eff = crba(model_, kin);
    const double dt = params_.dt_physics;

    const ActuatorModel& act = params_.actuator;
    const int dof0 = model_.nv() - model_.nj();
    for (int j = 0; j < model_.nj(); ++j) {
      const double raw = kp_term[j] - act.kd * state_.qd[j];
      rhs[dof0 + j] += clamp(raw, -act.tau_max, act.tau_max);
      if (std::abs(raw) < act.tau_max) m_eff(dof0 + j, dof0 + j) += dt * act.kd;
    }

    for (const auto& probe : probes_) {
      const Vec3 p = point_position_world(kin, probe.body, probe.local);
      const double depth = terrain_.height(p.x(), p.y()) - p.z();
      if (depth <= 0.0) continue;
      const Vec3 v = point_velocity_world(kin, probe.body, probe.local);
      Vec3 force;
      penalty_force(p, v, force);
      add_point_force(model_, kin, probe.body, p, force, rhs);
      const MatX jac = point_jacobian_world(model_, kin, probe.body, p);
      Vec3 damping = Vec3::Zero();
      const double normal_explicit =
          params_.contact_kn * depth + params_.contact_cn * std::max(0.0, -v.z());
      const double cone = terrain_.friction() * normal_explicit;
      // Tangential damper is implicit only while inside the friction cone;
      // a saturated contact applies a constant (bounded) force instead.
      if (params_.contact_kt * Vec2(v.x(), v.y()).norm() < cone) {
        damping.x() = params_.contact_kt;
        damping.y() = params_.contact_kt;
      }
      if (v.z() < 0.0) damping.z() = params_.contact_cn;
      if (damping.maxCoeff() > 0.0)
        m_eff.noalias() += dt * jac.transpose() * damping.asDiagonal() * jac;
    }

    Eigen::LDLT<MatX> ldlt(m_eff);
    if (ldlt.info() != Eigen::Success)
      throw SimFault("substep: effective mass matrix factorization failed");
    const VecX udot = ldlt.solve(rhs);
    if (!udot.allFinite()) {
      fault_ = true;
      throw SimFault("substep: non-finite acceleration");
    }
    VecX u = rbd.u + dt * udot;
    state_.base_omega_body = u.head<3>();
    state_.base_vel_world = rbd.R * Vec3(u.segment<3>(3));
    state_.qd = u.tail(model_.nj());
    // Positions advance with the updated velocities (semi-implicit Euler).
    const double angle = state_.base_omega_body.norm() * dt;
    if (angle > 0.0) {
      const Vec3 axis = state_.base_omega_body.normalized();
      state_.base_quat = state_.base_quat * Quat(Eigen::AngleAxisd(angle, axis));
    }
    state_.base_quat.normalize();
    state_.base_pos += dt * state_.base_vel_world;
    state_.q += dt * state_.qd;
    for (int j = 0; j < model_.nj(); ++j) {
      if (state_.q[j] < q_lo_[j]) {
        state_.q[j] = q_lo_[j];
        if (state_.qd[j] < 0) state_.qd[j] = 0;
      } else if (state_.q[j] > q_hi_[j]) {
        state_.q[j] = q_hi_[j];
        if (state_.qd[j] > 0) state_.qd[j] = 0;
      }
    }
    state_.time += dt;
    // Scheduled impulses fire when their episode-relative time is crossed.
    while (next_impulse_ < int(episode_.impulses.size()) &&
           episode_start_time_ + episode_.impulses[next_impulse_].time <= state_.time) {
      apply_impulse(episode_.impulses[next_impulse_].dv_world,
                    episode_.impulses[next_impulse_].domega_body);
      ++next_impulse_;
    }
  }

  RigidBodyModel model_;
  std::vector<ContactProbe> probes_;
  SimParams params_;
  SimState state_;
  Terrain terrain_;
  EpisodeRandomization episode_;
  Vec3 gravity_;
  double latency_ = 0.0;
  double trunk_scale_ = 1.0;
  double episode_start_time_ = 0.0;
  int next_impulse_ = 0;
  bool fault_ = false;
  bool recording_ = false;
  std::vector<std::string> record_;
  VecX q_lo_, q_hi_;
  std::vector<PointForce> contact_scratch_;
};

}  // namespace mml
