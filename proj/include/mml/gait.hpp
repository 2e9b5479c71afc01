#pragma once

#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "mml/core.hpp"
#include "mml/morphology.hpp"

namespace mml {

struct GaitSpec {
  double cycle_duration = 0.5;  // s
  double duty_factor = 0.5;     // stance fraction of the cycle
  std::array<double, kNumLegs> phase_offsets{};  // in [0,1), order FL FR HL HR

  static GaitSpec trot() { return {0.5, 0.5, {0.0, 0.5, 0.5, 0.0}}; }
  static GaitSpec pace() { return {0.5, 0.5, {0.0, 0.5, 0.0, 0.5}}; }

  double stance_duration() const { return duty_factor * cycle_duration; }
  double swing_duration() const { return (1.0 - duty_factor) * cycle_duration; }

  void validate() const {
    if (!(cycle_duration > 0.0)) throw ConfigError("gait: cycle_duration must be > 0");
    if (!(duty_factor > 0.0 && duty_factor < 1.0))
      throw ConfigError("gait: duty_factor must be in (0,1)");
    for (double o : phase_offsets)
      if (!(o >= 0.0 && o < 1.0)) throw ConfigError("gait: phase offsets must be in [0,1)");
  }
};

struct Command {
  double v_cmd = 0.0;      // forward velocity, m/s
  double omega_cmd = 0.0;  // yaw rate, rad/s
};

// Per-leg cyclic phase: stance on [0, pi), swing on [-pi, 0).
inline double leg_phase(double t, const GaitSpec& gait, int leg) {
  const double u = frac(t / gait.cycle_duration + gait.phase_offsets[leg]);
  if (u < gait.duty_factor) return kPi * u / gait.duty_factor;
  return -kPi + kPi * (u - gait.duty_factor) / (1.0 - gait.duty_factor);
}

inline bool phase_in_stance(double phi) { return phi >= 0.0; }

inline std::vector<std::array<bool, kNumLegs>> contact_timeline(const GaitSpec& gait,
                                                                double duration, double dt) {
  if (!(duration > 0.0 && dt > 0.0)) throw ConfigError("contact_timeline: need duration, dt > 0");
  const int n = int(std::round(duration / dt));
  std::vector<std::array<bool, kNumLegs>> flags(n);
  for (int k = 0; k < n; ++k)
    for (int leg = 0; leg < kNumLegs; ++leg)
      flags[k][leg] = phase_in_stance(leg_phase(k * dt, gait, leg));
  return flags;
}

struct BaseReference {
  std::vector<Vec3> pos;       // world, z fixed at h_ref
  std::vector<double> yaw;     // rad
  std::vector<Vec3> vel;       // world-frame commanded velocity
  std::vector<double> yaw_rate;
};

// Explicit Euler: yaw advances by omega*dt, planar position by v along the
// current heading; height pinned at h_ref.
inline BaseReference integrate_base_reference(const Command& cmd, double h_ref, double yaw0,
                                              const Vec3& pos0, double duration, double dt) {
  if (!(dt > 0.0)) throw ConfigError("integrate_base_reference: dt must be > 0");
  const int n = int(std::round(duration / dt));
  BaseReference ref;
  ref.pos.resize(n);
  ref.yaw.resize(n);
  ref.vel.resize(n);
  ref.yaw_rate.assign(n, cmd.omega_cmd);
  double yaw = yaw0;
  Vec3 pos(pos0.x(), pos0.y(), h_ref);
  for (int k = 0; k < n; ++k) {
    ref.pos[k] = pos;
    ref.yaw[k] = yaw;
    ref.vel[k] = Vec3(cmd.v_cmd * std::cos(yaw), cmd.v_cmd * std::sin(yaw), 0.0);
    pos += dt * ref.vel[k];
    yaw += dt * cmd.omega_cmd;
  }
  return ref;
}

// Half-stance heuristic: step to the hip's ground projection advanced by half
// a stance period of the commanded velocity at that hip (yaw included).
inline Vec2 plan_foothold(const Vec2& hip_ground_projection, const Command& cmd,
                          const GaitSpec& gait, double heading, const Vec2& base_xy) {
  const Vec2 heading_dir(std::cos(heading), std::sin(heading));
  const Vec2 r = hip_ground_projection - base_xy;
  // v_des at the hip = v_cmd * heading + omega x r (planar cross product).
  const Vec2 v_des = cmd.v_cmd * heading_dir + cmd.omega_cmd * Vec2(-r.y(), r.x());
  return hip_ground_projection + 0.5 * gait.stance_duration() * v_des;
}

// Smoothstep in the horizontal plane, half-sine in z; endpoints exact.
inline Vec3 swing_trajectory(const Vec3& liftoff, const Vec3& foothold, double swing_height,
                             double u) {
  if (!(swing_height > 0.0)) throw ConfigError("swing_trajectory: swing_height must be > 0");
  if (u <= 0.0) return liftoff;
  if (u >= 1.0) return foothold;
  const double s = u * u * (3.0 - 2.0 * u);
  Vec3 p = liftoff + s * (foothold - liftoff);
  const double ground = liftoff.z() + s * (foothold.z() - liftoff.z());
  p.z() = ground + swing_height * std::sin(kPi * u);
  return p;
}

struct ReferenceMotion {
  double dt = 0.02;
  Command command;
  std::string morphology_id;
  double h_ref = 0.0;
  GaitSpec gait;
  std::vector<Vec3> base_pos;
  std::vector<double> base_yaw;
  std::vector<Vec3> base_vel;
  std::vector<double> yaw_rate;
  std::vector<std::array<Vec3, kNumLegs>> foot_pos;  // world
  std::vector<std::array<bool, kNumLegs>> contact;

  int size() const { return int(base_pos.size()); }
  double duration() const { return size() * dt; }
};

struct ReferenceOptions {
  double dt = 0.02;
  double swing_height_ratio = 0.4;  // of thigh length
  // Swing lift tapers to zero below this commanded hip speed, so a zero
  // command yields stationary feet rather than stepping in place.
  double swing_taper_speed = 0.1;  // m/s
  double yaw0 = 0.0;
  Vec3 pos0 = Vec3::Zero();
};

inline ReferenceMotion generate_reference(const RobotMorphology& morph, const Command& cmd,
                                          const GaitSpec& gait, double duration,
                                          const ReferenceOptions& opt = {}) {
  gait.validate();
  if (!(duration > 0.0)) throw ConfigError("generate_reference: duration must be > 0");
  const double dt = opt.dt;
  const int n = int(std::round(duration / dt));
  // Integrate past the end so touchdown targets beyond the horizon resolve.
  const int n_ext = n + int(std::ceil(gait.cycle_duration / dt)) + 2;
  const BaseReference base = integrate_base_reference(cmd, morph.h_ref, opt.yaw0, opt.pos0,
                                                      (n_ext + 1) * dt, dt);

  ReferenceMotion ref;
  ref.dt = dt;
  ref.command = cmd;
  ref.morphology_id = morph.name();
  ref.h_ref = morph.h_ref;
  ref.gait = gait;
  ref.base_pos.assign(base.pos.begin(), base.pos.begin() + n);
  ref.base_yaw.assign(base.yaw.begin(), base.yaw.begin() + n);
  ref.base_vel.assign(base.vel.begin(), base.vel.begin() + n);
  ref.yaw_rate.assign(base.yaw_rate.begin(), base.yaw_rate.begin() + n);
  ref.foot_pos.resize(n);
  ref.contact.resize(n);

  auto hip_projection = [&](int leg, int k) -> Vec2 {
    const int kk = std::min(k, n_ext - 1);
    const Vec3 hip_base = morph.hip_extension_origin_in_base(leg);
    const Vec2 planar = Vec2(base.pos[kk].x(), base.pos[kk].y()) +
                        rot_z(base.yaw[kk]).topLeftCorner<2, 2>() * Vec2(hip_base.x(), hip_base.y());
    return planar;
  };
  auto foothold_at = [&](int leg, int k_touchdown) -> Vec3 {
    const int kk = std::min(k_touchdown, n_ext - 1);
    const Vec2 fh = plan_foothold(hip_projection(leg, kk), cmd, gait, base.yaw[kk],
                                  Vec2(base.pos[kk].x(), base.pos[kk].y()));
    return Vec3(fh.x(), fh.y(), 0.0);
  };
  auto hip_speed_at = [&](int leg, int k) -> double {
    const int kk = std::min(k, n_ext - 1);
    const Vec2 heading_dir(std::cos(base.yaw[kk]), std::sin(base.yaw[kk]));
    const Vec2 r = hip_projection(leg, kk) - Vec2(base.pos[kk].x(), base.pos[kk].y());
    return (cmd.v_cmd * heading_dir + cmd.omega_cmd * Vec2(-r.y(), r.x())).norm();
  };

  const double swing_h = opt.swing_height_ratio * morph.thigh_length(0);

  for (int leg = 0; leg < kNumLegs; ++leg) {
    Vec3 current_foothold = foothold_at(leg, 0);
    Vec3 liftoff = current_foothold;
    Vec3 target = current_foothold;
    double lift = 0.0;
    bool was_stance = phase_in_stance(leg_phase(0.0, gait, leg));
    if (!was_stance) {
      // Starts mid-swing: lift from under the hip, land on the planned spot.
      const double u0 = frac(0.0 / gait.cycle_duration + gait.phase_offsets[leg]);
      const double remaining = (1.0 - u0) * gait.cycle_duration;
      const int k_td = int(std::round(remaining / dt));
      target = foothold_at(leg, k_td);
      lift = swing_h * std::min(1.0, hip_speed_at(leg, k_td) / opt.swing_taper_speed);
    }
    for (int k = 0; k < n; ++k) {
      const double t = k * dt;
      const double phi = leg_phase(t, gait, leg);
      const bool stance = phase_in_stance(phi);
      if (stance && !was_stance) {
        current_foothold = target;  // touchdown
      } else if (!stance && was_stance) {
        liftoff = current_foothold;  // liftoff: plan the next foothold
        const double u = frac(t / gait.cycle_duration + gait.phase_offsets[leg]);
        const double remaining = (1.0 - u) * gait.cycle_duration;
        const int k_td = k + int(std::round(remaining / dt));
        target = foothold_at(leg, k_td);
        lift = swing_h * std::min(1.0, hip_speed_at(leg, k_td) / opt.swing_taper_speed);
      }
      if (stance || lift <= 0.0) {
        ref.foot_pos[k][leg] = stance ? current_foothold : liftoff;
      } else {
        const double u_sw = (phi + kPi) / kPi;
        ref.foot_pos[k][leg] = swing_trajectory(liftoff, target, lift, u_sw);
      }
      ref.contact[k][leg] = stance;
      was_stance = stance;
    }
  }
  return ref;
}

// One row per control tick, for plotting.
inline std::string reference_to_csv(const ReferenceMotion& ref) {
  std::ostringstream os;
  os << "t,base_x,base_y,base_z,yaw,vx,vy,vz,yaw_rate";
  for (int leg = 0; leg < kNumLegs; ++leg)
    os << "," << kLegNames[leg] << "_x," << kLegNames[leg] << "_y," << kLegNames[leg] << "_z,"
       << kLegNames[leg] << "_contact";
  os << "\n";
  for (int k = 0; k < ref.size(); ++k) {
    os << k * ref.dt << "," << ref.base_pos[k].x() << "," << ref.base_pos[k].y() << ","
       << ref.base_pos[k].z() << "," << ref.base_yaw[k] << "," << ref.base_vel[k].x() << ","
       << ref.base_vel[k].y() << "," << ref.base_vel[k].z() << "," << ref.yaw_rate[k];
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Vec3& p = ref.foot_pos[k][leg];
      os << "," << p.x() << "," << p.y() << "," << p.z() << "," << (ref.contact[k][leg] ? 1 : 0);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace mml
