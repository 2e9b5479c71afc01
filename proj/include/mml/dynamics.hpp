#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "mml/core.hpp"
#include "mml/morphology.hpp"

namespace mml {

// 6-D spatial vectors in Featherstone layout: angular block on top.
// Motion vector [w; v], force vector [n; f]; body quantities are expressed in
// body coordinates with the frame origin at the joint.

struct SpatialTransform {
  Mat3 E = Mat3::Identity();  // rotates parent-frame coords into child coords
  Vec3 r = Vec3::Zero();      // child origin in parent coords

  static SpatialTransform identity() { return {}; }

  Vec6 apply_motion(const Vec6& m) const {
    Vec6 out;
    out.head<3>() = E * m.head<3>();
    out.tail<3>() = E * (m.tail<3>() - r.cross(m.head<3>()));
    return out;
  }

  // Force in child coords -> parent coords.
  Vec6 inv_apply_force(const Vec6& f) const {
    Vec6 out;
    const Vec3 f_lin = E.transpose() * f.tail<3>();
    out.head<3>() = E.transpose() * f.head<3>() + r.cross(f_lin);
    out.tail<3>() = f_lin;
    return out;
  }

  Mat6 motion_matrix() const {
    Mat6 x = Mat6::Zero();
    x.topLeftCorner<3, 3>() = E;
    x.bottomRightCorner<3, 3>() = E;
    x.bottomLeftCorner<3, 3>() = -E * skew(r);
    return x;
  }
};

inline Vec6 cross_motion(const Vec6& v, const Vec6& m) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(m.head<3>());
  out.tail<3>() = v.head<3>().cross(m.tail<3>()) + v.tail<3>().cross(m.head<3>());
  return out;
}

inline Vec6 cross_force(const Vec6& v, const Vec6& f) {
  Vec6 out;
  out.head<3>() = v.head<3>().cross(f.head<3>()) + v.tail<3>().cross(f.tail<3>());
  out.tail<3>() = v.head<3>().cross(f.tail<3>());
  return out;
}

struct SpatialInertia {
  double mass = 0.0;
  Vec3 com = Vec3::Zero();          // in body frame
  Mat3 inertia_origin = Mat3::Zero();  // about the frame origin

  static SpatialInertia from_com(double mass, const Vec3& com, const Mat3& inertia_com) {
    SpatialInertia si;
    si.mass = mass;
    si.com = com;
    const Mat3 cx = skew(com);
    si.inertia_origin = inertia_com - mass * cx * cx;
    return si;
  }

  Vec6 apply(const Vec6& v) const {
    Vec6 f;
    f.head<3>() = inertia_origin * v.head<3>() + mass * com.cross(v.tail<3>());
    f.tail<3>() = mass * v.tail<3>() - mass * com.cross(v.head<3>());
    return f;
  }

  Mat6 matrix() const {
    Mat6 m = Mat6::Zero();
    m.topLeftCorner<3, 3>() = inertia_origin;
    m.topRightCorner<3, 3>() = mass * skew(com);
    m.bottomLeftCorner<3, 3>() = -mass * skew(com);
    m.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
    return m;
  }
};

struct RbdBody {
  int parent = -1;               // body index; -1 only for the base (index 0)
  Vec3 joint_origin = Vec3::Zero();  // joint frame origin in parent coords
  Vec3 joint_axis = Vec3::UnitZ();   // revolute axis, body coords
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia_com = Mat3::Zero();
  std::string name;
};

// Kinematic tree with a 6-DOF floating base (or a welded base for test
// fixtures). Generalized velocity layout: [w_base; v_base; qdot] in base
// coordinates when floating, [qdot] otherwise.
struct RigidBodyModel {
  bool floating = true;
  std::vector<RbdBody> bodies;  // bodies[0] is the base

  int nj() const { return int(bodies.size()) - 1; }
  int nv() const { return (floating ? 6 : 0) + nj(); }
  int dof_of_joint(int body) const { return (floating ? 6 : 0) + body - 1; }

  double total_mass() const {
    double m = 0;
    for (const auto& b : bodies) m += b.mass;
    return m;
  }

  static RigidBodyModel from_morphology(const RobotMorphology& morph, bool floating = true) {
    RigidBodyModel model;
    model.floating = floating;
    model.bodies.resize(morph.links.size());
    for (size_t i = 0; i < morph.links.size(); ++i) {
      model.bodies[i].mass = morph.links[i].mass;
      model.bodies[i].com = morph.links[i].com_offset;
      model.bodies[i].inertia_com = morph.links[i].inertia;
      model.bodies[i].name = morph.links[i].name;
      model.bodies[i].parent = -1;
    }
    for (const auto& j : morph.joints) {
      model.bodies[j.child].parent = j.parent;
      model.bodies[j.child].joint_origin = j.origin_in_parent;
      model.bodies[j.child].joint_axis = j.axis;
    }
    return model;
  }
};

struct RbdState {
  Mat3 R = Mat3::Identity();  // base orientation, body -> world
  Vec3 p = Vec3::Zero();      // base origin, world
  VecX q;                     // joint positions (nj)
  VecX u;                     // generalized velocity (nv)
};

struct RbdKinematics {
  std::vector<SpatialTransform> X_up;  // parent coords -> body coords
  std::vector<Mat3> R_w;               // body -> world
  std::vector<Vec3> p_w;               // body origin, world
  std::vector<Vec6> v;                 // spatial velocity, body coords
};

inline RbdKinematics compute_kinematics(const RigidBodyModel& model, const RbdState& s) {
  const int nb = int(model.bodies.size());
  RbdKinematics kin;
  kin.X_up.resize(nb);
  kin.R_w.resize(nb);
  kin.p_w.resize(nb);
  kin.v.resize(nb);

  kin.R_w[0] = s.R;
  kin.p_w[0] = s.p;
  if (model.floating) {
    kin.v[0] = s.u.head<6>();
  } else {
    kin.v[0].setZero();
  }
  const int base_dofs = model.floating ? 6 : 0;

  for (int i = 1; i < nb; ++i) {
    const RbdBody& b = model.bodies[i];
    const double qi = s.q[i - 1];
    const Mat3 joint_rot = Eigen::AngleAxisd(qi, b.joint_axis).toRotationMatrix();
    kin.X_up[i].E = joint_rot.transpose();
    kin.X_up[i].r = b.joint_origin;
    kin.R_w[i] = kin.R_w[b.parent] * joint_rot;
    kin.p_w[i] = kin.p_w[b.parent] + kin.R_w[b.parent] * b.joint_origin;
    Vec6 vj = Vec6::Zero();
    vj.head<3>() = b.joint_axis * s.u[base_dofs + i - 1];
    kin.v[i] = kin.X_up[i].apply_motion(kin.v[b.parent]) + vj;
  }
  return kin;
}

inline Vec3 point_position_world(const RbdKinematics& kin, int body, const Vec3& local) {
  return kin.p_w[body] + kin.R_w[body] * local;
}

inline Vec3 point_velocity_world(const RbdKinematics& kin, int body, const Vec3& local) {
  const Vec6& v = kin.v[body];
  return kin.R_w[body] * (v.tail<3>() + v.head<3>().cross(local));
}

// 3 x nv world-frame Jacobian of a point attached to `body`.
inline MatX point_jacobian_world(const RigidBodyModel& model, const RbdKinematics& kin, int body,
                                 const Vec3& point_world) {
  MatX jac = MatX::Zero(3, model.nv());
  if (model.floating) {
    const Vec3 r_b = kin.R_w[0].transpose() * (point_world - kin.p_w[0]);
    for (int k = 0; k < 3; ++k)
      jac.col(k) = kin.R_w[0] * Vec3::Unit(k).cross(r_b);
    jac.block<3, 3>(0, 3) = kin.R_w[0];
  }
  for (int i = body; i > 0; i = model.bodies[i].parent) {
    const Vec3 axis_w = kin.R_w[i] * model.bodies[i].joint_axis;
    jac.col(model.dof_of_joint(i)) = axis_w.cross(point_world - kin.p_w[i]);
  }
  return jac;
}

// Accumulate J^T f for a world-frame force applied at a world point on `body`.
inline void add_point_force(const RigidBodyModel& model, const RbdKinematics& kin, int body,
                            const Vec3& point_world, const Vec3& force_world, VecX& gen_force) {
  if (model.floating) {
    const Vec3 f_b = kin.R_w[0].transpose() * force_world;
    const Vec3 r_b = kin.R_w[0].transpose() * (point_world - kin.p_w[0]);
    gen_force.head<3>() += r_b.cross(f_b);
    gen_force.segment<3>(3) += f_b;
  }
  for (int i = body; i > 0; i = model.bodies[i].parent) {
    const Vec3 axis_w = kin.R_w[i] * model.bodies[i].joint_axis;
    gen_force[model.dof_of_joint(i)] += axis_w.dot((point_world - kin.p_w[i]).cross(force_world));
  }
}

// Recursive Newton-Euler: generalized forces that realize the acceleration
// `udot` at state (q, u) under gravity. udot may be zero to get the bias term.
// Gravity enters through the classic fictitious base acceleration.
inline VecX rnea(const RigidBodyModel& model, const RbdState& s, const RbdKinematics& kin,
                 const VecX& udot, const Vec3& gravity_w) {
  const int nb = int(model.bodies.size());
  const int base_dofs = model.floating ? 6 : 0;
  std::vector<Vec6> a(nb), f(nb);

  Vec6 a0 = Vec6::Zero();
  a0.tail<3>() = -(kin.R_w[0].transpose() * gravity_w);
  if (model.floating) a0 += udot.head<6>();
  a[0] = a0;

  for (int i = 1; i < nb; ++i) {
    const RbdBody& b = model.bodies[i];
    Vec6 sj = Vec6::Zero();
    sj.head<3>() = b.joint_axis;
    a[i] = kin.X_up[i].apply_motion(a[b.parent]) + sj * udot[base_dofs + i - 1] +
           cross_motion(kin.v[i], sj * s.u[base_dofs + i - 1]);
  }
  for (int i = 0; i < nb; ++i) {
    const SpatialInertia inertia =
        SpatialInertia::from_com(model.bodies[i].mass, model.bodies[i].com,
                                 model.bodies[i].inertia_com);
    f[i] = inertia.apply(a[i]) + cross_force(kin.v[i], inertia.apply(kin.v[i]));
  }
  VecX tau = VecX::Zero(model.nv());
  for (int i = nb - 1; i >= 1; --i) {
    tau[base_dofs + i - 1] = model.bodies[i].joint_axis.dot(f[i].head<3>());
    f[model.bodies[i].parent] += kin.X_up[i].inv_apply_force(f[i]);
  }
  if (model.floating) tau.head<6>() = f[0];
  return tau;
}

// Composite-rigid-body mass matrix in the [base; joints] coordinates.
inline MatX crba(const RigidBodyModel& model, const RbdKinematics& kin) {
  const int nb = int(model.bodies.size());
  std::vector<Mat6> ic(nb);
  for (int i = 0; i < nb; ++i)
    ic[i] = SpatialInertia::from_com(model.bodies[i].mass, model.bodies[i].com,
                                     model.bodies[i].inertia_com)
                .matrix();
  for (int i = nb - 1; i >= 1; --i) {
    const Mat6 x = kin.X_up[i].motion_matrix();
    ic[model.bodies[i].parent] += x.transpose() * ic[i] * x;
  }
  MatX m = MatX::Zero(model.nv(), model.nv());
  if (model.floating) m.topLeftCorner<6, 6>() = ic[0];
  for (int i = 1; i < nb; ++i) {
    Vec6 sj = Vec6::Zero();
    sj.head<3>() = model.bodies[i].joint_axis;
    Vec6 fc = ic[i] * sj;
    const int di = model.dof_of_joint(i);
    m(di, di) = sj.dot(fc);
    int j = i;
    while (model.bodies[j].parent >= 1) {
      fc = kin.X_up[j].inv_apply_force(fc);
      j = model.bodies[j].parent;
      Vec6 spj = Vec6::Zero();
      spj.head<3>() = model.bodies[j].joint_axis;
      const int dj = model.dof_of_joint(j);
      m(di, dj) = m(dj, di) = spj.dot(fc);
    }
    if (model.floating) {
      fc = kin.X_up[j].inv_apply_force(fc);
      m.block<6, 1>(0, di) = fc;
      m.block<1, 6>(di, 0) = fc.transpose();
    }
  }
  return m;
}

struct PointForce {
  int body = 0;
  Vec3 point_world = Vec3::Zero();
  Vec3 force_world = Vec3::Zero();
};

// Solves M(q) udot = tau_applied + J^T f_ext - h(q, u).
inline VecX forward_dynamics(const RigidBodyModel& model, const RbdState& s,
                             const RbdKinematics& kin, const VecX& tau_joints,
                             std::span<const PointForce> external, const Vec3& gravity_w) {
  const int base_dofs = model.floating ? 6 : 0;
  VecX rhs = -rnea(model, s, kin, VecX::Zero(model.nv()), gravity_w);
  rhs.tail(model.nj()) += tau_joints;
  for (const auto& pf : external)
    add_point_force(model, kin, pf.body, pf.point_world, pf.force_world, rhs);
  (void)base_dofs;
  const MatX m = crba(model, kin);
  Eigen::LDLT<MatX> ldlt(m);
  if (ldlt.info() != Eigen::Success)
    throw SimFault("forward_dynamics: mass matrix factorization failed");
  const VecX udot = ldlt.solve(rhs);
  if (!udot.allFinite()) throw SimFault("forward_dynamics: non-finite acceleration");
  return udot;
}

inline Vec3 linear_momentum(const RigidBodyModel& model, const RbdKinematics& kin) {
  Vec3 p = Vec3::Zero();
  for (size_t i = 0; i < model.bodies.size(); ++i)
    p += model.bodies[i].mass *
         point_velocity_world(kin, int(i), model.bodies[i].com);
  return p;
}

inline double kinetic_energy(const RigidBodyModel& model, const RbdKinematics& kin) {
  double e = 0.0;
  for (size_t i = 0; i < model.bodies.size(); ++i) {
    const SpatialInertia inertia = SpatialInertia::from_com(
        model.bodies[i].mass, model.bodies[i].com, model.bodies[i].inertia_com);
    e += 0.5 * kin.v[i].dot(inertia.apply(kin.v[i]));
  }
  return e;
}

inline double potential_energy(const RigidBodyModel& model, const RbdKinematics& kin,
                               const Vec3& gravity_w) {
  double e = 0.0;
  for (size_t i = 0; i < model.bodies.size(); ++i)
    e -= model.bodies[i].mass *
         gravity_w.dot(point_position_world(kin, int(i), model.bodies[i].com));
  return e;
}

inline Vec3 com_world(const RigidBodyModel& model, const RbdKinematics& kin) {
  Vec3 c = Vec3::Zero();
  for (size_t i = 0; i < model.bodies.size(); ++i)
    c += model.bodies[i].mass * point_position_world(kin, int(i), model.bodies[i].com);
  return c / model.total_mass();
}

}  // namespace mml
