#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mml {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kGravity = 9.81;

// Error classes map to distinct CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : ConfigError {
  using ConfigError::ConfigError;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SimFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : ConfigError {
  using ConfigError::ConfigError;
};

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Positive fractional part; frac(-0.25) == 0.75.
inline double frac(double x) {
  double f = x - std::floor(x);
  return f >= 1.0 ? 0.0 : f;
}

inline double square(double x) { return x * x; }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

// Intrinsic yaw-pitch-roll (Z, then Y, then X) decomposition:
// R = rot_z(yaw) * rot_y(pitch) * rot_x(roll).
// The roll component is the paper-convention "theta_z" roll angle.
struct EulerYpr {
  double yaw;
  double pitch;
  double roll;
};

inline EulerYpr euler_ypr(const Mat3& r) {
  EulerYpr e;
  e.pitch = std::asin(clamp(-r(2, 0), -1.0, 1.0));
  if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
    e.yaw = std::atan2(r(1, 0), r(0, 0));
    e.roll = std::atan2(r(2, 1), r(2, 2));
  } else {
    // Gimbal lock: pitch at +-pi/2, fold roll into yaw.
    e.yaw = std::atan2(-r(0, 1), r(1, 1));
    e.roll = 0.0;
  }
  return e;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace mml
