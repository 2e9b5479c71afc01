#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mml/core.hpp"
#include "mml/rng.hpp"

namespace mml {

// Quadruped layout contract used throughout:
//   links[0] = base; for leg L in {0:FL, 1:FR, 2:HL, 3:HR}:
//     links[1+3L] = hip, links[2+3L] = thigh, links[3+3L] = calf.
//   joints[3L+0] = hip abduction (base -> hip,   axis x)
//   joints[3L+1] = hip extension (hip  -> thigh, axis y)
//   joints[3L+2] = knee          (thigh -> calf, axis y)
// Thigh and calf boxes span z in [-dims.z, 0] of their frame; the point foot
// sits at (0, 0, -calf.dims.z) in the calf frame.

enum class LinkType { base, hip, thigh, calf };

inline const char* to_string(LinkType t) {
  switch (t) {
    case LinkType::base: return "base";
    case LinkType::hip: return "hip";
    case LinkType::thigh: return "thigh";
    case LinkType::calf: return "calf";
  }
  return "?";
}

inline LinkType link_type_from_string(const std::string& s) {
  if (s == "base") return LinkType::base;
  if (s == "hip") return LinkType::hip;
  if (s == "thigh") return LinkType::thigh;
  if (s == "calf") return LinkType::calf;
  throw ParseError("unknown link type '" + s + "'");
}

constexpr int kNumLegs = 4;
constexpr int kNumLinks = 13;
constexpr int kNumJoints = 12;
inline const char* kLegNames[kNumLegs] = {"FL", "FR", "HL", "HR"};

struct LinkSpec {
  std::string name;
  LinkType type = LinkType::base;
  Vec3 dims = Vec3::Zero();       // box edge lengths [l_x, l_y, l_z], m
  double mass = 0.0;              // kg
  Mat3 inertia = Mat3::Zero();    // about COM, link frame, kg m^2
  Vec3 com_offset = Vec3::Zero(); // COM position in link frame, m
};

struct JointSpec {
  std::string name;
  int parent = -1;                     // link index
  int child = -1;                      // link index
  Vec3 axis = Vec3::UnitZ();           // unit, child-frame == joint-frame
  Vec3 origin_in_parent = Vec3::Zero();
  double pos_lo = 0.0, pos_hi = 0.0;   // rad
  double vel_limit = 0.0;              // rad/s
  double torque_limit = 0.0;           // N m
};

// Per-link-type scale record [s_x, s_y, s_z, s_m]; hips stay at identity.
struct ScaleFactors {
  Vec4 base = Vec4::Ones();
  Vec4 hip = Vec4::Ones();
  Vec4 thigh = Vec4::Ones();
  Vec4 calf = Vec4::Ones();

  const Vec4& of(LinkType t) const {
    switch (t) {
      case LinkType::base: return base;
      case LinkType::hip: return hip;
      case LinkType::thigh: return thigh;
      case LinkType::calf: return calf;
    }
    return hip;
  }
};

struct MorphologyTemplate {
  std::string id;
  int version = 1;
  std::vector<LinkSpec> links;    // 13, layout as above
  std::vector<JointSpec> joints;  // 12
  std::array<double, kNumJoints> nominal_pose{};  // rad
};

struct RobotMorphology {
  std::string template_id;
  uint64_t seed = 0;
  ScaleFactors scale_factors;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  std::array<double, kNumJoints> default_pose{};
  double h_ref = 0.0;  // nominal base height above ground, m

  std::string name() const { return template_id + "-s" + std::to_string(seed); }

  int hip_link(int leg) const { return 1 + 3 * leg; }
  int thigh_link(int leg) const { return 2 + 3 * leg; }
  int calf_link(int leg) const { return 3 + 3 * leg; }
  const JointSpec& abduction_joint(int leg) const { return joints[3 * leg + 0]; }
  const JointSpec& hip_extension_joint(int leg) const { return joints[3 * leg + 1]; }
  const JointSpec& knee_joint(int leg) const { return joints[3 * leg + 2]; }

  // Distance hip-extension joint -> knee joint along the thigh.
  double thigh_length(int leg) const { return knee_joint(leg).origin_in_parent.norm(); }
  // Distance knee joint -> point foot.
  double calf_length(int leg) const { return links[calf_link(leg)].dims.z(); }
  Vec3 foot_offset_in_calf(int leg) const { return Vec3(0, 0, -calf_length(leg)); }

  // Hip-extension joint position in the base frame at zero abduction angle.
  Vec3 hip_extension_origin_in_base(int leg) const {
    return abduction_joint(leg).origin_in_parent + hip_extension_joint(leg).origin_in_parent;
  }

  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links) m += l.mass;
    return m;
  }
};

enum class InertiaMode { physical, paper_verbatim };

// Box inertia from mass and edge lengths. `physical` zeroes the products of
// inertia (uniform cuboid about its COM); `paper_verbatim` fills the
// off-diagonals with m*l_i*l_j, kept only for fidelity testing since the
// resulting matrix is generally not positive-definite.
inline Mat3 cuboid_inertia(double mass, const Vec3& dims,
                           InertiaMode mode = InertiaMode::physical) {
  if (!(mass > 0.0) || !(dims.array() > 0.0).all())
    throw ConfigError("cuboid_inertia: mass and dims must be positive");
  const double lx = dims.x(), ly = dims.y(), lz = dims.z();
  Mat3 inertia = Mat3::Zero();
  inertia(0, 0) = mass * (ly * ly + lz * lz) / 12.0;
  inertia(1, 1) = mass * (lx * lx + lz * lz) / 12.0;
  inertia(2, 2) = mass * (lx * lx + ly * ly) / 12.0;
  if (mode == InertiaMode::paper_verbatim) {
    inertia(0, 1) = inertia(1, 0) = mass * lx * ly;
    inertia(0, 2) = inertia(2, 0) = mass * lx * lz;
    inertia(1, 2) = inertia(2, 1) = mass * ly * lz;
  }
  return inertia;
}

// Four uniform draws per randomized link type (base, thigh, calf in that
// order; x, y, z, m within each). Hip factors stay at identity.
inline ScaleFactors sample_scale_factors(Rng& rng, double lo = 0.5, double hi = 1.5) {
  if (!(lo > 0.0) || lo > hi)
    throw ConfigError("sample_scale_factors: need 0 < lo <= hi");
  ScaleFactors s;
  auto draw4 = [&] {
    Vec4 v;
    for (int i = 0; i < 4; ++i) v[i] = rng.uniform(lo, hi);
    return v;
  };
  s.base = draw4();
  s.thigh = draw4();
  s.calf = draw4();
  s.hip = Vec4::Ones();
  return s;
}

inline LinkSpec scale_link(const LinkSpec& link, const Vec4& s,
                           InertiaMode mode = InertiaMode::physical) {
  if (!(s.array() > 0.0).all())
    throw ConfigError("scale_link: factors must be positive");
  LinkSpec out = link;
  out.dims = link.dims.cwiseProduct(s.head<3>());
  out.mass = link.mass * s[3];
  out.inertia = cuboid_inertia(out.mass, out.dims, mode);
  out.com_offset = link.com_offset.cwiseProduct(s.head<3>());
  return out;
}

// Joint origins scale componentwise by the *parent* link's spatial factors.
inline std::vector<JointSpec> reposition_joints(const MorphologyTemplate& tpl,
                                                const ScaleFactors& s) {
  std::vector<JointSpec> out = tpl.joints;
  for (auto& j : out) {
    const Vec4& f = s.of(tpl.links[j.parent].type);
    j.origin_in_parent = j.origin_in_parent.cwiseProduct(f.head<3>());
  }
  return out;
}

struct DefaultPoseSolution {
  std::array<double, kNumJoints> pose;
  double h_ref;
};

// Planar two-link IK per leg: abduction 0, foot at horizontal offset 0 and
// depth extension_ratio * (L_thigh + L_calf) below the hip-extension joint.
// Knee bend direction follows the sign of the template's nominal calf angle.
inline DefaultPoseSolution solve_default_pose(const RobotMorphology& morph,
                                              double extension_ratio,
                                              const std::array<double, kNumJoints>& nominal_pose) {
  if (!(extension_ratio > 0.0 && extension_ratio < 1.0))
    throw ConfigError("solve_default_pose: extension_ratio must be in (0, 1)");
  DefaultPoseSolution sol{};
  double depth = 0.0;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const double a = morph.thigh_length(leg);
    const double b = morph.calf_length(leg);
    if (!(a > 0.0 && b > 0.0))
      throw ConfigError("solve_default_pose: non-positive leg link length");
    const double reach = extension_ratio * (a + b);
    const double cos_knee = (reach * reach - a * a - b * b) / (2.0 * a * b);
    if (cos_knee < -1.0 || cos_knee > 1.0)
      throw SimFault("solve_default_pose: unreachable extension");
    const double bend = nominal_pose[3 * leg + 2] >= 0.0 ? 1.0 : -1.0;
    const double knee = bend * std::acos(cos_knee);
    const double thigh = std::atan2(-b * std::sin(knee), a + b * std::cos(knee));
    sol.pose[3 * leg + 0] = 0.0;
    sol.pose[3 * leg + 1] = thigh;
    sol.pose[3 * leg + 2] = knee;
    depth = reach;  // identical across legs of one morphology by construction
  }
  sol.h_ref = depth;
  return sol;
}

// Abduction + planar two-link IK: joint angles placing the foot at a target
// expressed in the base frame. Unreachable targets are stretched to the leg's
// reach; outputs are clamped to the joint limits. Knee bend direction follows
// the sign of the morphology's default pose.
inline Vec3 leg_ik(const RobotMorphology& morph, int leg, const Vec3& foot_in_base) {
  const JointSpec& abd = morph.abduction_joint(leg);
  const JointSpec& hip = morph.hip_extension_joint(leg);
  const Vec3 p = foot_in_base - abd.origin_in_parent;
  const double d = hip.origin_in_parent.y();  // lateral hip offset, signed

  // Abduction about x: pick theta with (R_x(theta)^T p).y == d, nearest zero.
  const double a = p.y(), b = p.z(), r = std::hypot(a, b);
  double theta = 0.0;
  if (r > 1e-12) {
    const double c = clamp(d / r, -1.0, 1.0);
    const double phi0 = std::atan2(b, a);
    const double delta = std::acos(c);
    const double cand1 = phi0 + delta, cand2 = phi0 - delta;
    auto wrap = [](double x) {
      while (x > kPi) x -= 2 * kPi;
      while (x < -kPi) x += 2 * kPi;
      return x;
    };
    theta = std::abs(wrap(cand1)) <= std::abs(wrap(cand2)) ? wrap(cand1) : wrap(cand2);
  }
  const Vec3 p_leg = rot_x(theta).transpose() * p - hip.origin_in_parent;

  const double lt = morph.thigh_length(leg);
  const double lc = morph.calf_length(leg);
  double r2 = p_leg.x() * p_leg.x() + p_leg.z() * p_leg.z();
  r2 = clamp(r2, square(std::abs(lt - lc) + 1e-9), square(lt + lc - 1e-9));
  const double cos_knee = clamp((r2 - lt * lt - lc * lc) / (2.0 * lt * lc), -1.0, 1.0);
  const double bend = morph.default_pose[3 * leg + 2] >= 0.0 ? 1.0 : -1.0;
  const double knee = bend * std::acos(cos_knee);
  const double thigh = std::atan2(-p_leg.x(), -p_leg.z()) +
                       std::atan2(-lc * std::sin(knee), lt + lc * std::cos(knee));

  Vec3 q(theta, thigh, knee);
  for (int k = 0; k < 3; ++k)
    q[k] = clamp(q[k], morph.joints[3 * leg + k].pos_lo, morph.joints[3 * leg + k].pos_hi);
  return q;
}

// Foot position in the base frame at a given pose; plain chain walk.
inline Vec3 foot_position_in_base(const RobotMorphology& morph, int leg,
                                  const std::array<double, kNumJoints>& pose) {
  const JointSpec& abd = morph.abduction_joint(leg);
  const JointSpec& hip = morph.hip_extension_joint(leg);
  const JointSpec& knee = morph.knee_joint(leg);
  const Mat3 r_abd = Eigen::AngleAxisd(pose[3 * leg + 0], abd.axis).toRotationMatrix();
  const Mat3 r_hip = Eigen::AngleAxisd(pose[3 * leg + 1], hip.axis).toRotationMatrix();
  const Mat3 r_knee = Eigen::AngleAxisd(pose[3 * leg + 2], knee.axis).toRotationMatrix();
  const Vec3 p_hip = abd.origin_in_parent + r_abd * hip.origin_in_parent;
  const Mat3 r_th = r_abd * r_hip;
  const Vec3 p_knee = p_hip + r_th * knee.origin_in_parent;
  return p_knee + r_th * r_knee * morph.foot_offset_in_calf(leg);
}

struct MorphGenOptions {
  double scale_lo = 0.5;
  double scale_hi = 1.5;
  double extension_ratio = 0.85;
  InertiaMode inertia_mode = InertiaMode::physical;
};

inline RobotMorphology generate_morphology(const MorphologyTemplate& tpl, uint64_t seed,
                                           const MorphGenOptions& opt = {}) {
  Rng rng(splitmix64(seed));
  RobotMorphology morph;
  morph.template_id = tpl.id;
  morph.seed = seed;
  morph.scale_factors = sample_scale_factors(rng, opt.scale_lo, opt.scale_hi);
  morph.links.reserve(tpl.links.size());
  for (const auto& link : tpl.links)
    morph.links.push_back(scale_link(link, morph.scale_factors.of(link.type), opt.inertia_mode));
  morph.joints = reposition_joints(tpl, morph.scale_factors);
  const auto sol = solve_default_pose(morph, opt.extension_ratio, tpl.nominal_pose);
  morph.default_pose = sol.pose;
  morph.h_ref = sol.h_ref;
  return morph;
}

inline std::vector<RobotMorphology> generate_population(
    const std::vector<MorphologyTemplate>& templates, int count, uint64_t seed,
    const MorphGenOptions& opt = {}) {
  if (templates.empty()) throw ConfigError("generate_population: no templates");
  if (count <= 0 || count % int(templates.size()) != 0)
    throw ConfigError("generate_population: count " + std::to_string(count) +
                      " not divisible by " + std::to_string(templates.size()) + " templates");
  std::vector<RobotMorphology> out;
  out.reserve(count);
  const int per = count / int(templates.size());
  for (size_t t = 0; t < templates.size(); ++t)
    for (int i = 0; i < per; ++i)
      out.push_back(generate_morphology(templates[t],
                                        splitmix64(seed ^ splitmix64(t * 100003 + i)), opt));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: native JSON (bit-exact round trip) and URDF export.

namespace detail {

inline nlohmann::json vec_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline nlohmann::json vec4_to_json(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Vec4 vec4_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ParseError(where + ": expected 4-array");
  return Vec4(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

inline nlohmann::json mat3_to_json(const Mat3& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

inline Mat3 mat3_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 9) throw ParseError(where + ": expected 9-array (row major)");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[3 * r + c].get<double>();
  return m;
}

inline nlohmann::json link_to_json(const LinkSpec& l) {
  return {{"name", l.name},
          {"type", to_string(l.type)},
          {"dims_m", vec_to_json(l.dims)},
          {"mass_kg", l.mass},
          {"inertia_kgm2", mat3_to_json(l.inertia)},
          {"com_offset_m", vec_to_json(l.com_offset)}};
}

inline LinkSpec link_from_json(const nlohmann::json& j, const std::string& where) {
  LinkSpec l;
  try {
    l.name = j.at("name").get<std::string>();
    l.type = link_type_from_string(j.at("type").get<std::string>());
    l.dims = vec3_from_json(j.at("dims_m"), where + ".dims_m");
    l.mass = j.at("mass_kg").get<double>();
    l.inertia = mat3_from_json(j.at("inertia_kgm2"), where + ".inertia_kgm2");
    l.com_offset = vec3_from_json(j.at("com_offset_m"), where + ".com_offset_m");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return l;
}

inline nlohmann::json joint_to_json(const JointSpec& j) {
  return {{"name", j.name},
          {"parent", j.parent},
          {"child", j.child},
          {"axis", vec_to_json(j.axis)},
          {"origin_in_parent_m", vec_to_json(j.origin_in_parent)},
          {"pos_limits_rad", {j.pos_lo, j.pos_hi}},
          {"vel_limit_rad_per_s", j.vel_limit},
          {"torque_limit_Nm", j.torque_limit}};
}

inline JointSpec joint_from_json(const nlohmann::json& j, const std::string& where) {
  JointSpec out;
  try {
    out.name = j.at("name").get<std::string>();
    out.parent = j.at("parent").get<int>();
    out.child = j.at("child").get<int>();
    out.axis = vec3_from_json(j.at("axis"), where + ".axis");
    out.origin_in_parent = vec3_from_json(j.at("origin_in_parent_m"), where + ".origin_in_parent_m");
    const auto& lim = j.at("pos_limits_rad");
    if (!lim.is_array() || lim.size() != 2) throw ParseError(where + ".pos_limits_rad: expected 2-array");
    out.pos_lo = lim[0].get<double>();
    out.pos_hi = lim[1].get<double>();
    out.vel_limit = j.at("vel_limit_rad_per_s").get<double>();
    out.torque_limit = j.at("torque_limit_Nm").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return out;
}

}  // namespace detail

inline std::string export_morphology(const RobotMorphology& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["template_id"] = m.template_id;
  j["seed"] = m.seed;
  j["scale_factors"] = {{"base", detail::vec4_to_json(m.scale_factors.base)},
                        {"hip", detail::vec4_to_json(m.scale_factors.hip)},
                        {"thigh", detail::vec4_to_json(m.scale_factors.thigh)},
                        {"calf", detail::vec4_to_json(m.scale_factors.calf)}};
  j["links"] = nlohmann::json::array();
  for (const auto& l : m.links) j["links"].push_back(detail::link_to_json(l));
  j["joints"] = nlohmann::json::array();
  for (const auto& jt : m.joints) j["joints"].push_back(detail::joint_to_json(jt));
  j["default_pose"] = m.default_pose;
  j["h_ref"] = m.h_ref;
  return j.dump(2) + "\n";
}

inline RobotMorphology import_morphology(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("morphology: ") + e.what());
  }
  RobotMorphology m;
  try {
    if (j.at("format_version").get<int>() != 1)
      throw VersionError("morphology: unsupported format_version");
    m.template_id = j.at("template_id").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    const auto& sf = j.at("scale_factors");
    m.scale_factors.base = detail::vec4_from_json(sf.at("base"), "scale_factors.base");
    m.scale_factors.hip = detail::vec4_from_json(sf.at("hip"), "scale_factors.hip");
    m.scale_factors.thigh = detail::vec4_from_json(sf.at("thigh"), "scale_factors.thigh");
    m.scale_factors.calf = detail::vec4_from_json(sf.at("calf"), "scale_factors.calf");
    int i = 0;
    for (const auto& lj : j.at("links"))
      m.links.push_back(detail::link_from_json(lj, "links[" + std::to_string(i++) + "]"));
    i = 0;
    for (const auto& jj : j.at("joints"))
      m.joints.push_back(detail::joint_from_json(jj, "joints[" + std::to_string(i++) + "]"));
    const auto& dp = j.at("default_pose");
    if (!dp.is_array() || dp.size() != kNumJoints)
      throw ParseError("default_pose: expected 12-array");
    for (int k = 0; k < kNumJoints; ++k) m.default_pose[k] = dp[k].get<double>();
    m.h_ref = j.at("h_ref").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("morphology: ") + e.what());
  }
  if (m.links.size() != kNumLinks || m.joints.size() != kNumJoints)
    throw ParseError("morphology: expected 13 links and 12 joints");
  return m;
}

inline MorphologyTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  MorphologyTemplate tpl;
  try {
    tpl.id = j.at("id").get<std::string>();
    tpl.version = j.at("version").get<int>();
    int i = 0;
    for (const auto& lj : j.at("links"))
      tpl.links.push_back(detail::link_from_json(lj, "links[" + std::to_string(i++) + "]"));
    i = 0;
    for (const auto& jj : j.at("joints"))
      tpl.joints.push_back(detail::joint_from_json(jj, "joints[" + std::to_string(i++) + "]"));
    const auto& np = j.at("nominal_pose");
    if (!np.is_array() || np.size() != kNumJoints)
      throw ParseError("nominal_pose: expected 12-array");
    for (int k = 0; k < kNumJoints; ++k) tpl.nominal_pose[k] = np[k].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (tpl.links.size() != kNumLinks || tpl.joints.size() != kNumJoints)
    throw ParseError(path + ": expected 13 links and 12 joints");
  return tpl;
}

// Standard URDF with box geometry; 13 link and 12 joint elements.
inline std::string export_urdf(const RobotMorphology& m) {
  std::ostringstream os;
  os.precision(17);
  os << "<?xml version=\"1.0\"?>\n<robot name=\"" << m.name() << "\">\n";
  for (const auto& l : m.links) {
    os << "  <link name=\"" << l.name << "\">\n"
       << "    <inertial>\n"
       << "      <origin xyz=\"" << l.com_offset.x() << " " << l.com_offset.y() << " "
       << l.com_offset.z() << "\" rpy=\"0 0 0\"/>\n"
       << "      <mass value=\"" << l.mass << "\"/>\n"
       << "      <inertia ixx=\"" << l.inertia(0, 0) << "\" ixy=\"" << l.inertia(0, 1)
       << "\" ixz=\"" << l.inertia(0, 2) << "\" iyy=\"" << l.inertia(1, 1) << "\" iyz=\""
       << l.inertia(1, 2) << "\" izz=\"" << l.inertia(2, 2) << "\"/>\n"
       << "    </inertial>\n";
    for (const char* tag : {"visual", "collision"}) {
      os << "    <" << tag << ">\n"
         << "      <origin xyz=\"" << l.com_offset.x() << " " << l.com_offset.y() << " "
         << l.com_offset.z() << "\" rpy=\"0 0 0\"/>\n"
         << "      <geometry><box size=\"" << l.dims.x() << " " << l.dims.y() << " "
         << l.dims.z() << "\"/></geometry>\n"
         << "    </" << tag << ">\n";
    }
    os << "  </link>\n";
  }
  for (const auto& j : m.joints) {
    os << "  <joint name=\"" << j.name << "\" type=\"revolute\">\n"
       << "    <parent link=\"" << m.links[j.parent].name << "\"/>\n"
       << "    <child link=\"" << m.links[j.child].name << "\"/>\n"
       << "    <origin xyz=\"" << j.origin_in_parent.x() << " " << j.origin_in_parent.y() << " "
       << j.origin_in_parent.z() << "\" rpy=\"0 0 0\"/>\n"
       << "    <axis xyz=\"" << j.axis.x() << " " << j.axis.y() << " " << j.axis.z() << "\"/>\n"
       << "    <limit lower=\"" << j.pos_lo << "\" upper=\"" << j.pos_hi << "\" velocity=\""
       << j.vel_limit << "\" effort=\"" << j.torque_limit << "\"/>\n"
       << "  </joint>\n";
  }
  os << "</robot>\n";
  return os.str();
}

}  // namespace mml
