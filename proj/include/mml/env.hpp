#pragma once

#include <limits>
#include <memory>
#include <vector>

#include "mml/gait.hpp"
#include "mml/sim.hpp"

namespace mml {

// Fixed 56-dim observation layout, versioned. All vectors are expressed in
// the base (body) frame, which makes the observation heading-invariant; the
// projected gravity component carries the pitch/roll information.
struct ObservationLayout {
  static constexpr int kVersion = 1;
  static constexpr int kDim = 56;
  static constexpr int kJointPos = 0;      // 12
  static constexpr int kJointVel = 12;     // 12
  static constexpr int kHeight = 24;       // 1
  static constexpr int kLinVel = 25;       // 3
  static constexpr int kAngVel = 28;       // 3
  static constexpr int kGravity = 31;      // 3
  static constexpr int kVCmd = 34;         // 1
  static constexpr int kOmegaCmd = 35;     // 1
  static constexpr int kCosPhase = 36;     // 4
  static constexpr int kSinPhase = 40;     // 4
  static constexpr int kPrevAction = 44;   // 12
};

using Observation = VecX;  // ObservationLayout::kDim entries

// Appendix-table sensitivities; non-scalar entries in forward-vertical-
// sideways order.
struct RewardConfig {
  double sigma_height = 0.05;
  Vec3 sigma_velocity = Vec3(0.3, 0.1, 0.3);
  double sigma_yaw_rate = 0.5;
  Vec3 sigma_feet_position = Vec3(0.3, 0.05, 0.3);
  double sigma_action_rate = 1.5;
  double sigma_slip = 0.1;
  double sigma_pitch_roll = 0.5;

  void validate() const {
    if (!(sigma_height > 0) || !(sigma_velocity.array() > 0).all() || !(sigma_yaw_rate > 0) ||
        !(sigma_feet_position.array() > 0).all() || !(sigma_action_rate > 0) ||
        !(sigma_slip > 0) || !(sigma_pitch_roll > 0))
      throw ConfigError("reward: sensitivities must be positive");
  }
};

struct RewardBreakdown {
  double height = 1.0;
  double velocity = 1.0;
  double yaw_rate = 1.0;
  double feet_position = 1.0;
  double action_rate = 1.0;
  double slip = 1.0;
  double pitch_roll = 1.0;

  double imitation() const { return height * velocity * feet_position * yaw_rate; }
  double regularization() const { return action_rate * slip * pitch_roll; }
  // Floored at the smallest normal double so the (0, 1] range survives
  // underflow for extreme errors.
  double total() const {
    return std::max(imitation() * regularization(), std::numeric_limits<double>::min());
  }
};

template <typename VA, typename VB, typename VS>
double rbf_kernel(const Eigen::MatrixBase<VA>& actual, const Eigen::MatrixBase<VB>& reference,
                  const Eigen::MatrixBase<VS>& sigma) {
  if (actual.size() != reference.size() || actual.size() != sigma.size())
    throw ConfigError("rbf_kernel: shape mismatch");
  const double n2 = ((actual - reference).array() / sigma.array()).matrix().squaredNorm();
  return std::max(std::exp(-n2), std::numeric_limits<double>::min());
}

inline double rbf_kernel(double actual, double reference, double sigma) {
  return std::max(std::exp(-square((actual - reference) / sigma)),
                  std::numeric_limits<double>::min());
}

enum class EpisodeStatus { running, collapsed, timeout };

struct EnvConfig {
  int episode_length = 128;     // H, control ticks
  int meta_episode_length = 5;  // K
  Vec2 v_cmd_range = {-0.5, 1.0};
  Vec2 omega_cmd_range = {-0.6, 0.6};
  double action_scale = 0.5;  // rad around the default pose
  GaitSpec gait = GaitSpec::trot();

  void validate() const {
    if (episode_length < 1 || meta_episode_length < 1)
      throw ConfigError("env: episode_length and meta_episode_length must be >= 1");
    if (!(v_cmd_range[0] <= v_cmd_range[1]) || !(omega_cmd_range[0] <= omega_cmd_range[1]))
      throw ConfigError("env: command range lo > hi");
    if (!(action_scale > 0)) throw ConfigError("env: action_scale must be > 0");
    gait.validate();
  }
};

// Inputs to the reward, gathered once per tick so the computation itself is a
// pure function (unit-testable without a simulator).
struct RewardInputs {
  double base_height = 0.0;           // above terrain
  Vec3 base_vel_world = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;              // world z
  double pitch = 0.0;
  double roll = 0.0;
  Vec3 base_pos = Vec3::Zero();
  std::array<Vec3, kNumLegs> foot_pos;        // world
  std::array<Vec3, kNumLegs> foot_vel;        // world
  std::array<bool, kNumLegs> foot_in_contact{};

  double ref_height = 0.0;
  Vec3 ref_vel_world = Vec3::Zero();
  double ref_yaw = 0.0;
  double ref_yaw_rate = 0.0;
  Vec3 ref_base_pos = Vec3::Zero();
  std::array<Vec3, kNumLegs> ref_foot_pos;    // world
};

inline RewardBreakdown compute_reward(const RewardInputs& in, const VecX& action,
                                      const VecX& prev_action, const RewardConfig& cfg) {
  RewardBreakdown r;
  r.height = rbf_kernel(in.base_height, in.ref_height, cfg.sigma_height);

  // Velocities compared in each frame's own yaw-aligned axes,
  // forward-vertical-sideways component order.
  const Mat3 yaw_t = rot_z(in.yaw).transpose();
  const Mat3 ref_yaw_t = rot_z(in.ref_yaw).transpose();
  const Vec3 v_local = yaw_t * in.base_vel_world;
  const Vec3 ref_v_local = ref_yaw_t * in.ref_vel_world;
  const Vec3 v_fvs(v_local.x(), v_local.z(), v_local.y());
  const Vec3 ref_v_fvs(ref_v_local.x(), ref_v_local.z(), ref_v_local.y());
  r.velocity = rbf_kernel(v_fvs, ref_v_fvs, cfg.sigma_velocity);

  r.yaw_rate = rbf_kernel(in.yaw_rate, in.ref_yaw_rate, cfg.sigma_yaw_rate);

  VecX feet(3 * kNumLegs), ref_feet(3 * kNumLegs), sigma_feet(3 * kNumLegs);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    const Vec3 p = yaw_t * (in.foot_pos[leg] - in.base_pos);
    const Vec3 p_ref = ref_yaw_t * (in.ref_foot_pos[leg] - in.ref_base_pos);
    feet.segment<3>(3 * leg) = Vec3(p.x(), p.z(), p.y());
    ref_feet.segment<3>(3 * leg) = Vec3(p_ref.x(), p_ref.z(), p_ref.y());
    sigma_feet.segment<3>(3 * leg) = cfg.sigma_feet_position;
  }
  r.feet_position = rbf_kernel(feet, ref_feet, sigma_feet);

  r.action_rate = rbf_kernel(action, prev_action, VecX::Constant(action.size(), cfg.sigma_action_rate));

  VecX slip = VecX::Zero(3 * kNumLegs);
  for (int leg = 0; leg < kNumLegs; ++leg)
    if (in.foot_in_contact[leg]) slip.segment<3>(3 * leg) = in.foot_vel[leg];
  r.slip = rbf_kernel(slip, VecX::Zero(slip.size()), VecX::Constant(slip.size(), cfg.sigma_slip));

  const Vec2 pitch_roll(in.pitch, in.roll);
  r.pitch_roll = rbf_kernel(pitch_roll, Vec2::Zero(), Vec2::Constant(cfg.sigma_pitch_roll));
  return r;
}

inline EpisodeStatus check_termination(const SimState& state, bool non_foot_contact, int tick,
                                       int episode_length) {
  if (!state.finite()) return EpisodeStatus::collapsed;
  if (non_foot_contact) return EpisodeStatus::collapsed;
  if (tick >= episode_length) return EpisodeStatus::timeout;
  return EpisodeStatus::running;
}

// Motion-imitation environment for one morphology. Owns the simulator, the
// active reference motion, and the per-episode randomization record.
class Env {
 public:
  Env(RobotMorphology morph, EnvConfig env_cfg, RewardConfig reward_cfg, SimParams sim_params,
      RandomizationConfig rand_cfg, uint64_t stream_seed)
      : morph_(std::move(morph)),
        cfg_(env_cfg),
        reward_cfg_(reward_cfg),
        sim_params_(sim_params),
        rand_cfg_(rand_cfg),
        sim_(Simulator::for_morphology(morph_, sim_params)),
        rng_(stream_seed) {
    cfg_.validate();
    reward_cfg_.validate();
    rand_cfg_.validate();
    default_pose_ = Eigen::Map<const VecX>(morph_.default_pose.data(), kNumJoints);
    prev_action_ = VecX::Zero(kNumJoints);
  }

  struct StepResult {
    Observation obs;
    double reward = 0.0;
    RewardBreakdown breakdown;
    EpisodeStatus status = EpisodeStatus::running;
  };

  // Reference-state initialization: sample a command, build its reference,
  // start from a uniformly drawn reference tick with IK-derived joint angles.
  Observation reset() {
    command_.v_cmd = rng_.uniform(cfg_.v_cmd_range[0], cfg_.v_cmd_range[1]);
    command_.omega_cmd = rng_.uniform(cfg_.omega_cmd_range[0], cfg_.omega_cmd_range[1]);
    return reset_with_command(command_, int(rng_.uniform_int(0, cfg_.episode_length - 1)));
  }

  Observation reset_with_command(const Command& cmd, int start_tick) {
    command_ = cmd;
    const double dt = sim_params_.dt_control;
    const double duration = (2 * cfg_.episode_length + 4) * dt;
    reference_ = generate_reference(morph_, command_, cfg_.gait, duration, {dt});
    start_tick_ = std::min(start_tick, cfg_.episode_length - 1);
    tick_ = 0;
    prev_action_.setZero();

    const EpisodeRandomization episode = randomize_episode(
        rng_, rand_cfg_, morph_.h_ref, cfg_.episode_length * dt, sim_params_.default_friction);

    SimState s;
    const int k0 = start_tick_;
    s.base_quat = Quat(Eigen::AngleAxisd(reference_.base_yaw[k0], Vec3::UnitZ()));
    s.base_vel_world = reference_.base_vel[k0];
    s.base_omega_body = Vec3(0, 0, reference_.yaw_rate[k0]);
    s.q = VecX::Zero(kNumJoints);
    const Mat3 yaw_t = s.base_quat.toRotationMatrix().transpose();
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const Vec3 foot_in_base = yaw_t * (reference_.foot_pos[k0][leg] - reference_.base_pos[k0]);
      s.q.segment<3>(3 * leg) = leg_ik(morph_, leg, foot_in_base);
    }
    s.qd = VecX::Zero(kNumJoints);
    s.held_target = s.q;
    s.time = 0.0;
    sim_.set_episode(episode);  // builds the terrain queried below
    s.base_pos = reference_.base_pos[k0];
    s.base_pos.z() += sim_.terrain_height_at(s.base_pos.x(), s.base_pos.y());
    // Preload the stance contacts with the robot's weight so the episode does
    // not open with a settling transient.
    int stance_count = 0;
    for (int leg = 0; leg < kNumLegs; ++leg) stance_count += reference_.contact[k0][leg];
    s.base_pos.z() -= sim_.model().total_mass() * kGravity /
                      (std::max(stance_count, 1) * sim_params_.contact_kn);
    sim_.reset(s);
    status_ = EpisodeStatus::running;
    return build_observation();
  }

  StepResult step(const VecX& action) {
    if (action.size() != kNumJoints) throw ConfigError("env: action must have 12 entries");
    StepResult out;
    VecX targets = default_pose_ + cfg_.action_scale * action;
    for (int j = 0; j < kNumJoints; ++j)
      targets[j] = clamp(targets[j], morph_.joints[j].pos_lo, morph_.joints[j].pos_hi);
    bool faulted = false;
    try {
      sim_.step_control_tick(targets);
    } catch (const SimFault&) {
      faulted = true;
    }
    ++tick_;
    const ContactReport contact = sim_.contact_report();
    if (faulted) {
      status_ = EpisodeStatus::collapsed;
      out.obs = Observation::Zero(ObservationLayout::kDim);
      out.reward = 0.0;
      out.status = status_;
      return out;
    }
    out.breakdown = compute_reward(gather_reward_inputs(contact), action, prev_action_,
                                   reward_cfg_);
    out.reward = out.breakdown.total();
    prev_action_ = action;
    status_ = check_termination(sim_.state(), contact.non_foot_contact, tick_,
                                cfg_.episode_length);
    out.obs = build_observation();
    out.status = status_;
    return out;
  }

  Observation build_observation() {
    const SimState& s = sim_.state();
    const Mat3 rot = s.base_quat.toRotationMatrix();
    const EpisodeRandomization& ep = sim_.episode();
    Observation obs(ObservationLayout::kDim);
    auto noise = [&](double scale) { return scale > 0 ? rng_.uniform(-scale, scale) : 0.0; };

    for (int j = 0; j < kNumJoints; ++j) {
      obs[ObservationLayout::kJointPos + j] = s.q[j] + noise(ep.noise_q);
      obs[ObservationLayout::kJointVel + j] = s.qd[j] + noise(ep.noise_qd);
    }
    const double terrain_h = sim_.terrain_height_at(s.base_pos.x(), s.base_pos.y());
    obs[ObservationLayout::kHeight] = s.base_pos.z() - terrain_h + noise(ep.noise_h);
    const Vec3 v_base = rot.transpose() * s.base_vel_world;
    const Vec3 g_base = rot.transpose() * Vec3(0, 0, -kGravity);
    for (int k = 0; k < 3; ++k) {
      obs[ObservationLayout::kLinVel + k] = v_base[k] + noise(ep.noise_v);
      obs[ObservationLayout::kAngVel + k] = s.base_omega_body[k] + noise(ep.noise_w);
      obs[ObservationLayout::kGravity + k] = g_base[k];
    }
    obs[ObservationLayout::kVCmd] = command_.v_cmd;
    obs[ObservationLayout::kOmegaCmd] = command_.omega_cmd;
    const double t_ref = (start_tick_ + tick_) * sim_params_.dt_control;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      const double phi = leg_phase(t_ref, cfg_.gait, leg);
      obs[ObservationLayout::kCosPhase + leg] = std::cos(phi);
      obs[ObservationLayout::kSinPhase + leg] = std::sin(phi);
    }
    for (int j = 0; j < kNumJoints; ++j)
      obs[ObservationLayout::kPrevAction + j] = prev_action_[j];
    return obs;
  }

  EpisodeStatus status() const { return status_; }
  int tick() const { return tick_; }
  const Command& command() const { return command_; }
  const RobotMorphology& morphology() const { return morph_; }
  const ReferenceMotion& reference() const { return reference_; }
  Simulator& simulator() { return sim_; }
  const Simulator& simulator() const { return sim_; }
  Rng& rng() { return rng_; }
  const EnvConfig& config() const { return cfg_; }
  int start_tick() const { return start_tick_; }

  nlohmann::json snapshot() const {
    return {{"sim", sim_.snapshot()},
            {"command", {command_.v_cmd, command_.omega_cmd}},
            {"tick", tick_},
            {"start_tick", start_tick_},
            {"prev_action", std::vector<double>(prev_action_.data(),
                                                prev_action_.data() + prev_action_.size())},
            {"status", int(status_)},
            {"rng", rng_.serialize()}};
  }

  void restore(const nlohmann::json& j) {
    command_.v_cmd = j.at("command")[0].get<double>();
    command_.omega_cmd = j.at("command")[1].get<double>();
    tick_ = j.at("tick").get<int>();
    start_tick_ = j.at("start_tick").get<int>();
    const auto pa = j.at("prev_action").get<std::vector<double>>();
    prev_action_ = Eigen::Map<const VecX>(pa.data(), pa.size());
    status_ = EpisodeStatus(j.at("status").get<int>());
    rng_.deserialize(j.at("rng").get<std::string>());
    const double dt = sim_params_.dt_control;
    reference_ = generate_reference(morph_, command_, cfg_.gait,
                                    (2 * cfg_.episode_length + 4) * dt, {dt});
    sim_.restore(j.at("sim"));
  }

 private:
  RewardInputs gather_reward_inputs(const ContactReport& contact) const {
    const SimState& s = sim_.state();
    const Mat3 rot = s.base_quat.toRotationMatrix();
    const EulerYpr euler = euler_ypr(rot);
    RewardInputs in;
    in.base_height = s.base_pos.z() - sim_.terrain_height_at(s.base_pos.x(), s.base_pos.y());
    in.base_vel_world = s.base_vel_world;
    in.yaw = euler.yaw;
    in.pitch = euler.pitch;
    in.roll = euler.roll;
    in.yaw_rate = (rot * s.base_omega_body).z();
    in.base_pos = s.base_pos;
    for (int leg = 0; leg < kNumLegs; ++leg) {
      in.foot_pos[leg] = contact.feet[leg].position;
      in.foot_vel[leg] = contact.feet[leg].velocity;
      in.foot_in_contact[leg] = contact.feet[leg].in_contact;
    }
    const int k = std::min(start_tick_ + tick_, reference_.size() - 1);
    in.ref_height = reference_.h_ref;
    in.ref_vel_world = reference_.base_vel[k];
    in.ref_yaw = reference_.base_yaw[k];
    in.ref_yaw_rate = reference_.yaw_rate[k];
    in.ref_base_pos = reference_.base_pos[k];
    in.ref_foot_pos = reference_.foot_pos[k];
    return in;
  }

  RobotMorphology morph_;
  EnvConfig cfg_;
  RewardConfig reward_cfg_;
  SimParams sim_params_;
  RandomizationConfig rand_cfg_;
  Simulator sim_;
  Rng rng_;
  VecX default_pose_;
  VecX prev_action_;
  Command command_;
  ReferenceMotion reference_;
  int tick_ = 0;
  int start_tick_ = 0;
  EpisodeStatus status_ = EpisodeStatus::running;
};

// Meta-episodic wrapper: episodes auto-reset on the same morphology; every
// K-th episode end is a meta boundary where the morphology is resampled (and
// the caller zeroes its recurrent state).
class MetaEnv {
 public:
  MetaEnv(std::shared_ptr<const std::vector<RobotMorphology>> population, EnvConfig env_cfg,
          RewardConfig reward_cfg, SimParams sim_params, RandomizationConfig rand_cfg,
          uint64_t stream_seed, int fixed_morph_index = -1)
      : population_(std::move(population)),
        env_cfg_(env_cfg),
        reward_cfg_(reward_cfg),
        sim_params_(sim_params),
        rand_cfg_(rand_cfg),
        morph_rng_(splitmix64(stream_seed ^ 0xabcdef12345678ULL)),
        env_seed_rng_(splitmix64(stream_seed ^ 0x1234567890abcdefULL)),
        fixed_morph_index_(fixed_morph_index) {
    if (population_->empty()) throw ConfigError("meta-env: empty population");
    morph_index_ = sample_morph_index();
    make_env();
    current_obs_ = env_->reset();
  }

  struct MetaStepResult {
    Observation obs;  // next observation (post-reset when done)
    double reward = 0.0;
    RewardBreakdown breakdown;
    EpisodeStatus status = EpisodeStatus::running;
    bool done = false;           // episode boundary
    bool meta_boundary = false;  // hidden state must be zeroed after this step
  };

  MetaStepResult step(const VecX& action) {
    MetaStepResult out;
    Env::StepResult r = env_->step(action);
    out.reward = r.reward;
    out.breakdown = r.breakdown;
    out.status = r.status;
    if (r.status == EpisodeStatus::running) {
      out.obs = std::move(r.obs);
    } else {
      out.done = true;
      ++episodes_in_meta_;
      if (episodes_in_meta_ >= env_cfg_.meta_episode_length) {
        out.meta_boundary = true;
        episodes_in_meta_ = 0;
        morph_index_ = sample_morph_index();
        make_env();
      }
      out.obs = env_->reset();
    }
    current_obs_ = out.obs;
    return out;
  }

  const Observation& current_obs() const { return current_obs_; }
  Env& env() { return *env_; }
  const Env& env() const { return *env_; }
  int morph_index() const { return morph_index_; }
  int episodes_in_meta() const { return episodes_in_meta_; }

  nlohmann::json snapshot() const {
    return {{"env", env_->snapshot()},
            {"morph_index", morph_index_},
            {"episodes_in_meta", episodes_in_meta_},
            {"morph_rng", morph_rng_.serialize()},
            {"env_seed_rng", env_seed_rng_.serialize()},
            {"current_obs", std::vector<double>(current_obs_.data(),
                                                current_obs_.data() + current_obs_.size())}};
  }

  void restore(const nlohmann::json& j) {
    morph_index_ = j.at("morph_index").get<int>();
    episodes_in_meta_ = j.at("episodes_in_meta").get<int>();
    morph_rng_.deserialize(j.at("morph_rng").get<std::string>());
    make_env();  // consumes a seed draw; the stream state is restored below
    env_seed_rng_.deserialize(j.at("env_seed_rng").get<std::string>());
    env_->restore(j.at("env"));
    const auto obs = j.at("current_obs").get<std::vector<double>>();
    current_obs_ = Eigen::Map<const VecX>(obs.data(), obs.size());
  }

 private:
  int sample_morph_index() {
    if (fixed_morph_index_ >= 0) return fixed_morph_index_;
    return int(morph_rng_.uniform_int(0, int(population_->size()) - 1));
  }

  void make_env() {
    env_.emplace((*population_)[morph_index_], env_cfg_, reward_cfg_, sim_params_, rand_cfg_,
                 env_seed_rng_.next_u64());
  }

  std::shared_ptr<const std::vector<RobotMorphology>> population_;
  EnvConfig env_cfg_;
  RewardConfig reward_cfg_;
  SimParams sim_params_;
  RandomizationConfig rand_cfg_;
  Rng morph_rng_;
  Rng env_seed_rng_;
  int fixed_morph_index_ = -1;
  int morph_index_ = 0;
  int episodes_in_meta_ = 0;
  std::optional<Env> env_;
  Observation current_obs_;
};

}  // namespace mml
