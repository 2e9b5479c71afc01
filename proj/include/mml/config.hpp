#pragma once

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mml/env.hpp"
#include "mml/net.hpp"
#include "mml/rppo.hpp"

namespace mml {

// One flat JSON run configuration; defaults mirror the training-table values.
// Unknown fields are rejected, and every field can be overridden with
// MML_<SECTION>_<FIELD> environment variables (values parsed as JSON).
struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  std::string run_name = "run";
  std::string out_dir = "runs";
  int workers = 2;
  bool record = false;

  std::vector<std::string> template_paths;
  int train_count = 32;
  uint64_t train_seed = 1;
  int test_count = 40;
  uint64_t test_seed = 1001;
  MorphGenOptions morphgen;

  GaitSpec gait = GaitSpec::trot();
  double swing_height_ratio = 0.4;

  EnvConfig env;
  RewardConfig reward;
  SimParams sim;
  RandomizationConfig randomization;
  PolicyConfig policy;
  PpoConfig ppo;

  struct WalkEval {
    std::vector<double> speeds = {0.1, 0.2, 0.3, 0.4};
    double duration_s = 4.0;
    int episodes = 2000;
    bool deterministic = true;
    uint64_t seed = 99;
  } walk_eval;

  struct MassEval {
    std::vector<double> mass_scales = {0.8, 0.9, 1.1, 1.2};
    double duration_s = 8.0;
    double interval_s = 2.0;
    double speed = 0.3;
    int episodes = 2000;
    bool compounding = true;
    bool deterministic = true;
    uint64_t seed = 100;
  } mass_eval;

  struct Ablation {
    std::vector<std::string> architecture_grid = {"gru", "mlp", "mlp_history"};
    std::vector<int> train_set_sizes = {8, 32};
    std::vector<int> meta_k_grid = {1, 2, 5};
    std::vector<uint64_t> seeds = {0, 1, 2};
    int64_t budget = 3'000'000;
  } ablation;

  nlohmann::json resolved;  // exact snapshot written into every run directory

  static nlohmann::json default_json() {
    const RunConfig d;
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["run"] = {{"name", d.run_name},
                {"out_dir", d.out_dir},
                {"workers", d.workers},
                {"record", d.record}};
    j["templates"] = nlohmann::json::array();
    j["population"] = {{"train_count", d.train_count}, {"train_seed", d.train_seed},
                       {"test_count", d.test_count},   {"test_seed", d.test_seed},
                       {"scale_lo", d.morphgen.scale_lo}, {"scale_hi", d.morphgen.scale_hi},
                       {"extension_ratio", d.morphgen.extension_ratio}};
    j["gait"] = {{"cycle_duration", d.gait.cycle_duration},
                 {"duty_factor", d.gait.duty_factor},
                 {"phase_offsets", d.gait.phase_offsets},
                 {"swing_height_ratio", d.swing_height_ratio}};
    j["env"] = {{"episode_length", d.env.episode_length},
                {"meta_episode_length", d.env.meta_episode_length},
                {"v_cmd_range", {d.env.v_cmd_range[0], d.env.v_cmd_range[1]}},
                {"omega_cmd_range", {d.env.omega_cmd_range[0], d.env.omega_cmd_range[1]}},
                {"action_scale", d.env.action_scale}};
    j["reward"] = {{"sigma_height", d.reward.sigma_height},
                   {"sigma_velocity",
                    {d.reward.sigma_velocity[0], d.reward.sigma_velocity[1],
                     d.reward.sigma_velocity[2]}},
                   {"sigma_yaw_rate", d.reward.sigma_yaw_rate},
                   {"sigma_feet_position",
                    {d.reward.sigma_feet_position[0], d.reward.sigma_feet_position[1],
                     d.reward.sigma_feet_position[2]}},
                   {"sigma_action_rate", d.reward.sigma_action_rate},
                   {"sigma_slip", d.reward.sigma_slip},
                   {"sigma_pitch_roll", d.reward.sigma_pitch_roll}};
    j["sim"] = {{"dt_physics", d.sim.dt_physics},
                {"dt_pd", d.sim.dt_pd},
                {"dt_control", d.sim.dt_control},
                {"contact_kn", d.sim.contact_kn},
                {"contact_cn", d.sim.contact_cn},
                {"contact_kt", d.sim.contact_kt},
                {"friction", d.sim.default_friction},
                {"kp", d.sim.actuator.kp},
                {"kd", d.sim.actuator.kd},
                {"tau_max", d.sim.actuator.tau_max},
                {"latency", d.sim.actuator.latency}};
    const RandomizationConfig& r = d.randomization;
    j["randomization"] = {
        {"enabled", r.enabled},
        {"terrain_frequency", {r.terrain_frequency[0], r.terrain_frequency[1]}},
        {"terrain_height_m", {r.terrain_height_m[0], r.terrain_height_m[1]}},
        {"friction", {r.friction[0], r.friction[1]}},
        {"projected_gravity_mps2", {r.projected_gravity_mps2[0], r.projected_gravity_mps2[1]}},
        {"latency_s", {r.latency_s[0], r.latency_s[1]}},
        {"joint_pos_noise_rad", {r.joint_pos_noise_rad[0], r.joint_pos_noise_rad[1]}},
        {"joint_vel_noise_rad_s", {r.joint_vel_noise_rad_s[0], r.joint_vel_noise_rad_s[1]}},
        {"lin_vel_noise_mps", {r.lin_vel_noise_mps[0], r.lin_vel_noise_mps[1]}},
        {"ang_vel_noise_rad_s", {r.ang_vel_noise_rad_s[0], r.ang_vel_noise_rad_s[1]}},
        {"height_noise_frac", {r.height_noise_frac[0], r.height_noise_frac[1]}},
        {"lin_impulse_mps", {r.lin_impulse_mps[0], r.lin_impulse_mps[1]}},
        {"ang_impulse_rad_s", {r.ang_impulse_rad_s[0], r.ang_impulse_rad_s[1]}},
        {"impulse_interval_s", {r.impulse_interval_s[0], r.impulse_interval_s[1]}}};
    j["policy"] = {{"arch", to_string(d.policy.arch)},
                   {"gru_hidden", d.policy.gru_hidden},
                   {"trunk_hidden", d.policy.trunk_hidden},
                   {"history_hidden", {d.policy.history_hidden[0], d.policy.history_hidden[1]}},
                   {"history_len", d.policy.history_len},
                   {"log_std_init", d.policy.log_std_init}};
    j["ppo"] = {{"minibatch_size", d.ppo.minibatch_size},
                {"num_epochs", d.ppo.num_epochs},
                {"value_coef", d.ppo.value_coef},
                {"entropy_coef", d.ppo.entropy_coef},
                {"gamma", d.ppo.gamma},
                {"learning_rate", d.ppo.learning_rate},
                {"sequence_length", d.ppo.sequence_length},
                {"clip_eps", d.ppo.clip_eps},
                {"gae_lambda", d.ppo.gae_lambda},
                {"num_envs", d.ppo.num_envs},
                {"total_timesteps", d.ppo.total_timesteps},
                {"grad_clip", d.ppo.grad_clip},
                {"normalize_advantages", d.ppo.normalize_advantages},
                {"checkpoint_interval", d.ppo.checkpoint_interval},
                {"seed", d.ppo.seed}};
    j["eval"] = {{"walk",
                  {{"speeds", d.walk_eval.speeds},
                   {"duration_s", d.walk_eval.duration_s},
                   {"episodes", d.walk_eval.episodes},
                   {"deterministic", d.walk_eval.deterministic},
                   {"seed", d.walk_eval.seed}}},
                 {"mass_curriculum",
                  {{"mass_scales", d.mass_eval.mass_scales},
                   {"duration_s", d.mass_eval.duration_s},
                   {"interval_s", d.mass_eval.interval_s},
                   {"speed", d.mass_eval.speed},
                   {"episodes", d.mass_eval.episodes},
                   {"compounding", d.mass_eval.compounding},
                   {"deterministic", d.mass_eval.deterministic},
                   {"seed", d.mass_eval.seed}}}};
    j["ablation"] = {{"architecture_grid", d.ablation.architecture_grid},
                     {"train_set_sizes", d.ablation.train_set_sizes},
                     {"meta_k_grid", d.ablation.meta_k_grid},
                     {"seeds", d.ablation.seeds},
                     {"budget", d.ablation.budget}};
    return j;
  }

  static void reject_unknown(const nlohmann::json& given, const nlohmann::json& schema,
                             const std::string& where) {
    for (auto it = given.begin(); it != given.end(); ++it) {
      if (!schema.contains(it.key()))
        throw ConfigError("config: unknown field '" + where + it.key() + "'");
      if (it.value().is_object() && schema.at(it.key()).is_object())
        reject_unknown(it.value(), schema.at(it.key()), where + it.key() + ".");
    }
  }

  // Deep-merges user values over defaults (arrays and scalars replace).
  static void merge(nlohmann::json& base, const nlohmann::json& over) {
    for (auto it = over.begin(); it != over.end(); ++it) {
      if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
        merge(base[it.key()], it.value());
      else
        base[it.key()] = it.value();
    }
  }

  static void apply_env_overrides(nlohmann::json& j) {
    for (auto sec = j.begin(); sec != j.end(); ++sec) {
      if (!sec.value().is_object()) continue;
      for (auto field = sec.value().begin(); field != sec.value().end(); ++field) {
        std::string var = "MML_" + sec.key() + "_" + field.key();
        for (auto& c : var) c = char(std::toupper(c));
        if (const char* value = std::getenv(var.c_str())) {
          try {
            field.value() = nlohmann::json::parse(value);
          } catch (const nlohmann::json::parse_error&) {
            field.value() = std::string(value);
          }
        }
      }
    }
  }

  static RunConfig from_json(nlohmann::json user, const std::string& default_template_dir) {
    nlohmann::json j = default_json();
    if (user.contains("schema_version") &&
        user.at("schema_version").get<int>() != kSchemaVersion)
      throw VersionError("config: unsupported schema_version");
    reject_unknown(user, j, "");
    merge(j, user);
    apply_env_overrides(j);

    RunConfig c;
    try {
      const auto& run = j.at("run");
      c.run_name = run.at("name").get<std::string>();
      c.out_dir = run.at("out_dir").get<std::string>();
      c.workers = run.at("workers").get<int>();
      c.record = run.at("record").get<bool>();

      c.template_paths = j.at("templates").get<std::vector<std::string>>();
      if (c.template_paths.empty() && !default_template_dir.empty())
        c.template_paths = {default_template_dir + "/small.json",
                            default_template_dir + "/large.json"};

      const auto& pop = j.at("population");
      c.train_count = pop.at("train_count").get<int>();
      c.train_seed = pop.at("train_seed").get<uint64_t>();
      c.test_count = pop.at("test_count").get<int>();
      c.test_seed = pop.at("test_seed").get<uint64_t>();
      c.morphgen.scale_lo = pop.at("scale_lo").get<double>();
      c.morphgen.scale_hi = pop.at("scale_hi").get<double>();
      c.morphgen.extension_ratio = pop.at("extension_ratio").get<double>();

      const auto& gait = j.at("gait");
      c.gait.cycle_duration = gait.at("cycle_duration").get<double>();
      c.gait.duty_factor = gait.at("duty_factor").get<double>();
      const auto& off = gait.at("phase_offsets");
      for (int i = 0; i < kNumLegs; ++i) c.gait.phase_offsets[i] = off[i].get<double>();
      c.swing_height_ratio = gait.at("swing_height_ratio").get<double>();

      const auto& env = j.at("env");
      c.env.episode_length = env.at("episode_length").get<int>();
      c.env.meta_episode_length = env.at("meta_episode_length").get<int>();
      c.env.v_cmd_range = {env.at("v_cmd_range")[0].get<double>(),
                           env.at("v_cmd_range")[1].get<double>()};
      c.env.omega_cmd_range = {env.at("omega_cmd_range")[0].get<double>(),
                               env.at("omega_cmd_range")[1].get<double>()};
      c.env.action_scale = env.at("action_scale").get<double>();
      c.env.gait = c.gait;

      const auto& reward = j.at("reward");
      c.reward.sigma_height = reward.at("sigma_height").get<double>();
      for (int i = 0; i < 3; ++i) {
        c.reward.sigma_velocity[i] = reward.at("sigma_velocity")[i].get<double>();
        c.reward.sigma_feet_position[i] = reward.at("sigma_feet_position")[i].get<double>();
      }
      c.reward.sigma_yaw_rate = reward.at("sigma_yaw_rate").get<double>();
      c.reward.sigma_action_rate = reward.at("sigma_action_rate").get<double>();
      c.reward.sigma_slip = reward.at("sigma_slip").get<double>();
      c.reward.sigma_pitch_roll = reward.at("sigma_pitch_roll").get<double>();

      const auto& sim = j.at("sim");
      c.sim.dt_physics = sim.at("dt_physics").get<double>();
      c.sim.dt_pd = sim.at("dt_pd").get<double>();
      c.sim.dt_control = sim.at("dt_control").get<double>();
      c.sim.contact_kn = sim.at("contact_kn").get<double>();
      c.sim.contact_cn = sim.at("contact_cn").get<double>();
      c.sim.contact_kt = sim.at("contact_kt").get<double>();
      c.sim.default_friction = sim.at("friction").get<double>();
      c.sim.actuator.kp = sim.at("kp").get<double>();
      c.sim.actuator.kd = sim.at("kd").get<double>();
      c.sim.actuator.tau_max = sim.at("tau_max").get<double>();
      c.sim.actuator.latency = sim.at("latency").get<double>();

      const auto& rnd = j.at("randomization");
      auto range = [&](const char* name) {
        return Vec2(rnd.at(name)[0].get<double>(), rnd.at(name)[1].get<double>());
      };
      c.randomization.enabled = rnd.at("enabled").get<bool>();
      c.randomization.terrain_frequency = range("terrain_frequency");
      c.randomization.terrain_height_m = range("terrain_height_m");
      c.randomization.friction = range("friction");
      c.randomization.projected_gravity_mps2 = range("projected_gravity_mps2");
      c.randomization.latency_s = range("latency_s");
      c.randomization.joint_pos_noise_rad = range("joint_pos_noise_rad");
      c.randomization.joint_vel_noise_rad_s = range("joint_vel_noise_rad_s");
      c.randomization.lin_vel_noise_mps = range("lin_vel_noise_mps");
      c.randomization.ang_vel_noise_rad_s = range("ang_vel_noise_rad_s");
      c.randomization.height_noise_frac = range("height_noise_frac");
      c.randomization.lin_impulse_mps = range("lin_impulse_mps");
      c.randomization.ang_impulse_rad_s = range("ang_impulse_rad_s");
      c.randomization.impulse_interval_s = range("impulse_interval_s");

      const auto& pol = j.at("policy");
      c.policy.arch = arch_from_string(pol.at("arch").get<std::string>());
      c.policy.gru_hidden = pol.at("gru_hidden").get<int>();
      c.policy.trunk_hidden = pol.at("trunk_hidden").get<int>();
      c.policy.history_hidden = {pol.at("history_hidden")[0].get<int>(),
                                 pol.at("history_hidden")[1].get<int>()};
      c.policy.history_len = pol.at("history_len").get<int>();
      c.policy.log_std_init = pol.at("log_std_init").get<double>();

      const auto& ppo = j.at("ppo");
      c.ppo.minibatch_size = ppo.at("minibatch_size").get<int>();
      c.ppo.num_epochs = ppo.at("num_epochs").get<int>();
      c.ppo.value_coef = ppo.at("value_coef").get<double>();
      c.ppo.entropy_coef = ppo.at("entropy_coef").get<double>();
      c.ppo.gamma = ppo.at("gamma").get<double>();
      c.ppo.learning_rate = ppo.at("learning_rate").get<double>();
      c.ppo.sequence_length = ppo.at("sequence_length").get<int>();
      c.ppo.clip_eps = ppo.at("clip_eps").get<double>();
      c.ppo.gae_lambda = ppo.at("gae_lambda").get<double>();
      c.ppo.num_envs = ppo.at("num_envs").get<int>();
      c.ppo.total_timesteps = ppo.at("total_timesteps").get<int64_t>();
      c.ppo.grad_clip = ppo.at("grad_clip").get<double>();
      c.ppo.normalize_advantages = ppo.at("normalize_advantages").get<bool>();
      c.ppo.checkpoint_interval = ppo.at("checkpoint_interval").get<int64_t>();
      c.ppo.seed = ppo.at("seed").get<uint64_t>();

      const auto& walk = j.at("eval").at("walk");
      c.walk_eval.speeds = walk.at("speeds").get<std::vector<double>>();
      c.walk_eval.duration_s = walk.at("duration_s").get<double>();
      c.walk_eval.episodes = walk.at("episodes").get<int>();
      c.walk_eval.deterministic = walk.at("deterministic").get<bool>();
      c.walk_eval.seed = walk.at("seed").get<uint64_t>();

      const auto& mass = j.at("eval").at("mass_curriculum");
      c.mass_eval.mass_scales = mass.at("mass_scales").get<std::vector<double>>();
      c.mass_eval.duration_s = mass.at("duration_s").get<double>();
      c.mass_eval.interval_s = mass.at("interval_s").get<double>();
      c.mass_eval.speed = mass.at("speed").get<double>();
      c.mass_eval.episodes = mass.at("episodes").get<int>();
      c.mass_eval.compounding = mass.at("compounding").get<bool>();
      c.mass_eval.deterministic = mass.at("deterministic").get<bool>();
      c.mass_eval.seed = mass.at("seed").get<uint64_t>();

      const auto& abl = j.at("ablation");
      c.ablation.architecture_grid = abl.at("architecture_grid").get<std::vector<std::string>>();
      c.ablation.train_set_sizes = abl.at("train_set_sizes").get<std::vector<int>>();
      c.ablation.meta_k_grid = abl.at("meta_k_grid").get<std::vector<int>>();
      c.ablation.seeds = abl.at("seeds").get<std::vector<uint64_t>>();
      c.ablation.budget = abl.at("budget").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }

    c.env.validate();
    c.reward.validate();
    c.sim.validate();
    c.randomization.validate();
    c.ppo.validate(c.env.episode_length);
    j["templates"] = c.template_paths;
    c.resolved = j;
    return c;
  }

  static RunConfig load(const std::string& path, const std::string& default_template_dir) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ": " + e.what());
    }
    return from_json(std::move(user), default_template_dir);
  }

  static RunConfig defaults(const std::string& default_template_dir) {
    return from_json(nlohmann::json::object(), default_template_dir);
  }

  std::vector<MorphologyTemplate> load_templates() const {
    std::vector<MorphologyTemplate> out;
    for (const auto& p : template_paths) out.push_back(load_template(p));
    if (out.empty()) throw ConfigError("config: no templates configured");
    return out;
  }

  std::shared_ptr<const std::vector<RobotMorphology>> train_population() const {
    return std::make_shared<const std::vector<RobotMorphology>>(
        generate_population(load_templates(), train_count, train_seed, morphgen));
  }

  std::shared_ptr<const std::vector<RobotMorphology>> test_population() const {
    return std::make_shared<const std::vector<RobotMorphology>>(
        generate_population(load_templates(), test_count, test_seed, morphgen));
  }
};

}  // namespace mml
