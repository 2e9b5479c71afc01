#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mml/config.hpp"
#include "mml/env.hpp"
#include "mml/net.hpp"
#include "mml/rppo.hpp"

namespace mml {

// Steps a policy with persistent recurrent state; normalizer statistics are
// frozen (apply only). Deterministic mode uses the action mean.
class PolicyRunner {
 public:
  PolicyRunner(const Policy& policy, bool deterministic, uint64_t seed)
      : policy_(policy), deterministic_(deterministic), rng_(splitmix64(seed)) {
    reset_state();
  }

  void reset_state() { state_ = MatX::Zero(policy_.cfg.state_dim(), 1); }

  VecX act(const Observation& raw_obs) {
    const MatX obs = policy_.normalizer.apply(VecX(raw_obs));
    const MatX mean = forward_sequence(policy_.cfg, policy_.actor, {obs}, state_).outputs[0];
    state_ = advance_state(policy_.cfg, state_, obs, policy_.actor.gru);
    if (deterministic_) return mean.col(0);
    return sample_gaussian(mean.col(0), policy_.std(), rng_);
  }

 private:
  const Policy& policy_;
  bool deterministic_;
  Rng rng_;
  MatX state_;
};

struct EpisodeRecord {
  int robot_index = 0;
  double v_cmd = 0.0;
  int ticks = 0;
  EpisodeStatus final_status = EpisodeStatus::timeout;
  std::vector<double> rewards;    // per tick
  std::vector<double> roll_deg;   // per tick
  std::vector<double> applied_mass_scales;  // cumulative trunk factors, per event

  double episodic_return() const {
    return std::accumulate(rewards.begin(), rewards.end(), 0.0);
  }
};

// Mean episodic reward: average over episodes of per-episode summed rewards.
inline double mer(const std::vector<EpisodeRecord>& episodes) {
  if (episodes.empty()) throw ConfigError("mer: no episodes");
  double total = 0.0;
  for (const auto& e : episodes) total += e.episodic_return();
  return total / double(episodes.size());
}

// Root-mean-square of the roll trajectory, degrees.
inline double roll_norm(const std::vector<double>& roll_deg) {
  if (roll_deg.empty()) return 0.0;
  double s = 0.0;
  for (double r : roll_deg) s += r * r;
  return std::sqrt(s / double(roll_deg.size()));
}

struct MetricReport {
  std::string protocol_id;
  nlohmann::json protocol_config;
  std::vector<uint64_t> seeds;
  std::vector<EpisodeRecord> episodes;

  std::map<int, double> per_robot_mer;
  std::map<int, double> per_robot_roll_norm;
  double aggregate_mer = 0.0;
  double aggregate_roll_norm = 0.0;  // mean over per-episode roll norms
  int collapse_count = 0;
  std::map<int, int> per_robot_collapses;
  std::map<int, int> per_robot_episodes;

  void finalize() {
    std::map<int, std::vector<const EpisodeRecord*>> by_robot;
    for (const auto& e : episodes) by_robot[e.robot_index].push_back(&e);
    per_robot_mer.clear();
    per_robot_roll_norm.clear();
    per_robot_collapses.clear();
    per_robot_episodes.clear();
    collapse_count = 0;
    double total_return = 0.0, total_roll = 0.0;
    for (const auto& [robot, records] : by_robot) {
      double ret = 0.0, roll = 0.0;
      int collapses = 0;
      for (const auto* e : records) {
        ret += e->episodic_return();
        roll += roll_norm(e->roll_deg);
        collapses += (e->final_status == EpisodeStatus::collapsed);
      }
      per_robot_mer[robot] = ret / double(records.size());
      per_robot_roll_norm[robot] = roll / double(records.size());
      per_robot_collapses[robot] = collapses;
      per_robot_episodes[robot] = int(records.size());
      collapse_count += collapses;
      total_return += ret;
    }
    for (const auto& e : episodes) total_roll += roll_norm(e.roll_deg);
    aggregate_mer = episodes.empty() ? 0.0 : total_return / double(episodes.size());
    aggregate_roll_norm = episodes.empty() ? 0.0 : total_roll / double(episodes.size());
  }

  double collapse_rate() const {
    return episodes.empty() ? 0.0 : double(collapse_count) / double(episodes.size());
  }

  nlohmann::json to_json(bool include_episodes = true) const {
    nlohmann::json per_robot = nlohmann::json::array();
    for (const auto& [robot, m] : per_robot_mer)
      per_robot.push_back({{"robot", robot},
                           {"mer", m},
                           {"roll_norm_deg", per_robot_roll_norm.at(robot)},
                           {"episodes", per_robot_episodes.at(robot)},
                           {"collapses", per_robot_collapses.at(robot)}});
    nlohmann::json j = {{"protocol_id", protocol_id},
                        {"protocol_config", protocol_config},
                        {"seeds", seeds},
                        {"aggregate_mer", aggregate_mer},
                        {"aggregate_roll_norm_deg", aggregate_roll_norm},
                        {"collapse_count", collapse_count},
                        {"collapse_rate", collapse_rate()},
                        {"episode_count", episodes.size()},
                        {"per_robot", per_robot}};
    if (include_episodes) {
      nlohmann::json eps = nlohmann::json::array();
      for (const auto& e : episodes)
        eps.push_back({{"robot", e.robot_index},
                       {"v_cmd", e.v_cmd},
                       {"ticks", e.ticks},
                       {"status", int(e.final_status)},
                       {"return", e.episodic_return()},
                       {"roll_norm_deg", roll_norm(e.roll_deg)},
                       {"rewards", e.rewards},
                       {"roll_deg", e.roll_deg},
                       {"applied_mass_scales", e.applied_mass_scales}});
      j["episodes"] = eps;
    }
    return j;
  }

  // Long-format CSV: cell, seed, metric, value.
  std::string to_long_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "cell,seed,metric,value\n";
    const uint64_t seed = seeds.empty() ? 0 : seeds[0];
    os << protocol_id << "," << seed << ",mer," << aggregate_mer << "\n";
    os << protocol_id << "," << seed << ",roll_norm_deg," << aggregate_roll_norm << "\n";
    os << protocol_id << "," << seed << ",collapse_rate," << collapse_rate() << "\n";
    for (const auto& [robot, m] : per_robot_mer) {
      os << protocol_id << "/robot" << robot << "," << seed << ",mer," << m << "\n";
      os << protocol_id << "/robot" << robot << "," << seed << ",roll_norm_deg,"
         << per_robot_roll_norm.at(robot) << "\n";
    }
    return os.str();
  }
};

struct EpisodeRequest {
  int robot_index = 0;
  Command command;
  int ticks = 200;
  bool reset_recurrent_state = false;  // on robot switch
  // (tick, multiplicative trunk factor) events.
  std::vector<std::pair<int, double>> mass_scale_schedule;
};

using EpisodeRunner = std::function<EpisodeRecord(const EpisodeRequest&)>;

// Runs evaluation episodes against the physics environment with a policy.
// Recurrent state persists across one robot's episodes and is zeroed when the
// protocol switches robots (mirroring the meta-episodic training semantics).
class EvalHarness {
 public:
  EvalHarness(const Policy& policy,
              std::shared_ptr<const std::vector<RobotMorphology>> robots,
              const RunConfig& cfg, bool deterministic, uint64_t seed)
      : policy_(policy),
        robots_(std::move(robots)),
        cfg_(cfg),
        runner_(policy, deterministic, splitmix64(seed ^ 0xac7104ULL)),
        reset_rng_(splitmix64(seed ^ 0x5e7e1ULL)) {}

  // Directory for per-episode trajectory/reward CSVs and the randomization
  // record; empty disables recording.
  void set_record_dir(const std::string& dir) { record_dir_ = dir; }

  EpisodeRecord operator()(const EpisodeRequest& req) {
    if (req.reset_recurrent_state) runner_.reset_state();
    EnvConfig env_cfg = cfg_.env;
    env_cfg.episode_length = req.ticks;
    Env env((*robots_)[req.robot_index], env_cfg, cfg_.reward, cfg_.sim, cfg_.randomization,
            reset_rng_.next_u64());
    Observation obs = env.reset_with_command(
        req.command, int(reset_rng_.uniform_int(0, std::max(req.ticks - 1, 1))));
    if (!record_dir_.empty()) env.simulator().set_recording(true);

    EpisodeRecord record;
    record.robot_index = req.robot_index;
    record.v_cmd = req.command.v_cmd;
    std::ostringstream reward_csv;
    reward_csv.precision(17);
    reward_csv << "tick,reward,height,velocity,yaw_rate,feet_position,action_rate,slip,"
                  "pitch_roll,status\n";
    size_t next_event = 0;
    for (int t = 0; t < req.ticks; ++t) {
      while (next_event < req.mass_scale_schedule.size() &&
             req.mass_scale_schedule[next_event].first == t) {
        env.simulator().scale_trunk_mass(req.mass_scale_schedule[next_event].second);
        record.applied_mass_scales.push_back(env.simulator().trunk_mass_scale());
        ++next_event;
      }
      const VecX action = runner_.act(obs);
      const Env::StepResult r = env.step(action);
      record.rewards.push_back(r.reward);
      const EulerYpr e = euler_ypr(env.simulator().state().base_quat.toRotationMatrix());
      record.roll_deg.push_back(e.roll * 180.0 / kPi);
      record.ticks = t + 1;
      obs = r.obs;
      if (!record_dir_.empty()) {
        const auto& bd = r.breakdown;
        reward_csv << t << "," << r.reward << "," << bd.height << "," << bd.velocity << ","
                   << bd.yaw_rate << "," << bd.feet_position << "," << bd.action_rate << ","
                   << bd.slip << "," << bd.pitch_roll << "," << int(r.status) << "\n";
      }
      if (r.status != EpisodeStatus::running) {
        record.final_status = r.status;
        break;
      }
    }
    if (record.ticks == req.ticks && record.final_status != EpisodeStatus::collapsed)
      record.final_status = EpisodeStatus::timeout;
    if (!record_dir_.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(record_dir_);
      const std::string stem =
          record_dir_ + "/episode_" + std::to_string(episode_counter_++);
      std::ofstream(stem + "_trajectory.csv") << env.simulator().recorded_csv();
      std::ofstream(stem + "_reward.csv") << reward_csv.str();
      std::ofstream(stem + "_randomization.json")
          << env.simulator().episode().to_json().dump(2) << "\n";
    }
    return record;
  }

 private:
  const Policy& policy_;
  std::shared_ptr<const std::vector<RobotMorphology>> robots_;
  RunConfig cfg_;
  PolicyRunner runner_;
  Rng reset_rng_;
  std::string record_dir_;
  int episode_counter_ = 0;
};

// Walk test: symmetric commanded speeds {-x, +x}, episodes allocated
// uniformly over (robot, direction) cells, H = duration / control dt ticks.
inline MetricReport walk_test(const EpisodeRunner& run_episode, int num_robots, double speed,
                              int episode_ticks, int episodes_total, uint64_t seed,
                              const std::string& protocol_id = "walk") {
  if (num_robots < 1) throw ConfigError("walk_test: no robots");
  const int cells = num_robots * 2;
  if (episodes_total % cells != 0)
    throw ConfigError("walk_test: episodes (" + std::to_string(episodes_total) +
                      ") not divisible by robot x direction cells (" + std::to_string(cells) +
                      ")");
  const int per_cell = episodes_total / cells;
  MetricReport report;
  report.protocol_id = protocol_id;
  report.seeds = {seed};
  report.protocol_config = {{"speed", speed},
                            {"episode_ticks", episode_ticks},
                            {"episodes_total", episodes_total},
                            {"episodes_per_cell", per_cell}};
  for (int robot = 0; robot < num_robots; ++robot) {
    bool first_of_robot = true;
    for (double dir : {1.0, -1.0}) {
      for (int e = 0; e < per_cell; ++e) {
        EpisodeRequest req;
        req.robot_index = robot;
        req.command = {dir * speed, 0.0};
        req.ticks = episode_ticks;
        req.reset_recurrent_state = first_of_robot;
        first_of_robot = false;
        report.episodes.push_back(run_episode(req));
      }
    }
  }
  report.finalize();
  return report;
}

// Mass-curriculum test: +-speed commands; the trunk mass is rescaled every
// interval (compounding by default, or re-based to s_m times nominal).
inline MetricReport mass_curriculum_test(const EpisodeRunner& run_episode, int num_robots,
                                         double s_m, double speed, int episode_ticks,
                                         int interval_ticks, bool compounding,
                                         int episodes_total, uint64_t seed,
                                         const std::string& protocol_id = "mass_curriculum") {
  if (!(s_m > 0)) throw ConfigError("mass_curriculum_test: s_m must be > 0");
  const int cells = num_robots * 2;
  if (episodes_total % cells != 0)
    throw ConfigError("mass_curriculum_test: episodes not divisible by cells");
  const int per_cell = episodes_total / cells;
  std::vector<std::pair<int, double>> schedule;
  for (int t = interval_ticks; t < episode_ticks; t += interval_ticks)
    schedule.emplace_back(t, compounding || schedule.empty() ? s_m : 1.0);

  MetricReport report;
  report.protocol_id = protocol_id;
  report.seeds = {seed};
  report.protocol_config = {{"s_m", s_m},
                            {"speed", speed},
                            {"episode_ticks", episode_ticks},
                            {"interval_ticks", interval_ticks},
                            {"compounding", compounding},
                            {"episodes_total", episodes_total}};
  for (int robot = 0; robot < num_robots; ++robot) {
    bool first_of_robot = true;
    for (double dir : {1.0, -1.0}) {
      for (int e = 0; e < per_cell; ++e) {
        EpisodeRequest req;
        req.robot_index = robot;
        req.command = {dir * speed, 0.0};
        req.ticks = episode_ticks;
        req.reset_recurrent_state = first_of_robot;
        req.mass_scale_schedule = schedule;
        first_of_robot = false;
        report.episodes.push_back(run_episode(req));
      }
    }
  }
  report.finalize();
  return report;
}

// Moving-average smoothing used for the learning-curve CSVs.
inline std::vector<double> moving_average(const std::vector<double>& xs, int window) {
  std::vector<double> out(xs.size());
  double acc = 0.0;
  std::deque<double> q;
  for (size_t i = 0; i < xs.size(); ++i) {
    q.push_back(xs[i]);
    acc += xs[i];
    if (int(q.size()) > window) {
      acc -= q.front();
      q.pop_front();
    }
    out[i] = acc / double(q.size());
  }
  return out;
}

enum class AblationKind { architecture, train_set_size, meta_k };

inline const char* to_string(AblationKind k) {
  switch (k) {
    case AblationKind::architecture: return "architecture";
    case AblationKind::train_set_size: return "train_set_size";
    case AblationKind::meta_k: return "meta_k";
  }
  return "?";
}

struct AblationCell {
  std::string name;
  RunConfig config;  // fully resolved per-cell configuration
};

inline std::vector<AblationCell> ablation_grid(AblationKind kind, const RunConfig& base) {
  std::vector<AblationCell> cells;
  switch (kind) {
    case AblationKind::architecture:
      for (const std::string& arch : base.ablation.architecture_grid) {
        AblationCell cell{arch, base};
        cell.config.policy.arch = arch_from_string(arch);
        cells.push_back(std::move(cell));
      }
      break;
    case AblationKind::train_set_size:
      for (int n : base.ablation.train_set_sizes) {
        AblationCell cell{"train" + std::to_string(n), base};
        cell.config.train_count = n;
        cells.push_back(std::move(cell));
      }
      break;
    case AblationKind::meta_k:
      for (int k : base.ablation.meta_k_grid) {
        AblationCell cell{"K" + std::to_string(k), base};
        cell.config.env.meta_episode_length = k;
        cells.push_back(std::move(cell));
      }
      break;
  }
  if (cells.empty()) throw ConfigError("ablation: empty grid");
  return cells;
}

struct AblationRunResult {
  std::string cell;
  uint64_t seed = 0;
  std::vector<TrainStats> curve;
  double final_training_reward = 0.0;  // mean episodic reward, last iterations
  MetricReport walk_report;
};

// Trains one policy per (cell, seed) at the configured budget, evaluates the
// walk protocol on the held-out set, and returns curves plus final metrics.
// Writing curves/reports to disk is the caller's concern (see the CLI).
inline std::vector<AblationRunResult> run_ablation(
    AblationKind kind, const RunConfig& base, int workers,
    const std::function<void(const AblationRunResult&)>& on_result = {}) {
  std::vector<AblationRunResult> results;
  for (const AblationCell& cell : ablation_grid(kind, base)) {
    for (uint64_t seed : base.ablation.seeds) {
      RunConfig cfg = cell.config;
      cfg.ppo.seed = seed;
      cfg.ppo.total_timesteps = base.ablation.budget;
      Trainer trainer(cfg.train_population(), cfg.policy, cfg.ppo, cfg.env, cfg.reward, cfg.sim,
                      cfg.randomization);
      AblationRunResult res;
      res.cell = cell.name;
      res.seed = seed;
      res.curve = trainer.run(workers);
      const int tail = std::max(1, int(res.curve.size()) / 10);
      for (int i = int(res.curve.size()) - tail; i < int(res.curve.size()); ++i)
        res.final_training_reward += res.curve[i].mean_episodic_reward;
      res.final_training_reward /= tail;

      auto test_robots = cfg.test_population();
      EvalHarness harness(trainer.policy(), test_robots, cfg, true,
                          cfg.walk_eval.seed ^ seed);
      const int ticks = int(std::round(cfg.walk_eval.duration_s / cfg.sim.dt_control));
      const int cells_n = int(test_robots->size()) * 2;
      const int per_cell = std::max(1, cfg.walk_eval.episodes / cells_n);
      res.walk_report = walk_test([&](const EpisodeRequest& r) { return harness(r); },
                                  int(test_robots->size()),
                                  cfg.walk_eval.speeds.empty() ? 0.3 : cfg.walk_eval.speeds[0],
                                  ticks, per_cell * cells_n, cfg.walk_eval.seed ^ seed,
                                  "ablation_walk/" + cell.name);
      if (on_result) on_result(res);
      results.push_back(std::move(res));
    }
  }
  return results;
}

inline std::string curve_csv(const std::vector<TrainStats>& curve, int smoothing_window = 60) {
  std::vector<double> rewards;
  rewards.reserve(curve.size());
  for (const auto& s : curve) rewards.push_back(s.mean_episodic_reward);
  const std::vector<double> smooth = moving_average(rewards, smoothing_window);
  std::ostringstream os;
  os.precision(17);
  os << TrainStats::csv_header() << ",smoothed_mean_episodic_reward\n";
  for (size_t i = 0; i < curve.size(); ++i)
    os << curve[i].csv_row() << "," << smooth[i] << "\n";
  return os.str();
}

}  // namespace mml
