// Command-line front end: morphology generation, training, evaluation,
// ablations, and artifact inspection. Exit codes: 0 success, 2 configuration
// (including parse/version), 3 I/O, 4 runtime fault.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mml/config.hpp"
#include "mml/eval.hpp"
#include "mml/morphology.hpp"
#include "mml/rppo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitRuntime = 4;

#ifndef MML_DEFAULT_TEMPLATE_DIR
#define MML_DEFAULT_TEMPLATE_DIR "templates"
#endif

std::string default_template_dir() {
  if (const char* env = std::getenv("MML_TEMPLATE_DIR")) return env;
  return MML_DEFAULT_TEMPLATE_DIR;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw mml::IoError("cannot write " + path.string());
  out << content;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw mml::IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw mml::ParseError(path.string() + ": " + e.what());
  }
}

// --------------------------------------------------------------------------

int cmd_gen(const std::vector<std::string>& template_args, int count, uint64_t seed,
            const std::string& out_dir, bool urdf, double scale_lo, double scale_hi,
            double extension_ratio) {
  std::vector<std::string> template_paths = template_args;
  if (template_paths.empty())
    template_paths = {default_template_dir() + "/small.json",
                      default_template_dir() + "/large.json"};
  std::vector<mml::MorphologyTemplate> templates;
  for (const auto& p : template_paths) templates.push_back(mml::load_template(p));

  mml::MorphGenOptions opt;
  opt.scale_lo = scale_lo;
  opt.scale_hi = scale_hi;
  opt.extension_ratio = extension_ratio;
  const auto population = mml::generate_population(templates, count, seed, opt);

  fs::create_directories(out_dir);
  std::cout << "name,template,seed,total_mass_kg,h_ref_m,thigh_m,calf_m\n";
  for (const auto& morph : population) {
    const std::string stem = (fs::path(out_dir) / morph.name()).string();
    write_file(stem + ".json", mml::export_morphology(morph));
    if (urdf) write_file(stem + ".urdf", mml::export_urdf(morph));
    std::cout << morph.name() << "," << morph.template_id << "," << morph.seed << ","
              << morph.total_mass() << "," << morph.h_ref << "," << morph.thigh_length(0)
              << "," << morph.calf_length(0) << "\n";
  }
  std::cout << "generated=" << population.size() << " out_dir=" << out_dir << "\n";
  return 0;
}

// --------------------------------------------------------------------------

void save_checkpoint(mml::Trainer& trainer, const fs::path& run_dir, int64_t steps) {
  const fs::path ckpt = run_dir / ("ckpt_" + std::to_string(steps));
  fs::create_directories(ckpt);
  write_file(ckpt / "policy.json", mml::policy_to_json(trainer.policy()).dump());
  write_file(ckpt / "trainer.json", trainer.snapshot().dump());
  std::cout << "checkpoint=" << ckpt.string() << " env_steps=" << steps << "\n";
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              const std::string& name_override, const std::string& resume,
              int workers_override) {
  mml::RunConfig cfg = config_path.empty()
                           ? mml::RunConfig::defaults(default_template_dir())
                           : mml::RunConfig::load(config_path, default_template_dir());
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!name_override.empty()) cfg.run_name = name_override;
  const int workers = workers_override > 0 ? workers_override : cfg.workers;

  const fs::path run_dir = fs::path(cfg.out_dir) / cfg.run_name;
  fs::create_directories(run_dir);
  write_file(run_dir / "config.json", cfg.resolved.dump(2) + "\n");

  mml::Trainer trainer(cfg.train_population(), cfg.policy, cfg.ppo, cfg.env, cfg.reward,
                       cfg.sim, cfg.randomization);
  if (!resume.empty()) {
    trainer.restore(read_json_file(fs::path(resume) / "trainer.json"));
    std::cout << "resumed_from=" << resume << " env_steps=" << trainer.env_steps() << "\n";
  }

  const fs::path stats_path = run_dir / "stats.csv";
  const bool fresh_stats = resume.empty() || !fs::exists(stats_path);
  std::ofstream stats(stats_path, fresh_stats ? std::ios::trunc : std::ios::app);
  if (fresh_stats) stats << mml::TrainStats::csv_header() << "\n";
  stats.precision(17);

  trainer.run(
      workers,
      [&](const mml::TrainStats& s) {
        stats << s.csv_row() << "\n";
        stats.flush();
        std::cout << "iter=" << s.iteration << " steps=" << s.env_steps
                  << " mean_episodic_reward=" << s.mean_episodic_reward
                  << " mean_tick_reward=" << s.mean_tick_reward << " kl=" << s.approx_kl
                  << " clip_fraction=" << s.clip_fraction << "\n";
      },
      [&](int64_t steps) { save_checkpoint(trainer, run_dir, steps); });
  std::cout << "done env_steps=" << trainer.env_steps() << " run_dir=" << run_dir.string()
            << "\n";
  return 0;
}

// --------------------------------------------------------------------------

mml::Policy load_policy_checkpoint(const std::string& path) {
  fs::path p = path;
  if (fs::is_directory(p)) p /= "policy.json";
  const mml::Policy policy = mml::policy_from_json(read_json_file(p));
  if (policy.cfg.obs_dim != mml::ObservationLayout::kDim)
    throw mml::VersionError("checkpoint observation layout (" +
                            std::to_string(policy.cfg.obs_dim) +
                            ") does not match this build (" +
                            std::to_string(mml::ObservationLayout::kDim) + ")");
  return policy;
}

int cmd_eval(const std::string& checkpoint, const std::string& protocol,
             const std::string& config_path, const std::string& out_dir, int episodes_override,
             bool record) {
  mml::RunConfig cfg = config_path.empty()
                           ? mml::RunConfig::defaults(default_template_dir())
                           : mml::RunConfig::load(config_path, default_template_dir());
  const mml::Policy policy = load_policy_checkpoint(checkpoint);
  auto robots = cfg.test_population();
  const int n_robots = int(robots->size());
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "config.json", cfg.resolved.dump(2) + "\n");

  auto pick_episodes = [&](int configured) {
    int episodes = episodes_override > 0 ? episodes_override : configured;
    episodes -= episodes % (2 * n_robots);
    return episodes > 0 ? episodes : 2 * n_robots;
  };
  auto run_protocol = [&](const std::string& id, auto&& fn) {
    mml::EvalHarness harness(policy, robots, cfg, cfg.walk_eval.deterministic,
                             cfg.walk_eval.seed);
    if (record) harness.set_record_dir((fs::path(out_dir) / (id + "_episodes")).string());
    const mml::MetricReport report = fn(harness);
    write_file(fs::path(out_dir) / (id + ".json"), report.to_json().dump(2) + "\n");
    write_file(fs::path(out_dir) / (id + ".csv"), report.to_long_csv());
    std::cout << "protocol=" << id << " mer=" << report.aggregate_mer
              << " roll_norm_deg=" << report.aggregate_roll_norm
              << " collapse_rate=" << report.collapse_rate() << "\n";
  };

  if (protocol == "walk") {
    for (double speed : cfg.walk_eval.speeds) {
      const int ticks = int(std::round(cfg.walk_eval.duration_s / cfg.sim.dt_control));
      const int episodes = pick_episodes(cfg.walk_eval.episodes);
      std::ostringstream id;
      id << "walk_v" << speed;
      run_protocol(id.str(), [&](mml::EvalHarness& harness) {
        return mml::walk_test([&](const mml::EpisodeRequest& r) { return harness(r); }, n_robots,
                         speed, ticks, episodes, cfg.walk_eval.seed, id.str());
      });
    }
  } else if (protocol == "mass_curriculum") {
    for (double s_m : cfg.mass_eval.mass_scales) {
      const int ticks = int(std::round(cfg.mass_eval.duration_s / cfg.sim.dt_control));
      const int interval = int(std::round(cfg.mass_eval.interval_s / cfg.sim.dt_control));
      const int episodes = pick_episodes(cfg.mass_eval.episodes);
      std::ostringstream id;
      id << "mass_sm" << s_m;
      run_protocol(id.str(), [&](mml::EvalHarness& harness) {
        return mml::mass_curriculum_test([&](const mml::EpisodeRequest& r) { return harness(r); },
                                    n_robots, s_m, cfg.mass_eval.speed, ticks, interval,
                                    cfg.mass_eval.compounding, episodes, cfg.mass_eval.seed,
                                    id.str());
      });
    }
  } else {
    throw mml::ConfigError("unknown protocol '" + protocol + "' (walk, mass_curriculum)");
  }
  return 0;
}

// --------------------------------------------------------------------------

int cmd_ablate(const std::string& kind_str, const std::string& config_path,
               const std::string& out_dir, int workers_override) {
  mml::RunConfig cfg = config_path.empty()
                           ? mml::RunConfig::defaults(default_template_dir())
                           : mml::RunConfig::load(config_path, default_template_dir());
  mml::AblationKind kind;
  if (kind_str == "architecture")
    kind = mml::AblationKind::architecture;
  else if (kind_str == "train_set_size")
    kind = mml::AblationKind::train_set_size;
  else if (kind_str == "meta_k")
    kind = mml::AblationKind::meta_k;
  else
    throw mml::ConfigError("unknown ablation kind '" + kind_str + "'");
  const int workers = workers_override > 0 ? workers_override : cfg.workers;

  const fs::path dir = fs::path(out_dir) / ("ablation_" + kind_str);
  fs::create_directories(dir);
  write_file(dir / "config.json", cfg.resolved.dump(2) + "\n");

  std::ofstream summary(dir / "summary.csv");
  summary.precision(17);
  summary << "cell,seed,final_training_reward,heldout_mer,heldout_roll_norm_deg,"
             "collapse_rate\n";
  mml::run_ablation(kind, cfg, workers, [&](const mml::AblationRunResult& res) {
    const std::string stem = res.cell + "_seed" + std::to_string(res.seed);
    write_file(dir / (stem + "_curve.csv"), mml::curve_csv(res.curve));
    write_file(dir / (stem + "_walk.json"), res.walk_report.to_json(false).dump(2) + "\n");
    summary << res.cell << "," << res.seed << "," << res.final_training_reward << ","
            << res.walk_report.aggregate_mer << "," << res.walk_report.aggregate_roll_norm
            << "," << res.walk_report.collapse_rate() << "\n";
    summary.flush();
    std::cout << "cell=" << res.cell << " seed=" << res.seed
              << " final_training_reward=" << res.final_training_reward
              << " heldout_mer=" << res.walk_report.aggregate_mer << "\n";
  });
  std::cout << "ablation_dir=" << dir.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------

int cmd_inspect(const std::string& path) {
  const json j = read_json_file(path);
  if (j.contains("tensors") && j.contains("arch")) {
    mml::Policy p = mml::policy_from_json(j);
    int64_t params = 0;
    for (const auto& t : mml::policy_views(p)) params += t.size();
    std::cout << "kind=policy_checkpoint arch=" << to_string(p.cfg.arch)
              << " obs_dim=" << p.cfg.obs_dim << " act_dim=" << p.cfg.act_dim
              << " parameters=" << params << " train_steps=" << p.train_steps
              << " normalizer_count=" << p.normalizer.count
              << " normalizer_mean_norm=" << p.normalizer.mean.norm() << "\n";
  } else if (j.contains("links") && j.contains("joints") && j.contains("template_id")) {
    const mml::RobotMorphology m = mml::import_morphology(j.dump());
    std::cout << "kind=morphology name=" << m.name() << " total_mass_kg=" << m.total_mass()
              << " h_ref_m=" << m.h_ref << " thigh_m=" << m.thigh_length(0)
              << " calf_m=" << m.calf_length(0) << "\n";
  } else if (j.contains("protocol_id")) {
    std::cout << "kind=metric_report protocol=" << j.at("protocol_id").get<std::string>()
              << " mer=" << j.at("aggregate_mer").get<double>()
              << " roll_norm_deg=" << j.at("aggregate_roll_norm_deg").get<double>()
              << " episodes=" << j.at("episode_count").get<size_t>() << "\n";
  } else if (j.contains("iteration") && j.contains("policy")) {
    std::cout << "kind=trainer_checkpoint iteration=" << j.at("iteration").get<int64_t>()
              << " env_steps=" << j.at("env_steps").get<int64_t>() << "\n";
  } else if (j.contains("schema_version")) {
    std::cout << "kind=run_config schema_version=" << j.at("schema_version").get<int>()
              << " sections=";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) std::cout << ",";
      std::cout << it.key();
      first = false;
    }
    std::cout << "\n";
  } else {
    throw mml::ParseError("unrecognized file content: " + path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robot-agnostic quadruped locomotion laboratory"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a morphology population");
  std::vector<std::string> gen_templates;
  int gen_count = 32;
  uint64_t gen_seed = 1;
  std::string gen_out = "morphologies";
  bool gen_urdf = false;
  double gen_lo = 0.5, gen_hi = 1.5, gen_ratio = 0.85;
  gen->add_option("--template", gen_templates, "Template file (repeatable)");
  gen->add_option("--count", gen_count, "Number of morphologies");
  gen->add_option("--seed", gen_seed, "Population seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_flag("--urdf", gen_urdf, "Also export URDF files");
  gen->add_option("--scale-lo", gen_lo, "Scale factor lower bound");
  gen->add_option("--scale-hi", gen_hi, "Scale factor upper bound");
  gen->add_option("--extension-ratio", gen_ratio, "Default-pose leg extension ratio");

  auto* train = app.add_subcommand("train", "Train a policy");
  std::string train_config, train_out, train_name, train_resume;
  int train_workers = 0;
  train->add_option("--config", train_config, "Run configuration JSON");
  train->add_option("--out", train_out, "Output root (overrides config)");
  train->add_option("--name", train_name, "Run name (overrides config)");
  train->add_option("--resume", train_resume, "Checkpoint directory to resume from");
  train->add_option("--workers", train_workers, "Environment worker threads");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_protocol = "walk", eval_config, eval_out = "eval";
  int eval_episodes = 0;
  bool eval_record = false;
  eval->add_option("--checkpoint", eval_ckpt, "policy.json or checkpoint directory")
      ->required();
  eval->add_option("--protocol", eval_protocol, "walk | mass_curriculum");
  eval->add_option("--config", eval_config, "Run configuration JSON");
  eval->add_option("--out", eval_out, "Report output directory");
  eval->add_option("--episodes", eval_episodes, "Episode count override");
  eval->add_flag("--record", eval_record, "Dump per-episode trajectory/reward CSVs");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  std::string abl_kind, abl_config, abl_out = "ablations";
  int abl_workers = 0;
  ablate->add_option("--kind", abl_kind, "architecture | train_set_size | meta_k")->required();
  ablate->add_option("--config", abl_config, "Run configuration JSON");
  ablate->add_option("--out", abl_out, "Output directory");
  ablate->add_option("--workers", abl_workers, "Environment worker threads");

  auto* inspect = app.add_subcommand("inspect", "Summarize an artifact file");
  std::string inspect_path;
  inspect->add_option("path", inspect_path, "File to inspect")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(gen_templates, gen_count, gen_seed, gen_out, gen_urdf, gen_lo, gen_hi,
                     gen_ratio);
    if (train->parsed())
      return cmd_train(train_config, train_out, train_name, train_resume, train_workers);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_protocol, eval_config, eval_out, eval_episodes,
                      eval_record);
    if (ablate->parsed()) return cmd_ablate(abl_kind, abl_config, abl_out, abl_workers);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const mml::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mml::ConfigError& e) {  // includes parse and version errors
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mml::SimFault& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
