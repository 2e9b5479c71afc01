#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include "mml/env.hpp"
#include "mml/net.hpp"

namespace mml {

struct PpoConfig {
  int minibatch_size = 512;  // transitions per minibatch
  int num_epochs = 10;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double gamma = 0.95;
  double learning_rate = 5e-5;
  int sequence_length = 16;
  double clip_eps = 0.2;
  double gae_lambda = 0.95;
  int num_envs = 16;
  int64_t total_timesteps = 3'000'000;
  double grad_clip = 1.0;
  bool normalize_advantages = true;
  int64_t checkpoint_interval = 500'000;  // env steps
  uint64_t seed = 0;

  void validate(int episode_length) const {
    if (minibatch_size < 1 || num_epochs < 0 || num_envs < 1 || sequence_length < 1)
      throw ConfigError("ppo: sizes must be positive");
    if (minibatch_size % sequence_length != 0)
      throw ConfigError("ppo: minibatch_size must be divisible by sequence_length");
    if (episode_length % sequence_length != 0)
      throw ConfigError("ppo: sequence_length must divide the rollout horizon");
    if (!(gamma > 0 && gamma <= 1) || !(gae_lambda >= 0 && gae_lambda <= 1) || !(clip_eps > 0))
      throw ConfigError("ppo: bad gamma/lambda/clip");
  }
};

struct Transition {
  VecX obs_norm;  // what the networks consumed
  VecX action;
  double reward = 0.0;
  bool done = false;
  bool episode_boundary = false;
  bool meta_boundary = false;
  double log_prob = 0.0;
  double value = 0.0;
  VecX actor_state;   // recurrent state entering this tick
  VecX critic_state;
  double advantage = 0.0;
  double ret = 0.0;
};

struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  std::vector<std::vector<Transition>> streams;  // [env][t]
  VecX bootstrap_value;                          // per env, V after the last tick

  int64_t size() const { return int64_t(num_envs) * horizon; }
};

// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns = A_t + V(s_t).
inline void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  for (int e = 0; e < buffer.num_envs; ++e) {
    auto& stream = buffer.streams[e];
    double adv = 0.0;
    for (int t = int(stream.size()) - 1; t >= 0; --t) {
      const double next_value =
          (t + 1 < int(stream.size())) ? stream[t + 1].value : buffer.bootstrap_value[e];
      const double not_done = stream[t].done ? 0.0 : 1.0;
      const double delta =
          stream[t].reward + gamma * next_value * not_done - stream[t].value;
      adv = delta + gamma * lambda * not_done * adv;
      stream[t].advantage = adv;
      stream[t].ret = adv + stream[t].value;
    }
  }
}

inline void normalize_advantages(RolloutBuffer& buffer) {
  double sum = 0.0, sum2 = 0.0;
  const double n = double(buffer.size());
  for (const auto& stream : buffer.streams)
    for (const auto& tr : stream) sum += tr.advantage;
  const double mean = sum / n;
  for (const auto& stream : buffer.streams)
    for (const auto& tr : stream) sum2 += square(tr.advantage - mean);
  const double stddev = std::max(std::sqrt(sum2 / n), 1e-8);
  for (auto& stream : buffer.streams)
    for (auto& tr : stream) tr.advantage = (tr.advantage - mean) / stddev;
}

// Non-overlapping fixed-length windows aligned to collection order; windows
// never span a meta boundary in their interior (the stream is segmented after
// each meta-boundary transition, short tails are zero-padded via the mask).
struct SequenceWindow {
  int env = 0;
  int start = 0;
  int length = 0;
};

inline std::vector<SequenceWindow> make_windows(const RolloutBuffer& buffer, int seq_len) {
  std::vector<SequenceWindow> windows;
  for (int e = 0; e < buffer.num_envs; ++e) {
    const auto& stream = buffer.streams[e];
    int seg_start = 0;
    auto flush_segment = [&](int seg_end) {  // [seg_start, seg_end)
      for (int s = seg_start; s < seg_end; s += seq_len)
        windows.push_back({e, s, std::min(seq_len, seg_end - s)});
      seg_start = seg_end;
    };
    for (int t = 0; t < int(stream.size()); ++t)
      if (stream[t].meta_boundary) flush_segment(t + 1);
    if (seg_start < int(stream.size())) flush_segment(int(stream.size()));
  }
  return windows;
}

struct TrainStats {
  int64_t iteration = 0;
  int64_t env_steps = 0;
  double mean_episodic_reward = 0.0;
  double mean_tick_reward = 0.0;
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  int episodes_finished = 0;
  bool update_aborted = false;

  static std::string csv_header() {
    return "iteration,env_steps,mean_episodic_reward,mean_tick_reward,surrogate_loss,"
           "value_loss,entropy,clip_fraction,approx_kl,grad_norm,episodes_finished,"
           "update_aborted";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << iteration << "," << env_steps << "," << mean_episodic_reward << ","
       << mean_tick_reward << "," << surrogate_loss << "," << value_loss << "," << entropy
       << "," << clip_fraction << "," << approx_kl << "," << grad_norm << ","
       << episodes_finished << "," << (update_aborted ? 1 : 0);
    return os.str();
  }
};

class Adam {
 public:
  Adam(Policy& policy, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_ = PolicyGrad::zeros_like(policy);
    v_ = PolicyGrad::zeros_like(policy);
  }

  void step(Policy& policy, PolicyGrad& grad) {
    ++t_;
    auto pv = policy_views(policy);
    auto gv = grad.views();
    auto mv = m_.views();
    auto vv = v_.views();
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t k = 0; k < pv.size(); ++k) {
      for (int i = 0; i < pv[k].size(); ++i) {
        const double g = gv[k].data[i];
        mv[k].data[i] = beta1_ * mv[k].data[i] + (1 - beta1_) * g;
        vv[k].data[i] = beta2_ * vv[k].data[i] + (1 - beta2_) * g * g;
        pv[k].data[i] -=
            lr_ * (mv[k].data[i] / bc1) / (std::sqrt(vv[k].data[i] / bc2) + eps_);
      }
    }
  }

  nlohmann::json to_json() {
    nlohmann::json tensors;
    for (auto& view_set : {std::make_pair("m", &m_), std::make_pair("v", &v_)}) {
      for (const TensorView& t : view_set.second->views()) {
        nlohmann::json data = nlohmann::json::array();
        for (int i = 0; i < t.size(); ++i) data.push_back(t.data[i]);
        tensors[std::string(view_set.first) + "." + t.name] = data;
      }
    }
    return {{"t", t_}, {"lr", lr_}, {"tensors", tensors}};
  }

  void restore(const nlohmann::json& j) {
    t_ = j.at("t").get<int64_t>();
    lr_ = j.at("lr").get<double>();
    const auto& tensors = j.at("tensors");
    for (auto& view_set : {std::make_pair("m", &m_), std::make_pair("v", &v_)}) {
      for (const TensorView& t : view_set.second->views()) {
        const auto& data = tensors.at(std::string(view_set.first) + "." + t.name);
        for (int i = 0; i < t.size(); ++i) t.data[i] = data[i].get<double>();
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  PolicyGrad m_, v_;
};

inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int t = std::min(workers, n);
  pool.reserve(t);
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

// Steps M meta-environments against a policy snapshot, recording recurrent
// states into every transition. Env stepping may run on worker threads; all
// stochastic draws happen on the caller thread in fixed env order.
class RolloutCollector {
 public:
  RolloutCollector(std::shared_ptr<const std::vector<RobotMorphology>> population,
                   const EnvConfig& env_cfg, const RewardConfig& reward_cfg,
                   const SimParams& sim_params, const RandomizationConfig& rand_cfg,
                   const PolicyConfig& policy_cfg, int num_envs, uint64_t seed,
                   int fixed_morph_index = -1)
      : policy_cfg_(policy_cfg), action_rng_(splitmix64(seed ^ 0x7a11ce5eedULL)) {
    for (int e = 0; e < num_envs; ++e)
      envs_.push_back(std::make_unique<MetaEnv>(population, env_cfg, reward_cfg, sim_params,
                                                rand_cfg, splitmix64(seed + 1000003 * e),
                                                fixed_morph_index));
    const int sd = policy_cfg_.state_dim();
    actor_states_ = MatX::Zero(sd, num_envs);
    critic_states_ = MatX::Zero(sd, num_envs);
  }

  int num_envs() const { return int(envs_.size()); }

  struct CollectResult {
    RolloutBuffer buffer;
    std::vector<double> finished_episode_returns;
    int episodes_finished = 0;
  };

  CollectResult collect(Policy& policy, int horizon, int workers) {
    CollectResult result;
    const int m = num_envs();
    result.buffer.num_envs = m;
    result.buffer.horizon = horizon;
    result.buffer.streams.assign(m, {});
    for (auto& s : result.buffer.streams) s.reserve(horizon);

    std::vector<MetaEnv::MetaStepResult> step_results(m);
    std::vector<VecX> actions(m);

    for (int t = 0; t < horizon; ++t) {
      MatX raw(policy.cfg.obs_dim, m);
      for (int e = 0; e < m; ++e) raw.col(e) = envs_[e]->current_obs();
      const MatX obs = policy.normalizer.apply(raw);
      policy.normalizer.update(raw);

      const MatX mean = forward_sequence(policy.cfg, policy.actor, {obs}, actor_states_)
                            .outputs[0];
      const MatX values = forward_sequence(policy.cfg, policy.critic, {obs}, critic_states_)
                              .outputs[0];
      const MatX next_actor = advance_state(policy.cfg, actor_states_, obs, policy.actor.gru);
      const MatX next_critic =
          advance_state(policy.cfg, critic_states_, obs, policy.critic.gru);
      const VecX std = policy.std();

      for (int e = 0; e < m; ++e) {
        Transition tr;
        tr.obs_norm = obs.col(e);
        tr.actor_state = actor_states_.col(e);
        tr.critic_state = critic_states_.col(e);
        tr.action = sample_gaussian(mean.col(e), std, action_rng_);
        tr.log_prob = gaussian_log_prob(mean.col(e), policy.log_std, tr.action);
        tr.value = values(0, e);
        result.buffer.streams[e].push_back(std::move(tr));
        actions[e] = result.buffer.streams[e].back().action;
      }

      parallel_for(m, workers, [&](int e) { step_results[e] = envs_[e]->step(actions[e]); });

      actor_states_ = next_actor;
      critic_states_ = next_critic;
      for (int e = 0; e < m; ++e) {
        Transition& tr = result.buffer.streams[e].back();
        tr.reward = step_results[e].reward;
        tr.done = step_results[e].done;
        tr.episode_boundary = step_results[e].done;
        tr.meta_boundary = step_results[e].meta_boundary;
        episode_return_[e] += tr.reward;
        if (tr.done) {
          result.finished_episode_returns.push_back(episode_return_[e]);
          ++result.episodes_finished;
          episode_return_[e] = 0.0;
        }
        if (tr.meta_boundary) {
          actor_states_.col(e).setZero();
          critic_states_.col(e).setZero();
        }
      }
    }

    // Bootstrap values for the post-rollout states.
    MatX raw(policy.cfg.obs_dim, m);
    for (int e = 0; e < m; ++e) raw.col(e) = envs_[e]->current_obs();
    const MatX obs = policy.normalizer.apply(raw);
    const MatX values =
        forward_sequence(policy.cfg, policy.critic, {obs}, critic_states_).outputs[0];
    result.buffer.bootstrap_value = values.row(0).transpose();
    return result;
  }

  nlohmann::json snapshot() const {
    nlohmann::json envs = nlohmann::json::array();
    for (const auto& e : envs_) envs.push_back(e->snapshot());
    auto mat = [](const MatX& x) {
      return std::vector<double>(x.data(), x.data() + x.size());
    };
    nlohmann::json er = nlohmann::json::array();
    for (const auto& [e, ret] : episode_return_) er.push_back({e, ret});
    return {{"envs", envs},
            {"actor_states", mat(actor_states_)},
            {"critic_states", mat(critic_states_)},
            {"action_rng", action_rng_.serialize()},
            {"episode_returns", er}};
  }

  void restore(const nlohmann::json& j) {
    const auto& envs = j.at("envs");
    if (envs.size() != envs_.size()) throw VersionError("collector: env count mismatch");
    for (size_t e = 0; e < envs_.size(); ++e) envs_[e]->restore(envs[e]);
    const auto as = j.at("actor_states").get<std::vector<double>>();
    const auto cs = j.at("critic_states").get<std::vector<double>>();
    actor_states_ = Eigen::Map<const MatX>(as.data(), actor_states_.rows(), num_envs());
    critic_states_ = Eigen::Map<const MatX>(cs.data(), critic_states_.rows(), num_envs());
    action_rng_.deserialize(j.at("action_rng").get<std::string>());
    episode_return_.clear();
    for (const auto& pair : j.at("episode_returns"))
      episode_return_[pair[0].get<int>()] = pair[1].get<double>();
  }

  MetaEnv& env(int e) { return *envs_[e]; }

 private:
  PolicyConfig policy_cfg_;
  std::vector<std::unique_ptr<MetaEnv>> envs_;
  MatX actor_states_, critic_states_;
  Rng action_rng_;
  std::map<int, double> episode_return_;
};

struct UpdateResult {
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  double max_ratio_deviation = 0.0;  // max |rho - 1| seen in the first minibatch
  bool aborted = false;
};

// Clipped-surrogate update over shuffled sequence minibatches. Ratios are
// recomputed by re-running the recurrent forward from each window's stored
// initial state.
inline UpdateResult ppo_update(Policy& policy, Adam& adam, RolloutBuffer& buffer,
                               const PpoConfig& cfg, Rng& rng) {
  if (cfg.normalize_advantages) normalize_advantages(buffer);
  std::vector<SequenceWindow> windows = make_windows(buffer, cfg.sequence_length);
  const int windows_per_batch = cfg.minibatch_size / cfg.sequence_length;

  const Policy saved_params = policy;  // restored verbatim if the update blows up
  UpdateResult result;
  int minibatches = 0;
  bool first_minibatch = true;

  const int T = cfg.sequence_length;
  const int obs_dim = policy.cfg.obs_dim;
  const int act_dim = policy.cfg.act_dim;

  for (int epoch = 0; epoch < cfg.num_epochs; ++epoch) {
    for (int i = int(windows.size()) - 1; i > 0; --i)
      std::swap(windows[i], windows[rng.uniform_int(0, i)]);
    for (size_t b0 = 0; b0 < windows.size(); b0 += windows_per_batch) {
      const int nw = int(std::min(windows.size() - b0, size_t(windows_per_batch)));
      std::vector<MatX> xs(T, MatX::Zero(obs_dim, nw));
      std::vector<MatX> actions(T, MatX::Zero(act_dim, nw));
      MatX mask = MatX::Zero(T, nw);
      MatX adv(T, nw), ret(T, nw), old_logp(T, nw);
      MatX a0 = MatX::Zero(policy.cfg.state_dim(), nw);
      MatX c0 = MatX::Zero(policy.cfg.state_dim(), nw);
      for (int w = 0; w < nw; ++w) {
        const SequenceWindow& win = windows[b0 + w];
        const auto& stream = buffer.streams[win.env];
        if (policy.cfg.state_dim() > 0) {
          a0.col(w) = stream[win.start].actor_state;
          c0.col(w) = stream[win.start].critic_state;
        }
        for (int t = 0; t < win.length; ++t) {
          const Transition& tr = stream[win.start + t];
          xs[t].col(w) = tr.obs_norm;
          actions[t].col(w) = tr.action;
          mask(t, w) = 1.0;
          adv(t, w) = tr.advantage;
          ret(t, w) = tr.ret;
          old_logp(t, w) = tr.log_prob;
        }
      }
      const double n_valid = mask.sum();

      SequenceCache actor_cache, critic_cache;
      const SequenceResult actor_out =
          forward_sequence(policy.cfg, policy.actor, xs, a0, &actor_cache);
      const SequenceResult critic_out =
          forward_sequence(policy.cfg, policy.critic, xs, c0, &critic_cache);

      std::vector<MatX> d_actor(T, MatX::Zero(act_dim, nw));
      std::vector<MatX> d_critic(T, MatX::Zero(1, nw));
      PolicyGrad grad = PolicyGrad::zeros_like(policy);

      double surr_loss = 0.0, v_loss = 0.0, kl = 0.0;
      int clipped = 0;
      const VecX stddev = policy.std();
      const VecX var = stddev.cwiseAbs2();

      for (int t = 0; t < T; ++t) {
        for (int w = 0; w < nw; ++w) {
          if (mask(t, w) == 0.0) continue;
          const VecX mean = actor_out.outputs[t].col(w);
          const VecX action = actions[t].col(w);
          const double logp = gaussian_log_prob(mean, policy.log_std, action);
          const double ratio = std::exp(logp - old_logp(t, w));
          const double a = adv(t, w);
          const double surr1 = ratio * a;
          const double clipped_ratio = clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
          const double surr2 = clipped_ratio * a;
          surr_loss += -std::min(surr1, surr2);
          kl += old_logp(t, w) - logp;
          if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
          if (first_minibatch && epoch == 0)
            result.max_ratio_deviation = std::max(result.max_ratio_deviation,
                                                  std::abs(ratio - 1.0));
          // d(-min)/d logp: active when the unclipped arm is selected or the
          // clip passes through.
          double dmin_dlogp = 0.0;
          if (surr1 <= surr2 || std::abs(ratio - 1.0) <= cfg.clip_eps)
            dmin_dlogp = -a * ratio;
          const double coeff = dmin_dlogp / n_valid;
          const VecX dmean = coeff * (action - mean).cwiseQuotient(var);
          d_actor[t].col(w) = dmean;
          // log-std gradient: surrogate + entropy bonus.
          for (int k = 0; k < act_dim; ++k) {
            const double z2 = square((action[k] - mean[k]) / stddev[k]);
            grad.log_std[k] += coeff * (z2 - 1.0);
            grad.log_std[k] += -cfg.entropy_coef / n_valid;
          }
          const double v = critic_out.outputs[t](0, w);
          const double verr = v - ret(t, w);
          v_loss += verr * verr;
          d_critic[t](0, w) = cfg.value_coef * 2.0 * verr / n_valid;
        }
      }

      backward_sequence(policy.cfg, policy.actor, actor_cache, d_actor, grad.actor);
      backward_sequence(policy.cfg, policy.critic, critic_cache, d_critic, grad.critic);

      double norm2 = 0.0;
      for (const TensorView& t : grad.views())
        for (int i = 0; i < t.size(); ++i) norm2 += t.data[i] * t.data[i];
      const double gnorm = std::sqrt(norm2);
      if (!std::isfinite(gnorm) || !std::isfinite(surr_loss) || !std::isfinite(v_loss)) {
        policy = saved_params;
        result.aborted = true;
        return result;
      }
      if (gnorm > cfg.grad_clip)
        for (const TensorView& t : grad.views())
          for (int i = 0; i < t.size(); ++i) t.data[i] *= cfg.grad_clip / gnorm;

      adam.step(policy, grad);

      result.surrogate_loss += surr_loss / n_valid;
      result.value_loss += cfg.value_coef * v_loss / n_valid;
      result.entropy += gaussian_entropy(policy.log_std);
      result.clip_fraction += double(clipped) / n_valid;
      result.approx_kl += kl / n_valid;
      result.grad_norm += gnorm;
      ++minibatches;
      first_minibatch = false;
    }
  }
  if (minibatches > 0) {
    result.surrogate_loss /= minibatches;
    result.value_loss /= minibatches;
    result.entropy /= minibatches;
    result.clip_fraction /= minibatches;
    result.approx_kl /= minibatches;
    result.grad_norm /= minibatches;
  }
  return result;
}

// Alternates collect -> GAE -> update until the timestep budget, writing one
// stats row per iteration and periodic resumable checkpoints.
class Trainer {
 public:
  Trainer(std::shared_ptr<const std::vector<RobotMorphology>> population, PolicyConfig policy_cfg,
          PpoConfig ppo_cfg, EnvConfig env_cfg, RewardConfig reward_cfg, SimParams sim_params,
          RandomizationConfig rand_cfg, int fixed_morph_index = -1)
      : ppo_cfg_(ppo_cfg),
        env_cfg_(env_cfg),
        policy_rng_(splitmix64(ppo_cfg.seed ^ 0xfeedface01ULL)),
        minibatch_rng_(splitmix64(ppo_cfg.seed ^ 0x5eedbeef02ULL)),
        policy_(Policy::create(policy_cfg, policy_rng_)),
        adam_(policy_, ppo_cfg.learning_rate),
        collector_(std::move(population), env_cfg, reward_cfg, sim_params, rand_cfg, policy_cfg,
                   ppo_cfg.num_envs, ppo_cfg.seed, fixed_morph_index) {
    ppo_cfg_.validate(env_cfg.episode_length);
  }

  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }
  int64_t env_steps() const { return env_steps_; }
  int64_t iteration() const { return iteration_; }

  using StatsCallback = std::function<void(const TrainStats&)>;
  using CheckpointCallback = std::function<void(int64_t env_steps)>;

  // Runs until the budget; returns the stats series.
  std::vector<TrainStats> run(int workers = 1, const StatsCallback& on_stats = {},
                              const CheckpointCallback& on_checkpoint = {}) {
    std::vector<TrainStats> series;
    if (on_checkpoint && env_steps_ == 0) on_checkpoint(0);  // initial checkpoint
    int64_t last_checkpoint = env_steps_;
    while (env_steps_ < ppo_cfg_.total_timesteps) {
      series.push_back(train_iteration(workers));
      if (on_stats) on_stats(series.back());
      if (on_checkpoint && ppo_cfg_.checkpoint_interval > 0 &&
          env_steps_ - last_checkpoint >= ppo_cfg_.checkpoint_interval) {
        on_checkpoint(env_steps_);
        last_checkpoint = env_steps_;
      }
    }
    if (on_checkpoint && env_steps_ != last_checkpoint) on_checkpoint(env_steps_);
    return series;
  }

  TrainStats train_iteration(int workers = 1) {
    const int horizon = env_cfg_.episode_length;
    RolloutCollector::CollectResult collected = collector_.collect(policy_, horizon, workers);
    compute_gae(collected.buffer, ppo_cfg_.gamma, ppo_cfg_.gae_lambda);
    const UpdateResult update =
        ppo_update(policy_, adam_, collected.buffer, ppo_cfg_, minibatch_rng_);

    env_steps_ += collected.buffer.size();
    ++iteration_;
    policy_.train_steps = env_steps_;

    for (double r : collected.finished_episode_returns) {
      recent_returns_.push_back(r);
      if (recent_returns_.size() > 100) recent_returns_.pop_front();
    }
    TrainStats stats;
    stats.iteration = iteration_;
    stats.env_steps = env_steps_;
    double tick_sum = 0.0;
    for (const auto& s : collected.buffer.streams)
      for (const auto& tr : s) tick_sum += tr.reward;
    stats.mean_tick_reward = tick_sum / double(collected.buffer.size());
    stats.mean_episodic_reward = 0.0;
    if (!recent_returns_.empty()) {
      for (double r : recent_returns_) stats.mean_episodic_reward += r;
      stats.mean_episodic_reward /= double(recent_returns_.size());
    }
    stats.surrogate_loss = update.surrogate_loss;
    stats.value_loss = update.value_loss;
    stats.entropy = update.entropy;
    stats.clip_fraction = update.clip_fraction;
    stats.approx_kl = update.approx_kl;
    stats.grad_norm = update.grad_norm;
    stats.episodes_finished = int(collected.finished_episode_returns.size());
    stats.update_aborted = update.aborted;
    return stats;
  }

  nlohmann::json snapshot() {
    return {{"format_version", 1},
            {"iteration", iteration_},
            {"env_steps", env_steps_},
            {"policy", policy_to_json(policy_)},
            {"adam", adam_.to_json()},
            {"collector", collector_.snapshot()},
            {"minibatch_rng", minibatch_rng_.serialize()},
            {"recent_returns", std::vector<double>(recent_returns_.begin(),
                                                   recent_returns_.end())}};
  }

  void restore(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
      throw VersionError("trainer checkpoint: unsupported format_version");
    iteration_ = j.at("iteration").get<int64_t>();
    env_steps_ = j.at("env_steps").get<int64_t>();
    policy_ = policy_from_json(j.at("policy"));
    adam_.restore(j.at("adam"));
    collector_.restore(j.at("collector"));
    minibatch_rng_.deserialize(j.at("minibatch_rng").get<std::string>());
    recent_returns_.clear();
    for (double r : j.at("recent_returns").get<std::vector<double>>())
      recent_returns_.push_back(r);
  }

  RolloutCollector& collector() { return collector_; }

 private:
  PpoConfig ppo_cfg_;
  EnvConfig env_cfg_;
  Rng policy_rng_;
  Rng minibatch_rng_;
  Policy policy_;
  Adam adam_;
  RolloutCollector collector_;
  int64_t env_steps_ = 0;
  int64_t iteration_ = 0;
  std::deque<double> recent_returns_;
};

}  // namespace mml
