#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <json.hpp>

#include "mml/core.hpp"
#include "mml/rng.hpp"

namespace mml {

// Batched dense layers: columns are batch samples; 64-bit throughout so the
// finite-difference gradient oracles are meaningful.

inline MatX orthogonal_init(int rows, int cols, Rng& rng) {
  const int n = std::max(rows, cols);
  MatX a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<MatX> qr(a);
  MatX q = qr.householderQ();
  const MatX r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q.topLeftCorner(rows, cols);
}

inline MatX fan_in_init(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(cols));
  MatX w(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
  return w;
}

struct Linear {
  MatX w;
  VecX b;

  static Linear create(int out, int in, Rng& rng) {
    Linear l;
    l.w = fan_in_init(out, in, rng);
    const double bound = 1.0 / std::sqrt(double(in));
    l.b = VecX::Zero(out);
    for (int i = 0; i < out; ++i) l.b[i] = rng.uniform(-bound, bound);
    return l;
  }

  static Linear zeros(int out, int in) { return {MatX::Zero(out, in), VecX::Zero(out)}; }

  MatX forward(const MatX& x) const { return (w * x).colwise() + b; }

  // Accumulates parameter gradients, returns dL/dx.
  MatX backward(const MatX& x, const MatX& dy, Linear& grad) const {
    grad.w.noalias() += dy * x.transpose();
    grad.b += dy.rowwise().sum();
    return w.transpose() * dy;
  }
};

inline MatX elu(const MatX& x) {
  return x.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
}

inline MatX elu_grad_from_output(const MatX& x, const MatX& e) {
  MatX g(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      g(i, j) = x(i, j) > 0 ? 1.0 : e(i, j) + 1.0;
  return g;
}

// Two ELU hidden layers and a linear head.
struct Mlp {
  Linear l1, l2, head;

  // The output head starts near zero (scaled-down weights, zero bias) so the
  // initial policy acts at the default pose and the initial value is ~0.
  static Mlp create(int in, int h1, int h2, int out, Rng& rng,
                    double head_scale = 0.01) {
    Linear head = Linear::create(out, h2, rng);
    head.w *= head_scale;
    head.b.setZero();
    return {Linear::create(h1, in, rng), Linear::create(h2, h1, rng), std::move(head)};
  }

  static Mlp zeros_like(const Mlp& m) {
    return {Linear::zeros(int(m.l1.w.rows()), int(m.l1.w.cols())),
            Linear::zeros(int(m.l2.w.rows()), int(m.l2.w.cols())),
            Linear::zeros(int(m.head.w.rows()), int(m.head.w.cols()))};
  }

  struct Cache {
    MatX x, a1, e1, a2, e2;
  };

  MatX forward(const MatX& x, Cache* cache = nullptr) const {
    MatX a1 = l1.forward(x);
    MatX e1 = elu(a1);
    MatX a2 = l2.forward(e1);
    MatX e2 = elu(a2);
    MatX y = head.forward(e2);
    if (cache) *cache = {x, std::move(a1), std::move(e1), std::move(a2), std::move(e2)};
    return y;
  }

  MatX backward(const Cache& c, const MatX& dy, Mlp& grad) const {
    MatX de2 = head.backward(c.e2, dy, grad.head);
    MatX da2 = de2.cwiseProduct(elu_grad_from_output(c.a2, c.e2));
    MatX de1 = l2.backward(c.e1, da2, grad.l2);
    MatX da1 = de1.cwiseProduct(elu_grad_from_output(c.a1, c.e1));
    return l1.backward(c.x, da1, grad.l1);
  }
};

// Standard gated recurrent unit:
//   z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
//   c = tanh(Wc x + Uc (r.h) + bc), h' = (1-z).h + z.c
struct GruCell {
  MatX wz, uz, wr, ur, wc, uc;
  VecX bz, br, bc;

  static GruCell create(int in, int hidden, Rng& rng) {
    GruCell g;
    g.wz = fan_in_init(hidden, in, rng);
    g.wr = fan_in_init(hidden, in, rng);
    g.wc = fan_in_init(hidden, in, rng);
    g.uz = orthogonal_init(hidden, hidden, rng);
    g.ur = orthogonal_init(hidden, hidden, rng);
    g.uc = orthogonal_init(hidden, hidden, rng);
    g.bz = VecX::Zero(hidden);
    g.br = VecX::Zero(hidden);
    g.bc = VecX::Zero(hidden);
    return g;
  }

  static GruCell zeros_like(const GruCell& g) {
    GruCell z;
    z.wz = MatX::Zero(g.wz.rows(), g.wz.cols());
    z.wr = MatX::Zero(g.wr.rows(), g.wr.cols());
    z.wc = MatX::Zero(g.wc.rows(), g.wc.cols());
    z.uz = MatX::Zero(g.uz.rows(), g.uz.cols());
    z.ur = MatX::Zero(g.ur.rows(), g.ur.cols());
    z.uc = MatX::Zero(g.uc.rows(), g.uc.cols());
    z.bz = VecX::Zero(g.bz.size());
    z.br = VecX::Zero(g.br.size());
    z.bc = VecX::Zero(g.bc.size());
    return z;
  }

  struct Cache {
    MatX x, h_prev, z, r, c, rh;
  };

  MatX forward(const MatX& x, const MatX& h, Cache* cache = nullptr) const {
    const auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    MatX z = (((wz * x + uz * h).colwise() + bz)).unaryExpr(sigmoid);
    MatX r = (((wr * x + ur * h).colwise() + br)).unaryExpr(sigmoid);
    MatX rh = r.cwiseProduct(h);
    MatX c = (((wc * x + uc * rh).colwise() + bc)).array().tanh();
    MatX h_new = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(c);
    if (cache) *cache = {x, h, std::move(z), std::move(r), std::move(c), std::move(rh)};
    return h_new;
  }

  // dh_new -> parameter grads, dx, dh_prev.
  void backward(const Cache& c, const MatX& dh_new, GruCell& grad, MatX& dx,
                MatX& dh_prev) const {
    const MatX dz = dh_new.cwiseProduct(c.c - c.h_prev);
    const MatX dc = dh_new.cwiseProduct(c.z);
    MatX dh = dh_new.cwiseProduct((1.0 - c.z.array()).matrix());

    const MatX dac = dc.cwiseProduct((1.0 - c.c.array().square()).matrix());
    grad.wc.noalias() += dac * c.x.transpose();
    grad.uc.noalias() += dac * c.rh.transpose();
    grad.bc += dac.rowwise().sum();
    const MatX drh = uc.transpose() * dac;
    const MatX dr = drh.cwiseProduct(c.h_prev);
    dh += drh.cwiseProduct(c.r);
    dx = wc.transpose() * dac;

    const MatX daz = dz.cwiseProduct(c.z.cwiseProduct((1.0 - c.z.array()).matrix()));
    grad.wz.noalias() += daz * c.x.transpose();
    grad.uz.noalias() += daz * c.h_prev.transpose();
    grad.bz += daz.rowwise().sum();
    dh += uz.transpose() * daz;
    dx += wz.transpose() * daz;

    const MatX dar = dr.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));
    grad.wr.noalias() += dar * c.x.transpose();
    grad.ur.noalias() += dar * c.h_prev.transpose();
    grad.br += dar.rowwise().sum();
    dh += ur.transpose() * dar;
    dx += wr.transpose() * dar;

    dh_prev = std::move(dh);
  }
};

enum class ArchKind { gru, mlp, mlp_history };

inline const char* to_string(ArchKind a) {
  switch (a) {
    case ArchKind::gru: return "gru";
    case ArchKind::mlp: return "mlp";
    case ArchKind::mlp_history: return "mlp_history";
  }
  return "?";
}

inline ArchKind arch_from_string(const std::string& s) {
  if (s == "gru") return ArchKind::gru;
  if (s == "mlp") return ArchKind::mlp;
  if (s == "mlp_history") return ArchKind::mlp_history;
  throw ParseError("unknown architecture '" + s + "'");
}

struct PolicyConfig {
  ArchKind arch = ArchKind::gru;
  int obs_dim = 56;
  int act_dim = 12;
  int gru_hidden = 32;
  int trunk_hidden = 256;                    // gru and plain mlp trunks
  std::array<int, 2> history_hidden = {1024, 512};
  int history_len = 16;
  double log_std_init = -1.0;

  // Recurrent-state dimension carried between steps (zero for plain MLP; the
  // MLP+history state is its rolling observation window).
  int state_dim() const {
    switch (arch) {
      case ArchKind::gru: return gru_hidden;
      case ArchKind::mlp: return 0;
      case ArchKind::mlp_history: return obs_dim * history_len;
    }
    return 0;
  }
};

// One network (actor or critic head shape decided by out_dim).
struct PolicyNet {
  ArchKind arch = ArchKind::gru;
  GruCell gru;  // gru arch only
  Mlp trunk;

  static PolicyNet create(const PolicyConfig& cfg, int out_dim, Rng& rng) {
    PolicyNet net;
    net.arch = cfg.arch;
    switch (cfg.arch) {
      case ArchKind::gru:
        net.gru = GruCell::create(cfg.obs_dim, cfg.gru_hidden, rng);
        net.trunk = Mlp::create(cfg.gru_hidden + cfg.obs_dim, cfg.trunk_hidden,
                                cfg.trunk_hidden, out_dim, rng);
        break;
      case ArchKind::mlp:
        net.trunk = Mlp::create(cfg.obs_dim, cfg.trunk_hidden, cfg.trunk_hidden, out_dim, rng);
        break;
      case ArchKind::mlp_history:
        net.trunk = Mlp::create(cfg.obs_dim * cfg.history_len, cfg.history_hidden[0],
                                cfg.history_hidden[1], out_dim, rng);
        break;
    }
    return net;
  }

  static PolicyNet zeros_like(const PolicyNet& n) {
    PolicyNet z;
    z.arch = n.arch;
    if (n.arch == ArchKind::gru) z.gru = GruCell::zeros_like(n.gru);
    z.trunk = Mlp::zeros_like(n.trunk);
    return z;
  }
};

// Advances the recurrent state by one observation column-batch.
inline MatX advance_state(const PolicyConfig& cfg, const MatX& state, const MatX& x,
                          const GruCell& gru) {
  switch (cfg.arch) {
    case ArchKind::gru: return gru.forward(x, state);
    case ArchKind::mlp: return state;
    case ArchKind::mlp_history: {
      MatX next(state.rows(), state.cols());
      const int keep = cfg.obs_dim * (cfg.history_len - 1);
      next.topRows(keep) = state.bottomRows(keep);
      next.bottomRows(cfg.obs_dim) = x;
      return next;
    }
  }
  return state;
}

struct SequenceCache {
  std::vector<GruCell::Cache> gru;    // gru arch
  std::vector<Mlp::Cache> trunk;      // all arches
  std::vector<MatX> states;           // state BEFORE each step (for replay checks)
};

struct SequenceResult {
  std::vector<MatX> outputs;  // out_dim x batch per step
  MatX final_state;
};

// Runs T steps from an initial recurrent state. xs[t] is obs_dim x batch.
inline SequenceResult forward_sequence(const PolicyConfig& cfg, const PolicyNet& net,
                                       const std::vector<MatX>& xs, const MatX& state0,
                                       SequenceCache* cache = nullptr) {
  SequenceResult res;
  res.outputs.reserve(xs.size());
  MatX state = state0;
  if (cache) {
    cache->gru.resize(net.arch == ArchKind::gru ? xs.size() : 0);
    cache->trunk.resize(xs.size());
    cache->states.resize(xs.size());
  }
  for (size_t t = 0; t < xs.size(); ++t) {
    if (cache) cache->states[t] = state;
    MatX trunk_in;
    switch (net.arch) {
      case ArchKind::gru: {
        state = net.gru.forward(xs[t], state, cache ? &cache->gru[t] : nullptr);
        trunk_in.resize(state.rows() + xs[t].rows(), xs[t].cols());
        trunk_in << state, xs[t];
        break;
      }
      case ArchKind::mlp:
        trunk_in = xs[t];
        break;
      case ArchKind::mlp_history:
        state = advance_state(cfg, state, xs[t], net.gru);
        trunk_in = state;
        break;
    }
    res.outputs.push_back(net.trunk.forward(trunk_in, cache ? &cache->trunk[t] : nullptr));
  }
  res.final_state = std::move(state);
  return res;
}

// Exact reverse-mode gradients through the whole sequence (BPTT for the GRU).
// d_outputs[t] must match outputs[t]; observations are not differentiated.
inline void backward_sequence(const PolicyConfig& cfg, const PolicyNet& net,
                              const SequenceCache& cache, const std::vector<MatX>& d_outputs,
                              PolicyNet& grad) {
  const int T = int(d_outputs.size());
  MatX dstate;  // dL/dh flowing backward (gru only)
  for (int t = T - 1; t >= 0; --t) {
    const MatX dtrunk_in = net.trunk.backward(cache.trunk[t], d_outputs[t], grad.trunk);
    if (net.arch == ArchKind::gru) {
      const int h = int(net.gru.bz.size());
      MatX dh = dtrunk_in.topRows(h);
      if (dstate.size() > 0) dh += dstate;
      MatX dx;
      net.gru.backward(cache.gru[t], dh, grad.gru, dx, dstate);
    }
  }
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian head

inline VecX sample_gaussian(const VecX& mean, const VecX& std, Rng& rng) {
  VecX a(mean.size());
  for (int i = 0; i < mean.size(); ++i) a[i] = mean[i] + std[i] * rng.normal();
  return a;
}

inline double gaussian_log_prob(const VecX& mean, const VecX& log_std, const VecX& action) {
  double lp = -0.5 * double(mean.size()) * std::log(2.0 * kPi) - log_std.sum();
  for (int i = 0; i < mean.size(); ++i)
    lp -= 0.5 * square((action[i] - mean[i]) / std::exp(log_std[i]));
  return lp;
}

inline double gaussian_entropy(const VecX& log_std) {
  return 0.5 * double(log_std.size()) * std::log(2.0 * kPi * std::exp(1.0)) + log_std.sum();
}

// ---------------------------------------------------------------------------
// Running observation normalizer (parallel count/mean/M2 accumulation)

struct Normalizer {
  VecX mean, m2;
  double count = 0.0;
  double clip = 10.0;
  // Identity until this many samples have been seen: a cold-start batch of
  // near-identical observations would otherwise estimate a degenerate
  // variance and slam every later input into the clip bounds.
  double warmup = 1000.0;

  static Normalizer create(int dim) {
    Normalizer n;
    n.mean = VecX::Zero(dim);
    n.m2 = VecX::Zero(dim);
    return n;
  }

  void update(const MatX& batch) {
    const double nb = double(batch.cols());
    if (nb == 0) return;
    const VecX mean_b = batch.rowwise().mean();
    VecX m2_b = VecX::Zero(batch.rows());
    for (Eigen::Index j = 0; j < batch.cols(); ++j)
      m2_b += (batch.col(j) - mean_b).cwiseAbs2();
    const VecX delta = mean_b - mean;
    const double total = count + nb;
    mean += delta * (nb / total);
    m2 += m2_b + delta.cwiseAbs2() * (count * nb / total);
    count = total;
  }

  bool active() const { return count >= std::max(warmup, 1.0); }

  VecX stddev() const {
    if (!active()) return VecX::Ones(mean.size());
    return (m2 / count).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-2);
  }

  VecX apply(const VecX& x) const {
    const VecX y = (x - (active() ? mean : VecX::Zero(x.size()).eval()))
                       .cwiseQuotient(stddev());
    return y.cwiseMax(-clip).cwiseMin(clip);
  }

  MatX apply(const MatX& x) const {
    MatX y(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) y.col(j) = apply(VecX(x.col(j)));
    return y;
  }
};

// ---------------------------------------------------------------------------
// Actor-critic container: separate networks, shared observation normalizer,
// state-independent learned log-std.

struct Policy {
  PolicyConfig cfg;
  PolicyNet actor, critic;
  VecX log_std;
  Normalizer normalizer;
  int64_t train_steps = 0;

  static Policy create(const PolicyConfig& cfg, Rng& rng) {
    Policy p;
    p.cfg = cfg;
    p.actor = PolicyNet::create(cfg, cfg.act_dim, rng);
    p.critic = PolicyNet::create(cfg, 1, rng);
    p.log_std = VecX::Constant(cfg.act_dim, cfg.log_std_init);
    p.normalizer = Normalizer::create(cfg.obs_dim);
    return p;
  }

  VecX std() const { return log_std.array().exp(); }
};

// Flat views over every trainable tensor, in a fixed traversal order shared
// by gradients, optimizer state, and checkpoints.
struct TensorView {
  std::string name;
  double* data;
  int rows, cols;
  int size() const { return rows * cols; }
};

inline void append_views(const std::string& prefix, GruCell& g, std::vector<TensorView>& out) {
  auto add = [&](const char* n, MatX& m) {
    out.push_back({prefix + n, m.data(), int(m.rows()), int(m.cols())});
  };
  auto addv = [&](const char* n, VecX& v) {
    out.push_back({prefix + n, v.data(), int(v.size()), 1});
  };
  add("wz", g.wz);
  add("uz", g.uz);
  add("wr", g.wr);
  add("ur", g.ur);
  add("wc", g.wc);
  add("uc", g.uc);
  addv("bz", g.bz);
  addv("br", g.br);
  addv("bc", g.bc);
}

inline void append_views(const std::string& prefix, Mlp& m, std::vector<TensorView>& out) {
  auto add = [&](const char* n, MatX& w, VecX& b) {
    out.push_back({prefix + n + std::string(".w"), w.data(), int(w.rows()), int(w.cols())});
    out.push_back({prefix + n + std::string(".b"), b.data(), int(b.size()), 1});
  };
  add("l1", m.l1.w, m.l1.b);
  add("l2", m.l2.w, m.l2.b);
  add("head", m.head.w, m.head.b);
}

inline void append_views(const std::string& prefix, PolicyNet& n, std::vector<TensorView>& out) {
  if (n.arch == ArchKind::gru) append_views(prefix + "gru.", n.gru, out);
  append_views(prefix + "trunk.", n.trunk, out);
}

inline std::vector<TensorView> policy_views(Policy& p) {
  std::vector<TensorView> out;
  append_views("actor.", p.actor, out);
  append_views("critic.", p.critic, out);
  out.push_back({"log_std", p.log_std.data(), int(p.log_std.size()), 1});
  return out;
}

struct PolicyGrad {
  PolicyNet actor, critic;
  VecX log_std;

  static PolicyGrad zeros_like(const Policy& p) {
    PolicyGrad g;
    g.actor = PolicyNet::zeros_like(p.actor);
    g.critic = PolicyNet::zeros_like(p.critic);
    g.log_std = VecX::Zero(p.log_std.size());
    return g;
  }

  std::vector<TensorView> views() {
    std::vector<TensorView> out;
    append_views("actor.", actor, out);
    append_views("critic.", critic, out);
    out.push_back({"log_std", log_std.data(), int(log_std.size()), 1});
    return out;
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON container holding every tensor, the normalizer
// statistics, and the training-step counter. Doubles round-trip exactly.

inline nlohmann::json policy_to_json(const Policy& policy) {
  Policy& p = const_cast<Policy&>(policy);
  nlohmann::json tensors;
  for (const TensorView& t : policy_views(p)) {
    nlohmann::json data = nlohmann::json::array();
    for (int i = 0; i < t.size(); ++i) data.push_back(t.data[i]);
    tensors[t.name] = {{"rows", t.rows}, {"cols", t.cols}, {"data", data}};
  }
  return {{"format_version", 1},
          {"arch", to_string(p.cfg.arch)},
          {"obs_dim", p.cfg.obs_dim},
          {"act_dim", p.cfg.act_dim},
          {"gru_hidden", p.cfg.gru_hidden},
          {"trunk_hidden", p.cfg.trunk_hidden},
          {"history_hidden", {p.cfg.history_hidden[0], p.cfg.history_hidden[1]}},
          {"history_len", p.cfg.history_len},
          {"log_std_init", p.cfg.log_std_init},
          {"train_steps", p.train_steps},
          {"tensors", tensors},
          {"normalizer",
           {{"count", p.normalizer.count},
            {"clip", p.normalizer.clip},
            {"warmup", p.normalizer.warmup},
            {"mean", std::vector<double>(p.normalizer.mean.data(),
                                         p.normalizer.mean.data() + p.normalizer.mean.size())},
            {"m2", std::vector<double>(p.normalizer.m2.data(),
                                       p.normalizer.m2.data() + p.normalizer.m2.size())}}}};
}

inline Policy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1)
      throw VersionError("checkpoint: unsupported format_version");
    PolicyConfig cfg;
    cfg.arch = arch_from_string(j.at("arch").get<std::string>());
    cfg.obs_dim = j.at("obs_dim").get<int>();
    cfg.act_dim = j.at("act_dim").get<int>();
    cfg.gru_hidden = j.at("gru_hidden").get<int>();
    cfg.trunk_hidden = j.at("trunk_hidden").get<int>();
    cfg.history_hidden = {j.at("history_hidden")[0].get<int>(),
                          j.at("history_hidden")[1].get<int>()};
    cfg.history_len = j.at("history_len").get<int>();
    cfg.log_std_init = j.at("log_std_init").get<double>();
    Rng dummy(0);
    Policy p = Policy::create(cfg, dummy);
    p.train_steps = j.at("train_steps").get<int64_t>();
    const auto& tensors = j.at("tensors");
    for (const TensorView& t : policy_views(p)) {
      const auto& tj = tensors.at(t.name);
      if (tj.at("rows").get<int>() != t.rows || tj.at("cols").get<int>() != t.cols)
        throw VersionError("checkpoint: shape mismatch for " + t.name);
      const auto& data = tj.at("data");
      for (int i = 0; i < t.size(); ++i) t.data[i] = data[i].get<double>();
    }
    const auto& norm = j.at("normalizer");
    p.normalizer.count = norm.at("count").get<double>();
    p.normalizer.clip = norm.at("clip").get<double>();
    p.normalizer.warmup = norm.at("warmup").get<double>();
    const auto mean = norm.at("mean").get<std::vector<double>>();
    const auto m2 = norm.at("m2").get<std::vector<double>>();
    p.normalizer.mean = Eigen::Map<const VecX>(mean.data(), mean.size());
    p.normalizer.m2 = Eigen::Map<const VecX>(m2.data(), m2.size());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace mml
