#include "gcrl/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace gcrl {

void AwrConfig::validate() const {
  if (beta < 0.0) throw std::invalid_argument("AwrConfig: beta must be >= 0");
  if (weight_cap < 1.0) throw std::invalid_argument("AwrConfig: weight_cap must be >= 1");
  if (steps < 0 || batch_size < 1) throw std::invalid_argument("AwrConfig: bad steps/batch");
}

PolicyNet::PolicyNet(PolicyKind kind, int n_cells, int n_actions, int dz, std::vector<int> hidden,
                     bool layer_norm, Rng& rng)
    : kind_(kind), n_cells_(n_cells), n_actions_(n_actions), dz_(dz) {
  int in = 0;
  switch (kind_) {
    case PolicyKind::flat:
    case PolicyKind::high_raw:
    case PolicyKind::high_repr:
    case PolicyKind::low_raw:
      in = 2 * n_cells_;
      break;
    case PolicyKind::low_repr:
      in = n_cells_ + dz_;
      break;
  }
  net_ = Mlp(MlpSpec{in, std::move(hidden), out_dim(), layer_norm}, rng);
}

int PolicyNet::out_dim() const {
  switch (kind_) {
    case PolicyKind::flat:
    case PolicyKind::low_raw:
    case PolicyKind::low_repr:
      return n_actions_;
    case PolicyKind::high_raw:
      return n_cells_;
    case PolicyKind::high_repr:
      return dz_;
  }
  return 0;
}

BatchInput PolicyNet::build_input(const std::vector<int>& s, const std::vector<int>* ctx,
                                  const Matrix* z) const {
  BatchInput in;
  in.cols = static_cast<int>(s.size());
  in.blocks.push_back({0, 1.0, s});
  if (ctx) {
    in.rows = 2 * n_cells_;
    in.blocks.push_back({n_cells_, 1.0, *ctx});
  } else {
    in.rows = n_cells_ + dz_;
    in.dense = *z;
  }
  return in;
}

Matrix PolicyNet::forward_cells(const std::vector<int>& s, const std::vector<int>& ctx,
                                MlpCache* cache) const {
  if (kind_ == PolicyKind::low_repr)
    throw std::logic_error("PolicyNet::forward_cells: latent-subgoal policy needs forward_latent");
  return net_.forward(build_input(s, &ctx, nullptr), cache);
}

Matrix PolicyNet::forward_latent(const std::vector<int>& s, const Matrix& z, MlpCache* cache) const {
  if (kind_ != PolicyKind::low_repr)
    throw std::logic_error("PolicyNet::forward_latent: only for latent-subgoal policies");
  return net_.forward(build_input(s, nullptr, &z), cache);
}

Vector advantage_flat(const ValueNet& value, const std::vector<FlatBatchItem>& items, double gamma) {
  const std::size_t B = items.size();
  std::vector<int> s(B), s_next(B), g(B);
  for (std::size_t i = 0; i < B; ++i) {
    s[i] = items[i].s;
    s_next[i] = items[i].s_next;
    g[i] = items[i].g;
  }
  const Vector v = value.values(s, g);
  const Vector v_next = value.values(s_next, g);
  Vector adv(static_cast<int>(B));
  for (std::size_t i = 0; i < B; ++i) {
    const double r = items[i].s == items[i].g ? 0.0 : -1.0;
    adv(static_cast<int>(i)) = gamma * v_next(static_cast<int>(i)) + r - v(static_cast<int>(i));
  }
  return adv;
}

Vector advantage_high(const ValueNet& value, const std::vector<HighBatchItem>& items,
                      bool full_estimate, double gamma) {
  const std::size_t B = items.size();
  std::vector<int> s(B), sub(B), g(B);
  for (std::size_t i = 0; i < B; ++i) {
    s[i] = items[i].s;
    sub[i] = items[i].subgoal;
    g[i] = items[i].g;
  }
  const Vector v_s = value.values(s, g);
  const Vector v_sub = value.values(sub, g);
  Vector adv(static_cast<int>(B));
  for (std::size_t i = 0; i < B; ++i) {
    const int j = static_cast<int>(i);
    if (full_estimate) {
      const double disc = std::pow(gamma, items[i].k_actual);
      adv(j) = disc * v_sub(j) + items[i].reward_to_subgoal - v_s(j);
    } else {
      adv(j) = v_sub(j) - v_s(j);
    }
  }
  return adv;
}

Vector advantage_low(const ValueNet& value, const std::vector<LowBatchItem>& items,
                     bool full_estimate, double gamma) {
  const std::size_t B = items.size();
  std::vector<int> s(B), s_next(B), sub(B);
  for (std::size_t i = 0; i < B; ++i) {
    s[i] = items[i].s;
    s_next[i] = items[i].s_next;
    sub[i] = items[i].subgoal;
  }
  const Vector v_s = value.values(s, sub);
  const Vector v_next = value.values(s_next, sub);
  Vector adv(static_cast<int>(B));
  for (std::size_t i = 0; i < B; ++i) {
    const int j = static_cast<int>(i);
    if (full_estimate) {
      const double r = items[i].s == items[i].subgoal ? 0.0 : -1.0;
      adv(j) = gamma * v_next(j) + r - v_s(j);
    } else {
      adv(j) = v_next(j) - v_s(j);
    }
  }
  return adv;
}

double awr_weight(double advantage, double beta, double weight_cap) {
  return std::min(std::exp(beta * advantage), weight_cap);
}

Vector awr_weights(const Vector& advantages, double beta, double weight_cap) {
  Vector w(advantages.size());
  for (int i = 0; i < advantages.size(); ++i) w(i) = awr_weight(advantages(i), beta, weight_cap);
  return w;
}

double weighted_nll(const Matrix& logits, const std::vector<int>& targets, const Vector& weights,
                    Matrix* dlogits) {
  const int B = static_cast<int>(logits.cols());
  const int n = static_cast<int>(logits.rows());
  if (static_cast<int>(targets.size()) != B || weights.size() != B)
    throw std::invalid_argument("weighted_nll: size mismatch");
  if (dlogits) dlogits->resize(n, B);
  double loss = 0.0;
  Vector p(n);
  for (int j = 0; j < B; ++j) {
    const double mx = logits.col(j).maxCoeff();
    p = (logits.col(j).array() - mx).exp();
    const double z = p.sum();
    p /= z;
    const double scale = weights(j) / B;
    loss += scale * -(std::log(p(targets[static_cast<std::size_t>(j)])));
    if (dlogits) {
      dlogits->col(j) = scale * p;
      (*dlogits)(targets[static_cast<std::size_t>(j)], j) -= scale;
    }
  }
  return loss;
}

namespace {

void check_policy_loss(double loss, const char* stage) {
  if (!std::isfinite(loss) || std::abs(loss) > 1e6)
    throw std::runtime_error(std::string(stage) + ": loss diverged (" + format_double(loss) + ")");
}

}  // namespace

std::vector<TraceRowSimple> train_flat(PolicyNet& policy, const ValueNet& value,
                                       const Dataset& data, const AwrConfig& cfg,
                                       const PolicyTrainOptions& opt, std::uint64_t seed) {
  cfg.validate();
  if (policy.kind() != PolicyKind::flat) throw std::invalid_argument("train_flat: wrong policy kind");
  Rng rng = Rng::stream(seed, "flat_batches");
  AdamState adam = make_adam_state(policy.params());
  std::vector<TraceRowSimple> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<int> s, g, a;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_flat_batch(data, opt.p_future_goal, cfg.batch_size, rng);
    const Vector adv = advantage_flat(value, batch, opt.gamma);
    const Vector w = awr_weights(adv, cfg.beta, cfg.weight_cap);
    s.clear();
    g.clear();
    a.clear();
    for (const auto& it : batch) {
      s.push_back(it.s);
      g.push_back(it.g);
      a.push_back(it.a);
    }
    MlpCache cache;
    const Matrix logits = policy.forward_cells(s, g, &cache);
    Matrix dlogits;
    const double loss = weighted_nll(logits, a, w, &dlogits);
    check_policy_loss(loss, "train_flat");
    policy.net().zero_grads();
    policy.net().backward(cache, dlogits);
    adam_step(policy.params(), adam, AdamConfig{cfg.lr});
    trace.push_back({step, loss});
    if (opt.on_step) opt.on_step(step);
  }
  return trace;
}

std::vector<TraceRowSimple> train_bc(PolicyNet& policy, const Dataset& data, const AwrConfig& cfg,
                                     double p_future_goal, std::uint64_t seed) {
  cfg.validate();
  if (policy.kind() != PolicyKind::flat) throw std::invalid_argument("train_bc: wrong policy kind");
  Rng rng = Rng::stream(seed, "flat_batches");
  AdamState adam = make_adam_state(policy.params());
  std::vector<TraceRowSimple> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<int> s, g, a;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_flat_batch(data, p_future_goal, cfg.batch_size, rng);
    s.clear();
    g.clear();
    a.clear();
    for (const auto& it : batch) {
      s.push_back(it.s);
      g.push_back(it.g);
      a.push_back(it.a);
    }
    MlpCache cache;
    const Matrix logits = policy.forward_cells(s, g, &cache);
    Matrix dlogits;
    const double loss = weighted_nll(logits, a, Vector::Ones(static_cast<int>(batch.size())), &dlogits);
    check_policy_loss(loss, "train_bc");
    policy.net().zero_grads();
    policy.net().backward(cache, dlogits);
    adam_step(policy.params(), adam, AdamConfig{cfg.lr});
    trace.push_back({step, loss});
  }
  return trace;
}

std::vector<TraceRowSimple> train_high(PolicyNet& policy, const ValueNet& value,
                                       const Dataset& data, const AwrConfig& cfg, int k,
                                       const PolicyTrainOptions& opt, std::uint64_t seed) {
  cfg.validate();
  if (policy.kind() != PolicyKind::high_raw && policy.kind() != PolicyKind::high_repr)
    throw std::invalid_argument("train_high: wrong policy kind");
  if (policy.kind() == PolicyKind::high_repr && !value.has_phi())
    throw std::invalid_argument("train_high: latent head needs a value net with phi");
  Rng rng = Rng::stream(seed, "high_batches");
  AdamState adam = make_adam_state(policy.params());
  std::vector<TraceRowSimple> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<int> s, g, sub;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_high_batch(data, k, opt.p_future_goal, opt.gamma, cfg.batch_size, rng);
    const Vector adv = advantage_high(value, batch, opt.full_advantage, opt.gamma);
    const Vector w = awr_weights(adv, cfg.beta, cfg.weight_cap);
    s.clear();
    g.clear();
    sub.clear();
    for (const auto& it : batch) {
      s.push_back(it.s);
      g.push_back(it.g);
      sub.push_back(it.subgoal);
    }
    MlpCache cache;
    const Matrix out = policy.forward_cells(s, g, &cache);
    double loss;
    Matrix dout;
    if (policy.kind() == PolicyKind::high_raw) {
      loss = weighted_nll(out, sub, w, &dout);
    } else {
      // Fixed-variance Gaussian head in z-space: weighted squared error to
      // the subgoal representation.
      const Matrix z_target = value.represent(sub, s);
      const Matrix diff = out - z_target;
      const int B = static_cast<int>(batch.size());
      loss = 0.0;
      dout.resize(diff.rows(), diff.cols());
      for (int j = 0; j < B; ++j) {
        const double scale = w(j) / B;
        loss += scale * 0.5 * diff.col(j).squaredNorm();
        dout.col(j) = scale * diff.col(j);
      }
    }
    check_policy_loss(loss, "train_high");
    policy.net().zero_grads();
    policy.net().backward(cache, dout);
    adam_step(policy.params(), adam, AdamConfig{cfg.lr});
    trace.push_back({step, loss});
    if (opt.on_step) opt.on_step(step);
  }
  return trace;
}

std::vector<TraceRowSimple> train_low(PolicyNet& policy, ValueNet& value, const Dataset& data,
                                      const AwrConfig& cfg, int k, const PolicyTrainOptions& opt,
                                      std::uint64_t seed) {
  cfg.validate();
  if (policy.kind() != PolicyKind::low_raw && policy.kind() != PolicyKind::low_repr)
    throw std::invalid_argument("train_low: wrong policy kind");
  if (data.n_labeled() == 0) throw std::invalid_argument("train_low: no labeled trajectories");
  const bool latent = policy.kind() == PolicyKind::low_repr;
  const bool aux = latent && opt.aux_repr_grad;
  Rng rng = Rng::stream(seed, "low_batches");
  AdamState adam = make_adam_state(policy.params());
  AdamState phi_adam;
  if (aux) phi_adam = make_adam_state(value.phi().params("phi/"));
  std::vector<TraceRowSimple> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<int> s, s_next, sub, a;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_low_batch(data, k, cfg.batch_size, rng);
    const Vector adv = advantage_low(value, batch, opt.full_advantage, opt.gamma);
    const Vector w = awr_weights(adv, cfg.beta, cfg.weight_cap);
    s.clear();
    s_next.clear();
    sub.clear();
    a.clear();
    for (const auto& it : batch) {
      s.push_back(it.s);
      s_next.push_back(it.s_next);
      sub.push_back(it.subgoal);
      a.push_back(it.a);
    }
    MlpCache cache;
    Matrix out;
    MlpCache phi_cache;
    Matrix z_raw;
    if (latent) {
      const Matrix z = aux ? value.represent_cached(sub, s, &phi_cache, &z_raw)
                           : value.represent(sub, s);
      out = policy.forward_latent(s, z, &cache);
    } else {
      out = policy.forward_cells(s, sub, &cache);
    }
    Matrix dout;
    const double loss = weighted_nll(out, a, w, &dout);
    check_policy_loss(loss, "train_low");
    policy.net().zero_grads();
    if (aux) value.phi().zero_grads();
    const Matrix dz = policy.net().backward(cache, dout, aux);
    if (aux) {
      value.represent_backward(phi_cache, z_raw, dz);
      adam_step(value.phi().params("phi/"), phi_adam, AdamConfig{cfg.lr});
    }
    adam_step(policy.params(), adam, AdamConfig{cfg.lr});
    trace.push_back({step, loss});
    if (opt.on_step) opt.on_step(step);
  }
  return trace;
}

}  // namespace gcrl
