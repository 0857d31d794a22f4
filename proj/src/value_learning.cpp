#include "gcrl/value_learning.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <thread>

namespace gcrl {

void IqlConfig::validate() const {
  if (tau < 0.5 || tau >= 1.0) throw std::invalid_argument("IqlConfig: tau must be in [0.5, 1)");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("IqlConfig: gamma must be in (0, 1]");
  if (polyak < 0.0 || polyak > 1.0) throw std::invalid_argument("IqlConfig: polyak must be in [0, 1]");
  if (steps < 0 || batch_size < 1) throw std::invalid_argument("IqlConfig: bad steps/batch");
}

double expectile_loss(double x, double tau) {
  const double w = x < 0.0 ? 1.0 - tau : tau;
  return w * x * x;
}

double expectile_loss_grad(double x, double tau) {
  const double w = x < 0.0 ? 1.0 - tau : tau;
  return 2.0 * w * x;
}

ValueUpdateStats value_update(ValueNet& net, const ValueNet& target,
                              const std::vector<ValueBatchItem>& batch, const IqlConfig& cfg,
                              AdamState& adam) {
  if (batch.empty()) throw std::invalid_argument("value_update: empty batch");
  const int B = static_cast<int>(batch.size());
  std::vector<int> s(batch.size()), s_next(batch.size()), g(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    s[i] = batch[i].s;
    s_next[i] = batch[i].s_next;
    g[i] = batch[i].g;
  }

  // Bootstrap through the target parameters only.
  const Vector v_next = target.values(s_next, g);
  Vector td_target(B);
  for (int i = 0; i < B; ++i) {
    const auto& it = batch[static_cast<std::size_t>(i)];
    td_target(i) = it.s == it.g ? it.r : it.r + cfg.gamma * v_next(i);
  }

  ValueNetCache cache;
  const Vector v = net.values(s, g, &cache);
  const Vector residual = td_target - v;

  double loss = 0.0;
  Vector dV(B);
  for (int i = 0; i < B; ++i) {
    loss += expectile_loss(residual(i), cfg.tau);
    dV(i) = -expectile_loss_grad(residual(i), cfg.tau) / B;
  }
  loss /= B;
  if (!std::isfinite(loss) || std::abs(loss) > 1e6) {
    throw std::runtime_error("value_update: loss diverged (loss=" + format_double(loss) +
                             ", v_mean=" + format_double(v.mean()) + ")");
  }

  net.zero_grads();
  net.backward(cache, dV);
  adam_step(net.params(), adam, AdamConfig{cfg.lr});
  return ValueUpdateStats{loss, v.mean(), v.minCoeff(), v.maxCoeff()};
}

namespace {

// Single-producer single-consumer bounded blocking queue for batch pipelining.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : cap_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return q_.size() < cap_; });
    q_.push(std::move(item));
    not_empty_.notify_one();
  }

  T pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !q_.empty(); });
    T item = std::move(q_.front());
    q_.pop();
    not_full_.notify_one();
    return item;
  }

 private:
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::queue<T> q_;
  std::size_t cap_;
};

}  // namespace

std::vector<TraceRow> train_value(ValueNet& net, const Dataset& data, const IqlConfig& cfg,
                                  const GoalSamplingConfig& goals, std::uint64_t seed) {
  cfg.validate();
  goals.validate();
  std::vector<TraceRow> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  if (cfg.steps == 0) return trace;

  ValueNet target = net;
  AdamState adam = make_adam_state(net.params());
  const auto target_params = target.params();
  const auto online_params = net.params();

  auto run_step = [&](int step, const std::vector<ValueBatchItem>& batch) {
    const ValueUpdateStats st = value_update(net, target, batch, cfg, adam);
    polyak_update(target_params, online_params, cfg.polyak);
    trace.push_back(TraceRow{step, st.loss, st.v_mean, st.v_min, st.v_max});
  };

  if (!cfg.pipeline) {
    Rng rng = Rng::stream(seed, "value_batches");
    for (int step = 0; step < cfg.steps; ++step) {
      run_step(step, sample_value_batch(data, goals, cfg.batch_size, rng));
    }
    return trace;
  }

  // The producer owns its RNG stream, so pipelined and serial runs see the
  // same batch sequence.
  BoundedQueue<std::vector<ValueBatchItem>> queue(4);
  std::thread producer([&] {
    Rng rng = Rng::stream(seed, "value_batches");
    for (int step = 0; step < cfg.steps; ++step) {
      queue.push(sample_value_batch(data, goals, cfg.batch_size, rng));
    }
  });
  for (int step = 0; step < cfg.steps; ++step) run_step(step, queue.pop());
  producer.join();
  return trace;
}

double weighted_expectile(const std::vector<double>& values, const std::vector<double>& weights,
                          double tau) {
  if (values.empty() || values.size() != weights.size())
    throw std::invalid_argument("weighted_expectile: bad inputs");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  double total_wy = 0.0, total_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total_wy += weights[i] * values[i];
    total_w += weights[i];
  }
  if (total_w <= 0.0) throw std::invalid_argument("weighted_expectile: nonpositive total weight");

  // Scan segments between sorted values; within each, the expectile condition
  // tau * sum_{y>=m} w (y-m) = (1-tau) * sum_{y<m} w (m-y) is linear in m.
  double below_wy = 0.0, below_w = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    const double lo = j == 0 ? -std::numeric_limits<double>::infinity() : values[order[j - 1]];
    const double hi = j == n ? std::numeric_limits<double>::infinity() : values[order[j]];
    const double above_wy = total_wy - below_wy;
    const double above_w = total_w - below_w;
    const double denom = tau * above_w + (1.0 - tau) * below_w;
    if (denom > 0.0) {
      const double m = (tau * above_wy + (1.0 - tau) * below_wy) / denom;
      if (m >= lo - 1e-12 && m <= hi + 1e-12) return std::clamp(m, values[order.front()], values[order.back()]);
    }
    if (j < n) {
      below_wy += weights[order[j]] * values[order[j]];
      below_w += weights[order[j]];
    }
  }
  // Numerically flat distribution.
  return values[order.back()];
}

TabularValue tabular_expectile_backup(const GridWorld& env, const Dataset& data, double tau,
                                      double gamma, double tol, int max_sweeps) {
  if (tau < 0.5 || tau >= 1.0) throw std::invalid_argument("tabular_expectile_backup: bad tau");
  const int n = env.n_cells();

  // Empirical successor multiset per state.
  std::vector<std::vector<std::pair<int, double>>> succ(static_cast<std::size_t>(n));
  {
    std::vector<std::map<int, double>> counts(static_cast<std::size_t>(n));
    for (const auto& t : data.trajectories()) {
      for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
        counts[static_cast<std::size_t>(t.states[i])][t.states[i + 1]] += 1.0;
      }
    }
    for (int c = 0; c < n; ++c) {
      for (const auto& [nx, w] : counts[static_cast<std::size_t>(c)])
        succ[static_cast<std::size_t>(c)].emplace_back(nx, w);
    }
  }

  TabularValue V(n, n, 0.0);
  std::vector<double> ys, ws;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    Matrix next = V.table;
    for (int g : env.free_cells()) {
      for (int s : env.free_cells()) {
        if (s == g) {
          next(s, g) = 0.0;
          continue;
        }
        const auto& sc = succ[static_cast<std::size_t>(s)];
        if (sc.empty()) continue;
        ys.clear();
        ws.clear();
        for (const auto& [nx, w] : sc) {
          ys.push_back(-1.0 + gamma * V.table(nx, g));
          ws.push_back(w);
        }
        const double m = weighted_expectile(ys, ws, tau);
        max_change = std::max(max_change, std::abs(m - V.table(s, g)));
        next(s, g) = m;
      }
    }
    V.table.swap(next);
    if (max_change < tol) {
      V.validate_finite();
      return V;
    }
  }
  throw std::runtime_error("tabular_expectile_backup: no convergence within sweep cap");
}

}  // namespace gcrl
