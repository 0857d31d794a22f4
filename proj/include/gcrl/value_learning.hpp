#pragma once

#include "gcrl/common.hpp"
#include "gcrl/dataset.hpp"
#include "gcrl/gridworld.hpp"
#include "gcrl/nn.hpp"

#include <vector>

namespace gcrl {

struct IqlConfig {
  double tau = 0.7;       // expectile in [0.5, 1)
  double gamma = 0.99;
  double lr = 3e-4;
  double polyak = 0.005;  // target smoothing coefficient
  int steps = 4000;
  int batch_size = 256;
  bool pipeline = false;  // sample batches on a producer thread

  void validate() const;
};

// L2^tau(x) = |tau - 1(x < 0)| x^2; subgradient at x = 0 is 0.
double expectile_loss(double x, double tau);
// d/dx of the above.
double expectile_loss_grad(double x, double tau);

struct ValueUpdateStats {
  double loss;
  double v_mean;
  double v_min;
  double v_max;
};

// One gradient step on the mean expectile loss of the TD residual
// r + gamma * V_target(s', g) - V(s, g). Items with s == g regress to
// exactly r (no bootstrap past the absorbing goal).
ValueUpdateStats value_update(ValueNet& net, const ValueNet& target,
                              const std::vector<ValueBatchItem>& batch, const IqlConfig& cfg,
                              AdamState& adam);

struct TraceRow {
  int step;
  double loss;
  double v_mean;
  double v_min;
  double v_max;
};

// Full value-learning loop: sample -> update -> polyak. Deterministic under
// the seed; the loss trace has one row per step.
std::vector<TraceRow> train_value(ValueNet& net, const Dataset& data, const IqlConfig& cfg,
                                  const GoalSamplingConfig& goals, std::uint64_t seed);

// Exact tau-expectile of a weighted discrete distribution.
double weighted_expectile(const std::vector<double>& values, const std::vector<double>& weights,
                          double tau);

// Synchronous expectile backups over the empirical successor distribution of
// the dataset, iterated to a fixed point (max change < tol). Cells without
// observed successors keep their initial value.
TabularValue tabular_expectile_backup(const GridWorld& env, const Dataset& data, double tau,
                                      double gamma, double tol = 1e-10, int max_sweeps = 100000);

}  // namespace gcrl
