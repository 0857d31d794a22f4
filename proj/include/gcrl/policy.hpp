#pragma once

#include "gcrl/common.hpp"
#include "gcrl/dataset.hpp"
#include "gcrl/nn.hpp"

#include <functional>
#include <vector>

namespace gcrl {

struct AwrConfig {
  double beta = 1.0;        // inverse temperature, >= 0
  double weight_cap = 100.0;
  double lr = 3e-4;
  int steps = 2000;
  int batch_size = 256;

  void validate() const;
};

struct TraceRowSimple {
  int step;
  double loss;
};

enum class PolicyKind { flat, high_raw, high_repr, low_raw, low_repr };

// One policy head. flat / low_* are categorical over primitive actions;
// high_raw is categorical over grid cells; high_repr regresses a point on the
// unit sphere in z-space.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(PolicyKind kind, int n_cells, int n_actions, int dz, std::vector<int> hidden,
            bool layer_norm, Rng& rng);

  PolicyKind kind() const { return kind_; }
  int n_cells() const { return n_cells_; }
  int n_actions() const { return n_actions_; }
  int dz() const { return dz_; }
  int out_dim() const;

  // flat / high_*: ctx = goal cells. low_raw: ctx = subgoal cells.
  Matrix forward_cells(const std::vector<int>& s, const std::vector<int>& ctx,
                       MlpCache* cache = nullptr) const;
  // low_repr: dense latent subgoals.
  Matrix forward_latent(const std::vector<int>& s, const Matrix& z, MlpCache* cache = nullptr) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  std::vector<ParamRef> params() { return net_.params(); }
  std::vector<std::pair<std::string, const Matrix*>> named_values() const { return net_.named_values(); }

 private:
  BatchInput build_input(const std::vector<int>& s, const std::vector<int>* ctx,
                         const Matrix* z) const;

  PolicyKind kind_ = PolicyKind::flat;
  int n_cells_ = 0;
  int n_actions_ = 0;
  int dz_ = 0;
  Mlp net_;
};

// A(s, a, g) ~= gamma V(s', g) + r(s, g) - V(s, g), with r = -1[s != g].
Vector advantage_flat(const ValueNet& value, const std::vector<FlatBatchItem>& items, double gamma);
// Simplified estimate V(subgoal, g) - V(s, g); the full variant restores the
// discount and reward terms recorded by the sampler.
Vector advantage_high(const ValueNet& value, const std::vector<HighBatchItem>& items,
                      bool full_estimate, double gamma);
// Simplified estimate V(s', subgoal) - V(s, subgoal); full variant adds
// gamma-discounting and r(s, subgoal).
Vector advantage_low(const ValueNet& value, const std::vector<LowBatchItem>& items,
                     bool full_estimate, double gamma);

double awr_weight(double advantage, double beta, double weight_cap);
Vector awr_weights(const Vector& advantages, double beta, double weight_cap);

// Weighted categorical NLL: loss value plus gradient w.r.t. logits.
double weighted_nll(const Matrix& logits, const std::vector<int>& targets, const Vector& weights,
                    Matrix* dlogits);

struct PolicyTrainOptions {
  bool full_advantage = false;   // use the non-simplified advantage estimates
  bool aux_repr_grad = false;    // low_repr only: let the policy loss update phi
  double p_future_goal = 0.7;    // goal mixture for flat/high samplers
  double gamma = 0.99;
  std::function<void(int)> on_step;  // invoked after each update (eval cadence)
};

// Advantage-weighted extraction against a frozen value function. Each
// returns the per-step loss trace.
std::vector<TraceRowSimple> train_flat(PolicyNet& policy, const ValueNet& value,
                                       const Dataset& data, const AwrConfig& cfg,
                                       const PolicyTrainOptions& opt, std::uint64_t seed);
std::vector<TraceRowSimple> train_high(PolicyNet& policy, const ValueNet& value,
                                       const Dataset& data, const AwrConfig& cfg, int k,
                                       const PolicyTrainOptions& opt, std::uint64_t seed);
std::vector<TraceRowSimple> train_low(PolicyNet& policy, ValueNet& value, const Dataset& data,
                                      const AwrConfig& cfg, int k, const PolicyTrainOptions& opt,
                                      std::uint64_t seed);

// Plain goal-conditioned behavioral cloning (the beta = 0 baseline).
std::vector<TraceRowSimple> train_bc(PolicyNet& policy, const Dataset& data, const AwrConfig& cfg,
                                     double p_future_goal, std::uint64_t seed);

}  // namespace gcrl
