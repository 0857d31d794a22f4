#pragma once

#include "gcrl/common.hpp"
#include "gcrl/dataset.hpp"
#include "gcrl/gridworld.hpp"
#include "gcrl/nn.hpp"
#include "gcrl/policy.hpp"
#include "gcrl/runtime.hpp"
#include "gcrl/value_learning.hpp"

#include <string>
#include <vector>

namespace gcrl {

// Flat key-value configuration with dotted section keys. Unknown keys are
// errors; parse(serialize(c)) round-trips exactly.
struct ExperimentConfig {
  std::string env = "chain:33";
  std::string out_dir = "runs/exp";
  std::vector<int> seeds = {0};
  int threads = 0;  // 0 = hardware concurrency
  int k = 8;
  ReprMode repr = ReprMode::phi_gs;
  int dz = 10;
  double labeled_fraction = 1.0;
  bool full_advantage = false;
  bool aux_repr_grad = false;
  int subgoal_hold = 1;
  bool layer_norm = true;

  Behavior behavior = Behavior::epsilon_noisy;
  double data_epsilon = 0.2;
  int num_traj = 300;
  int max_len = 200;
  std::uint64_t data_seed = 1;

  double goal_p_random = 0.3;
  double goal_p_future = 0.5;
  double goal_p_current = 0.2;
  double p_future_policy = 0.7;

  IqlConfig value;  // (gamma, tau) defaults (0.99, 0.7)
  std::vector<int> value_hidden = {128, 128, 128};
  std::vector<int> phi_hidden = {128, 128, 128};
  std::vector<int> policy_hidden = {64, 64};

  AwrConfig flat;
  AwrConfig high;
  AwrConfig low;

  int eval_episodes = 50;
  int eval_max_steps = 0;  // 0 = 4 * env diameter
  double eval_eps = 0.05;
  int eval_every = 1000;   // interim eval cadence in policy steps; 0 = off
  int eval_d0 = 0;         // distant-goal threshold; 0 = half diameter
  int acc_pairs = 600;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;
  std::string hash() const;
  void validate() const;
};

struct StageTiming {
  double value_s = 0.0;
  double flat_s = 0.0;
  double high_s = 0.0;
  double low_s = 0.0;
  double eval_s = 0.0;
};

struct RunRecord {
  int seed = 0;
  std::string family = "train";
  std::string variant;
  double variant_x = 0.0;
  std::string config_hash;
  std::string dataset_hash;
  std::string value_hash_after_value;
  std::string value_hash_after_policies;
  bool value_frozen = false;
  StageTiming timing;
  EvalReport eval_flat;
  EvalReport eval_hier;
  AccuracyReport acc_flat;
  AccuracyReport acc_hier;
  std::string metrics_sha1;

  std::string to_json() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunRecord> records;

  std::vector<double> per_seed(double (*f)(const RunRecord&)) const;
  double mean_success_hier() const;
  double mean_success_flat() const;
};

// Algorithm stages in order: value function, then flat baseline, then
// high-level, then low-level extraction; evaluation and accuracy analysis at
// the end. One record per seed; seed runs may execute in parallel and are
// merged in seed order. Artifacts land under config.out_dir/seed<k>/.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Sweeps. Each runs run_experiment per variant and emits plot data.
ExperimentResult run_variant(ExperimentConfig config, const std::string& family,
                             const std::string& variant, double variant_x);
std::vector<ExperimentResult> ablate_k(const ExperimentConfig& base, const std::vector<int>& k_list);
std::vector<ExperimentResult> ablate_repr(const ExperimentConfig& base,
                                          const std::vector<ReprMode>& modes);
std::vector<ExperimentResult> action_limited(const ExperimentConfig& base,
                                             const std::vector<double>& fractions);

// Family-specific plot emission; all records must share one family.
void emit_plots(const std::vector<RunRecord>& records, const std::string& out_dir);

// Exact one-sided p-value (alternative: median(diff) > 0) of the paired
// Wilcoxon signed-rank test, by enumeration over sign assignments.
double paired_wilcoxon_one_sided_p(const std::vector<double>& diffs);

// Checkpoint IO for the CLI.
void save_value_net(const std::string& path, const ValueNet& net);
ValueNet load_value_net(const std::string& path);
void save_policy_net(const std::string& path, const PolicyNet& net);
PolicyNet load_policy_net(const std::string& path);

}  // namespace gcrl
