#pragma once

#include "gcrl/common.hpp"
#include "gcrl/gridworld.hpp"
#include "gcrl/nn.hpp"
#include "gcrl/policy.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gcrl {

struct EvalConfig {
  int episodes = 50;
  int max_steps = 200;
  double eps_greedy = 0.05;
  std::uint64_t seed = 0;
  int subgoal_hold = 1;  // re-query the high-level policy every m steps

  void validate() const;
};

struct EvalTask {
  int start;
  int goal;
};

struct EpisodeRecord {
  int start;
  int goal;
  int distance;   // BFS distance at episode start
  int steps;
  bool success;
  double ret;     // -steps when successful, else -max_steps
};

struct DistanceBin {
  int lo;          // inclusive
  int hi;          // exclusive
  int count = 0;
  double value = 0.0;  // success rate or accuracy within the bin
};

struct EvalReport {
  double success_rate = 0.0;
  double mean_return = 0.0;
  std::vector<EpisodeRecord> episodes;
  std::vector<DistanceBin> success_by_distance;

  double success_at_least(int min_distance) const;
  std::string to_json() const;
};

enum class PolicyMode { flat, hierarchical };

// Everything needed to act. high/low may be null for flat evaluation.
struct PolicyBundle {
  const ValueNet* value = nullptr;
  const PolicyNet* flat = nullptr;
  const PolicyNet* high = nullptr;
  const PolicyNet* low = nullptr;
};

int act_flat(const GridWorld& env, const PolicyNet& flat, int cell, int goal, Rng& rng, double eps);

// Query the high-level policy for a (latent) subgoal, then the low-level
// policy for the action; epsilon-greedy mixing on the final action.
int act_hierarchical(const GridWorld& env, const PolicyNet& high, const PolicyNet& low,
                     const ValueNet& value, int cell, int goal, Rng& rng, double eps);

// Sample start/goal pairs with BFS distance in [min_dist, max_dist].
std::vector<EvalTask> sample_eval_tasks(const GridWorld& env, int n, int min_dist, int max_dist,
                                        Rng& rng);

// An actor maps (cell, goal, rng) to an action and may carry per-episode
// state (e.g. held subgoals); the factory builds a fresh one per episode.
using ActFn = std::function<int(int, int, Rng&)>;
using ActFactory = std::function<ActFn()>;

EvalReport evaluate(const GridWorld& env, const std::vector<EvalTask>& tasks,
                    const EvalConfig& cfg, const ActFactory& make_actor);

EvalReport evaluate(PolicyMode mode, const GridWorld& env, const std::vector<EvalTask>& tasks,
                    const EvalConfig& cfg, const PolicyBundle& bundle);

// Builds the actor used by evaluate/policy_accuracy for a policy bundle.
ActFactory make_policy_actor(PolicyMode mode, const GridWorld& env, const EvalConfig& cfg,
                             const PolicyBundle& bundle);

struct AccuracyReport {
  double overall = 0.0;
  double near = 0.0;     // d < d0
  double distant = 0.0;  // d >= d0
  int d0 = 0;
  int n_near = 0;
  int n_distant = 0;
  std::vector<DistanceBin> by_distance;

  std::string to_json() const;
};

// Fraction of pairs whose greedy action lies in the optimal action set,
// overall and binned by BFS distance with threshold d0.
AccuracyReport policy_accuracy(PolicyMode mode, const GridWorld& env,
                               const std::vector<EvalTask>& pairs, const PolicyBundle& bundle,
                               int d0);

AccuracyReport policy_accuracy(const GridWorld& env, const std::vector<EvalTask>& pairs,
                               const ActFn& act, int d0, std::uint64_t seed = 0);

}  // namespace gcrl
