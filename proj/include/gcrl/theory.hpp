#pragma once

#include "gcrl/common.hpp"
#include "gcrl/gridworld.hpp"

#include <string>
#include <vector>

namespace gcrl {

// Phi, the standard normal CDF.
double std_normal_cdf(double x);

// Probability that a flat policy picks the wrong action on the 1-D chain at
// state-goal distance T under proportional value noise of scale sigma:
// Phi(-sqrt(2) / (sigma * sqrt(T^2 + 1))).
double flat_error(double T, double sigma);

struct TheoryBound {
  double T = 0.0;
  double k = 0.0;
  double flat = 0.0;   // flat policy error
  double high = 0.0;   // high-level term
  double low = 0.0;    // low-level term
  double bound = 0.0;  // high + low
};

// Union bound on the hierarchical policy error with subgoal step k:
// Phi(-sqrt2/(sigma sqrt((T/k)^2+1))) + Phi(-sqrt2/(sigma sqrt(k^2+1))).
TheoryBound hier_error_bound(double T, double sigma, double k);

struct OptimalK {
  int k = 1;
  TheoryBound bound;
};

// Exhaustive argmin of the bound over integer k in [1, T]; ties toward
// smaller k.
OptimalK optimal_k(int T, double sigma);

// Proportional noise: V_hat = V* + sigma * z * V*, z iid standard normal per
// queried (state, goal) pair.
struct NoiseModel {
  double sigma = 0.0;
  double value_hat(double v_star, double z) const { return v_star * (1.0 + sigma * z); }
};

enum class McMode { flat, hierarchical };

struct McEstimate {
  double p = 0.0;
  double se = 0.0;  // binomial standard error
  long trials = 0;
};

// Monte-Carlo error probability on the chain construction: fresh independent
// noise per queried pair; the hierarchical mode composes the noisy subgoal
// choice (s +- k) with the noisy local action choice (s +- 1).
McEstimate monte_carlo_policy_error(int T, double sigma, McMode mode, int k, long trials,
                                    std::uint64_t seed);

// Greedy action fields on a grid under one sampled noise realization, for
// direct value-greedy (flat) and subgoal-then-greedy (hierarchical) action
// selection.
struct ActionMap {
  int goal = -1;
  double sigma = 0.0;
  int k = 0;
  std::vector<int> flat_action;     // per cell; -1 for walls and the goal
  std::vector<int> hier_action;
  std::vector<int> hier_subgoal;    // chosen subgoal cell per cell
  std::vector<int> optimal_flat;    // 1 if the flat action is optimal
  std::vector<int> optimal_hier;

  double wrong_fraction_flat(const GridWorld& env, int min_dist) const;
  double wrong_fraction_hier(const GridWorld& env, int min_dist) const;
  std::string to_json(const GridWorld& env) const;
};

ActionMap noisy_action_map(const GridWorld& env, int goal, double sigma, int k, std::uint64_t seed);

// Checks that a value table expressed through collapsed goal codes induces
// exactly the same greedy action sets as the original table. neighbors[s]
// lists the one-step successor cells of s.
struct ArgmaxEquivalenceReport {
  bool precondition_ok = true;  // V_phi(s, code(g)) == V*(s, g) everywhere
  bool equal = true;            // argmax sets match everywhere
  int witness_s = -1;
  int witness_g = -1;
  long pairs_checked = 0;

  bool ok() const { return precondition_ok && equal; }
};

ArgmaxEquivalenceReport argmax_equivalence_check(const std::vector<std::vector<int>>& neighbors,
                                                 const Matrix& v_star,
                                                 const std::vector<int>& goal_code,
                                                 const Matrix& v_phi, double tol = 1e-9);

// Convenience wrapper for gridworlds with an explicit representation table.
ArgmaxEquivalenceReport argmax_equivalence_check(const GridWorld& env, double gamma,
                                                 const std::vector<int>& goal_code,
                                                 const Matrix& v_phi, double tol = 1e-9);

std::vector<std::vector<int>> successor_sets(const GridWorld& env);
Matrix optimal_value_table(const GridWorld& env, double gamma);

}  // namespace gcrl
