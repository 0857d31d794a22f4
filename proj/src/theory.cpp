#include "gcrl/theory.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gcrl {

using nlohmann::json;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double flat_error(double T, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("flat_error: sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  return std_normal_cdf(-std::sqrt(2.0) / (sigma * std::hypot(T, 1.0)));
}

TheoryBound hier_error_bound(double T, double sigma, double k) {
  if (k < 1.0 || k > T) throw std::invalid_argument("hier_error_bound: need 1 <= k <= T");
  TheoryBound b;
  b.T = T;
  b.k = k;
  b.flat = flat_error(T, sigma);
  if (sigma == 0.0) return b;
  b.high = std_normal_cdf(-std::sqrt(2.0) / (sigma * std::hypot(T / k, 1.0)));
  b.low = std_normal_cdf(-std::sqrt(2.0) / (sigma * std::hypot(k, 1.0)));
  b.bound = b.high + b.low;
  return b;
}

OptimalK optimal_k(int T, double sigma) {
  if (T <= 1) throw std::invalid_argument("optimal_k: T must be > 1");
  OptimalK best;
  best.k = 1;
  best.bound = hier_error_bound(T, sigma, 1.0);
  for (int k = 2; k <= T; ++k) {
    const TheoryBound b = hier_error_bound(T, sigma, static_cast<double>(k));
    if (b.bound < best.bound.bound) {
      best.k = k;
      best.bound = b;
    }
  }
  return best;
}

McEstimate monte_carlo_policy_error(int T, double sigma, McMode mode, int k, long trials,
                                    std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("monte_carlo_policy_error: trials must be >= 1");
  if (T <= 1) throw std::invalid_argument("monte_carlo_policy_error: T must be > 1");
  if (mode == McMode::hierarchical && (k < 1 || k > T))
    throw std::invalid_argument("monte_carlo_policy_error: need 1 <= k <= T");
  const NoiseModel noise{sigma};

  // Fixed chunking keeps the estimate identical however trials are executed.
  const int n_chunks = 16;
  long wrong = 0;
  for (int c = 0; c < n_chunks; ++c) {
    const long lo = trials * c / n_chunks;
    const long hi = trials * (c + 1) / n_chunks;
    Rng rng = Rng::stream(seed, "mc_chunk_" + std::to_string(c));
    for (long t = lo; t < hi; ++t) {
      if (mode == McMode::flat) {
        const double v_fwd = noise.value_hat(-(T - 1.0), rng.normal());
        const double v_bwd = noise.value_hat(-(T + 1.0), rng.normal());
        if (v_fwd <= v_bwd) ++wrong;
      } else {
        const double vh_fwd = noise.value_hat(-(T - static_cast<double>(k)), rng.normal());
        const double vh_bwd = noise.value_hat(-(T + static_cast<double>(k)), rng.normal());
        const bool sub_fwd = vh_fwd > vh_bwd;  // subgoal s+k, else s-k
        // Distances from s+-1 to the chosen subgoal.
        const double d_fwd = sub_fwd ? k - 1.0 : k + 1.0;
        const double d_bwd = sub_fwd ? k + 1.0 : k - 1.0;
        const double vl_fwd = noise.value_hat(-d_fwd, rng.normal());
        const double vl_bwd = noise.value_hat(-d_bwd, rng.normal());
        const int action = vl_fwd > vl_bwd ? +1 : -1;
        if (action != +1) ++wrong;
      }
    }
  }
  McEstimate est;
  est.trials = trials;
  est.p = static_cast<double>(wrong) / static_cast<double>(trials);
  est.se = std::sqrt(std::max(est.p * (1.0 - est.p), 1e-12) / static_cast<double>(trials));
  return est;
}

namespace {

int greedy_by_noisy_value(const GridWorld& env, int cell, int target, const Matrix& v_hat) {
  int best_action = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < env.n_actions(); ++a) {
    const int nx = env.step_cell(cell, a);
    const double v = v_hat(nx, target);
    if (v > best) {
      best = v;
      best_action = a;
    }
  }
  return best_action;
}

}  // namespace

ActionMap noisy_action_map(const GridWorld& env, int goal, double sigma, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("noisy_action_map: k must be >= 1");
  const int n = env.n_cells();
  Rng rng = Rng::stream(seed, "noise_field");

  // One noise realization per queried (state, goal) pair.
  Matrix v_hat(n, n);
  const NoiseModel noise{sigma};
  for (int g = 0; g < n; ++g) {
    for (int s = 0; s < n; ++s) {
      if (env.is_wall(s) || env.is_wall(g)) {
        v_hat(s, g) = -std::numeric_limits<double>::infinity();
        continue;
      }
      v_hat(s, g) = noise.value_hat(env.optimal_value(s, g, 1.0), rng.normal());
    }
  }

  ActionMap map;
  map.goal = goal;
  map.sigma = sigma;
  map.k = k;
  map.flat_action.assign(static_cast<std::size_t>(n), -1);
  map.hier_action.assign(static_cast<std::size_t>(n), -1);
  map.hier_subgoal.assign(static_cast<std::size_t>(n), -1);
  map.optimal_flat.assign(static_cast<std::size_t>(n), 0);
  map.optimal_hier.assign(static_cast<std::size_t>(n), 0);

  for (int s : env.free_cells()) {
    if (s == goal) continue;
    const auto best = env.optimal_action_set(s, goal);

    const int fa = greedy_by_noisy_value(env, s, goal, v_hat);
    map.flat_action[static_cast<std::size_t>(s)] = fa;
    map.optimal_flat[static_cast<std::size_t>(s)] =
        std::find(best.begin(), best.end(), fa) != best.end() ? 1 : 0;

    // Subgoal candidates: the ring of cells at BFS distance min(k, d(s, g))
    // from s (the sampler's subgoal clamp keeps subgoals no farther than the
    // goal), falling back to the farthest non-empty ring below that.
    const int want = std::min(k, env.bfs_distance(s, goal));
    std::vector<int> candidates;
    for (int ring = want; ring >= 1 && candidates.empty(); --ring) {
      for (int c : env.free_cells()) {
        if (env.bfs_distance(s, c) == ring) candidates.push_back(c);
      }
    }
    int subgoal = s;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int c : candidates) {
      if (v_hat(c, goal) > best_v) {
        best_v = v_hat(c, goal);
        subgoal = c;
      }
    }
    map.hier_subgoal[static_cast<std::size_t>(s)] = subgoal;
    const int ha = subgoal == s ? fa : greedy_by_noisy_value(env, s, subgoal, v_hat);
    map.hier_action[static_cast<std::size_t>(s)] = ha;
    map.optimal_hier[static_cast<std::size_t>(s)] =
        std::find(best.begin(), best.end(), ha) != best.end() ? 1 : 0;
  }
  return map;
}

double ActionMap::wrong_fraction_flat(const GridWorld& env, int min_dist) const {
  int n = 0, wrong = 0;
  for (int s : env.free_cells()) {
    if (s == goal || env.bfs_distance(s, goal) < min_dist) continue;
    ++n;
    wrong += optimal_flat[static_cast<std::size_t>(s)] ? 0 : 1;
  }
  return n == 0 ? 0.0 : static_cast<double>(wrong) / n;
}

double ActionMap::wrong_fraction_hier(const GridWorld& env, int min_dist) const {
  int n = 0, wrong = 0;
  for (int s : env.free_cells()) {
    if (s == goal || env.bfs_distance(s, goal) < min_dist) continue;
    ++n;
    wrong += optimal_hier[static_cast<std::size_t>(s)] ? 0 : 1;
  }
  return n == 0 ? 0.0 : static_cast<double>(wrong) / n;
}

std::string ActionMap::to_json(const GridWorld& env) const {
  json j;
  j["goal"] = goal;
  j["sigma"] = sigma;
  j["k"] = k;
  j["width"] = env.width();
  j["height"] = env.height();
  j["flat_action"] = flat_action;
  j["hier_action"] = hier_action;
  j["hier_subgoal"] = hier_subgoal;
  j["optimal_flat"] = optimal_flat;
  j["optimal_hier"] = optimal_hier;
  return j.dump();
}

ArgmaxEquivalenceReport argmax_equivalence_check(const std::vector<std::vector<int>>& neighbors,
                                                 const Matrix& v_star,
                                                 const std::vector<int>& goal_code,
                                                 const Matrix& v_phi, double tol) {
  const int n_states = static_cast<int>(v_star.rows());
  const int n_goals = static_cast<int>(v_star.cols());
  ArgmaxEquivalenceReport rep;
  if (static_cast<int>(neighbors.size()) != n_states || static_cast<int>(goal_code.size()) != n_goals)
    throw std::invalid_argument("argmax_equivalence_check: shape mismatch");

  // Precondition: the parameterized table reproduces V* exactly.
  for (int g = 0; g < n_goals; ++g) {
    for (int s = 0; s < n_states; ++s) {
      if (std::abs(v_phi(s, goal_code[static_cast<std::size_t>(g)]) - v_star(s, g)) > tol) {
        rep.precondition_ok = false;
        rep.witness_s = s;
        rep.witness_g = g;
        return rep;
      }
    }
  }

  const double tie_tol = 1e-12;
  for (int g = 0; g < n_goals; ++g) {
    const int code = goal_code[static_cast<std::size_t>(g)];
    for (int s = 0; s < n_states; ++s) {
      const auto& nbr = neighbors[static_cast<std::size_t>(s)];
      if (nbr.empty()) continue;
      double m_star = -std::numeric_limits<double>::infinity();
      double m_phi = -std::numeric_limits<double>::infinity();
      for (int nx : nbr) {
        m_star = std::max(m_star, v_star(nx, g));
        m_phi = std::max(m_phi, v_phi(nx, code));
      }
      for (int nx : nbr) {
        const bool in_star = v_star(nx, g) >= m_star - tie_tol;
        const bool in_phi = v_phi(nx, code) >= m_phi - tie_tol;
        if (in_star != in_phi) {
          rep.equal = false;
          rep.witness_s = s;
          rep.witness_g = g;
          return rep;
        }
      }
      ++rep.pairs_checked;
    }
  }
  return rep;
}

std::vector<std::vector<int>> successor_sets(const GridWorld& env) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(env.n_cells()));
  for (int c : env.free_cells()) out[static_cast<std::size_t>(c)] = env.neighbor_cells(c);
  return out;
}

Matrix optimal_value_table(const GridWorld& env, double gamma) {
  const int n = env.n_cells();
  Matrix v = Matrix::Zero(n, n);
  for (int g : env.free_cells()) {
    for (int s : env.free_cells()) v(s, g) = env.optimal_value(s, g, gamma);
  }
  return v;
}

ArgmaxEquivalenceReport argmax_equivalence_check(const GridWorld& env, double gamma,
                                                 const std::vector<int>& goal_code,
                                                 const Matrix& v_phi, double tol) {
  return argmax_equivalence_check(successor_sets(env), optimal_value_table(env, gamma), goal_code,
                                  v_phi, tol);
}

}  // namespace gcrl
