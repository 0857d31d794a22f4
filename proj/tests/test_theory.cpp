#include <doctest.h>

#include "gcrl/theory.hpp"

#include <algorithm>
#include <cmath>

using namespace gcrl;

namespace {

// High-precision standard normal CDF, independent of the implementation:
// a Taylor series of erf where cancellation is harmless, and composite
// Simpson quadrature of the density tail in long double elsewhere.
constexpr long double kPi = 3.141592653589793238462643383279502884L;

long double erf_series(long double z) {
  long double term = z, sum = z;
  for (int n = 1; n < 200; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
    if (std::abs(static_cast<double>(term)) < 1e-25) break;
  }
  return sum * 2.0L / std::sqrt(kPi);
}

// integral of the standard normal density over [a, a+45], a >= 0
long double upper_tail(long double a) {
  const int n = 100000;  // Simpson error ~ 1e-14 at this resolution
  const long double b = a + 45.0L;
  const long double h = (b - a) / n;
  auto f = [](long double t) { return std::exp(-t * t / 2.0L); };
  long double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += f(a + h * i) * (i % 2 ? 4.0L : 2.0L);
  return sum * h / 3.0L / std::sqrt(2.0L * kPi);
}

double phi_oracle(double x) {
  const long double ax = std::abs(static_cast<long double>(x));
  long double tail;
  if (ax < 1.0L) {
    tail = 0.5L * (1.0L - erf_series(ax / std::sqrt(2.0L)));
  } else {
    tail = upper_tail(ax);
  }
  return static_cast<double>(x >= 0.0 ? 1.0L - tail : tail);
}

}  // namespace

TEST_CASE("std_normal_cdf matches the high-precision oracle to 1e-12") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_cdf(-1.96) == doctest::Approx(0.024998).epsilon(1e-4));
  for (double x = -8.0; x <= 8.0; x += 0.173) {
    CHECK(std::abs(std_normal_cdf(x) - phi_oracle(x)) <= 1e-12);
  }
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * 3.0;
    CHECK(std_normal_cdf(x) + std_normal_cdf(-x) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("flat error closed form") {
  CHECK(flat_error(10.0, 0.0) == 0.0);
  // T=2, sigma=1: Phi(-sqrt(2)/sqrt(5))
  const double expect = phi_oracle(-std::sqrt(2.0) / std::sqrt(5.0));
  CHECK(flat_error(2.0, 1.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(flat_error(2.0, 1.0) == doctest::Approx(0.2635).epsilon(2e-3));
  // monotone in T and sigma
  CHECK(flat_error(20.0, 0.5) > flat_error(10.0, 0.5));
  double prev = 0.0;
  for (double sigma : {0.1, 0.2, 0.4, 0.8, 1.6}) {
    const double e = flat_error(16.0, sigma);
    CHECK(e > prev);
    prev = e;
  }
  prev = 0.0;
  for (double T : {2.0, 4.0, 8.0, 16.0, 512.0}) {
    const double e = flat_error(T, 0.3);
    CHECK(e > prev);
    prev = e;
  }
}

TEST_CASE("hierarchical error bound: terms, symmetry, and flat-term domination") {
  // k = sqrt(T) balances both terms
  const TheoryBound b = hier_error_bound(16.0, 0.5, 4.0);
  CHECK(b.high == doctest::Approx(b.low).epsilon(1e-14));
  CHECK(b.bound == doctest::Approx(2.0 * phi_oracle(-2.0 * std::sqrt(2.0) / std::sqrt(17.0))).epsilon(1e-12));
  CHECK(b.bound == doctest::Approx(0.4928).epsilon(2e-3));

  // sigma -> 0 gives zero error
  const TheoryBound z = hier_error_bound(16.0, 0.0, 4.0);
  CHECK(z.bound == 0.0);

  // each term is no larger than the flat error for 1 <= k <= T
  for (double T : {4.0, 16.0, 64.0, 100.0}) {
    for (double sigma : {0.1, 0.3, 0.7, 1.0}) {
      const double flat = flat_error(T, sigma);
      for (int k = 1; k <= static_cast<int>(T); ++k) {
        const TheoryBound hb = hier_error_bound(T, sigma, k);
        CHECK(hb.high <= flat + 1e-15);
        CHECK(hb.low <= flat + 1e-15);
      }
    }
  }

  // exact symmetry under k <-> T/k at integer pairs
  for (double sigma : {0.2, 0.5}) {
    CHECK(hier_error_bound(24.0, sigma, 4.0).bound ==
          doctest::Approx(hier_error_bound(24.0, sigma, 6.0).bound).epsilon(1e-14));
    CHECK(hier_error_bound(36.0, sigma, 3.0).bound ==
          doctest::Approx(hier_error_bound(36.0, sigma, 12.0).bound).epsilon(1e-14));
  }

  CHECK_THROWS_AS(hier_error_bound(8.0, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(hier_error_bound(8.0, 0.5, 9.0), std::invalid_argument);
}

TEST_CASE("optimal_k matches an oracle argmin and sits near sqrt(T) at small sigma") {
  // independent argmin via the oracle CDF
  auto oracle_argmin = [&](int T, double sigma) {
    int best_k = 1;
    double best = 1e300;
    for (int k = 1; k <= T; ++k) {
      const double Tk = static_cast<double>(T) / k;
      const double val = phi_oracle(-std::sqrt(2.0) / (sigma * std::hypot(Tk, 1.0))) +
                         phi_oracle(-std::sqrt(2.0) / (sigma * std::hypot(static_cast<double>(k), 1.0)));
      if (val < best) {
        best = val;
        best_k = k;
      }
    }
    return best_k;
  };
  for (int T : {4, 8, 16, 50, 64, 100, 256}) {
    for (double sigma : {0.05, 0.1, 0.2, 0.5, 1.0}) {
      CHECK(optimal_k(T, sigma).k == oracle_argmin(T, sigma));
    }
  }

  // T=4: direct evaluation over {1,2,3,4} gives k=2
  CHECK(optimal_k(4, 0.3).k == 2);

  // in the small-sigma regime the minimizer sits within the sqrt(T) window
  const std::vector<std::pair<int, double>> settings{
      {16, 0.1}, {32, 0.15}, {64, 0.1}, {100, 0.1}, {256, 0.05}};
  for (const auto& [T, sigma] : settings) {
    const int k = optimal_k(T, sigma).k;
    const int lo = static_cast<int>(std::floor(std::sqrt(static_cast<double>(T)))) - 1;
    const int hi = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(T)))) + 1;
    CHECK(k >= lo);
    CHECK(k <= hi);
    // and the bound beats the flat policy there
    CHECK(optimal_k(T, sigma).bound.bound < flat_error(T, sigma));
  }
}

TEST_CASE("monte carlo flat error converges to the closed form at binomial rate") {
  const double p = flat_error(2.0, 1.0);
  for (long n : {1000L, 10000L, 100000L}) {
    const McEstimate est = monte_carlo_policy_error(2, 1.0, McMode::flat, 1, n, 31);
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::abs(est.p - p) <= 3.0 * se);
  }
}

TEST_CASE("monte carlo: zero noise never errs, union bound holds empirically") {
  const McEstimate zero = monte_carlo_policy_error(16, 0.0, McMode::hierarchical, 4, 5000, 1);
  CHECK(zero.p == 0.0);

  for (int T : {8, 16}) {
    for (double sigma : {0.3, 0.6}) {
      for (int k : {2, 4}) {
        const McEstimate est = monte_carlo_policy_error(T, sigma, McMode::hierarchical, k, 50000, 17);
        const TheoryBound hb = hier_error_bound(T, sigma, k);
        CHECK(est.p <= hb.bound + 3.0 * est.se);
      }
    }
  }
}

TEST_CASE("monte carlo is deterministic for a fixed seed") {
  const McEstimate a = monte_carlo_policy_error(8, 0.5, McMode::hierarchical, 2, 20000, 5);
  const McEstimate b = monte_carlo_policy_error(8, 0.5, McMode::hierarchical, 2, 20000, 5);
  CHECK(a.p == b.p);
}

TEST_CASE("noisy action map: zero noise gives optimal arrows everywhere") {
  const GridWorld env = GridWorld::open_grid(7, 7);
  const int goal = env.cell_of(3, 3);
  const ActionMap map = noisy_action_map(env, goal, 0.0, 4, 3);
  for (int s : env.free_cells()) {
    if (s == goal) continue;
    CHECK(map.optimal_flat[static_cast<std::size_t>(s)] == 1);
    CHECK(map.optimal_hier[static_cast<std::size_t>(s)] == 1);
  }
  CHECK(map.wrong_fraction_flat(env, 1) == 0.0);
}

TEST_CASE("noisy action map: flat errors grow with distance; hierarchy helps far away") {
  const GridWorld env = GridWorld::open_grid(9, 9);
  const int goal = env.cell_of(0, 0);
  const double sigma = 0.6;
  const int k = 6;
  double near_wrong = 0.0, far_wrong = 0.0, far_hier_wrong = 0.0;
  const int n_seeds = 120;
  for (int i = 0; i < n_seeds; ++i) {
    const ActionMap m = noisy_action_map(env, goal, sigma, k, 1000 + i);
    int near_n = 0, near_bad = 0, far_n = 0, far_bad = 0, far_hier_bad = 0;
    for (int s : env.free_cells()) {
      if (s == goal) continue;
      const int d = env.bfs_distance(s, goal);
      if (d <= 4) {
        ++near_n;
        near_bad += 1 - m.optimal_flat[static_cast<std::size_t>(s)];
      } else if (d >= 10) {
        ++far_n;
        far_bad += 1 - m.optimal_flat[static_cast<std::size_t>(s)];
        far_hier_bad += 1 - m.optimal_hier[static_cast<std::size_t>(s)];
      }
    }
    near_wrong += static_cast<double>(near_bad) / near_n;
    far_wrong += static_cast<double>(far_bad) / far_n;
    far_hier_wrong += static_cast<double>(far_hier_bad) / far_n;
  }
  near_wrong /= n_seeds;
  far_wrong /= n_seeds;
  far_hier_wrong /= n_seeds;
  CHECK(far_wrong > near_wrong);        // errors concentrate far from the goal
  CHECK(far_hier_wrong < far_wrong);    // subgoal-then-greedy is more robust there
}

TEST_CASE("argmax equivalence: identity and collapsing representations") {
  const GridWorld env = GridWorld::from_map(".....\n"
                                            ".##..\n"
                                            ".....\n");
  const int n = env.n_cells();
  const Matrix v_star = optimal_value_table(env, 0.95);

  // identity code
  std::vector<int> identity(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) identity[static_cast<std::size_t>(i)] = i;
  const auto rep = argmax_equivalence_check(env, 0.95, identity, v_star);
  CHECK(rep.ok());
  CHECK(rep.pairs_checked > 0);

  // two goal columns made identical by construction, collapsed to one code
  Matrix v_dup = v_star;
  const int g1 = env.free_cells()[2];
  const int g2 = env.free_cells()[5];
  v_dup.col(g2) = v_dup.col(g1);
  std::vector<int> code(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) code[static_cast<std::size_t>(i)] = i;
  code[static_cast<std::size_t>(g2)] = g1;
  const auto rep2 = argmax_equivalence_check(successor_sets(env), v_dup, code, v_dup);
  CHECK(rep2.ok());
}

TEST_CASE("argmax equivalence on random deterministic MDPs") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + rng.uniform_int(17);  // up to 20 states
    // strongly connected: a random cycle plus extra random edges
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(n));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    for (int i = 0; i < n; ++i) {
      succ[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].push_back(
          perm[static_cast<std::size_t>((i + 1) % n)]);
    }
    for (int s = 0; s < n; ++s) {
      const int extras = rng.uniform_int(3);
      for (int e = 0; e < extras; ++e) {
        const int t = rng.uniform_int(n);
        auto& v = succ[static_cast<std::size_t>(s)];
        if (std::find(v.begin(), v.end(), t) == v.end()) v.push_back(t);
      }
      std::sort(succ[static_cast<std::size_t>(s)].begin(), succ[static_cast<std::size_t>(s)].end());
    }
    // shortest-path optimal values on the directed graph
    Matrix v_star(n, n);
    const int inf = 1 << 20;
    for (int g = 0; g < n; ++g) {
      // Bellman relaxation for directed shortest paths toward g
      std::vector<int> dist(static_cast<std::size_t>(n), inf);
      dist[static_cast<std::size_t>(g)] = 0;
      for (int round = 0; round < n; ++round) {
        for (int s = 0; s < n; ++s) {
          for (int t : succ[static_cast<std::size_t>(s)]) {
            dist[static_cast<std::size_t>(s)] =
                std::min(dist[static_cast<std::size_t>(s)], dist[static_cast<std::size_t>(t)] + 1);
          }
        }
      }
      for (int s = 0; s < n; ++s) {
        REQUIRE(dist[static_cast<std::size_t>(s)] < inf);
        v_star(s, g) = -(1.0 - std::pow(0.95, dist[static_cast<std::size_t>(s)])) / 0.05;
      }
    }
    std::vector<int> identity(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) identity[static_cast<std::size_t>(i)] = i;
    const auto rep = argmax_equivalence_check(succ, v_star, identity, v_star);
    CHECK(rep.ok());
  }
}

TEST_CASE("argmax equivalence reports witnesses on violated inputs") {
  const GridWorld env = GridWorld::open_grid(3, 3);
  const Matrix v_star = optimal_value_table(env, 0.9);
  std::vector<int> identity(9);
  for (int i = 0; i < 9; ++i) identity[static_cast<std::size_t>(i)] = i;

  // corrupted parameterized table -> precondition violation with a witness
  Matrix bad = v_star;
  bad(2, 7) += 0.5;
  const auto rep = argmax_equivalence_check(env, 0.9, identity, bad);
  CHECK_FALSE(rep.precondition_ok);
  CHECK(rep.witness_s == 2);
  CHECK(rep.witness_g == 7);

  // with a loose tolerance a decisive corruption passes the precondition but
  // flips an argmax set
  Matrix flip = v_star;
  flip(2, 7) = 0.5;  // above V(g,g)=0, so cell 2 becomes the greedy choice
  const auto rep2 = argmax_equivalence_check(env, 0.9, identity, flip, 10.0);
  CHECK(rep2.precondition_ok);
  CHECK_FALSE(rep2.equal);
  CHECK(rep2.witness_s >= 0);
}
