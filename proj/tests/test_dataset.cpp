#include <doctest.h>

#include "gcrl/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <set>

using namespace gcrl;

namespace {

const GridWorld& small_grid() {
  static const GridWorld env = GridWorld::from_map(".....\n"
                                                   ".##..\n"
                                                   ".....\n"
                                                   "..#..\n"
                                                   ".....\n");
  return env;
}

bool pair_in_some_trajectory(const Dataset& data, int s, int s_next, bool labeled_only) {
  for (const auto& t : data.trajectories()) {
    if (labeled_only && !t.labeled()) continue;
    for (std::size_t i = 0; i + 1 < t.states.size(); ++i) {
      if (t.states[i] == s && t.states[i + 1] == s_next) return true;
    }
  }
  return false;
}

// Single strictly-forward chain walk: states are unique so time indices are
// recoverable from states.
Dataset increasing_chain_dataset(int length) {
  Trajectory t;
  t.actions.emplace();
  for (int i = 0; i < length; ++i) {
    t.states.push_back(i);
    if (i + 1 < length) t.actions->push_back(GridWorld::chain_right);
  }
  return Dataset({t});
}

}  // namespace

TEST_CASE("generated trajectories are consistent with env.step") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.3, 8, 60, 9);
  CHECK(data.size() == 8);
  for (const auto& t : data.trajectories()) {
    REQUIRE(t.labeled());
    CHECK(t.length() == 60);
    for (int i = 0; i < t.length(); ++i) {
      CHECK(env.step_cell(t.states[static_cast<std::size_t>(i)],
                          (*t.actions)[static_cast<std::size_t>(i)]) ==
            t.states[static_cast<std::size_t>(i + 1)]);
    }
  }
}

TEST_CASE("optimal behavior never clamps or backtracks into walls") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::optimal, 0.0, 6, 80, 3);
  for (const auto& t : data.trajectories()) {
    for (int i = 0; i < t.length(); ++i) {
      // every optimal move changes the state by exactly one BFS step
      CHECK(env.bfs_distance(t.states[static_cast<std::size_t>(i)],
                             t.states[static_cast<std::size_t>(i + 1)]) == 1);
    }
  }
}

TEST_CASE("random walk covers the chain") {
  const GridWorld chain = GridWorld::chain(9);
  const Dataset data = generate_dataset(chain, Behavior::random_walk, 0.0, 1, 4000, 12);
  std::set<int> visited;
  for (int s : data.trajectories()[0].states) visited.insert(s);
  CHECK(visited.size() == 9);
}

TEST_CASE("generation is deterministic under the seed") {
  const GridWorld& env = small_grid();
  const Dataset a = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 5, 50, 77);
  const Dataset b = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 5, 50, 77);
  const Dataset c = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 5, 50, 78);
  CHECK(a.serialize("x") == b.serialize("x"));
  CHECK(a.serialize("x") != c.serialize("x"));
  CHECK_THROWS_AS(generate_dataset(env, Behavior::optimal, 0.0, 1, 0, 1), std::invalid_argument);
}

TEST_CASE("dataset save/load round-trips") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 4, 30, 5);
  const auto path = std::filesystem::temp_directory_path() / "gcrl_test_dataset.jsonl";
  data.save(path.string(), env);
  std::string env_hash;
  const Dataset loaded = Dataset::load(path.string(), &env_hash);
  CHECK(env_hash == env.content_hash());
  CHECK(loaded.serialize(env_hash) == data.serialize(env_hash));
  CHECK(loaded.content_hash() == data.content_hash());
  std::filesystem::remove(path);
}

TEST_CASE("value batch goal mixture hits the configured branch frequencies") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 10, 100, 21);
  const GoalSamplingConfig cfg{0.3, 0.5, 0.2, 0.99};
  Rng rng(123);
  const int n = 100000;
  const auto batch = sample_value_batch(data, cfg, n, rng);
  int counts[3] = {0, 0, 0};
  for (const auto& it : batch) {
    counts[static_cast<int>(it.branch)] += 1;
    CHECK(it.r == (it.s == it.g ? 0.0 : -1.0));
    if (it.branch == GoalBranch::current) {
      CHECK(it.s == it.g);
      CHECK(it.r == 0.0);
    }
  }
  const double ps[3] = {0.3, 0.5, 0.2};
  for (int b = 0; b < 3; ++b) {
    const double freq = static_cast<double>(counts[b]) / n;
    const double sigma = std::sqrt(ps[b] * (1 - ps[b]) / n);
    CHECK(std::abs(freq - ps[b]) <= 3 * sigma);
  }
}

TEST_CASE("sampled transitions occur consecutively in some trajectory") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.4, 5, 40, 31);
  Rng rng(5);
  for (const auto& it : sample_value_batch(data, GoalSamplingConfig{}, 300, rng)) {
    CHECK(pair_in_some_trajectory(data, it.s, it.s_next, false));
  }
}

TEST_CASE("future offset is geometric with support >= 1") {
  Rng rng(99);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int d = sample_future_offset(0.99, 1000000, rng);
    CHECK(d >= 1);
    sum += d;
  }
  // untruncated mean 1/(1-gamma) = 100; se ~ 99.5/sqrt(n)
  CHECK(std::abs(sum / n - 100.0) < 1.0);
  for (int i = 0; i < 1000; ++i) {
    const int d = sample_future_offset(0.9, 7, rng);
    CHECK(d >= 1);
    CHECK(d <= 7);
  }
}

TEST_CASE("high batch obeys the min(t+k, tg|T) subgoal rule") {
  const Dataset data = increasing_chain_dataset(41);  // states 0..40, T = 40
  const int T = 40;
  Rng rng(17);
  const auto batch = sample_high_batch(data, 25, 0.7, 0.99, 4000, rng);
  bool saw_future_clip = false, saw_random_tail = false, saw_interior = false;
  for (const auto& it : batch) {
    const int t = it.s;          // states are their own indices
    const int sub = it.subgoal;
    CHECK(sub <= T);
    CHECK(it.k_actual == sub - t);
    CHECK(it.k_actual >= 0);
    if (it.g <= T && it.g > t) {
      // future-goal branch (or an indistinguishable random draw): the rule
      // min(t+25, tg) or min(t+25, T) must hold
      const bool future_rule = sub == std::min(t + 25, it.g);
      const bool random_rule = sub == std::min(t + 25, T);
      CHECK((future_rule || random_rule));
      if (future_rule && it.g < t + 25) saw_future_clip = true;  // subgoal = s_tg
    } else {
      CHECK(sub == std::min(t + 25, T));
    }
    if (sub == t + 25) saw_interior = true;
    if (sub == T && t + 25 > T) saw_random_tail = true;
    // discounted reward sum along the segment
    double expect = 0.0, disc = 1.0;
    for (int j = t; j < sub; ++j) {
      if (j != it.g) expect -= disc;
      disc *= 0.99;
    }
    CHECK(it.reward_to_subgoal == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(saw_future_clip);
  CHECK(saw_random_tail);
  CHECK(saw_interior);
}

TEST_CASE("low batch uses labeled trajectories and the terminal edge rule") {
  // T = 1: every item is the terminal edge (s_{T-1}, a, s_T, s_T)
  Trajectory t;
  t.states = {3, 4};
  t.actions = std::vector<int>{GridWorld::chain_right};
  const Dataset tiny({t});
  Rng rng(1);
  for (const auto& it : sample_low_batch(tiny, 25, 50, rng)) {
    CHECK(it.s == 3);
    CHECK(it.a == GridWorld::chain_right);
    CHECK(it.s_next == 4);
    CHECK(it.subgoal == 4);
  }

  const Dataset inc = increasing_chain_dataset(101);  // T = 100
  const auto batch = sample_low_batch(inc, 3, 2000, rng);
  for (const auto& it : batch) {
    CHECK(it.subgoal == std::min(it.s + 3, 100));
    CHECK(it.s_next == it.s + 1);
  }
}

TEST_CASE("strip_actions keeps exactly ceil(fraction * N) labeled") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.2, 100, 10, 8);
  Rng rng(4);
  const Dataset stripped = strip_actions(data, 0.25, rng);
  CHECK(stripped.n_labeled() == 25);
  CHECK(stripped.size() == 100);

  Rng rng2(4);
  const Dataset again = strip_actions(data, 0.25, rng2);
  CHECK(again.serialize("e") == stripped.serialize("e"));  // same partition under same seed

  Rng rng3(4);
  const Dataset full = strip_actions(data, 1.0, rng3);
  CHECK(full.serialize("e") == data.serialize("e"));

  CHECK_THROWS_AS(strip_actions(data, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(strip_actions(data, 1.5, rng), std::invalid_argument);
}

TEST_CASE("low batches never draw from unlabeled trajectories") {
  const GridWorld& env = small_grid();
  const Dataset data = generate_dataset(env, Behavior::epsilon_noisy, 0.5, 20, 25, 14);
  Rng rng(6);
  const Dataset stripped = strip_actions(data, 0.3, rng);
  CHECK(stripped.n_labeled() == 6);
  const auto batch = sample_low_batch(stripped, 4, 500, rng);
  for (const auto& it : batch) {
    CHECK(pair_in_some_trajectory(stripped, it.s, it.s_next, true));
  }
}

TEST_CASE("goal sampling config validation") {
  CHECK_THROWS_AS((GoalSamplingConfig{0.5, 0.5, 0.5, 0.99}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((GoalSamplingConfig{-0.1, 0.9, 0.2, 0.99}).validate(), std::invalid_argument);
  CHECK_NOTHROW((GoalSamplingConfig{0.3, 0.5, 0.2, 0.99}).validate());
}
