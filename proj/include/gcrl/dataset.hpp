#pragma once

#include "gcrl/common.hpp"
#include "gcrl/gridworld.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gcrl {

// One recorded episode: states s_0..s_T plus optional action labels
// a_0..a_{T-1}. Consecutive states are always consistent with env.step.
struct Trajectory {
  std::vector<int> states;
  std::optional<std::vector<int>> actions;

  int length() const { return static_cast<int>(states.size()) - 1; }  // T
  bool labeled() const { return actions.has_value(); }
};

// Offline corpus. Immutable once built; samplers take explicit RNG streams so
// parallel consumers use disjoint seeded streams.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Trajectory> trajectories);

  const std::vector<Trajectory>& trajectories() const { return traj_; }
  int size() const { return static_cast<int>(traj_.size()); }
  long total_states() const { return total_states_; }
  int n_labeled() const { return static_cast<int>(labeled_.size()); }
  const std::vector<int>& labeled_indices() const { return labeled_; }

  // Uniform draw over the multiset of all stored states.
  int random_state(Rng& rng) const;

  void save(const std::string& path, const GridWorld& env) const;
  // env_hash_out, when given, receives the header hash for validation.
  static Dataset load(const std::string& path, std::string* env_hash_out = nullptr);

  std::string content_hash() const;  // git blob hash of the serialized form
  std::string serialize(const std::string& env_hash) const;

 private:
  std::vector<Trajectory> traj_;
  std::vector<int> labeled_;
  std::vector<long> cumulative_states_;  // prefix sums for random_state
  long total_states_ = 0;
};

enum class Behavior { optimal, epsilon_noisy, random_walk };

Behavior behavior_from_string(const std::string& s);
std::string to_string(Behavior b);

// Goal-commanded rollouts: each trajectory repeatedly samples a random goal
// cell, follows the (epsilon-noised) shortest-path policy until arrival, then
// re-commands a new goal until max_len transitions are recorded.
// random_walk takes uniform actions with no goal commanding.
Dataset generate_dataset(const GridWorld& env, Behavior behavior, double epsilon, int num_traj,
                         int max_len, std::uint64_t seed);

// Keeps action labels on ceil(fraction * N) uniformly chosen trajectories and
// drops them from the rest.
Dataset strip_actions(const Dataset& data, double labeled_fraction, Rng& rng);

// Goal mixture for value learning: random dataset state / future state at a
// Geom(1-gamma) offset / the current state.
struct GoalSamplingConfig {
  double p_random = 0.3;
  double p_future = 0.5;
  double p_current = 0.2;
  double gamma = 0.99;

  void validate() const;
};

enum class GoalBranch { random, future, current };

struct ValueBatchItem {
  int s;
  int s_next;
  int g;
  double r;  // 0 iff s == g, else -1
  GoalBranch branch;
};

struct HighBatchItem {
  int s;
  int subgoal;
  int g;
  // Extras for the non-simplified advantage estimate: number of steps to the
  // subgoal and the discounted reward sum along them.
  int k_actual;
  double reward_to_subgoal;
};

struct LowBatchItem {
  int s;
  int a;
  int s_next;
  int subgoal;
};

struct FlatBatchItem {
  int s;
  int a;
  int s_next;
  int g;
};

// Geometric future offset with support >= 1, P(d = j) proportional to
// gamma^(j-1), truncated and renormalized to [1, max_offset].
int sample_future_offset(double gamma, int max_offset, Rng& rng);

std::vector<ValueBatchItem> sample_value_batch(const Dataset& data, const GoalSamplingConfig& cfg,
                                               int batch_size, Rng& rng);

// High-level items: with p_future_goal the goal is a uniform future state
// s_tg (tg > t) and the subgoal is s_min(t+k, tg); otherwise the goal is a
// uniform dataset state and the subgoal is s_min(t+k, T).
std::vector<HighBatchItem> sample_high_batch(const Dataset& data, int k, double p_future_goal,
                                             double gamma, int batch_size, Rng& rng);

// Low-level items from labeled trajectories only; subgoal is s_min(t+k, T).
std::vector<LowBatchItem> sample_low_batch(const Dataset& data, int k, int batch_size, Rng& rng);

// Flat-policy items with the same goal mixture as the high-level sampler.
std::vector<FlatBatchItem> sample_flat_batch(const Dataset& data, double p_future_goal,
                                             int batch_size, Rng& rng);

}  // namespace gcrl
