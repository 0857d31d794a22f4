#include "gcrl/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcrl {

using nlohmann::json;

Dataset::Dataset(std::vector<Trajectory> trajectories) : traj_(std::move(trajectories)) {
  if (traj_.empty()) throw std::invalid_argument("Dataset: no trajectories");
  cumulative_states_.reserve(traj_.size());
  for (std::size_t i = 0; i < traj_.size(); ++i) {
    const auto& t = traj_[i];
    if (t.states.size() < 2) throw std::invalid_argument("Dataset: trajectory with < 2 states");
    if (t.actions && t.actions->size() != t.states.size() - 1)
      throw std::invalid_argument("Dataset: action count must be |states| - 1");
    if (t.labeled()) labeled_.push_back(static_cast<int>(i));
    total_states_ += static_cast<long>(t.states.size());
    cumulative_states_.push_back(total_states_);
  }
  if (labeled_.empty())
    throw std::invalid_argument("Dataset: at least one labeled trajectory is required");
}

int Dataset::random_state(Rng& rng) const {
  const long u = static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(total_states_));
  const auto it = std::upper_bound(cumulative_states_.begin(), cumulative_states_.end(), u);
  const std::size_t ti = static_cast<std::size_t>(it - cumulative_states_.begin());
  const long base = ti == 0 ? 0 : cumulative_states_[ti - 1];
  return traj_[ti].states[static_cast<std::size_t>(u - base)];
}

std::string Dataset::serialize(const std::string& env_hash) const {
  std::string out;
  json header;
  header["env_hash"] = env_hash;
  header["num_traj"] = size();
  out += header.dump();
  out += '\n';
  for (const auto& t : traj_) {
    json line;
    line["states"] = t.states;
    if (t.actions)
      line["actions"] = *t.actions;
    else
      line["actions"] = nullptr;
    out += line.dump();
    out += '\n';
  }
  return out;
}

void Dataset::save(const std::string& path, const GridWorld& env) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("Dataset::save: cannot open " + path);
  f << serialize(env.content_hash());
}

Dataset Dataset::load(const std::string& path, std::string* env_hash_out) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("Dataset::load: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("Dataset::load: missing header");
  const json header = json::parse(line);
  if (env_hash_out) *env_hash_out = header.at("env_hash").get<std::string>();
  std::vector<Trajectory> traj;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    Trajectory t;
    t.states = rec.at("states").get<std::vector<int>>();
    if (!rec.at("actions").is_null()) t.actions = rec.at("actions").get<std::vector<int>>();
    traj.push_back(std::move(t));
  }
  return Dataset(std::move(traj));
}

std::string Dataset::content_hash() const {
  // Hash only trajectory content so the hash is stable across env aliases.
  std::string body;
  for (const auto& t : traj_) {
    json line;
    line["states"] = t.states;
    if (t.actions)
      line["actions"] = *t.actions;
    else
      line["actions"] = nullptr;
    body += line.dump();
    body += '\n';
  }
  return git_blob_sha1(body);
}

Behavior behavior_from_string(const std::string& s) {
  if (s == "optimal") return Behavior::optimal;
  if (s == "noisy" || s == "epsilon_noisy") return Behavior::epsilon_noisy;
  if (s == "random" || s == "random_walk") return Behavior::random_walk;
  throw std::invalid_argument("unknown behavior kind: " + s);
}

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::optimal: return "optimal";
    case Behavior::epsilon_noisy: return "noisy";
    case Behavior::random_walk: return "random";
  }
  return "?";
}

Dataset generate_dataset(const GridWorld& env, Behavior behavior, double epsilon, int num_traj,
                         int max_len, std::uint64_t seed) {
  if (num_traj < 1) throw std::invalid_argument("generate_dataset: num_traj must be >= 1");
  if (max_len < 1) throw std::invalid_argument("generate_dataset: max_len must be >= 1");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("generate_dataset: epsilon must be in [0, 1]");
  Rng rng = Rng::stream(seed, "generate_dataset");
  const auto& cells = env.free_cells();
  const double eps = behavior == Behavior::optimal ? 0.0 : epsilon;

  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(num_traj));
  for (int i = 0; i < num_traj; ++i) {
    Trajectory t;
    t.actions.emplace();
    int cell = cells[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cells.size())))];
    t.states.push_back(cell);
    int goal = -1;
    while (t.length() < max_len) {
      int action;
      if (behavior == Behavior::random_walk) {
        action = rng.uniform_int(env.n_actions());
      } else {
        while (goal < 0 || goal == cell) {
          goal = cells[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cells.size())))];
        }
        if (eps > 0.0 && rng.uniform() < eps) {
          action = rng.uniform_int(env.n_actions());
        } else {
          const auto best = env.optimal_action_set(cell, goal);
          action = best[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(best.size())))];
        }
      }
      cell = env.step_cell(cell, action);
      t.states.push_back(cell);
      t.actions->push_back(action);
      if (cell == goal) goal = -1;  // re-command on arrival
    }
    out.push_back(std::move(t));
  }
  return Dataset(std::move(out));
}

Dataset strip_actions(const Dataset& data, double labeled_fraction, Rng& rng) {
  if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0)
    throw std::invalid_argument("strip_actions: fraction must be in (0, 1]");
  const int n = data.size();
  const int keep = static_cast<int>(std::ceil(labeled_fraction * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  std::vector<std::uint8_t> keep_mask(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < keep; ++i) keep_mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  std::vector<Trajectory> out = data.trajectories();
  for (int i = 0; i < n; ++i) {
    if (!keep_mask[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(i)].actions.reset();
  }
  return Dataset(std::move(out));
}

void GoalSamplingConfig::validate() const {
  if (p_random < 0 || p_future < 0 || p_current < 0)
    throw std::invalid_argument("GoalSamplingConfig: negative probability");
  if (std::abs(p_random + p_future + p_current - 1.0) > 1e-12)
    throw std::invalid_argument("GoalSamplingConfig: probabilities must sum to 1");
  if (gamma <= 0.0 || gamma > 1.0)
    throw std::invalid_argument("GoalSamplingConfig: gamma must be in (0, 1]");
}

int sample_future_offset(double gamma, int max_offset, Rng& rng) {
  if (max_offset < 1) throw std::invalid_argument("sample_future_offset: max_offset must be >= 1");
  if (max_offset == 1) return 1;
  if (gamma >= 1.0) return 1 + rng.uniform_int(max_offset);
  // Inverse CDF of the truncated geometric: F(j) = (1 - gamma^j) / (1 - gamma^M).
  const double u = rng.uniform();
  const double mass = 1.0 - std::pow(gamma, max_offset);
  const double j = std::ceil(std::log1p(-u * mass) / std::log(gamma));
  return std::clamp(static_cast<int>(j), 1, max_offset);
}

namespace {

// Uniform trajectory index, then uniform time index in [0, T-1].
std::pair<int, int> pick_traj_time(const Dataset& data, Rng& rng) {
  const int ti = rng.uniform_int(data.size());
  const auto& t = data.trajectories()[static_cast<std::size_t>(ti)];
  const int idx = rng.uniform_int(t.length());
  return {ti, idx};
}

}  // namespace

std::vector<ValueBatchItem> sample_value_batch(const Dataset& data, const GoalSamplingConfig& cfg,
                                               int batch_size, Rng& rng) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("sample_value_batch: empty dataset");
  std::vector<ValueBatchItem> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const auto [ti, t] = pick_traj_time(data, rng);
    const auto& traj = data.trajectories()[static_cast<std::size_t>(ti)];
    const int s = traj.states[static_cast<std::size_t>(t)];
    const int s_next = traj.states[static_cast<std::size_t>(t + 1)];
    const double u = rng.uniform();
    int g;
    GoalBranch branch;
    if (u < cfg.p_random) {
      branch = GoalBranch::random;
      g = data.random_state(rng);
    } else if (u < cfg.p_random + cfg.p_future) {
      branch = GoalBranch::future;
      const int d = sample_future_offset(cfg.gamma, traj.length() - t, rng);
      g = traj.states[static_cast<std::size_t>(t + d)];
    } else {
      branch = GoalBranch::current;
      g = s;
    }
    const double r = (s == g) ? 0.0 : -1.0;
    out.push_back(ValueBatchItem{s, s_next, g, r, branch});
  }
  return out;
}

std::vector<HighBatchItem> sample_high_batch(const Dataset& data, int k, double p_future_goal,
                                             double gamma, int batch_size, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_high_batch: k must be >= 1");
  if (data.size() == 0) throw std::invalid_argument("sample_high_batch: empty dataset");
  std::vector<HighBatchItem> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const auto [ti, t] = pick_traj_time(data, rng);
    const auto& traj = data.trajectories()[static_cast<std::size_t>(ti)];
    const int T = traj.length();
    int g, sub_idx;
    if (rng.uniform() < p_future_goal) {
      const int tg = t + 1 + rng.uniform_int(T - t);  // uniform over (t, T]
      g = traj.states[static_cast<std::size_t>(tg)];
      sub_idx = std::min(t + k, tg);
    } else {
      g = data.random_state(rng);
      sub_idx = std::min(t + k, T);
    }
    double reward = 0.0;
    double disc = 1.0;
    for (int j = t; j < sub_idx; ++j) {
      if (traj.states[static_cast<std::size_t>(j)] != g) reward -= disc;
      disc *= gamma;
    }
    out.push_back(HighBatchItem{traj.states[static_cast<std::size_t>(t)],
                                traj.states[static_cast<std::size_t>(sub_idx)], g, sub_idx - t,
                                reward});
  }
  return out;
}

std::vector<LowBatchItem> sample_low_batch(const Dataset& data, int k, int batch_size, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_low_batch: k must be >= 1");
  const auto& labeled = data.labeled_indices();
  if (labeled.empty()) throw std::invalid_argument("sample_low_batch: no labeled trajectories");
  std::vector<LowBatchItem> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const int ti = labeled[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(labeled.size())))];
    const auto& traj = data.trajectories()[static_cast<std::size_t>(ti)];
    const int T = traj.length();
    const int t = rng.uniform_int(T);
    const int sub_idx = std::min(t + k, T);
    out.push_back(LowBatchItem{traj.states[static_cast<std::size_t>(t)],
                               (*traj.actions)[static_cast<std::size_t>(t)],
                               traj.states[static_cast<std::size_t>(t + 1)],
                               traj.states[static_cast<std::size_t>(sub_idx)]});
  }
  return out;
}

std::vector<FlatBatchItem> sample_flat_batch(const Dataset& data, double p_future_goal,
                                             int batch_size, Rng& rng) {
  const auto& labeled = data.labeled_indices();
  if (labeled.empty()) throw std::invalid_argument("sample_flat_batch: no labeled trajectories");
  std::vector<FlatBatchItem> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const int ti = labeled[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(labeled.size())))];
    const auto& traj = data.trajectories()[static_cast<std::size_t>(ti)];
    const int T = traj.length();
    const int t = rng.uniform_int(T);
    int g;
    if (rng.uniform() < p_future_goal) {
      const int tg = t + 1 + rng.uniform_int(T - t);
      g = traj.states[static_cast<std::size_t>(tg)];
    } else {
      g = data.random_state(rng);
    }
    out.push_back(FlatBatchItem{traj.states[static_cast<std::size_t>(t)],
                                (*traj.actions)[static_cast<std::size_t>(t)],
                                traj.states[static_cast<std::size_t>(t + 1)], g});
  }
  return out;
}

}  // namespace gcrl
