#include "gcrl/runtime.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace gcrl {

using nlohmann::json;

void EvalConfig::validate() const {
  if (episodes < 1 || max_steps < 1) throw std::invalid_argument("EvalConfig: bad episodes/max_steps");
  if (eps_greedy < 0.0 || eps_greedy > 1.0)
    throw std::invalid_argument("EvalConfig: eps_greedy must be in [0, 1]");
  if (subgoal_hold < 1) throw std::invalid_argument("EvalConfig: subgoal_hold must be >= 1");
}

namespace {

int argmax_action(const Matrix& logits) {
  int best = 0;
  logits.col(0).maxCoeff(&best);
  return best;
}

// Greedy subgoal cell restricted to free cells (wall cells are never
// training targets, but their logits exist in the categorical head).
int argmax_free_cell(const GridWorld& env, const Matrix& logits) {
  int best = env.free_cells().front();
  double best_v = logits(best, 0);
  for (int c : env.free_cells()) {
    if (logits(c, 0) > best_v) {
      best_v = logits(c, 0);
      best = c;
    }
  }
  return best;
}

int maybe_eps(const GridWorld& env, int action, Rng& rng, double eps) {
  if (eps > 0.0 && rng.uniform() < eps) return rng.uniform_int(env.n_actions());
  return action;
}

}  // namespace

int act_flat(const GridWorld& env, const PolicyNet& flat, int cell, int goal, Rng& rng, double eps) {
  const Matrix logits = flat.forward_cells({cell}, {goal});
  return maybe_eps(env, argmax_action(logits), rng, eps);
}

int act_hierarchical(const GridWorld& env, const PolicyNet& high, const PolicyNet& low,
                     const ValueNet& value, int cell, int goal, Rng& rng, double eps) {
  Matrix logits;
  if (high.kind() == PolicyKind::high_repr) {
    const Matrix z = normalize_columns(high.forward_cells({cell}, {goal}));
    logits = low.forward_latent({cell}, z);
  } else {
    const int subgoal = argmax_free_cell(env, high.forward_cells({cell}, {goal}));
    logits = low.forward_cells({cell}, {subgoal});
  }
  (void)value;
  return maybe_eps(env, argmax_action(logits), rng, eps);
}

std::vector<EvalTask> sample_eval_tasks(const GridWorld& env, int n, int min_dist, int max_dist,
                                        Rng& rng) {
  const auto& cells = env.free_cells();
  std::vector<EvalTask> out;
  out.reserve(static_cast<std::size_t>(n));
  int attempts = 0;
  const int max_attempts = n * 10000;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > max_attempts)
      throw std::runtime_error("sample_eval_tasks: no pairs in requested distance band");
    const int s = cells[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cells.size())))];
    const int g = cells[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cells.size())))];
    const int d = env.bfs_distance(s, g);
    if (d >= min_dist && d <= max_dist) out.push_back(EvalTask{s, g});
  }
  return out;
}

namespace {

std::vector<DistanceBin> bin_by_distance(const std::vector<std::pair<int, double>>& samples,
                                         int bin_width, int max_d) {
  std::vector<DistanceBin> bins;
  for (int lo = 0; lo <= max_d; lo += bin_width) bins.push_back(DistanceBin{lo, lo + bin_width});
  for (const auto& [d, v] : samples) {
    auto& b = bins[static_cast<std::size_t>(d / bin_width)];
    b.count += 1;
    b.value += v;
  }
  std::vector<DistanceBin> out;
  for (auto& b : bins) {
    if (b.count > 0) {
      b.value /= b.count;
      out.push_back(b);
    }
  }
  return out;
}

json bins_to_json(const std::vector<DistanceBin>& bins) {
  json arr = json::array();
  for (const auto& b : bins)
    arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"value", b.value}});
  return arr;
}

}  // namespace

double EvalReport::success_at_least(int min_distance) const {
  int n = 0, ok = 0;
  for (const auto& e : episodes) {
    if (e.distance >= min_distance) {
      ++n;
      ok += e.success ? 1 : 0;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(ok) / n;
}

std::string EvalReport::to_json() const {
  json j;
  j["success_rate"] = success_rate;
  j["mean_return"] = mean_return;
  json eps = json::array();
  for (const auto& e : episodes) {
    eps.push_back({{"start", e.start},
                   {"goal", e.goal},
                   {"distance", e.distance},
                   {"steps", e.steps},
                   {"success", e.success},
                   {"return", e.ret}});
  }
  j["episodes"] = eps;
  j["success_by_distance"] = bins_to_json(success_by_distance);
  return j.dump();
}

ActFactory make_policy_actor(PolicyMode mode, const GridWorld& env, const EvalConfig& cfg,
                             const PolicyBundle& bundle) {
  if (mode == PolicyMode::flat) {
    if (bundle.flat == nullptr) throw std::invalid_argument("make_policy_actor: flat policy missing");
    const PolicyNet* flat = bundle.flat;
    const double eps = cfg.eps_greedy;
    return [&env, flat, eps]() -> ActFn {
      return [&env, flat, eps](int cell, int goal, Rng& rng) {
        return act_flat(env, *flat, cell, goal, rng, eps);
      };
    };
  }
  if (bundle.high == nullptr || bundle.low == nullptr)
    throw std::invalid_argument("make_policy_actor: hierarchical policies missing");
  const PolicyNet* high = bundle.high;
  const PolicyNet* low = bundle.low;
  const double eps = cfg.eps_greedy;
  const int hold = cfg.subgoal_hold;
  if (hold == 1) {
    return [&env, high, low, eps]() -> ActFn {
      return [&env, high, low, eps](int cell, int goal, Rng& rng) {
        Matrix logits;
        if (high->kind() == PolicyKind::high_repr) {
          const Matrix z = normalize_columns(high->forward_cells({cell}, {goal}));
          logits = low->forward_latent({cell}, z);
        } else {
          const int subgoal = argmax_free_cell(env, high->forward_cells({cell}, {goal}));
          logits = low->forward_cells({cell}, {subgoal});
        }
        return maybe_eps(env, argmax_action(logits), rng, eps);
      };
    };
  }
  // hold-for-m-steps execution keeps the latent subgoal fixed between
  // high-level queries
  return [&env, high, low, eps, hold]() -> ActFn {
    auto state = std::make_shared<std::pair<Matrix, int>>(Matrix(), hold);  // z/held, age
    auto sub_held = std::make_shared<int>(-1);
    return [&env, high, low, eps, hold, state, sub_held](int cell, int goal, Rng& rng) {
      auto& [z_held, age] = *state;
      if (age >= hold) {
        if (high->kind() == PolicyKind::high_repr) {
          z_held = normalize_columns(high->forward_cells({cell}, {goal}));
        } else {
          *sub_held = argmax_free_cell(env, high->forward_cells({cell}, {goal}));
        }
        age = 0;
      }
      ++age;
      const Matrix logits = high->kind() == PolicyKind::high_repr
                                ? low->forward_latent({cell}, z_held)
                                : low->forward_cells({cell}, {*sub_held});
      return maybe_eps(env, argmax_action(logits), rng, eps);
    };
  };
}

EvalReport evaluate(const GridWorld& env, const std::vector<EvalTask>& tasks,
                    const EvalConfig& cfg, const ActFactory& make_actor) {
  cfg.validate();
  EvalReport report;
  const int n = std::min<int>(cfg.episodes, static_cast<int>(tasks.size()));
  double ret_sum = 0.0;
  int ok = 0;
  for (int ep = 0; ep < n; ++ep) {
    // Per-episode streams keep episodes independent of execution order.
    Rng rng = Rng::stream(cfg.seed, "episode_" + std::to_string(ep));
    ActFn act = make_actor();
    const EvalTask task = tasks[static_cast<std::size_t>(ep)];
    int cell = task.start;
    int steps = 0;
    bool success = cell == task.goal;
    while (!success && steps < cfg.max_steps) {
      cell = env.step_cell(cell, act(cell, task.goal, rng));
      ++steps;
      success = cell == task.goal;
    }
    const double ret = success ? -static_cast<double>(steps) : -static_cast<double>(cfg.max_steps);
    report.episodes.push_back(EpisodeRecord{task.start, task.goal,
                                            env.bfs_distance(task.start, task.goal), steps, success,
                                            ret});
    ret_sum += ret;
    ok += success ? 1 : 0;
  }
  report.success_rate = n == 0 ? 0.0 : static_cast<double>(ok) / n;
  report.mean_return = n == 0 ? 0.0 : ret_sum / n;
  std::vector<std::pair<int, double>> samples;
  for (const auto& e : report.episodes) samples.emplace_back(e.distance, e.success ? 1.0 : 0.0);
  if (!samples.empty()) report.success_by_distance = bin_by_distance(samples, 5, env.diameter());
  return report;
}

EvalReport evaluate(PolicyMode mode, const GridWorld& env, const std::vector<EvalTask>& tasks,
                    const EvalConfig& cfg, const PolicyBundle& bundle) {
  return evaluate(env, tasks, cfg, make_policy_actor(mode, env, cfg, bundle));
}

std::string AccuracyReport::to_json() const {
  json j;
  j["overall"] = overall;
  j["near"] = near;
  j["distant"] = distant;
  j["d0"] = d0;
  j["n_near"] = n_near;
  j["n_distant"] = n_distant;
  j["by_distance"] = bins_to_json(by_distance);
  return j.dump();
}

AccuracyReport policy_accuracy(const GridWorld& env, const std::vector<EvalTask>& pairs,
                               const ActFn& act, int d0, std::uint64_t seed) {
  AccuracyReport rep;
  rep.d0 = d0;
  double sum = 0.0, sum_near = 0.0, sum_far = 0.0;
  int n = 0;
  std::vector<std::pair<int, double>> samples;
  Rng rng(seed);
  for (const auto& p : pairs) {
    if (p.start == p.goal) throw std::invalid_argument("policy_accuracy: pair with s == g");
    const int action = act(p.start, p.goal, rng);
    const auto best = env.optimal_action_set(p.start, p.goal);
    const bool hit = std::find(best.begin(), best.end(), action) != best.end();
    const int d = env.bfs_distance(p.start, p.goal);
    const double v = hit ? 1.0 : 0.0;
    sum += v;
    ++n;
    if (d >= d0) {
      sum_far += v;
      rep.n_distant += 1;
    } else {
      sum_near += v;
      rep.n_near += 1;
    }
    samples.emplace_back(d, v);
  }
  rep.overall = n == 0 ? 0.0 : sum / n;
  rep.near = rep.n_near == 0 ? 0.0 : sum_near / rep.n_near;
  rep.distant = rep.n_distant == 0 ? 0.0 : sum_far / rep.n_distant;
  if (!samples.empty()) rep.by_distance = bin_by_distance(samples, 5, env.diameter());
  return rep;
}

AccuracyReport policy_accuracy(PolicyMode mode, const GridWorld& env,
                               const std::vector<EvalTask>& pairs, const PolicyBundle& bundle,
                               int d0) {
  // greedy (eps = 0) actions; fresh actor per call is fine since accuracy
  // queries are single-step
  EvalConfig greedy;
  greedy.eps_greedy = 0.0;
  greedy.subgoal_hold = 1;
  const ActFn act = make_policy_actor(mode, env, greedy, bundle)();
  return policy_accuracy(env, pairs, act, d0);
}

}  // namespace gcrl
