#include "gcrl/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gcrl/svg.hpp"

namespace gcrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: bad boolean value '" + s + "'");
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string ExperimentConfig::serialize() const {
  std::ostringstream o;
  o << "env = " << env << "\n";
  o << "out_dir = " << out_dir << "\n";
  o << "seeds = " << join_ints(seeds) << "\n";
  o << "threads = " << threads << "\n";
  o << "k = " << k << "\n";
  o << "repr = " << to_string(repr) << "\n";
  o << "dz = " << dz << "\n";
  o << "labeled_fraction = " << format_double(labeled_fraction) << "\n";
  o << "full_advantage = " << (full_advantage ? "true" : "false") << "\n";
  o << "aux_repr_grad = " << (aux_repr_grad ? "true" : "false") << "\n";
  o << "subgoal_hold = " << subgoal_hold << "\n";
  o << "layer_norm = " << (layer_norm ? "true" : "false") << "\n";
  o << "data.behavior = " << to_string(behavior) << "\n";
  o << "data.epsilon = " << format_double(data_epsilon) << "\n";
  o << "data.num_traj = " << num_traj << "\n";
  o << "data.max_len = " << max_len << "\n";
  o << "data.seed = " << data_seed << "\n";
  o << "goal.p_random = " << format_double(goal_p_random) << "\n";
  o << "goal.p_future = " << format_double(goal_p_future) << "\n";
  o << "goal.p_current = " << format_double(goal_p_current) << "\n";
  o << "goal.p_future_policy = " << format_double(p_future_policy) << "\n";
  o << "value.gamma = " << format_double(value.gamma) << "\n";
  o << "value.tau = " << format_double(value.tau) << "\n";
  o << "value.lr = " << format_double(value.lr) << "\n";
  o << "value.polyak = " << format_double(value.polyak) << "\n";
  o << "value.steps = " << value.steps << "\n";
  o << "value.batch = " << value.batch_size << "\n";
  o << "value.pipeline = " << (value.pipeline ? "true" : "false") << "\n";
  o << "value.hidden = " << join_ints(value_hidden) << "\n";
  o << "phi.hidden = " << join_ints(phi_hidden) << "\n";
  o << "policy.hidden = " << join_ints(policy_hidden) << "\n";
  const auto awr = [&](const char* name, const AwrConfig& c) {
    o << name << ".beta = " << format_double(c.beta) << "\n";
    o << name << ".cap = " << format_double(c.weight_cap) << "\n";
    o << name << ".lr = " << format_double(c.lr) << "\n";
    o << name << ".steps = " << c.steps << "\n";
    o << name << ".batch = " << c.batch_size << "\n";
  };
  awr("flat", flat);
  awr("high", high);
  awr("low", low);
  o << "eval.episodes = " << eval_episodes << "\n";
  o << "eval.max_steps = " << eval_max_steps << "\n";
  o << "eval.eps = " << format_double(eval_eps) << "\n";
  o << "eval.every = " << eval_every << "\n";
  o << "eval.d0 = " << eval_d0 << "\n";
  o << "eval.acc_pairs = " << acc_pairs << "\n";
  return o.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = true;
      for (char ch : line) {
        if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
      }
      if (blank) continue;
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "env") c.env = val;
    else if (key == "out_dir") c.out_dir = val;
    else if (key == "seeds") c.seeds = parse_ints(val);
    else if (key == "threads") c.threads = std::stoi(val);
    else if (key == "k") c.k = std::stoi(val);
    else if (key == "repr") c.repr = repr_mode_from_string(val);
    else if (key == "dz") c.dz = std::stoi(val);
    else if (key == "labeled_fraction") c.labeled_fraction = std::stod(val);
    else if (key == "full_advantage") c.full_advantage = parse_bool(val);
    else if (key == "aux_repr_grad") c.aux_repr_grad = parse_bool(val);
    else if (key == "subgoal_hold") c.subgoal_hold = std::stoi(val);
    else if (key == "layer_norm") c.layer_norm = parse_bool(val);
    else if (key == "data.behavior") c.behavior = behavior_from_string(val);
    else if (key == "data.epsilon") c.data_epsilon = std::stod(val);
    else if (key == "data.num_traj") c.num_traj = std::stoi(val);
    else if (key == "data.max_len") c.max_len = std::stoi(val);
    else if (key == "data.seed") c.data_seed = std::stoull(val);
    else if (key == "goal.p_random") c.goal_p_random = std::stod(val);
    else if (key == "goal.p_future") c.goal_p_future = std::stod(val);
    else if (key == "goal.p_current") c.goal_p_current = std::stod(val);
    else if (key == "goal.p_future_policy") c.p_future_policy = std::stod(val);
    else if (key == "value.gamma") c.value.gamma = std::stod(val);
    else if (key == "value.tau") c.value.tau = std::stod(val);
    else if (key == "value.lr") c.value.lr = std::stod(val);
    else if (key == "value.polyak") c.value.polyak = std::stod(val);
    else if (key == "value.steps") c.value.steps = std::stoi(val);
    else if (key == "value.batch") c.value.batch_size = std::stoi(val);
    else if (key == "value.pipeline") c.value.pipeline = parse_bool(val);
    else if (key == "value.hidden") c.value_hidden = parse_ints(val);
    else if (key == "phi.hidden") c.phi_hidden = parse_ints(val);
    else if (key == "policy.hidden") c.policy_hidden = parse_ints(val);
    else if (key == "flat.beta") c.flat.beta = std::stod(val);
    else if (key == "flat.cap") c.flat.weight_cap = std::stod(val);
    else if (key == "flat.lr") c.flat.lr = std::stod(val);
    else if (key == "flat.steps") c.flat.steps = std::stoi(val);
    else if (key == "flat.batch") c.flat.batch_size = std::stoi(val);
    else if (key == "high.beta") c.high.beta = std::stod(val);
    else if (key == "high.cap") c.high.weight_cap = std::stod(val);
    else if (key == "high.lr") c.high.lr = std::stod(val);
    else if (key == "high.steps") c.high.steps = std::stoi(val);
    else if (key == "high.batch") c.high.batch_size = std::stoi(val);
    else if (key == "low.beta") c.low.beta = std::stod(val);
    else if (key == "low.cap") c.low.weight_cap = std::stod(val);
    else if (key == "low.lr") c.low.lr = std::stod(val);
    else if (key == "low.steps") c.low.steps = std::stoi(val);
    else if (key == "low.batch") c.low.batch_size = std::stoi(val);
    else if (key == "eval.episodes") c.eval_episodes = std::stoi(val);
    else if (key == "eval.max_steps") c.eval_max_steps = std::stoi(val);
    else if (key == "eval.eps") c.eval_eps = std::stod(val);
    else if (key == "eval.every") c.eval_every = std::stoi(val);
    else if (key == "eval.d0") c.eval_d0 = std::stoi(val);
    else if (key == "eval.acc_pairs") c.acc_pairs = std::stoi(val);
    else throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("ExperimentConfig::load: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ExperimentConfig::save: cannot open " + path);
  f << serialize();
}

std::string ExperimentConfig::hash() const { return git_blob_sha1(serialize()); }

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (k < 1) throw std::invalid_argument("config: k must be >= 1");
  if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0)
    throw std::invalid_argument("config: labeled_fraction must be in (0, 1]");
  value.validate();
  flat.validate();
  high.validate();
  low.validate();
  GoalSamplingConfig{goal_p_random, goal_p_future, goal_p_current, value.gamma}.validate();
}

std::string RunRecord::to_json() const {
  json j;
  j["seed"] = seed;
  j["family"] = family;
  j["variant"] = variant;
  j["variant_x"] = variant_x;
  j["config_hash"] = config_hash;
  j["dataset_hash"] = dataset_hash;
  j["value_hash_after_value"] = value_hash_after_value;
  j["value_hash_after_policies"] = value_hash_after_policies;
  j["value_frozen"] = value_frozen;
  j["timing"] = {{"value_s", timing.value_s},
                 {"flat_s", timing.flat_s},
                 {"high_s", timing.high_s},
                 {"low_s", timing.low_s},
                 {"eval_s", timing.eval_s}};
  j["eval_flat"] = json::parse(eval_flat.to_json());
  j["eval_hier"] = json::parse(eval_hier.to_json());
  j["acc_flat"] = json::parse(acc_flat.to_json());
  j["acc_hier"] = json::parse(acc_hier.to_json());
  j["metrics_sha1"] = metrics_sha1;
  return j.dump(2);
}

std::vector<double> ExperimentResult::per_seed(double (*f)(const RunRecord&)) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(f(r));
  return out;
}

double ExperimentResult::mean_success_hier() const {
  double s = 0.0;
  for (const auto& r : records) s += r.eval_hier.success_rate;
  return records.empty() ? 0.0 : s / static_cast<double>(records.size());
}

double ExperimentResult::mean_success_flat() const {
  double s = 0.0;
  for (const auto& r : records) s += r.eval_flat.success_rate;
  return records.empty() ? 0.0 : s / static_cast<double>(records.size());
}

namespace {

struct MetricsLog {
  std::string buffer;

  void row(const json& j) {
    buffer += j.dump();
    buffer += '\n';
  }
};

void append_trace(MetricsLog& log, const char* stage, const std::vector<TraceRow>& rows) {
  for (const auto& r : rows) {
    log.row({{"stage", stage},
             {"step", r.step},
             {"loss", r.loss},
             {"v_mean", r.v_mean},
             {"v_min", r.v_min},
             {"v_max", r.v_max}});
  }
}

void append_trace(MetricsLog& log, const char* stage, const std::vector<TraceRowSimple>& rows) {
  for (const auto& r : rows) log.row({{"stage", stage}, {"step", r.step}, {"loss", r.loss}});
}

struct SeedArtifacts {
  RunRecord record;
  ValueNet value;
  PolicyNet flat;
  PolicyNet high;
  PolicyNet low;
};

SeedArtifacts run_seed(const ExperimentConfig& cfg, const GridWorld& env, const Dataset& base_data,
                       int seed, const std::string& seed_dir) {
  SeedArtifacts art;
  RunRecord& rec = art.record;
  rec.seed = seed;
  rec.config_hash = cfg.hash();

  // Per-seed label stripping keeps the action-limited study honest across
  // seeds while the state corpus stays shared.
  Dataset data = base_data;
  if (cfg.labeled_fraction < 1.0) {
    Rng strip_rng = Rng::stream(cfg.data_seed, "strip_seed_" + std::to_string(seed));
    data = strip_actions(base_data, cfg.labeled_fraction, strip_rng);
  }
  rec.dataset_hash = data.content_hash();

  const std::uint64_t s64 = static_cast<std::uint64_t>(seed);
  MetricsLog log;
  log.row({{"schema", "metrics.v1"}, {"seed", seed}});

  // Stage 1: value function.
  ValueNetSpec vspec;
  vspec.mode = cfg.repr;
  vspec.n_cells = env.n_cells();
  vspec.dz = cfg.dz;
  vspec.phi_hidden = cfg.phi_hidden;
  vspec.trunk_hidden = cfg.value_hidden;
  vspec.layer_norm = cfg.layer_norm;
  {
    Rng init = Rng::stream(s64, "value_init");
    art.value = ValueNet(vspec, init);
  }
  GoalSamplingConfig goals{cfg.goal_p_random, cfg.goal_p_future, cfg.goal_p_current, cfg.value.gamma};
  double t0 = now_seconds();
  const auto vtrace = train_value(art.value, data, cfg.value, goals, s64);
  rec.timing.value_s = now_seconds() - t0;
  append_trace(log, "value", vtrace);
  rec.value_hash_after_value = params_hash(art.value.named_values());

  const int d0 = cfg.eval_d0 > 0 ? cfg.eval_d0 : std::max(1, env.diameter() / 2);
  const int max_steps = cfg.eval_max_steps > 0 ? cfg.eval_max_steps : 4 * env.diameter();

  const EvalConfig interim_cfg{10, max_steps, cfg.eval_eps, s64 ^ 0x9e3779b9ULL, cfg.subgoal_hold};
  std::vector<EvalTask> interim_tasks;
  {
    Rng rng = Rng::stream(s64, "interim_tasks");
    interim_tasks = sample_eval_tasks(env, 10, 1, env.diameter(), rng);
  }

  PolicyTrainOptions opt;
  opt.full_advantage = cfg.full_advantage;
  opt.p_future_goal = cfg.p_future_policy;
  opt.gamma = cfg.value.gamma;

  // Stage 2: flat baseline extraction.
  {
    Rng init = Rng::stream(s64, "flat_init");
    art.flat = PolicyNet(PolicyKind::flat, env.n_cells(), env.n_actions(), cfg.dz,
                         cfg.policy_hidden, cfg.layer_norm, init);
  }
  PolicyTrainOptions flat_opt = opt;
  if (cfg.eval_every > 0) {
    flat_opt.on_step = [&](int step) {
      if ((step + 1) % cfg.eval_every != 0) return;
      PolicyBundle b;
      b.flat = &art.flat;
      const EvalReport r = evaluate(PolicyMode::flat, env, interim_tasks, interim_cfg, b);
      log.row({{"stage", "eval_interim"}, {"policy", "flat"}, {"step", step + 1},
               {"success", r.success_rate}});
    };
  }
  t0 = now_seconds();
  append_trace(log, "flat", train_flat(art.flat, art.value, data, cfg.flat, flat_opt, s64));
  rec.timing.flat_s = now_seconds() - t0;

  // Stage 3: high-level extraction.
  const PolicyKind high_kind = cfg.repr == ReprMode::raw ? PolicyKind::high_raw : PolicyKind::high_repr;
  {
    Rng init = Rng::stream(s64, "high_init");
    art.high = PolicyNet(high_kind, env.n_cells(), env.n_actions(), cfg.dz, cfg.policy_hidden,
                         cfg.layer_norm, init);
  }
  t0 = now_seconds();
  append_trace(log, "high", train_high(art.high, art.value, data, cfg.high, cfg.k, opt, s64));
  rec.timing.high_s = now_seconds() - t0;

  // Stage 4: low-level extraction (labeled data only).
  const PolicyKind low_kind = cfg.repr == ReprMode::raw ? PolicyKind::low_raw : PolicyKind::low_repr;
  {
    Rng init = Rng::stream(s64, "low_init");
    art.low = PolicyNet(low_kind, env.n_cells(), env.n_actions(), cfg.dz, cfg.policy_hidden,
                        cfg.layer_norm, init);
  }
  PolicyTrainOptions low_opt = opt;
  low_opt.aux_repr_grad = cfg.aux_repr_grad;
  if (cfg.eval_every > 0) {
    low_opt.on_step = [&](int step) {
      if ((step + 1) % cfg.eval_every != 0) return;
      PolicyBundle b;
      b.value = &art.value;
      b.high = &art.high;
      b.low = &art.low;
      const EvalReport r = evaluate(PolicyMode::hierarchical, env, interim_tasks, interim_cfg, b);
      log.row({{"stage", "eval_interim"}, {"policy", "hierarchical"}, {"step", step + 1},
               {"success", r.success_rate}});
    };
  }
  t0 = now_seconds();
  append_trace(log, "low", train_low(art.low, art.value, data, cfg.low, cfg.k, low_opt, s64));
  rec.timing.low_s = now_seconds() - t0;

  rec.value_hash_after_policies = params_hash(art.value.named_values());
  rec.value_frozen = rec.value_hash_after_value == rec.value_hash_after_policies;

  // Final evaluation: stratified near/distant tasks plus accuracy pairs.
  t0 = now_seconds();
  std::vector<EvalTask> tasks;
  {
    Rng rng = Rng::stream(s64, "eval_tasks");
    const int half = cfg.eval_episodes / 2;
    auto near = sample_eval_tasks(env, cfg.eval_episodes - half, 1, std::max(1, d0 - 1), rng);
    auto far = sample_eval_tasks(env, half, d0, env.diameter(), rng);
    tasks = near;
    tasks.insert(tasks.end(), far.begin(), far.end());
  }
  EvalConfig ecfg{static_cast<int>(tasks.size()), max_steps, cfg.eval_eps, s64 ^ 0x51ed2701ULL,
                  cfg.subgoal_hold};
  PolicyBundle bundle;
  bundle.value = &art.value;
  bundle.flat = &art.flat;
  bundle.high = &art.high;
  bundle.low = &art.low;
  rec.eval_flat = evaluate(PolicyMode::flat, env, tasks, ecfg, bundle);
  rec.eval_hier = evaluate(PolicyMode::hierarchical, env, tasks, ecfg, bundle);

  std::vector<EvalTask> pairs;
  {
    Rng rng = Rng::stream(s64, "acc_pairs");
    const int half = cfg.acc_pairs / 2;
    pairs = sample_eval_tasks(env, cfg.acc_pairs - half, 1, std::max(1, d0 - 1), rng);
    auto far = sample_eval_tasks(env, half, d0, env.diameter(), rng);
    pairs.insert(pairs.end(), far.begin(), far.end());
  }
  rec.acc_flat = policy_accuracy(PolicyMode::flat, env, pairs, bundle, d0);
  rec.acc_hier = policy_accuracy(PolicyMode::hierarchical, env, pairs, bundle, d0);
  rec.timing.eval_s = now_seconds() - t0;

  log.row({{"stage", "eval_final"}, {"policy", "flat"},
           {"success", rec.eval_flat.success_rate},
           {"success_distant", rec.eval_flat.success_at_least(d0)},
           {"acc_overall", rec.acc_flat.overall}, {"acc_distant", rec.acc_flat.distant}});
  log.row({{"stage", "eval_final"}, {"policy", "hierarchical"},
           {"success", rec.eval_hier.success_rate},
           {"success_distant", rec.eval_hier.success_at_least(d0)},
           {"acc_overall", rec.acc_hier.overall}, {"acc_distant", rec.acc_hier.distant}});

  if (!seed_dir.empty()) {
    fs::create_directories(seed_dir);
    std::ofstream mf(seed_dir + "/metrics.jsonl", std::ios::binary);
    mf << log.buffer;
    mf.close();
    rec.metrics_sha1 = git_blob_sha1(log.buffer);
    save_value_net(seed_dir + "/value.ckpt", art.value);
    save_policy_net(seed_dir + "/flat.ckpt", art.flat);
    save_policy_net(seed_dir + "/high.ckpt", art.high);
    save_policy_net(seed_dir + "/low.ckpt", art.low);
    std::ofstream rf(seed_dir + "/runrecord.json", std::ios::binary);
    rf << rec.to_json() << "\n";
  } else {
    rec.metrics_sha1 = git_blob_sha1(log.buffer);
  }
  return art;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const GridWorld env = GridWorld::from_spec(config.env);
  const Dataset base_data = generate_dataset(env, config.behavior, config.data_epsilon,
                                             config.num_traj, config.max_len, config.data_seed);

  ExperimentResult result;
  result.config = config;
  result.records.resize(config.seeds.size());

  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    config.save(config.out_dir + "/config.txt");
    base_data.save(config.out_dir + "/dataset.jsonl", env);
  }

  const int want = config.threads > 0 ? config.threads
                                      : static_cast<int>(std::thread::hardware_concurrency());
  const int n_threads = std::max(1, std::min<int>(want, static_cast<int>(config.seeds.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.seeds.size()) return;
      const int seed = config.seeds[i];
      const std::string seed_dir =
          config.out_dir.empty() ? std::string() : config.out_dir + "/seed" + std::to_string(seed);
      result.records[i] = run_seed(config, env, base_data, seed, seed_dir).record;
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  if (!config.out_dir.empty()) {
    json agg;
    agg["config_hash"] = config.hash();
    agg["n_seeds"] = config.seeds.size();
    json per = json::array();
    for (const auto& r : result.records) {
      per.push_back({{"seed", r.seed},
                     {"success_flat", r.eval_flat.success_rate},
                     {"success_hier", r.eval_hier.success_rate},
                     {"acc_flat_distant", r.acc_flat.distant},
                     {"acc_hier_distant", r.acc_hier.distant}});
    }
    agg["per_seed"] = per;
    agg["mean_success_flat"] = result.mean_success_flat();
    agg["mean_success_hier"] = result.mean_success_hier();
    std::ofstream f(config.out_dir + "/aggregate.json", std::ios::binary);
    f << agg.dump(2) << "\n";
  }
  return result;
}

ExperimentResult run_variant(ExperimentConfig config, const std::string& family,
                             const std::string& variant, double variant_x) {
  if (!config.out_dir.empty()) config.out_dir += "/" + variant;
  ExperimentResult res = run_experiment(config);
  for (auto& r : res.records) {
    r.family = family;
    r.variant = variant;
    r.variant_x = variant_x;
  }
  return res;
}

std::vector<ExperimentResult> ablate_k(const ExperimentConfig& base, const std::vector<int>& k_list) {
  if (k_list.empty()) throw std::invalid_argument("ablate_k: empty k list");
  std::vector<ExperimentResult> out;
  for (int k : k_list) {
    ExperimentConfig c = base;
    c.k = k;
    out.push_back(run_variant(std::move(c), "ablate-k", "k=" + std::to_string(k), k));
  }
  std::vector<RunRecord> all;
  for (const auto& r : out) all.insert(all.end(), r.records.begin(), r.records.end());
  if (!base.out_dir.empty()) emit_plots(all, base.out_dir);
  return out;
}

std::vector<ExperimentResult> ablate_repr(const ExperimentConfig& base,
                                          const std::vector<ReprMode>& modes) {
  if (modes.empty()) throw std::invalid_argument("ablate_repr: empty mode list");
  std::vector<ExperimentResult> out;
  double x = 0;
  for (ReprMode m : modes) {
    ExperimentConfig c = base;
    c.repr = m;
    out.push_back(run_variant(std::move(c), "ablate-repr", to_string(m), x++));
  }
  std::vector<RunRecord> all;
  for (const auto& r : out) all.insert(all.end(), r.records.begin(), r.records.end());
  if (!base.out_dir.empty()) emit_plots(all, base.out_dir);
  return out;
}

std::vector<ExperimentResult> action_limited(const ExperimentConfig& base,
                                             const std::vector<double>& fractions) {
  if (fractions.empty()) throw std::invalid_argument("action_limited: empty fraction list");
  std::vector<ExperimentResult> out;
  for (double f : fractions) {
    ExperimentConfig c = base;
    c.labeled_fraction = f;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frac=%g", f);
    out.push_back(run_variant(std::move(c), "action-limited", buf, f));
  }
  std::vector<RunRecord> all;
  for (const auto& r : out) all.insert(all.end(), r.records.begin(), r.records.end());
  if (!base.out_dir.empty()) emit_plots(all, base.out_dir);
  return out;
}

void emit_plots(const std::vector<RunRecord>& records, const std::string& out_dir) {
  if (records.empty()) throw std::invalid_argument("emit_plots: no records");
  const std::string family = records.front().family;
  for (const auto& r : records) {
    if (r.family != family)
      throw std::invalid_argument("emit_plots: mixed record families: " + family + " vs " + r.family);
  }
  fs::create_directories(out_dir);

  // Group by variant preserving first-seen order.
  std::vector<std::string> variants;
  std::map<std::string, std::vector<const RunRecord*>> by_variant;
  for (const auto& r : records) {
    if (!by_variant.count(r.variant)) variants.push_back(r.variant);
    by_variant[r.variant].push_back(&r);
  }
  auto mean_of = [](const std::vector<const RunRecord*>& rs, double (*f)(const RunRecord&)) {
    double s = 0;
    for (const auto* r : rs) s += f(*r);
    return rs.empty() ? 0.0 : s / static_cast<double>(rs.size());
  };
  const auto succ_hier = [](const RunRecord& r) { return r.eval_hier.success_rate; };
  const auto succ_flat = [](const RunRecord& r) { return r.eval_flat.success_rate; };
  const auto acc_h_far = [](const RunRecord& r) { return r.acc_hier.distant; };
  const auto acc_f_far = [](const RunRecord& r) { return r.acc_flat.distant; };

  if (family == "ablate-k" || family == "action-limited") {
    PlotSeries hier{family == "ablate-k" ? "hierarchical" : "hierarchical (limited labels)", {}, {}};
    PlotSeries flat{"flat", {}, {}};
    for (const auto& v : variants) {
      const auto& rs = by_variant[v];
      hier.x.push_back(rs.front()->variant_x);
      hier.y.push_back(mean_of(rs, succ_hier));
      flat.x.push_back(rs.front()->variant_x);
      flat.y.push_back(mean_of(rs, succ_flat));
    }
    const std::string xlabel = family == "ablate-k" ? "subgoal step k" : "labeled fraction";
    write_line_plot(out_dir + "/" + family, "success rate vs " + xlabel, xlabel, "success rate",
                    {hier, flat});
    return;
  }
  if (family == "ablate-repr") {
    std::vector<std::vector<double>> values(2);
    for (const auto& v : variants) {
      values[0].push_back(mean_of(by_variant[v], succ_hier));
      values[1].push_back(mean_of(by_variant[v], acc_h_far));
    }
    write_bar_plot(out_dir + "/ablate-repr", "representation ablation", variants,
                   {"success", "distant accuracy"}, values);
    return;
  }
  // Default family: accuracy comparison bars (near/distant, flat vs hierarchical).
  std::vector<std::vector<double>> values(2, std::vector<double>(2, 0.0));
  const auto acc_f_near = [](const RunRecord& r) { return r.acc_flat.near; };
  const auto acc_h_near = [](const RunRecord& r) { return r.acc_hier.near; };
  std::vector<const RunRecord*> all;
  for (const auto& r : records) all.push_back(&r);
  values[0][0] = mean_of(all, acc_f_near);
  values[0][1] = mean_of(all, acc_f_far);
  values[1][0] = mean_of(all, acc_h_near);
  values[1][1] = mean_of(all, acc_h_far);
  write_bar_plot(out_dir + "/policy-accuracy", "policy accuracy by goal distance",
                 {"near goals", "distant goals"}, {"flat", "hierarchical"}, values);
}

double paired_wilcoxon_one_sided_p(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double x : diffs) {
    if (x != 0.0) d.push_back(x);
  }
  const std::size_t m = d.size();
  if (m == 0) return 1.0;
  if (m > 24) throw std::invalid_argument("paired_wilcoxon_one_sided_p: too many samples for exact test");

  // Average ranks of |d|, ties shared.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double w_obs = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (d[i] > 0) w_obs += rank[i];
  }
  long ge = 0;
  const long total = 1L << m;
  for (long mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (1L << i)) w += rank[i];
    }
    if (w >= w_obs - 1e-12) ++ge;
  }
  return static_cast<double>(ge) / static_cast<double>(total);
}

void save_value_net(const std::string& path, const ValueNet& net) {
  json meta;
  meta["kind"] = "value";
  meta["mode"] = to_string(net.spec().mode);
  meta["n_cells"] = net.spec().n_cells;
  meta["dz"] = net.spec().dz;
  meta["phi_hidden"] = net.spec().phi_hidden;
  meta["trunk_hidden"] = net.spec().trunk_hidden;
  meta["layer_norm"] = net.spec().layer_norm;
  save_arrays(path, net.named_values(), meta.dump());
}

ValueNet load_value_net(const std::string& path) {
  std::string meta_s;
  const auto arrays = load_arrays(path, &meta_s);
  const json meta = json::parse(meta_s);
  if (meta.at("kind") != "value") throw std::runtime_error("load_value_net: not a value checkpoint");
  ValueNetSpec spec;
  spec.mode = repr_mode_from_string(meta.at("mode").get<std::string>());
  spec.n_cells = meta.at("n_cells").get<int>();
  spec.dz = meta.at("dz").get<int>();
  spec.phi_hidden = meta.at("phi_hidden").get<std::vector<int>>();
  spec.trunk_hidden = meta.at("trunk_hidden").get<std::vector<int>>();
  spec.layer_norm = meta.at("layer_norm").get<bool>();
  Rng rng(0);
  ValueNet net(spec, rng);
  assign_params(net.params(), arrays);
  return net;
}

namespace {

std::string policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::flat: return "flat";
    case PolicyKind::high_raw: return "high_raw";
    case PolicyKind::high_repr: return "high_repr";
    case PolicyKind::low_raw: return "low_raw";
    case PolicyKind::low_repr: return "low_repr";
  }
  return "?";
}

PolicyKind policy_kind_from_name(const std::string& s) {
  if (s == "flat") return PolicyKind::flat;
  if (s == "high_raw") return PolicyKind::high_raw;
  if (s == "high_repr") return PolicyKind::high_repr;
  if (s == "low_raw") return PolicyKind::low_raw;
  if (s == "low_repr") return PolicyKind::low_repr;
  throw std::runtime_error("unknown policy kind: " + s);
}

}  // namespace

void save_policy_net(const std::string& path, const PolicyNet& net) {
  json meta;
  meta["kind"] = policy_kind_name(net.kind());
  meta["n_cells"] = net.n_cells();
  meta["n_actions"] = net.n_actions();
  meta["dz"] = net.dz();
  meta["hidden"] = net.net().spec().hidden;
  meta["layer_norm"] = net.net().spec().layer_norm;
  save_arrays(path, net.named_values(), meta.dump());
}

PolicyNet load_policy_net(const std::string& path) {
  std::string meta_s;
  const auto arrays = load_arrays(path, &meta_s);
  const json meta = json::parse(meta_s);
  Rng rng(0);
  PolicyNet net(policy_kind_from_name(meta.at("kind").get<std::string>()),
                meta.at("n_cells").get<int>(), meta.at("n_actions").get<int>(),
                meta.at("dz").get<int>(), meta.at("hidden").get<std::vector<int>>(),
                meta.at("layer_norm").get<bool>(), rng);
  assign_params(net.params(), arrays);
  return net;
}

}  // namespace gcrl
