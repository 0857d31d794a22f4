#include <CLI11.hpp>

#include "gcrl/experiment.hpp"
#include "gcrl/svg.hpp"
#include "gcrl/theory.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace gcrl;

namespace {

// Environment overrides: GCRL_OUT_DIR redirects outputs, GCRL_THREADS caps
// seed-level parallelism.
void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("GCRL_OUT_DIR")) cfg.out_dir = std::string(dir);
  if (const char* th = std::getenv("GCRL_THREADS")) cfg.threads = std::atoi(th);
}

ExperimentConfig load_config(const std::string& path, const std::string& out_override,
                             const std::vector<std::string>& sets) {
  ExperimentConfig cfg = ExperimentConfig::load(path);
  if (!sets.empty()) {
    std::string text = cfg.serialize();
    for (const auto& kv : sets) text += kv + "\n";
    cfg = ExperimentConfig::parse(text);
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  apply_env_overrides(cfg);
  return cfg;
}

void print_result_summary(const ExperimentResult& res) {
  std::cout << "seeds: " << res.records.size() << "\n";
  for (const auto& r : res.records) {
    std::cout << "  seed " << r.seed << ": success flat=" << r.eval_flat.success_rate
              << " hier=" << r.eval_hier.success_rate << "  distant acc flat=" << r.acc_flat.distant
              << " hier=" << r.acc_hier.distant << "\n";
  }
  std::cout << "mean success: flat=" << res.mean_success_flat()
            << " hier=" << res.mean_success_hier() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcrl: offline goal-conditioned RL laboratory (gridworlds)"};
  app.require_subcommand(1);

  // generate-data
  std::string gd_env, gd_behavior = "noisy", gd_out = "dataset.jsonl";
  double gd_eps = 0.2;
  int gd_num = 300, gd_len = 200;
  std::uint64_t gd_seed = 1;
  auto* gd = app.add_subcommand("generate-data", "Generate an offline trajectory dataset");
  gd->add_option("--env", gd_env, "Environment: map file or chain:N")->required();
  gd->add_option("--behavior", gd_behavior, "optimal | noisy | random")->capture_default_str();
  gd->add_option("--epsilon", gd_eps, "Noise level for the noisy behavior")->capture_default_str();
  gd->add_option("--num-traj", gd_num, "Number of trajectories")->capture_default_str();
  gd->add_option("--max-len", gd_len, "Transitions per trajectory")->capture_default_str();
  gd->add_option("--seed", gd_seed, "Dataset seed")->capture_default_str();
  gd->add_option("--out", gd_out, "Output path (JSONL)")->capture_default_str();

  // train
  std::string tr_config, tr_out;
  std::vector<std::string> tr_set;
  auto* tr = app.add_subcommand("train", "Run staged training (value, then policies) per config");
  tr->add_option("--config", tr_config, "Experiment config file")->required();
  tr->add_option("--out-dir", tr_out, "Override config out_dir");
  tr->add_option("--set", tr_set, "Override config entries, e.g. --set k=4");

  // eval
  std::string ev_dir, ev_env;
  int ev_episodes = 50, ev_max_steps = 0, ev_hold = 1;
  double ev_eps = 0.05;
  std::uint64_t ev_seed = 0;
  std::string ev_policy = "hierarchical";
  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints from a seed directory");
  ev->add_option("--checkpoint", ev_dir, "Seed directory containing *.ckpt")->required();
  ev->add_option("--env", ev_env, "Environment spec (map file or chain:N)")->required();
  ev->add_option("--episodes", ev_episodes, "Episodes")->capture_default_str();
  ev->add_option("--max-steps", ev_max_steps, "Step cap (0 = 4x diameter)")->capture_default_str();
  ev->add_option("--eps", ev_eps, "Epsilon-greedy at evaluation")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Evaluation seed")->capture_default_str();
  ev->add_option("--policy", ev_policy, "flat | hierarchical")->capture_default_str();
  ev->add_option("--subgoal-hold", ev_hold, "Hold subgoals for m steps")->capture_default_str();

  // analyze-theory
  std::vector<double> th_T{16, 32, 64, 100, 256};
  std::vector<double> th_sigma{0.1, 0.15, 0.1, 0.1, 0.05};
  int th_kmin = 1, th_kmax = 0;
  long th_trials = 0;
  std::string th_out = "theory";
  auto* th = app.add_subcommand("analyze-theory",
                                "Closed-form error bounds and optional Monte-Carlo verification");
  th->add_option("--T", th_T, "State-goal distances")->capture_default_str();
  th->add_option("--sigma", th_sigma, "Noise scales (paired with --T)")->capture_default_str();
  th->add_option("--k-min", th_kmin, "Smallest subgoal step")->capture_default_str();
  th->add_option("--k-max", th_kmax, "Largest subgoal step (0 = T)")->capture_default_str();
  th->add_option("--mc-trials", th_trials, "Monte-Carlo trials per point (0 = closed form only)")
      ->capture_default_str();
  th->add_option("--out", th_out, "Output directory")->capture_default_str();

  // noise-study
  std::string ns_env, ns_out = "noise_study";
  double ns_sigma = 0.6;
  int ns_k = 8, ns_goal = -1, ns_seeds = 100;
  std::uint64_t ns_seed = 0;
  auto* ns = app.add_subcommand("noise-study",
                                "Render greedy action fields under proportional value noise");
  ns->add_option("--env", ns_env, "Environment spec")->required();
  ns->add_option("--sigma", ns_sigma, "Noise scale")->capture_default_str();
  ns->add_option("--k", ns_k, "Subgoal distance for the hierarchical field")->capture_default_str();
  ns->add_option("--goal", ns_goal, "Goal cell (-1 = center of the free cells)")->capture_default_str();
  ns->add_option("--seeds", ns_seeds, "Number of noise fields for the wrong-arrow statistics")
      ->capture_default_str();
  ns->add_option("--seed", ns_seed, "Base seed")->capture_default_str();
  ns->add_option("--out", ns_out, "Output directory")->capture_default_str();

  // ablate-k / ablate-repr / action-limited
  std::string ab_config, ab_out;
  std::vector<std::string> ab_set;
  std::vector<int> ab_k{1, 2, 4, 8, 16};
  auto* ab = app.add_subcommand("ablate-k", "Sweep the subgoal step k");
  ab->add_option("--config", ab_config, "Experiment config file")->required();
  ab->add_option("--k-list", ab_k, "Subgoal steps to sweep")->capture_default_str();
  ab->add_option("--out-dir", ab_out, "Override config out_dir");
  ab->add_option("--set", ab_set, "Override config entries");

  std::string ar_config, ar_out;
  std::vector<std::string> ar_set;
  std::vector<std::string> ar_modes{"raw", "phi_g", "phi_gs", "phi_diff"};
  auto* ar = app.add_subcommand("ablate-repr", "Sweep representation parameterizations");
  ar->add_option("--config", ar_config, "Experiment config file")->required();
  ar->add_option("--modes", ar_modes, "Representation modes")->capture_default_str();
  ar->add_option("--out-dir", ar_out, "Override config out_dir");
  ar->add_option("--set", ar_set, "Override config entries");

  std::string al_config, al_out;
  std::vector<std::string> al_set;
  std::vector<double> al_fracs{1.0, 0.25};
  auto* al = app.add_subcommand("action-limited", "Train with partially labeled trajectories");
  al->add_option("--config", al_config, "Experiment config file")->required();
  al->add_option("--fractions", al_fracs, "Labeled fractions")->capture_default_str();
  al->add_option("--out-dir", al_out, "Override config out_dir");
  al->add_option("--set", al_set, "Override config entries");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gd) {
      const GridWorld env = GridWorld::from_spec(gd_env);
      const Dataset data =
          generate_dataset(env, behavior_from_string(gd_behavior), gd_eps, gd_num, gd_len, gd_seed);
      data.save(gd_out, env);
      std::cout << "wrote " << gd_out << " (" << data.size() << " trajectories, "
                << data.total_states() << " states, hash " << data.content_hash() << ")\n";
    } else if (*tr) {
      const ExperimentConfig cfg = load_config(tr_config, tr_out, tr_set);
      const ExperimentResult res = run_experiment(cfg);
      emit_plots(res.records, cfg.out_dir);
      print_result_summary(res);
    } else if (*ev) {
      const GridWorld env = GridWorld::from_spec(ev_env);
      EvalConfig cfg{ev_episodes, ev_max_steps > 0 ? ev_max_steps : 4 * env.diameter(), ev_eps,
                     ev_seed, ev_hold};
      PolicyBundle bundle;
      ValueNet value;
      PolicyNet flat, high, low;
      PolicyMode mode;
      if (ev_policy == "flat") {
        mode = PolicyMode::flat;
        flat = load_policy_net(ev_dir + "/flat.ckpt");
        bundle.flat = &flat;
      } else if (ev_policy == "hierarchical") {
        mode = PolicyMode::hierarchical;
        value = load_value_net(ev_dir + "/value.ckpt");
        high = load_policy_net(ev_dir + "/high.ckpt");
        low = load_policy_net(ev_dir + "/low.ckpt");
        bundle.value = &value;
        bundle.high = &high;
        bundle.low = &low;
      } else {
        throw std::invalid_argument("eval: --policy must be flat or hierarchical");
      }
      Rng rng = Rng::stream(ev_seed, "eval_tasks");
      const auto tasks = sample_eval_tasks(env, ev_episodes, 1, env.diameter(), rng);
      const EvalReport rep = evaluate(mode, env, tasks, cfg, bundle);
      const std::string out = ev_dir + "/eval_report.json";
      std::ofstream f(out, std::ios::binary);
      f << rep.to_json() << "\n";
      std::cout << "success_rate " << rep.success_rate << "  mean_return " << rep.mean_return
                << "  -> " << out << "\n";
    } else if (*th) {
      if (th_T.size() != th_sigma.size())
        throw std::invalid_argument("analyze-theory: --T and --sigma must pair up");
      fs::create_directories(th_out);
      for (std::size_t i = 0; i < th_T.size(); ++i) {
        const int T = static_cast<int>(th_T[i]);
        const double sigma = th_sigma[i];
        const int kmax = th_kmax > 0 ? std::min(th_kmax, T) : T;
        char name[64];
        std::snprintf(name, sizeof(name), "T%d_sigma%g", T, sigma);
        const std::string base = th_out + "/" + name;
        std::ofstream tab(base + ".tsv", std::ios::binary);
        tab << "k\thigh\tlow\tbound\tflat\n";
        PlotSeries bound{"hierarchical bound", {}, {}};
        PlotSeries flat{"flat error", {}, {}};
        for (int k = th_kmin; k <= kmax; ++k) {
          const TheoryBound b = hier_error_bound(T, sigma, k);
          tab << k << '\t' << format_double(b.high) << '\t' << format_double(b.low) << '\t'
              << format_double(b.bound) << '\t' << format_double(b.flat) << '\n';
          bound.x.push_back(k);
          bound.y.push_back(b.bound);
          flat.x.push_back(k);
          flat.y.push_back(b.flat);
        }
        write_line_plot(base, std::string("error bound, ") + name, "subgoal step k",
                        "error probability", {bound, flat}, true);
        const OptimalK ok = optimal_k(T, sigma);
        std::cout << name << ": flat=" << flat_error(T, sigma) << " best k=" << ok.k
                  << " bound=" << ok.bound.bound;
        if (th_trials > 0) {
          const McEstimate mf = monte_carlo_policy_error(T, sigma, McMode::flat, 1, th_trials, 7);
          const McEstimate mh =
              monte_carlo_policy_error(T, sigma, McMode::hierarchical, ok.k, th_trials, 7);
          std::cout << "  MC flat=" << mf.p << "+-" << mf.se << " MC hier=" << mh.p << "+-" << mh.se;
        }
        std::cout << "\n";
      }
    } else if (*ns) {
      const GridWorld env = GridWorld::from_spec(ns_env);
      if (ns_goal < 0) ns_goal = env.free_cells()[env.free_cells().size() / 2];
      fs::create_directories(ns_out);
      const ActionMap map0 = noisy_action_map(env, ns_goal, ns_sigma, ns_k, ns_seed);
      write_action_map_svg(ns_out + "/flat_field.svg", env, map0, false);
      write_action_map_svg(ns_out + "/hier_field.svg", env, map0, true);
      std::ofstream jf(ns_out + "/field.json", std::ios::binary);
      jf << map0.to_json(env) << "\n";
      const int min_dist = std::max(1, env.diameter() / 2);
      double flat_sum = 0, hier_sum = 0;
      for (int i = 0; i < ns_seeds; ++i) {
        const ActionMap m = noisy_action_map(env, ns_goal, ns_sigma, ns_k, ns_seed + 1000 + i);
        flat_sum += m.wrong_fraction_flat(env, min_dist);
        hier_sum += m.wrong_fraction_hier(env, min_dist);
      }
      std::cout << "distant wrong-arrow fraction over " << ns_seeds << " fields (d >= " << min_dist
                << "): flat=" << flat_sum / ns_seeds << " hier=" << hier_sum / ns_seeds << "\n";
    } else if (*ab) {
      const ExperimentConfig cfg = load_config(ab_config, ab_out, ab_set);
      const auto results = ablate_k(cfg, ab_k);
      for (const auto& r : results) {
        std::cout << "k=" << r.config.k << " mean success hier=" << r.mean_success_hier()
                  << " flat=" << r.mean_success_flat() << "\n";
      }
    } else if (*ar) {
      const ExperimentConfig cfg = load_config(ar_config, ar_out, ar_set);
      std::vector<ReprMode> modes;
      for (const auto& m : ar_modes) modes.push_back(repr_mode_from_string(m));
      const auto results = ablate_repr(cfg, modes);
      for (const auto& r : results) {
        std::cout << to_string(r.config.repr) << " mean success hier=" << r.mean_success_hier()
                  << "\n";
      }
    } else if (*al) {
      const ExperimentConfig cfg = load_config(al_config, al_out, al_set);
      const auto results = action_limited(cfg, al_fracs);
      for (const auto& r : results) {
        std::cout << "labeled_fraction=" << r.config.labeled_fraction
                  << " mean success hier=" << r.mean_success_hier()
                  << " flat=" << r.mean_success_flat() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
