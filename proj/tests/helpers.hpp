#pragma once

#include "gcrl/gridworld.hpp"
#include "gcrl/nn.hpp"

#include <cmath>
#include <vector>

namespace gcrl::testing {

// Supervised fit of a ValueNet to the exact BFS oracle, for tests that need
// an oracle-valued value function behind the real interface.
inline ValueNet oracle_fit_value(const GridWorld& env, double gamma, int width, int steps,
                                 std::uint64_t seed, double* max_err_out = nullptr) {
  ValueNetSpec spec;
  spec.mode = ReprMode::phi_gs;
  spec.n_cells = env.n_cells();
  spec.dz = 8;
  spec.phi_hidden = {width, width};
  spec.trunk_hidden = {width, width};
  Rng rng(seed);
  ValueNet net(spec, rng);

  std::vector<int> ss, gs;
  std::vector<double> target;
  for (int s : env.free_cells()) {
    for (int g : env.free_cells()) {
      ss.push_back(s);
      gs.push_back(g);
      target.push_back(env.optimal_value(s, g, gamma));
    }
  }
  const int n = static_cast<int>(ss.size());
  const Vector t = Eigen::Map<const Vector>(target.data(), n);

  AdamState adam = make_adam_state(net.params());
  for (int it = 0; it < steps; ++it) {
    ValueNetCache cache;
    const Vector v = net.values(ss, gs, &cache);
    net.zero_grads();
    net.backward(cache, (v - t) / n);
    adam_step(net.params(), adam, AdamConfig{3e-3});
  }
  if (max_err_out) {
    const Vector v = net.values(ss, gs);
    *max_err_out = (v - t).cwiseAbs().maxCoeff();
  }
  return net;
}

}  // namespace gcrl::testing
