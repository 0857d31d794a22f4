#include <doctest.h>

#include "gcrl/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

using namespace gcrl;

namespace {

// Brute-force BFS, independent of the cached distance table.
int bfs_oracle(const GridWorld& env, int s, int g) {
  std::vector<int> dist(static_cast<std::size_t>(env.n_cells()), -1);
  std::deque<int> q{s};
  dist[static_cast<std::size_t>(s)] = 0;
  while (!q.empty()) {
    const int c = q.front();
    q.pop_front();
    if (c == g) return dist[static_cast<std::size_t>(c)];
    for (int a = 0; a < env.n_actions(); ++a) {
      const int nx = env.step_cell(c, a);
      if (dist[static_cast<std::size_t>(nx)] < 0) {
        dist[static_cast<std::size_t>(nx)] = dist[static_cast<std::size_t>(c)] + 1;
        q.push_back(nx);
      }
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("chain step moves and clamps") {
  const GridWorld env = GridWorld::chain(10);
  CHECK(env.step_cell(3, GridWorld::chain_right) == 4);
  CHECK(env.step_cell(0, GridWorld::chain_left) == 0);
  CHECK(env.step_cell(9, GridWorld::chain_right) == 9);
  CHECK_THROWS_AS(env.step_cell(3, 5), std::invalid_argument);
}

TEST_CASE("grid wall clamp") {
  // 4x3 grid with a wall at (2,1); map rows are top-down.
  const GridWorld env = GridWorld::from_map("....\n"
                                            "..#.\n"
                                            "....\n");
  const int s = env.cell_of(1, 1);
  CHECK(env.step_cell(s, GridWorld::right) == s);
  CHECK(env.step_cell(s, GridWorld::left) == env.cell_of(0, 1));
  CHECK(env.step_cell(s, GridWorld::up) == env.cell_of(1, 2));
  CHECK(env.step_cell(s, GridWorld::down) == env.cell_of(1, 0));
}

TEST_CASE("goal states are absorbing") {
  const GridWorld env = GridWorld::chain(5);
  GridWorld::State st{2, 2};
  const auto nx = env.step(st, GridWorld::chain_right);
  CHECK(nx.cell == 2);
  const auto moved = env.step(GridWorld::State{1, 3}, GridWorld::chain_right);
  CHECK(moved.cell == 2);
}

TEST_CASE("optimal value closed forms") {
  const GridWorld chain = GridWorld::chain(10);
  CHECK(chain.optimal_value(0, 5, 1.0) == -5.0);
  CHECK(chain.optimal_value(7, 7, 1.0) == 0.0);
  const GridWorld grid = GridWorld::open_grid(5, 5);
  CHECK(grid.optimal_value(grid.cell_of(0, 0), grid.cell_of(2, 3), 0.9) ==
        doctest::Approx(-(1.0 - std::pow(0.9, 5)) / 0.1).epsilon(1e-12));
  CHECK(grid.optimal_value(grid.cell_of(1, 1), grid.cell_of(1, 1), 0.77) == 0.0);
}

TEST_CASE("chain optimal value equals -|s-g| for all pairs at gamma=1") {
  const GridWorld chain = GridWorld::chain(17);
  for (int s = 0; s < 17; ++s) {
    for (int g = 0; g < 17; ++g) {
      CHECK(chain.optimal_value(s, g, 1.0) == -std::abs(s - g));
    }
  }
}

TEST_CASE("optimal action sets") {
  const GridWorld chain = GridWorld::chain(10);
  CHECK(chain.optimal_action_set(2, 7) == std::vector<int>{GridWorld::chain_right});
  const GridWorld grid = GridWorld::open_grid(5, 5);
  const auto set = grid.optimal_action_set(grid.cell_of(0, 0), grid.cell_of(2, 2));
  CHECK(set.size() == 2);
  CHECK(std::find(set.begin(), set.end(), GridWorld::up) != set.end());
  CHECK(std::find(set.begin(), set.end(), GridWorld::right) != set.end());
  CHECK(grid.optimal_action_set(3, 3).empty());
}

TEST_CASE("corridor maze has singleton optimal actions") {
  const GridWorld maze = GridWorld::from_map("#####\n"
                                             "#...#\n"
                                             "###.#\n"
                                             "#...#\n"
                                             "#####\n");
  for (int s : maze.free_cells()) {
    for (int g : maze.free_cells()) {
      if (s == g) continue;
      const auto set = maze.optimal_action_set(s, g);
      // Verify against the brute-force oracle: actions that reduce distance.
      std::vector<int> oracle;
      for (int a = 0; a < maze.n_actions(); ++a) {
        const int nx = maze.step_cell(s, a);
        if (bfs_oracle(maze, nx, g) == bfs_oracle(maze, s, g) - 1) oracle.push_back(a);
      }
      CHECK(set == oracle);
    }
  }
}

TEST_CASE("optimal actions strictly improve the value") {
  const GridWorld grid = GridWorld::from_map("....\n"
                                             ".#..\n"
                                             "....\n");
  for (int s : grid.free_cells()) {
    for (int g : grid.free_cells()) {
      if (s == g) continue;
      for (int a : grid.optimal_action_set(s, g)) {
        CHECK(grid.optimal_value(grid.step_cell(s, a), g, 0.95) > grid.optimal_value(s, g, 0.95));
      }
    }
  }
}

TEST_CASE("oracle satisfies the Bellman equation exactly") {
  const GridWorld grid = GridWorld::from_map(".....\n"
                                             ".##..\n"
                                             "...#.\n"
                                             ".....\n");
  const double gamma = 0.9;
  for (int s : grid.free_cells()) {
    for (int g : grid.free_cells()) {
      if (s == g) continue;
      double best = -1e18;
      for (int a = 0; a < grid.n_actions(); ++a) {
        best = std::max(best, -1.0 + gamma * grid.optimal_value(grid.step_cell(s, a), g, gamma));
      }
      CHECK(grid.optimal_value(s, g, gamma) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("bfs distances match the brute-force oracle") {
  const GridWorld maze = GridWorld::from_map("......\n"
                                             ".####.\n"
                                             ".#....\n"
                                             ".#.##.\n"
                                             "......\n");
  for (int s : maze.free_cells()) {
    for (int g : maze.free_cells()) {
      CHECK(maze.bfs_distance(s, g) == bfs_oracle(maze, s, g));
    }
  }
  CHECK(maze.diameter() > 0);
}

TEST_CASE("map parsing and serialization round-trip") {
  const std::string text = "...#\n.#..\n....\n";
  const GridWorld env = GridWorld::from_map(text);
  CHECK(env.to_spec_string() == text);
  CHECK(env.width() == 4);
  CHECK(env.height() == 3);
  CHECK(env.content_hash() == GridWorld::from_map(text).content_hash());
  const GridWorld chain = GridWorld::from_spec("chain:12");
  CHECK(chain.kind() == GridWorld::Kind::chain);
  CHECK(chain.n_cells() == 12);
  CHECK(chain.to_spec_string() == "chain:12");
}

TEST_CASE("construction validates connectivity and contents") {
  CHECK_THROWS_AS(GridWorld::from_map("..#..\n..#..\n"), std::invalid_argument);  // split regions
  CHECK_THROWS_AS(GridWorld::from_map("..x.\n....\n"), std::invalid_argument);
  CHECK_THROWS_AS(GridWorld::from_map("...\n....\n"), std::invalid_argument);  // ragged
  CHECK_THROWS_AS(GridWorld::chain(2), std::invalid_argument);
  CHECK_NOTHROW(GridWorld::chain(3));
}

TEST_CASE("wall cells are rejected as states") {
  const GridWorld env = GridWorld::from_map("..\n#.\n");
  const int wall = env.cell_of(0, 0);
  CHECK(env.is_wall(wall));
  CHECK_THROWS_AS(env.bfs_distance(wall, 1), std::invalid_argument);
  CHECK_THROWS_AS(env.step_cell(wall, 0), std::invalid_argument);
}
