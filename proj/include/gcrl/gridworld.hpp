#pragma once

#include "gcrl/common.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace gcrl {

// Deterministic goal-reaching environments: a 1-D chain (actions left/right)
// and a 2-D four-connected maze (up/down/left/right). Invalid moves clamp in
// place, goals are absorbing, and exact optimal values / optimal action sets
// come from all-pairs BFS computed at construction. Instances are immutable
// after construction and safe to share across threads.
class GridWorld {
 public:
  enum class Kind { chain, grid };

  // Grid actions. Coordinates use y=0 at the bottom, so "up" increases y.
  enum GridAction { up = 0, down = 1, left = 2, right = 3 };
  // Chain actions.
  enum ChainAction { chain_left = 0, chain_right = 1 };

  static GridWorld chain(int length);
  static GridWorld open_grid(int width, int height);
  // Map format: one row per line, '#' wall, '.' free. The first line is the
  // top row (y = height-1).
  static GridWorld from_map(const std::string& text);
  // "chain:N" or inline map text (anything containing a newline) or a file path.
  static GridWorld from_spec(const std::string& spec);

  Kind kind() const { return kind_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int n_cells() const { return width_ * height_; }
  int n_actions() const { return kind_ == Kind::chain ? 2 : 4; }
  bool is_wall(int cell) const { return wall_[static_cast<std::size_t>(cell)] != 0; }
  const std::vector<int>& free_cells() const { return free_cells_; }

  int cell_of(int x, int y) const { return y * width_ + x; }
  int x_of(int cell) const { return cell % width_; }
  int y_of(int cell) const { return cell / width_; }

  // Deterministic transition on raw cells; wall/boundary moves stay in place.
  int step_cell(int cell, int action) const;

  struct State {
    int cell;
    int goal;
  };

  // Absorbing-goal transition: once state.cell == state.goal the state no
  // longer changes.
  State step(State s, int action) const;

  // Shortest-path distance between free cells.
  int bfs_distance(int s, int g) const;
  int diameter() const { return diameter_; }

  // Optimal goal-conditioned value under r(s,g) = -1[s != g]:
  // -d at gamma=1, else -(1 - gamma^d)/(1 - gamma).
  double optimal_value(int s, int g, double gamma) const;

  // Actions whose successor strictly decreases BFS distance to g.
  // Empty exactly when s == g.
  std::vector<int> optimal_action_set(int s, int g) const;

  // Successor cells reachable in one step (deduplicated, sorted).
  std::vector<int> neighbor_cells(int cell) const;

  // Canonical serialization ("chain:N" or the map text) and its git blob hash.
  std::string to_spec_string() const;
  std::string content_hash() const;

 private:
  GridWorld(Kind kind, int width, int height, std::vector<std::uint8_t> wall);
  void check_cell(int cell, const char* what) const;
  void compute_distances();

  Kind kind_;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> wall_;
  std::vector<int> free_cells_;
  Eigen::MatrixXi dist_;  // n_cells x n_cells, -1 for wall pairs
  int diameter_ = 0;
};

}  // namespace gcrl
