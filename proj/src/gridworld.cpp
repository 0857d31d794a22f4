#include "gcrl/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcrl {

GridWorld::GridWorld(Kind kind, int width, int height, std::vector<std::uint8_t> wall)
    : kind_(kind), width_(width), height_(height), wall_(std::move(wall)) {
  if (width_ < 1 || height_ < 1) throw std::invalid_argument("GridWorld: empty grid");
  if (kind_ == Kind::chain) {
    if (height_ != 1) throw std::invalid_argument("GridWorld: chain must have height 1");
    if (width_ < 3) throw std::invalid_argument("GridWorld: chain length must be >= 3");
  }
  for (int c = 0; c < n_cells(); ++c) {
    if (!is_wall(c)) free_cells_.push_back(c);
  }
  if (free_cells_.empty()) throw std::invalid_argument("GridWorld: no free cells");
  compute_distances();
}

GridWorld GridWorld::chain(int length) {
  return GridWorld(Kind::chain, length, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(length), 0));
}

GridWorld GridWorld::open_grid(int width, int height) {
  return GridWorld(Kind::grid, width, height,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0));
}

GridWorld GridWorld::from_map(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw std::invalid_argument("GridWorld::from_map: empty map");
  const int height = static_cast<int>(rows.size());
  const int width = static_cast<int>(rows[0].size());
  std::vector<std::uint8_t> wall(static_cast<std::size_t>(width) * height, 0);
  for (int r = 0; r < height; ++r) {
    if (static_cast<int>(rows[r].size()) != width)
      throw std::invalid_argument("GridWorld::from_map: ragged rows");
    const int y = height - 1 - r;  // first line is the top row
    for (int x = 0; x < width; ++x) {
      const char c = rows[r][static_cast<std::size_t>(x)];
      if (c == '#') {
        wall[static_cast<std::size_t>(y * width + x)] = 1;
      } else if (c != '.') {
        throw std::invalid_argument(std::string("GridWorld::from_map: bad character '") + c + "'");
      }
    }
  }
  return GridWorld(Kind::grid, width, height, std::move(wall));
}

GridWorld GridWorld::from_spec(const std::string& spec) {
  if (spec.rfind("chain:", 0) == 0) {
    const int n = std::stoi(spec.substr(6));
    return chain(n);
  }
  if (spec.find('\n') != std::string::npos) return from_map(spec);
  std::ifstream f(spec);
  if (!f) throw std::runtime_error("GridWorld::from_spec: cannot open map file: " + spec);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_map(ss.str());
}

void GridWorld::check_cell(int cell, const char* what) const {
  if (cell < 0 || cell >= n_cells())
    throw std::invalid_argument(std::string("GridWorld: ") + what + " out of range");
  if (is_wall(cell)) throw std::invalid_argument(std::string("GridWorld: ") + what + " is a wall cell");
}

int GridWorld::step_cell(int cell, int action) const {
  check_cell(cell, "state");
  int x = x_of(cell);
  int y = y_of(cell);
  if (kind_ == Kind::chain) {
    switch (action) {
      case chain_left: x -= 1; break;
      case chain_right: x += 1; break;
      default: throw std::invalid_argument("GridWorld::step_cell: unknown chain action");
    }
  } else {
    switch (action) {
      case up: y += 1; break;
      case down: y -= 1; break;
      case left: x -= 1; break;
      case right: x += 1; break;
      default: throw std::invalid_argument("GridWorld::step_cell: unknown grid action");
    }
  }
  if (x < 0 || x >= width_ || y < 0 || y >= height_) return cell;
  const int next = cell_of(x, y);
  return is_wall(next) ? cell : next;
}

GridWorld::State GridWorld::step(State s, int action) const {
  check_cell(s.goal, "goal");
  if (s.cell == s.goal) return s;  // absorbing
  return State{step_cell(s.cell, action), s.goal};
}

void GridWorld::compute_distances() {
  const int n = n_cells();
  dist_ = Eigen::MatrixXi::Constant(n, n, -1);
  std::vector<int> frontier;
  for (int src : free_cells_) {
    auto col = dist_.col(src);
    col(src) = 0;
    std::deque<int> queue{src};
    while (!queue.empty()) {
      const int c = queue.front();
      queue.pop_front();
      for (int a = 0; a < n_actions(); ++a) {
        const int nx = step_cell(c, a);
        if (nx != c && col(nx) < 0) {
          col(nx) = col(c) + 1;
          queue.push_back(nx);
        }
      }
    }
    for (int c : free_cells_) {
      if (col(c) < 0)
        throw std::invalid_argument("GridWorld: free cells are not mutually reachable");
      diameter_ = std::max(diameter_, col(c));
    }
  }
}

int GridWorld::bfs_distance(int s, int g) const {
  check_cell(s, "state");
  check_cell(g, "goal");
  return dist_(s, g);
}

double GridWorld::optimal_value(int s, int g, double gamma) const {
  if (gamma <= 0.0 || gamma > 1.0)
    throw std::invalid_argument("GridWorld::optimal_value: gamma must be in (0, 1]");
  const int d = bfs_distance(s, g);
  if (gamma == 1.0) return -static_cast<double>(d);
  return -(1.0 - std::pow(gamma, d)) / (1.0 - gamma);
}

std::vector<int> GridWorld::optimal_action_set(int s, int g) const {
  const int d = bfs_distance(s, g);
  std::vector<int> actions;
  if (d == 0) return actions;  // s == g: empty by definition
  for (int a = 0; a < n_actions(); ++a) {
    const int nx = step_cell(s, a);
    if (dist_(nx, g) == d - 1) actions.push_back(a);
  }
  return actions;
}

std::vector<int> GridWorld::neighbor_cells(int cell) const {
  std::vector<int> out;
  for (int a = 0; a < n_actions(); ++a) out.push_back(step_cell(cell, a));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string GridWorld::to_spec_string() const {
  if (kind_ == Kind::chain) return "chain:" + std::to_string(width_);
  std::string out;
  for (int y = height_ - 1; y >= 0; --y) {
    for (int x = 0; x < width_; ++x) out += is_wall(cell_of(x, y)) ? '#' : '.';
    out += '\n';
  }
  return out;
}

std::string GridWorld::content_hash() const { return git_blob_sha1(to_spec_string()); }

}  // namespace gcrl
