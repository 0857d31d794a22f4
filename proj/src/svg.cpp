#include "gcrl/svg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gcrl {

using nlohmann::json;

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::ofstream open_file(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("svg: cannot open " + path);
  return f;
}

}  // namespace

void write_line_plot(const std::string& path_base, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, bool log_x) {
  if (series.empty()) throw std::invalid_argument("write_line_plot: empty series");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size())
      throw std::invalid_argument("write_line_plot: bad series " + s.label);
  }

  const double W = 640, H = 420, L = 70, R = 20, Tm = 40, Bm = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto tx = [&](double x) { return log_x ? std::log(x) : x; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - Bm - (y - ymin) / (ymax - ymin) * (H - Tm - Bm); };

  auto f = open_file(path_base + ".svg");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
  // axes
  f << "<line x1=\"" << num(L) << "\" y1=\"" << num(H - Bm) << "\" x2=\"" << num(W - R) << "\" y2=\""
    << num(H - Bm) << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << num(L) << "\" y1=\"" << num(Tm) << "\" x2=\"" << num(L) << "\" y2=\""
    << num(H - Bm) << "\" stroke=\"black\"/>\n";
  f << "<text x=\"" << num(W / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\" font-size=\"12\">"
    << x_label << "</text>\n";
  f << "<text x=\"16\" y=\"" << num(H / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << num(H / 2) << ")\">" << y_label << "</text>\n";
  // y ticks
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    f << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(y) + 4)
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(y) << "</text>\n";
    f << "<line x1=\"" << num(L - 3) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(L) << "\" y2=\""
      << num(py(y)) << "\" stroke=\"black\"/>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 8];
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) f << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
    f << "\"/>\n";
    f << "<text x=\"" << num(W - R - 4) << "\" y=\"" << num(Tm + 16 + 14 * static_cast<double>(si))
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
  f << "</svg>\n";

  json data;
  data["title"] = title;
  data["x_label"] = x_label;
  data["y_label"] = y_label;
  json arr = json::array();
  for (const auto& s : series) arr.push_back({{"label", s.label}, {"x", s.x}, {"y", s.y}});
  data["series"] = arr;
  open_file(path_base + ".json") << data.dump(2) << "\n";
}

void write_bar_plot(const std::string& path_base, const std::string& title,
                    const std::vector<std::string>& group_labels,
                    const std::vector<std::string>& series_labels,
                    const std::vector<std::vector<double>>& values) {
  if (values.empty() || values.size() != series_labels.size())
    throw std::invalid_argument("write_bar_plot: bad series");
  for (const auto& v : values) {
    if (v.size() != group_labels.size()) throw std::invalid_argument("write_bar_plot: ragged values");
  }
  const double W = 640, H = 420, L = 70, R = 20, Tm = 40, Bm = 60;
  double ymax = 0.0;
  for (const auto& v : values)
    for (double y : v) ymax = std::max(ymax, y);
  if (ymax <= 0) ymax = 1.0;
  ymax *= 1.1;

  const std::size_t G = group_labels.size(), S = series_labels.size();
  const double group_w = (W - L - R) / static_cast<double>(G);
  const double bar_w = group_w * 0.8 / static_cast<double>(S);
  auto py = [&](double y) { return H - Bm - y / ymax * (H - Tm - Bm); };

  auto f = open_file(path_base + ".svg");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
  f << "<line x1=\"" << num(L) << "\" y1=\"" << num(H - Bm) << "\" x2=\"" << num(W - R) << "\" y2=\""
    << num(H - Bm) << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << num(L) << "\" y1=\"" << num(Tm) << "\" x2=\"" << num(L) << "\" y2=\""
    << num(H - Bm) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymax * i / 4.0;
    f << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(y) + 4)
      << "\" text-anchor=\"end\" font-size=\"10\">" << num(y) << "</text>\n";
  }
  for (std::size_t g = 0; g < G; ++g) {
    const double gx = L + group_w * (static_cast<double>(g) + 0.1);
    for (std::size_t s = 0; s < S; ++s) {
      const double v = values[s][g];
      const double x = gx + bar_w * static_cast<double>(s);
      f << "<rect x=\"" << num(x) << "\" y=\"" << num(py(v)) << "\" width=\"" << num(bar_w * 0.92)
        << "\" height=\"" << num(py(0) - py(v)) << "\" fill=\"" << kColors[s % 8] << "\"/>\n";
    }
    f << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << num(H - Bm + 16)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << group_labels[g] << "</text>\n";
  }
  for (std::size_t s = 0; s < S; ++s) {
    f << "<text x=\"" << num(W - R - 4) << "\" y=\"" << num(Tm + 16 + 14 * static_cast<double>(s))
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << kColors[s % 8] << "\">" << series_labels[s]
      << "</text>\n";
  }
  f << "</svg>\n";

  json data;
  data["title"] = title;
  data["groups"] = group_labels;
  data["series"] = series_labels;
  data["values"] = values;
  open_file(path_base + ".json") << data.dump(2) << "\n";
}

void write_action_map_svg(const std::string& path, const GridWorld& env, const ActionMap& map,
                          bool hierarchical) {
  const double cell = 24.0;
  const double W = env.width() * cell, H = env.height() * cell;
  auto f = open_file(path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const auto& actions = hierarchical ? map.hier_action : map.flat_action;
  const auto& optimal = hierarchical ? map.optimal_hier : map.optimal_flat;
  for (int c = 0; c < env.n_cells(); ++c) {
    const double x = env.x_of(c) * cell;
    const double y = (env.height() - 1 - env.y_of(c)) * cell;  // svg y grows downward
    if (env.is_wall(c)) {
      f << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell)
        << "\" height=\"" << num(cell) << "\" fill=\"#444444\"/>\n";
      continue;
    }
    f << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell)
      << "\" height=\"" << num(cell) << "\" fill=\"none\" stroke=\"#dddddd\"/>\n";
    if (c == map.goal) {
      f << "<circle cx=\"" << num(x + cell / 2) << "\" cy=\"" << num(y + cell / 2) << "\" r=\""
        << num(cell / 4) << "\" fill=\"#d62728\"/>\n";
      continue;
    }
    const int a = actions[static_cast<std::size_t>(c)];
    if (a < 0) continue;
    double dx = 0, dy = 0;
    if (env.kind() == GridWorld::Kind::chain) {
      dx = a == GridWorld::chain_left ? -1 : 1;
    } else {
      switch (a) {
        case GridWorld::up: dy = -1; break;    // svg-up
        case GridWorld::down: dy = 1; break;
        case GridWorld::left: dx = -1; break;
        case GridWorld::right: dx = 1; break;
      }
    }
    const double cx = x + cell / 2, cy = y + cell / 2, r = cell * 0.32;
    const char* color = optimal[static_cast<std::size_t>(c)] ? "#2c2c2c" : "#d62728";
    f << "<line x1=\"" << num(cx - dx * r) << "\" y1=\"" << num(cy - dy * r) << "\" x2=\""
      << num(cx + dx * r) << "\" y2=\"" << num(cy + dy * r) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    f << "<circle cx=\"" << num(cx + dx * r) << "\" cy=\"" << num(cy + dy * r) << "\" r=\"2\" fill=\""
      << color << "\"/>\n";
  }
  f << "</svg>\n";
}

}  // namespace gcrl
