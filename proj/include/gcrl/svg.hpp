#pragma once

#include "gcrl/gridworld.hpp"
#include "gcrl/theory.hpp"

#include <string>
#include <vector>

namespace gcrl {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Deterministic minimal SVG line plot. Writes <path>.svg and a <path>.json
// twin holding every plotted number.
void write_line_plot(const std::string& path_base, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, bool log_x = false);

// Grouped bar chart (one group per label, one bar per series).
void write_bar_plot(const std::string& path_base, const std::string& title,
                    const std::vector<std::string>& group_labels,
                    const std::vector<std::string>& series_labels,
                    const std::vector<std::vector<double>>& values);

// Render a noisy-value action field: arrows per cell, red when suboptimal.
void write_action_map_svg(const std::string& path, const GridWorld& env, const ActionMap& map,
                          bool hierarchical);

}  // namespace gcrl
