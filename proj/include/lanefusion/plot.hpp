#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lanefusion {

/// Trailing moving average: out[i] = mean(values[max(0, i-window+1) .. i]).
std::vector<double> moving_average(const std::vector<double>& values, int window);

struct PlotOptions {
  std::string title;
  std::string x_label = "episode";
  std::string y_label = "value";
  int smoothing_window = 1;
  /// Optional x coordinates shared by all series; defaults to 0..n-1.
  std::vector<double> x_values;
  int width = 800;
  int height = 480;
};

/// Self-contained SVG line chart, one polyline and legend entry per series.
/// Throws std::invalid_argument when there is nothing to draw.
std::string render_plot_svg(const std::vector<std::vector<double>>& series,
                            const std::vector<std::string>& labels, const PlotOptions& options);
void render_plot(const std::vector<std::vector<double>>& series,
                 const std::vector<std::string>& labels, const std::filesystem::path& output,
                 const PlotOptions& options);

}  // namespace lanefusion
