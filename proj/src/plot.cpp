#include "lanefusion/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lanefusion {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    const std::size_t n = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

std::string render_plot_svg(const std::vector<std::vector<double>>& series,
                            const std::vector<std::string>& labels, const PlotOptions& options) {
  if (series.empty()) throw std::invalid_argument("render_plot: no series");
  if (labels.size() != series.size())
    throw std::invalid_argument("render_plot: one label per series required");
  std::vector<std::vector<double>> smoothed;
  std::size_t longest = 0;
  for (const auto& s : series) {
    if (s.empty()) throw std::invalid_argument("render_plot: empty series");
    smoothed.push_back(moving_average(s, options.smoothing_window));
    longest = std::max(longest, s.size());
  }
  if (!options.x_values.empty() && options.x_values.size() < longest)
    throw std::invalid_argument("render_plot: x_values shorter than a series");
  auto x_at = [&](std::size_t i) {
    return options.x_values.empty() ? static_cast<double>(i) : options.x_values[i];
  };

  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -y_lo;
  for (const auto& s : smoothed)
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  if (!std::isfinite(y_lo)) throw std::invalid_argument("render_plot: no finite values");
  // Pad the range; a flat series still gets a visible band.
  const double span = y_hi - y_lo;
  const double pad = span > 0.0 ? 0.05 * span : std::max(1.0, std::abs(y_hi) * 0.1);
  y_lo -= pad;
  y_hi += pad;
  double x_lo = x_at(0);
  double x_hi = x_at(longest - 1);
  if (x_hi == x_lo) x_hi = x_lo + 1.0;

  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = options.width - left - right;
  const double ph = options.height - top - bottom;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\""
      << options.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty())
    svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << escape(options.title) << "</text>\n";

  // Axes with five ticks each.
  svg << "<g stroke=\"black\" fill=\"none\"><line x1=\"" << num(left) << "\" y1=\"" << num(top + ph)
      << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(top + ph) << "\"/><line x1=\""
      << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + ph) << "\"/></g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x_lo + (x_hi - x_lo) * k / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * k / 4.0;
    svg << "<text class=\"xtick\" x=\"" << num(px(fx)) << "\" y=\"" << num(top + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
    svg << "<text class=\"ytick\" x=\"" << num(left - 6) << "\" y=\"" << num(py(fy) + 4)
        << "\" text-anchor=\"end\">" << tick_label(fy) << "</text>\n";
    svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << num(left + pw)
        << "\" y2=\"" << num(py(fy)) << "\" stroke=\"#dddddd\"/>\n";
  }
  svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << options.height - 10
      << "\" text-anchor=\"middle\">" << escape(options.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num(top + ph / 2) << ")\">" << escape(options.y_label) << "</text>\n";

  for (std::size_t s = 0; s < smoothed.size(); ++s) {
    const char* color = kPalette[s % kPalette.size()];
    svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < smoothed[s].size(); ++i) {
      if (i) svg << ' ';
      svg << num(px(x_at(i))) << ',' << num(py(smoothed[s][i]));
    }
    svg << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    svg << "<g class=\"legend\"><line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly)
        << "\" x2=\"" << num(left + pw + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/><text x=\"" << num(left + pw + 38) << "\" y=\"" << num(ly + 4)
        << "\">" << escape(labels[s]) << "</text></g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_plot(const std::vector<std::vector<double>>& series,
                 const std::vector<std::string>& labels, const std::filesystem::path& output,
                 const PlotOptions& options) {
  const std::string svg = render_plot_svg(series, labels, options);
  std::ofstream out(output, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write plot: " + output.string());
  out << svg;
}

}  // namespace lanefusion
