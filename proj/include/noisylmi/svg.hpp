#pragma once

// Small deterministic SVG writers: a grid heatmap for sweep ratios and a
// polyline plot for closed-loop trajectories. Text output only, no external
// renderer involved.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace noisylmi::cli {

namespace detail {

inline std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

/// Three-stop colormap from dark blue through teal to yellow.
inline std::string ratio_color(double ratio) {
  ratio = std::clamp(ratio, 0.0, 1.0);
  const double stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  double rgb[3];
  if (ratio < 0.5) {
    const double f = ratio / 0.5;
    for (int c = 0; c < 3; ++c) rgb[c] = stops[0][c] + f * (stops[1][c] - stops[0][c]);
  } else {
    const double f = (ratio - 0.5) / 0.5;
    for (int c = 0; c < 3; ++c) rgb[c] = stops[1][c] + f * (stops[2][c] - stops[1][c]);
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(rgb[0] + 0.5),
                static_cast<int>(rgb[1] + 0.5), static_cast<int>(rgb[2] + 0.5));
  return buf;
}

}  // namespace detail

/// Heatmap of ratios over a (horizon, log10 bound) grid. `ratios` is indexed
/// [theta_index][T_index], values in [0, 1].
inline std::string render_heatmap(const std::string& title, const std::vector<Eigen::Index>& t_grid,
                                  const std::vector<double>& theta_grid,
                                  const std::vector<std::vector<double>>& ratios) {
  const int cell = 44;
  const int left = 90, top = 50, right = 120, bottom = 60;
  const int cols = static_cast<int>(t_grid.size());
  const int rows = static_cast<int>(theta_grid.size());
  const int width = left + cols * cell + right;
  const int height = top + rows * cell + bottom;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";

  // Rows are drawn with the largest bound at the top.
  for (int r = 0; r < rows; ++r) {
    const int row_from_top = rows - 1 - r;
    for (int c = 0; c < cols; ++c) {
      const double ratio = ratios[r][c];
      const int x = left + c * cell;
      const int y = top + row_from_top * cell;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
         << "\" fill=\"" << detail::ratio_color(ratio) << "\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
         << "\" text-anchor=\"middle\" fill=\"" << (ratio > 0.6 ? "#1a1a1a" : "#eeeeee")
         << "\" font-size=\"10\">" << detail::fmt3(ratio).substr(0, 4) << "</text>\n";
    }
    const int y = top + row_from_top * cell + cell / 2 + 4;
    os << "<text x=\"" << left - 8 << "\" y=\"" << y << "\" text-anchor=\"end\">"
       << detail::fmt1(std::log10(theta_grid[r])) << "</text>\n";
  }
  for (int c = 0; c < cols; ++c) {
    os << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top + rows * cell + 18
       << "\" text-anchor=\"middle\">" << t_grid[c] << "</text>\n";
  }
  os << "<text x=\"" << left + cols * cell / 2 << "\" y=\"" << top + rows * cell + 40
     << "\" text-anchor=\"middle\">T (data points)</text>\n";
  os << "<text x=\"20\" y=\"" << top + rows * cell / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << top + rows * cell / 2
     << ")\">log10(theta)</text>\n";

  // Color bar.
  const int bar_x = left + cols * cell + 30;
  const int bar_h = rows * cell;
  for (int i = 0; i < bar_h; ++i) {
    const double ratio = 1.0 - static_cast<double>(i) / std::max(bar_h - 1, 1);
    os << "<rect x=\"" << bar_x << "\" y=\"" << top + i << "\" width=\"18\" height=\"1\" fill=\""
       << detail::ratio_color(ratio) << "\"/>\n";
  }
  os << "<text x=\"" << bar_x + 24 << "\" y=\"" << top + 10 << "\">1.0</text>\n";
  os << "<text x=\"" << bar_x + 24 << "\" y=\"" << top + bar_h << "\">0.0</text>\n";
  os << "</svg>\n";
  return os.str();
}

/// Polyline plot of state trajectories: one line per state component.
inline std::string render_trajectory_plot(const std::string& title, const Eigen::MatrixXd& states) {
  const int width = 640, height = 360;
  const int left = 60, top = 40, right = 20, bottom = 40;
  const int plot_w = width - left - right;
  const int plot_h = height - top - bottom;
  const Eigen::Index steps = states.cols();
  double lo = states.minCoeff(), hi = states.maxCoeff();
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"22\" font-size=\"15\">" << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
     << plot_h << "\" fill=\"none\" stroke=\"#888888\"/>\n";
  // Zero axis when visible.
  if (lo < 0.0 && hi > 0.0) {
    const int zero_y = top + static_cast<int>((hi / (hi - lo)) * plot_h);
    os << "<line x1=\"" << left << "\" y1=\"" << zero_y << "\" x2=\"" << left + plot_w << "\" y2=\""
       << zero_y << "\" stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>\n";
  }
  const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                           "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    os << "<polyline fill=\"none\" stroke=\"" << palette[i % 8] << "\" stroke-width=\"1.5\" points=\"";
    for (Eigen::Index k = 0; k < steps; ++k) {
      const double x = left + (static_cast<double>(k) / std::max<Eigen::Index>(steps - 1, 1)) * plot_w;
      const double y = top + ((hi - states(i, k)) / (hi - lo)) * plot_h;
      os << detail::fmt1(x) << "," << detail::fmt1(y) << " ";
    }
    os << "\"/>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\">k</text>\n";
  os << "<text x=\"14\" y=\"" << top + 4 << "\">" << detail::fmt1(hi) << "</text>\n";
  os << "<text x=\"14\" y=\"" << top + plot_h << "\">" << detail::fmt1(lo) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace noisylmi::cli
