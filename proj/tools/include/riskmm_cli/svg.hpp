#pragma once

#include <string>
#include <vector>

namespace riskmm::cli {

/// One aggregated cell of a sweep: median marker with whiskers in both axes.
struct SweepPoint {
  double x_median = 0, x_lo = 0, x_hi = 0;  // min-distance axis
  double y_median = 0, y_lo = 0, y_hi = 0;  // tracking-error axis
  std::string color = "#000000";
  std::string marker = "circle";  // circle | square
  std::string label;
};

/// Self-contained scatter plot with whiskers; no plotting dependency.
std::string render_sweep_svg(const std::vector<SweepPoint>& points, const std::string& x_label,
                             const std::string& y_label);

}  // namespace riskmm::cli
