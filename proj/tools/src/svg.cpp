#include "riskmm_cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "riskmm_cli/csv.hpp"

namespace riskmm::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string render_sweep_svg(const std::vector<SweepPoint>& points, const std::string& x_label,
                             const std::string& y_label) {
  const double width = 640, height = 480;
  const double ml = 70, mr = 160, mt = 30, mb = 60;  // margins, legend on the right

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const SweepPoint& p : points) {
    x_min = std::min({x_min, p.x_lo, p.x_median});
    x_max = std::max({x_max, p.x_hi, p.x_median});
    y_min = std::min({y_min, p.y_lo, p.y_median});
    y_max = std::max({y_max, p.y_hi, p.y_median});
  }
  if (points.empty() || !std::isfinite(x_min)) {
    x_min = y_min = 0;
    x_max = y_max = 1;
  }
  const double x_pad = std::max(1e-9, 0.06 * (x_max - x_min));
  const double y_pad = std::max(1e-9, 0.06 * (y_max - y_min));
  x_min -= x_pad;
  x_max += x_pad;
  y_min -= y_pad;
  y_max += y_pad;

  auto sx = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * (width - ml - mr); };
  auto sy = [&](double v) { return height - mb - (v - y_min) / (y_max - y_min) * (height - mt - mb); };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) +
         "\" y2=\"" + num(height - mb) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
         num(height - mb) + "\" stroke=\"black\"/>\n";

  // ticks
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    const double yv = y_min + (y_max - y_min) * i / 4.0;
    svg += "<line x1=\"" + num(sx(xv)) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(sx(xv)) +
           "\" y2=\"" + num(height - mb + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(sx(xv)) + "\" y=\"" + num(height - mb + 20) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + format_double(std::round(xv * 1000) / 1000) +
           "</text>\n";
    svg += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(sy(yv)) + "\" x2=\"" + num(ml) +
           "\" y2=\"" + num(sy(yv)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(ml - 8) + "\" y=\"" + num(sy(yv) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + format_double(std::round(yv * 100) / 100) +
           "</text>\n";
  }
  svg += "<text x=\"" + num((ml + width - mr) / 2) + "\" y=\"" + num(height - 15) +
         "\" font-size=\"13\" text-anchor=\"middle\">" + x_label + "</text>\n";
  svg += "<text x=\"18\" y=\"" + num((mt + height - mb) / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num((mt + height - mb) / 2) + ")\">" + y_label + "</text>\n";

  for (const SweepPoint& p : points) {
    // whiskers
    svg += "<line x1=\"" + num(sx(p.x_lo)) + "\" y1=\"" + num(sy(p.y_median)) + "\" x2=\"" +
           num(sx(p.x_hi)) + "\" y2=\"" + num(sy(p.y_median)) + "\" stroke=\"" + p.color +
           "\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + num(sx(p.x_median)) + "\" y1=\"" + num(sy(p.y_lo)) + "\" x2=\"" +
           num(sx(p.x_median)) + "\" y2=\"" + num(sy(p.y_hi)) + "\" stroke=\"" + p.color +
           "\" stroke-width=\"1\"/>\n";
    // median marker
    if (p.marker == "square") {
      svg += "<rect x=\"" + num(sx(p.x_median) - 4) + "\" y=\"" + num(sy(p.y_median) - 4) +
             "\" width=\"8\" height=\"8\" fill=\"" + p.color + "\"/>\n";
    } else {
      svg += "<circle cx=\"" + num(sx(p.x_median)) + "\" cy=\"" + num(sy(p.y_median)) +
             "\" r=\"4.5\" fill=\"" + p.color + "\"/>\n";
    }
  }

  // legend
  double ly = mt + 10;
  for (const SweepPoint& p : points) {
    if (p.marker == "square") {
      svg += "<rect x=\"" + num(width - mr + 12) + "\" y=\"" + num(ly - 7) +
             "\" width=\"8\" height=\"8\" fill=\"" + p.color + "\"/>\n";
    } else {
      svg += "<circle cx=\"" + num(width - mr + 16) + "\" cy=\"" + num(ly - 3) +
             "\" r=\"4.5\" fill=\"" + p.color + "\"/>\n";
    }
    svg += "<text x=\"" + num(width - mr + 28) + "\" y=\"" + num(ly) + "\" font-size=\"11\">" +
           p.label + "</text>\n";
    ly += 16;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace riskmm::cli
