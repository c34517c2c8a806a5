#include "sofa/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sofa/io.hpp"

namespace sofa::render {

using io::format6;

namespace {

using XY = std::pair<double, double>;

// Sofa panel, in plane coordinates.
constexpr double kMinX = -4.0, kMaxX = 2.0, kMinY = -2.5, kMaxY = 1.5;
constexpr double kClip = 50.0;

std::string pt(double x, double y) { return format6(x) + "," + format6(-y); }

void polyline(std::ostream& os, const std::vector<XY>& pts, const char* stroke, double width) {
  if (pts.size() < 2) return;
  os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << format6(width) << "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << pt(pts[i].first, pts[i].second);
  os << "\"/>\n";
}

/// Splits at invalid samples and at points far outside the drawing.
void masked(std::ostream& os, const geom::MaskedPolyline& line, const char* stroke) {
  std::vector<XY> cur;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    const double x = line.points[i].x.value(), y = line.points[i].y.value();
    if (!line.valid[i] || !(std::fabs(x) < kClip && std::fabs(y) < kClip)) {
      polyline(os, cur, stroke, 0.01);
      cur.clear();
      continue;
    }
    cur.emplace_back(x, y);
  }
  polyline(os, cur, stroke, 0.01);
}

}  // namespace

void sofa_svg(std::ostream& os, const geom::MovementSample& m, const std::optional<geom::EnvelopeSet>& env,
              const waterfall::AreaResult& area) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"600\" viewBox=\"" << format6(kMinX) << ' '
     << format6(-kMaxY) << ' ' << format6(kMaxX - kMinX) << ' ' << format6(kMaxY - kMinY) << "\">\n";
  os << "<rect x=\"" << format6(kMinX) << "\" y=\"" << format6(-kMaxY) << "\" width=\"" << format6(kMaxX - kMinX)
     << "\" height=\"" << format6(kMaxY - kMinY) << "\" fill=\"white\"/>\n";
  // Horizontal strip of the corridor.
  polyline(os, {{kMinX, 0.0}, {kMaxX, 0.0}}, "#999999", 0.01);
  polyline(os, {{kMinX, 1.0}, {kMaxX, 1.0}}, "#999999", 0.01);

  // Shape: one polygon per run of non-empty columns.
  const auto& lo = area.lower;
  const auto& hi = area.upper;
  std::size_t i = 0;
  const double half = lo.dx / 2.0;
  while (i < lo.size()) {
    if (!(hi.heights[i].value() > lo.heights[i].value())) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lo.size() && hi.heights[j].value() > lo.heights[j].value()) ++j;
    os << "<polygon fill=\"#f2c46d\" stroke=\"#8a5a00\" stroke-width=\"0.006000\" points=\"";
    os << pt(lo.x_coords[i] - half, lo.heights[i].value());
    for (std::size_t k = i; k < j; ++k) os << ' ' << pt(lo.x_coords[k], lo.heights[k].value());
    os << ' ' << pt(lo.x_coords[j - 1] + half, lo.heights[j - 1].value());
    os << ' ' << pt(hi.x_coords[j - 1] + half, hi.heights[j - 1].value());
    for (std::size_t k = j; k-- > i;) os << ' ' << pt(hi.x_coords[k], hi.heights[k].value());
    os << ' ' << pt(hi.x_coords[i] - half, hi.heights[i].value());
    os << "\"/>\n";
    i = j;
  }

  if (env) {
    masked(os, env->e_ih, "#1f77b4");
    masked(os, env->e_iv, "#2ca02c");
    masked(os, env->e_oh, "#9467bd");
    masked(os, env->e_ov, "#d62728");
  }
  std::vector<XY> traj;
  for (std::size_t k = 0; k < m.size(); ++k) traj.emplace_back(m.x_p[k].value(), m.y_p[k].value());
  polyline(os, traj, "#000000", 0.015);
  os << "</svg>\n";
}

void convergence_svg(std::ostream& os, std::span<const ConvergencePoint> points, double reference) {
  constexpr double W = 800.0, H = 400.0, pad = 50.0, panel = (W - 3 * pad) / 2.0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"white\"/>\n";
  if (points.empty()) {
    os << "</svg>\n";
    return;
  }
  double n0 = points.front().n, n1 = points.front().n;
  double g0 = reference, g1 = reference;
  double e0 = std::numeric_limits<double>::infinity(), e1 = -e0;
  for (const auto& p : points) {
    n0 = std::min<double>(n0, p.n);
    n1 = std::max<double>(n1, p.n);
    g0 = std::min(g0, p.G);
    g1 = std::max(g1, p.G);
    if (p.G - reference > 0.0) {
      e0 = std::min(e0, std::log10(p.G - reference));
      e1 = std::max(e1, std::log10(p.G - reference));
    }
  }
  if (n1 == n0) n1 = n0 + 1.0;
  if (g1 == g0) g1 = g0 + 1.0;
  if (!(e1 > e0)) {
    e0 = std::isfinite(e0) ? e0 - 0.5 : -4.0;
    e1 = e0 + 1.0;
  }
  const auto sx = [&](double x0, double n) { return x0 + panel * (n - n0) / (n1 - n0); };
  const auto sy = [&](double v, double lo, double hi) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
  const auto frame = [&](double x0, const std::string& label) {
    os << "<rect x=\"" << format6(x0) << "\" y=\"" << format6(pad) << "\" width=\"" << format6(panel)
       << "\" height=\"" << format6(H - 2 * pad) << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << format6(x0) << "\" y=\"" << format6(pad - 10) << "\" font-size=\"14\">" << label
       << "</text>\n";
  };
  const auto series = [&](double x0, auto&& yof) {
    std::string path;
    for (const auto& p : points) {
      const double y = yof(p);
      if (!std::isfinite(y)) continue;
      const double px = sx(x0, p.n);
      path += (path.empty() ? "" : " ") + format6(px) + "," + format6(y);
      os << "<circle cx=\"" << format6(px) << "\" cy=\"" << format6(y) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    }
    if (!path.empty()) {
      os << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"" << path << "\"/>\n";
    }
  };

  const double left = pad, right = 2 * pad + panel;
  frame(left, "G vs n (line: " + format6(reference) + ")");
  const double ry = sy(reference, g0, g1);
  os << "<line x1=\"" << format6(left) << "\" y1=\"" << format6(ry) << "\" x2=\"" << format6(left + panel)
     << "\" y2=\"" << format6(ry) << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";
  series(left, [&](const ConvergencePoint& p) { return sy(p.G, g0, g1); });

  frame(right, "log10(G - " + format6(reference) + ")");
  series(right, [&](const ConvergencePoint& p) {
    const double e = p.G - reference;
    return e > 0.0 ? sy(std::log10(e), e0, e1) : std::numeric_limits<double>::quiet_NaN();
  });
  for (double x0 : {left, right}) {
    os << "<text x=\"" << format6(x0) << "\" y=\"" << format6(H - pad + 18) << "\" font-size=\"12\">n = "
       << static_cast<int>(n0) << " .. " << static_cast<int>(n1) << "</text>\n";
  }
  os << "</svg>\n";
}

void landscape_svg(std::ostream& os, const analysis::LandscapeGrid& g) {
  const int res = g.resolution;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t k = 0; k < g.values.size(); ++k) {
    if (!g.valid[k]) continue;
    lo = std::min(lo, g.values[k]);
    hi = std::max(hi, g.values[k]);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 " << res << ' '
     << res << "\" shape-rendering=\"crispEdges\">\n";
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const auto k = static_cast<std::size_t>(i * res + j);
      std::string fill = "#ff0000";
      if (g.valid[k]) {
        const int v = static_cast<int>(std::lround(255.0 * (g.values[k] - lo) / (hi - lo)));
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", v, v, v);
        fill = buf;
      }
      // a along x, b upwards.
      os << "<rect x=\"" << i << "\" y=\"" << (res - 1 - j) << "\" width=\"1\" height=\"1\" fill=\"" << fill
         << "\"/>\n";
    }
  }
  os << "</svg>\n";
}

}  // namespace sofa::render
