#include "sofa/waterfall.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>

#include "sofa/error.hpp"

namespace sofa::waterfall {

void WaterfallConfig::validate() const {
  if (n_sources < 2) throw ConfigError("waterfall: n_sources must be >= 2");
  if (!(vertical_eps >= 0.0)) throw ConfigError("waterfall: vertical_eps must be >= 0");
}

std::vector<double> source_abscissae(int n_sources, std::array<double, 2> x_window) {
  const double dx = (x_window[1] - x_window[0]) / n_sources;
  std::vector<double> xs(static_cast<std::size_t>(n_sources));
  for (int i = 0; i < n_sources; ++i) xs[static_cast<std::size_t>(i)] = x_window[0] + (i + 0.5) * dx;
  return xs;
}

namespace {

struct Hit {
  double value;
  const geom::Point* a = nullptr;
  const geom::Point* b = nullptr;
  bool vertical = false;
};

// Differentiable height of segment (a, b) at abscissa x.
Var segment_height(const geom::Point& a, const geom::Point& b, double x) {
  const double x0 = a.x.value(), x1 = b.x.value();
  const double y0 = a.y.value(), y1 = b.y.value();
  const double w = x1 - x0;
  const double s = (x - x0) / w;
  const double h = y0 + (y1 - y0) * s;
  ad::Tape* tape = nullptr;
  for (const Var* v : {&a.x, &a.y, &b.x, &b.y}) {
    if (v->tape()) tape = v->tape();
  }
  if (!tape) return Var(h);
  const Var parents[4] = {a.x, a.y, b.x, b.y};
  const double dy = y1 - y0;
  const double partials[4] = {dy * (s - 1.0) / w, 1.0 - s, -dy * s / w, s};
  return tape->record(h, parents, partials);
}

}  // namespace

Profile fall(const std::vector<Polyline>& curves, const WaterfallConfig& config, Direction direction,
             std::array<double, 2> x_window) {
  config.validate();
  if (curves.empty()) throw EmptyGeometry("fall: no curves supplied");
  if (!(x_window[1] > x_window[0])) throw EmptyGeometry("fall: empty x window");

  Profile prof;
  prof.x_coords = source_abscissae(config.n_sources, x_window);
  prof.dx = (x_window[1] - x_window[0]) / config.n_sources;
  const auto n = static_cast<std::ptrdiff_t>(config.n_sources);
  const bool down = direction == Direction::down;
  const double none = down ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  std::vector<Hit> best(static_cast<std::size_t>(n), Hit{none});
  const auto better = [down](double cand, double cur) { return down ? cand > cur : cand < cur; };

  const double lo = x_window[0];
  const double dx = prof.dx;
  // Column i sits at lo + (i + 0.5) dx; index range of columns inside [xa, xb].
  const auto first_col = [&](double x) {
    return std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((x - lo) / dx - 0.5)));
  };
  const auto last_col = [&](double x) {
    return std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor((x - lo) / dx - 0.5)));
  };

  for (const auto& line : curves) {
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
      const geom::Point& a = line[k];
      const geom::Point& b = line[k + 1];
      const double xa = a.x.value(), xb = b.x.value();
      const double ya = a.y.value(), yb = b.y.value();
      const double xmin = std::min(xa, xb), xmax = std::max(xa, xb);
      if (xmax < lo || xmin > x_window[1]) continue;
      const std::ptrdiff_t i0 = first_col(xmin), i1 = last_col(xmax);
      if (i0 > i1) continue;
      if (xmax - xmin < config.vertical_eps) {
        const bool pick_a = down ? ya >= yb : ya <= yb;
        const double v = pick_a ? ya : yb;
        for (std::ptrdiff_t i = i0; i <= i1; ++i) {
          auto& h = best[static_cast<std::size_t>(i)];
          if (better(v, h.value)) h = {v, pick_a ? &a : &b, nullptr, true};
        }
        continue;
      }
      const double slope = (yb - ya) / (xb - xa);
      for (std::ptrdiff_t i = i0; i <= i1; ++i) {
        const double x = prof.x_coords[static_cast<std::size_t>(i)];
        const double v = ya + slope * (x - xa);
        auto& h = best[static_cast<std::size_t>(i)];
        if (better(v, h.value)) h = {v, &a, &b, false};
      }
    }
  }

  prof.heights.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < prof.heights.size(); ++i) {
    const Hit& h = best[i];
    if (!h.a) {
      prof.heights[i] = Var(down ? 0.0 : 1.0);
    } else if (h.vertical) {
      prof.heights[i] = h.a->y;
    } else {
      prof.heights[i] = segment_height(*h.a, *h.b, prof.x_coords[i]);
    }
  }
  return prof;
}

Var area_between(const Profile& lower, const Profile& upper) {
  if (lower.x_coords != upper.x_coords || lower.heights.size() != upper.heights.size()) {
    throw ShapeMismatch("area_between: profiles have different x_coords");
  }
  std::vector<Var> parents;
  std::vector<double> partials;
  double area = 0.0;
  ad::Tape* tape = nullptr;
  for (std::size_t i = 0; i < lower.heights.size(); ++i) {
    const Var& lo = lower.heights[i];
    const Var& hi = upper.heights[i];
    const double gap = hi.value() - lo.value();
    if (!(gap > 0.0)) continue;
    area += gap * lower.dx;
    parents.push_back(hi);
    partials.push_back(lower.dx);
    parents.push_back(lo);
    partials.push_back(-lower.dx);
    if (hi.tape()) tape = hi.tape();
    if (lo.tape()) tape = lo.tape();
  }
  if (!tape) return Var(area);
  return tape->record(area, parents, partials);
}

namespace {

constexpr std::int32_t kFringeSource = -2;

}  // namespace

AreaResult compute_area(const geom::FringeCurves& f, const WaterfallConfig& config) {
  AreaResult r;
  r.lower = fall(f.lower, config, Direction::down, f.x_window);
  r.upper = fall(f.upper, config, Direction::up, f.x_window);

  std::vector<geom::CorridorCache> frames;
  frames.reserve(f.poses.size());
  for (std::size_t k = 0; k < f.poses.size(); ++k) {
    frames.emplace_back(geom::pose_frame(f.poses[k], static_cast<std::int32_t>(k)));
  }
  // Differentiable centers, built only for poses that end up binding.
  std::vector<std::optional<std::array<Var, 2>>> centers(f.poses.size());
  const auto pose_var = [&](const geom::Bound& b, double x) {
    const auto k = static_cast<std::size_t>(b.source);
    const geom::Pose& p = f.poses[k];
    if (!centers[k]) centers[k] = geom::pose_center(p.x_p, p.y_p, p.alpha);
    return geom::materialize(b, x, (*centers[k])[0], (*centers[k])[1], p.alpha);
  };

  geom::PieceSet cur, next;
  for (std::size_t i = 0; i < r.lower.size(); ++i) {
    const double x = r.lower.x_coords[i];
    Var& lo = r.lower.heights[i];
    Var& hi = r.upper.heights[i];
    cur.count = 1;
    cur.items[0] = {{lo.value(), kFringeSource, geom::BoundLine::constant},
                    {hi.value(), kFringeSource, geom::BoundLine::constant}};
    if (!(lo.value() < hi.value())) cur.count = 0;
    for (const auto& fr : frames) {
      if (cur.count == 0) break;
      geom::intersect_into(cur, geom::corridor_pair(fr, x), next);
      std::swap(cur, next);
    }
    if (cur.count == 0) {
      hi = lo;
      continue;
    }
    const auto* widest = &cur.items[0];
    for (std::size_t k = 1; k < cur.count; ++k) {
      if (cur.items[k].length() > widest->length()) widest = &cur.items[k];
    }
    if (widest->lo.source != kFringeSource) lo = widest->lo.source < 0 ? Var(widest->lo.value) : pose_var(widest->lo, x);
    if (widest->hi.source != kFringeSource) hi = widest->hi.source < 0 ? Var(widest->hi.value) : pose_var(widest->hi, x);
  }
  r.area = area_between(r.lower, r.upper);
  return r;
}

void write_profiles_csv(std::ostream& os, const AreaResult& r) {
  os << "index,x,lower,upper\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.lower.size(); ++i) {
    os << i << ',' << r.lower.x_coords[i] << ',' << r.lower.heights[i].value() << ','
       << r.upper.heights[i].value() << '\n';
  }
}

}  // namespace sofa::waterfall
