#include "sofa/geom.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "sofa/error.hpp"

namespace sofa::geom {

TimeGrid::TimeGrid(std::vector<double> t) : t_(std::move(t)) {
  if (t_.size() < 2) throw ConfigError("TimeGrid: need at least 2 points");
  if (t_.front() != 0.0 || t_.back() != 1.0) throw ConfigError("TimeGrid: endpoints must be exactly 0 and 1");
  for (std::size_t i = 1; i < t_.size(); ++i) {
    if (!(t_[i] > t_[i - 1])) throw ConfigError("TimeGrid: values must be strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(int n_points) {
  if (n_points < 2) throw ConfigError("TimeGrid: need at least 2 points");
  std::vector<double> t(static_cast<std::size_t>(n_points));
  const double last = static_cast<double>(n_points - 1);
  for (int i = 0; i < n_points; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i) / last;
  t.back() = 1.0;
  return TimeGrid(std::move(t));
}

void MovementSample::validate() const {
  const std::size_t n = grid.size();
  for (const auto* v : {&x_p, &y_p, &alpha, &dx_p, &dy_p, &dalpha}) {
    if (v->size() != n) throw ConfigError("MovementSample: array length does not match grid");
  }
  if (x_p[0].value() != 0.0 || y_p[0].value() != 0.0 || alpha[0].value() != 0.0) {
    throw ConfigError("MovementSample: initial conditions x_p(0) = y_p(0) = alpha(0) = 0 violated");
  }
}

std::vector<Var> grid_derivative(std::span<const Var> values, const TimeGrid& grid) {
  const std::size_t n = grid.size();
  if (values.size() != n) throw ShapeMismatch("grid_derivative: length mismatch");
  std::vector<Var> d(n);
  const auto diff = [&](std::size_t lo, std::size_t hi) {
    const double h = grid[hi] - grid[lo];
    const double w[2] = {-1.0 / h, 1.0 / h};
    const Var v[2] = {values[lo], values[hi]};
    return ad::dot(w, v);
  };
  d[0] = diff(0, 1);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = diff(i - 1, i + 1);
  d[n - 1] = diff(n - 2, n - 1);
  return d;
}

MovementSample sample_movement(const MovementFunctions& f, const TimeGrid& grid, DerivativeBackend backend) {
  if (!f.x_p || !f.y_p || !f.alpha) throw ConfigError("sample_movement: missing movement function");
  const bool exact = backend == DerivativeBackend::exact_slope;
  if (exact && (!f.dx_p || !f.dy_p || !f.dalpha)) {
    throw Unsupported("sample_movement: exact_slope needs slope functions");
  }
  MovementSample m{grid, {}, {}, {}, {}, {}, {}};
  const std::size_t n = grid.size();
  const auto call = [](const std::function<Var(double)>& fn, double t) {
    Var v;
    try {
      v = fn(t);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "sample_movement: non-finite value at t=" << std::setprecision(17) << t << " (" << e.what() << ")";
      throw NumericalError(os.str());
    }
    if (!std::isfinite(v.value())) {
      std::ostringstream os;
      os << "sample_movement: non-finite value at t=" << std::setprecision(17) << t;
      throw NumericalError(os.str());
    }
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    m.x_p.push_back(call(f.x_p, grid[i]));
    m.y_p.push_back(call(f.y_p, grid[i]));
    m.alpha.push_back(call(f.alpha, grid[i]));
    if (exact) {
      m.dx_p.push_back(call(f.dx_p, grid[i]));
      m.dy_p.push_back(call(f.dy_p, grid[i]));
      m.dalpha.push_back(call(f.dalpha, grid[i]));
    }
  }
  if (!exact) {
    m.dx_p = grid_derivative(m.x_p, grid);
    m.dy_p = grid_derivative(m.y_p, grid);
    m.dalpha = grid_derivative(m.alpha, grid);
  }
  return m;
}

namespace {

Var leaf(ad::Tape* tape, double v) { return tape ? tape->variable(v) : Var(v); }

}  // namespace

std::array<double, 2> snap_window(double lo, double hi) {
  return {std::floor(lo / kWindowQuantum) * kWindowQuantum, std::ceil(hi / kWindowQuantum) * kWindowQuantum};
}

MovementSample hammersley_movement(double r, const TimeGrid& grid, ad::Tape* tape) {
  if (!(r > 0.0) || r > 1.0) throw ConfigError("hammersley_movement: need 0 < r <= 1");
  MovementSample m{grid, {}, {}, {}, {}, {}, {}};
  const double w = M_PI / 2;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a = grid[i] * w;
    const double x = i == 0 ? 0.0 : -r * (1.0 - std::cos(2.0 * a));
    const double y = i == 0 ? 0.0 : r * std::sin(2.0 * a);
    m.x_p.push_back(leaf(tape, x));
    m.y_p.push_back(leaf(tape, y));
    m.alpha.push_back(leaf(tape, a));
    m.dx_p.push_back(leaf(tape, -2.0 * r * std::sin(2.0 * a) * w));
    m.dy_p.push_back(leaf(tape, 2.0 * r * std::cos(2.0 * a) * w));
    m.dalpha.push_back(leaf(tape, w));
  }
  return m;
}

MovementSample corner_rotation_movement(const TimeGrid& grid, ad::Tape* tape) {
  MovementSample m{grid, {}, {}, {}, {}, {}, {}};
  const double w = M_PI / 2;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m.x_p.push_back(leaf(tape, 0.0));
    m.y_p.push_back(leaf(tape, 0.0));
    m.alpha.push_back(leaf(tape, grid[i] * w));
    m.dx_p.push_back(leaf(tape, 0.0));
    m.dy_p.push_back(leaf(tape, 0.0));
    m.dalpha.push_back(leaf(tape, w));
  }
  return m;
}

std::vector<Polyline> MaskedPolyline::pieces() const {
  std::vector<Polyline> out;
  Polyline cur;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (valid[i]) {
      cur.push_back(points[i]);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t MaskedPolyline::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

namespace {

constexpr double kWallSlack = 1e-12;

}  // namespace

EnvelopeSet compute_envelopes(const MovementSample& m, double mask_epsilon) {
  m.validate();
  const std::size_t n = m.size();
  EnvelopeSet e;
  e.mask_epsilon = mask_epsilon;
  for (auto* line : {&e.e_ih, &e.e_iv, &e.e_oh, &e.e_ov}) {
    line->points.resize(n);
    line->valid.assign(n, 0);
  }
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(m.dalpha[i].value()) < mask_epsilon) continue;
    ++n_valid;
    const Var s = ad::sin(m.alpha[i]);
    const Var c = ad::cos(m.alpha[i]);
    const Var inv = 1.0 / m.dalpha[i];
    // Signed offsets of the tangency points along each inner wall line.
    const Var along_h = (m.dx_p[i] * s - m.dy_p[i] * c) * inv;
    const Var along_v = (m.dx_p[i] * c + m.dy_p[i] * s) * inv;
    const Point ih{m.x_p[i] + c * along_h, m.y_p[i] + s * along_h};
    const Point iv{m.x_p[i] - s * along_v, m.y_p[i] + c * along_v};
    e.e_ih.points[i] = ih;
    e.e_iv.points[i] = iv;
    e.e_oh.points[i] = {ih.x - s, ih.y + c};
    e.e_ov.points[i] = {iv.x + c, iv.y + s};
    // Tangency points past the end of a wall ray lie on the line, not on the wall.
    const double h = along_h.value(), v = along_v.value();
    e.e_ih.valid[i] = h <= kWallSlack;
    e.e_iv.valid[i] = v <= kWallSlack;
    e.e_oh.valid[i] = h <= 1.0 + kWallSlack;
    e.e_ov.valid[i] = v <= 1.0 + kWallSlack;
  }
  if (n_valid == 0) throw EnvelopeUndefined("compute_envelopes: alpha' vanishes at every sample (pure translation)");
  return e;
}

std::vector<Polyline> clip_polyline(const Polyline& line, double lo, double hi) {
  std::vector<Polyline> out;
  Polyline cur;
  const auto inside = [&](const Point& p) { return p.x.value() >= lo && p.x.value() <= hi; };
  const auto cut = [](const Point& a, const Point& b, double x) {
    // Interpolated y stays differentiable in both endpoints; x is the fixed edge.
    const Var frac = (Var(x) - a.x) / (b.x - a.x);
    return Point{Var(x), a.y + (b.y - a.y) * frac};
  };
  const auto flush = [&] {
    if (cur.size() >= 2) out.push_back(cur);
    cur.clear();
  };
  if (line.size() == 1) {
    if (inside(line[0])) out.push_back(line);
    return out;
  }
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point& a = line[i];
    const Point& b = line[i + 1];
    const double xa = a.x.value(), xb = b.x.value();
    const bool ia = inside(a), ib = inside(b);
    if (ia && cur.empty()) cur.push_back(a);
    if (ia && ib) {
      cur.push_back(b);
      continue;
    }
    // Entry/exit crossings of the window edges, in order along the segment.
    std::vector<double> xs;
    for (double edge : {lo, hi}) {
      if ((xa - edge) * (xb - edge) < 0.0) xs.push_back(edge);
    }
    std::sort(xs.begin(), xs.end(), [&](double p, double q) { return std::fabs(p - xa) < std::fabs(q - xa); });
    if (ia) {  // exits; no crossing when a sits on the edge
      if (!xs.empty()) cur.push_back(cut(a, b, xs.front()));
      flush();
    } else if (ib) {  // enters; likewise for b on the edge
      flush();
      if (!xs.empty()) cur.push_back(cut(a, b, xs.front()));
      cur.push_back(b);
    } else if (xs.size() == 2) {  // passes through the whole window
      flush();
      cur.push_back(cut(a, b, xs[0]));
      cur.push_back(cut(a, b, xs[1]));
      flush();
    } else {
      flush();
    }
  }
  flush();
  return out;
}

FringeCurves assemble_fringes(const MovementSample& m, const EnvelopeSet& e, double margin) {
  const std::size_t n = m.size();
  Polyline trajectory;
  trajectory.reserve(n);
  double traj_len = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trajectory.push_back({m.x_p[i], m.y_p[i]});
    if (i > 0) {
      traj_len += std::hypot(m.x_p[i].value() - m.x_p[i - 1].value(), m.y_p[i].value() - m.y_p[i - 1].value());
    }
  }
  const std::size_t n_valid = e.e_ih.valid_count();
  if (n_valid == 0 && traj_len == 0.0) {
    throw DegenerateGeometry("assemble_fringes: no valid envelope and a zero-length trajectory");
  }

  std::vector<Polyline> lower{trajectory};
  std::vector<Polyline> upper;
  for (auto& piece : e.e_ih.pieces()) lower.push_back(std::move(piece));
  for (auto& piece : e.e_iv.pieces()) lower.push_back(std::move(piece));
  for (auto& piece : e.e_oh.pieces()) upper.push_back(std::move(piece));
  for (auto& piece : e.e_ov.pieces()) upper.push_back(std::move(piece));

  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  for (const auto* set : {&lower, &upper}) {
    for (const auto& line : *set) {
      for (const auto& p : line) {
        xmin = std::min(xmin, p.x.value());
        xmax = std::max(xmax, p.x.value());
      }
    }
  }
  double lo = xmin - margin;
  double hi = std::max(1.0, xmax) + margin;

  FringeCurves f;
  f.poses.reserve(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) f.poses.push_back({m.x_p[i], m.y_p[i], m.alpha[i], i + 1 == m.size()});
  for (const auto& pose : f.poses) {
    const auto range = corridor_x_range(pose_frame(pose, 0));
    lo = std::max(lo, range[0] - margin);
    hi = std::min(hi, range[1] + margin);
  }
  lo = std::max(lo, kMinWindowX);
  if (!(lo < hi)) throw DegenerateGeometry("assemble_fringes: empty x window");
  f.x_window = snap_window(lo, hi);
  lo = f.x_window[0];
  hi = f.x_window[1];

  const auto clip_all = [&](const std::vector<Polyline>& in, std::vector<Polyline>& out) {
    for (const auto& line : in) {
      for (auto& piece : clip_polyline(line, lo, hi)) out.push_back(std::move(piece));
    }
  };
  clip_all(lower, f.lower);
  clip_all(upper, f.upper);
  f.lower.push_back({{Var(lo), Var(0.0)}, {Var(hi), Var(0.0)}});
  f.upper.push_back({{Var(lo), Var(1.0)}, {Var(hi), Var(1.0)}});
  return f;
}

void write_polyline_csv(std::ostream& os, const MaskedPolyline& line) {
  os << "index,x,y,valid\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    os << i << ',' << line.points[i].x.value() << ',' << line.points[i].y.value() << ','
       << static_cast<int>(line.valid[i]) << '\n';
  }
}

void write_polyline_csv(std::ostream& os, const Polyline& line) {
  os << "index,x,y,valid\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < line.size(); ++i) {
    os << i << ',' << line[i].x.value() << ',' << line[i].y.value() << ",1\n";
  }
}

}  // namespace sofa::geom
