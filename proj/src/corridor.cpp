#include <algorithm>
#include <cmath>
#include <limits>

#include "sofa/error.hpp"
#include "sofa/geom.hpp"

namespace sofa::geom {

namespace {

constexpr double kFlat = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Working interval for one branch; `empty` once a constraint fails.
struct Branch {
  Interval iv{{0.0, -1, BoundLine::constant}, {1.0, -1, BoundLine::constant}};
  bool empty = false;

  // Imposes c*y + d >= level (lower) or c*y + d <= level (!lower).
  void impose(double c, double d, double level, bool lower, std::int32_t src, BoundLine line) {
    if (empty) return;
    if (std::fabs(c) < kFlat) {
      if (lower ? d < level : d > level) empty = true;
      return;
    }
    const double y = (level - d) / c;
    if ((c > 0.0) == lower) {
      if (y > iv.lo.value) iv.lo = {y, src, line};
    } else {
      if (y < iv.hi.value) iv.hi = {y, src, line};
    }
  }

  void finish() {
    if (!empty && !(iv.lo.value < iv.hi.value)) empty = true;
  }
};

IntervalPair union_of(const Branch& p, const Branch& q) {
  IntervalPair out;
  if (!p.empty) out.items[out.count++] = p.iv;
  if (!q.empty) out.items[out.count++] = q.iv;
  if (out.count == 2) {
    auto& v = out.items;
    if (v[1].lo.value < v[0].lo.value) std::swap(v[0], v[1]);
    if (v[1].lo.value <= v[0].hi.value) {
      if (v[1].hi.value > v[0].hi.value) v[0].hi = v[1].hi;
      out.count = 1;
    }
  }
  return out;
}

ColumnIntervals to_column(const IntervalPair& p) {
  ColumnIntervals out;
  out.items.assign(p.items.begin(), p.items.begin() + p.count);
  return out;
}

}  // namespace

double ColumnIntervals::total_length() const {
  double s = 0.0;
  for (const auto& iv : items) s += iv.length();
  return s;
}

ColumnIntervals ColumnIntervals::strip() {
  ColumnIntervals c;
  c.items.push_back({{0.0, -1, BoundLine::constant}, {1.0, -1, BoundLine::constant}});
  return c;
}

CorridorCache::CorridorCache(const CorridorFrame& f) : frame(f), sin_a(std::sin(f.alpha)), cos_a(std::cos(f.alpha)) {}

IntervalPair corridor_pair(const CorridorCache& cc, double x) {
  const CorridorFrame& c = cc.frame;
  // a = x cos + y sin, b = -x sin + y cos
  const double a_c = cc.sin_a, a_d = x * cc.cos_a;
  const double b_c = cc.cos_a, b_d = -x * cc.sin_a;

  Branch upright;  // u1 <= a <= u1 + 1, b <= u2 + 1
  upright.impose(a_c, a_d, c.u1, true, c.source, BoundLine::a_lo);
  upright.impose(a_c, a_d, c.u1 + 1.0, false, c.source, BoundLine::a_hi);
  upright.impose(b_c, b_d, c.u2 + 1.0, false, c.source, BoundLine::b_hi);
  upright.finish();

  Branch level;  // a <= u1 + 1, u2 <= b <= u2 + 1
  if (c.exit_arm) {
    level.empty = true;
  } else {
    level.impose(a_c, a_d, c.u1 + 1.0, false, c.source, BoundLine::a_hi);
    level.impose(b_c, b_d, c.u2, true, c.source, BoundLine::b_lo);
    level.impose(b_c, b_d, c.u2 + 1.0, false, c.source, BoundLine::b_hi);
    level.finish();
  }
  return union_of(upright, level);
}

ColumnIntervals corridor_column(const CorridorFrame& c, double x) { return to_column(corridor_pair(CorridorCache(c), x)); }

ButterflyCache::ButterflyCache(double beta1, double beta2)
    : sin1(std::sin(beta1)), cos1(std::cos(beta1)), sin2(std::sin(beta2)), cos2(std::cos(beta2)) {}

IntervalPair butterfly_pair(const ButterflyCache& b, double x) {
  Branch first;  // 0 <= a1, a2 <= 1
  first.impose(b.sin1, x * b.cos1, 0.0, true, -1, BoundLine::constant);
  first.impose(b.sin2, x * b.cos2, 1.0, false, -1, BoundLine::constant);
  first.finish();
  Branch second;  // a1 <= 1, 0 <= a2
  second.impose(b.sin1, x * b.cos1, 1.0, false, -1, BoundLine::constant);
  second.impose(b.sin2, x * b.cos2, 0.0, true, -1, BoundLine::constant);
  second.finish();
  return union_of(first, second);
}

ColumnIntervals butterfly_column(double beta1, double beta2, double x) {
  return to_column(butterfly_pair(ButterflyCache(beta1, beta2), x));
}

void intersect_into(const PieceSet& a, const IntervalPair& b, PieceSet& out) {
  out.count = 0;
  std::size_t i = 0, j = 0;
  const auto nb = static_cast<std::size_t>(b.count);
  while (i < a.count && j < nb) {
    const Interval& p = a.items[i];
    const Interval& q = b.items[j];
    const Bound& lo = q.lo.value > p.lo.value ? q.lo : p.lo;
    const Bound& hi = q.hi.value < p.hi.value ? q.hi : p.hi;
    if (lo.value < hi.value) {
      if (out.count == PieceSet::kCapacity) {
        auto* first = out.items.data();
        auto* shortest = std::min_element(first, first + out.count,
                                          [](const Interval& u, const Interval& v) { return u.length() < v.length(); });
        if (shortest->length() < hi.value - lo.value) {
          std::move(shortest + 1, first + out.count, shortest);
          --out.count;
        }
      }
      if (out.count < PieceSet::kCapacity) out.items[out.count++] = {lo, hi};
    }
    if (p.hi.value < q.hi.value) {
      ++i;
    } else {
      ++j;
    }
  }
}

ColumnIntervals intersect(const ColumnIntervals& a, const ColumnIntervals& b) {
  ColumnIntervals out;
  std::size_t i = 0, j = 0;
  while (i < a.items.size() && j < b.items.size()) {
    const Interval& p = a.items[i];
    const Interval& q = b.items[j];
    const Bound& lo = q.lo.value > p.lo.value ? q.lo : p.lo;
    const Bound& hi = q.hi.value < p.hi.value ? q.hi : p.hi;
    if (lo.value < hi.value) out.items.push_back({lo, hi});
    if (p.hi.value < q.hi.value) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

std::array<double, 2> corridor_x_range(const CorridorFrame& c) {
  double left = -kInf, right = kInf;
  // Both branches lie inside {a <= u1 + 1} and {b <= u2 + 1}.
  const auto half_plane = [&](double kx, double ky, double level) {
    if (std::fabs(kx) < kFlat) return;
    const double at0 = level / kx;
    const double at1 = (level - ky) / kx;
    if (kx > 0.0) {
      right = std::min(right, std::max(at0, at1));
    } else {
      left = std::max(left, std::min(at0, at1));
    }
  };
  half_plane(std::cos(c.alpha), std::sin(c.alpha), c.u1 + 1.0);
  half_plane(-std::sin(c.alpha), std::cos(c.alpha), c.u2 + 1.0);
  if (c.exit_arm) half_plane(-std::cos(c.alpha), -std::sin(c.alpha), -c.u1);
  return {left, right};
}

std::array<Var, 2> pose_center(const Var& x_p, const Var& y_p, const Var& alpha) {
  const Var s = ad::sin(alpha);
  const Var c = ad::cos(alpha);
  return {x_p * c + y_p * s, y_p * c - x_p * s};
}

CorridorFrame pose_frame(const Pose& p, std::int32_t source) {
  const double a = p.alpha.value(), x = p.x_p.value(), y = p.y_p.value();
  const double s = std::sin(a), c = std::cos(a);
  return {a, x * c + y * s, y * c - x * s, source, p.exit_arm};
}

Var materialize(const Bound& b, double x, const Var& u1, const Var& u2, const Var& alpha) {
  switch (b.line) {
    case BoundLine::constant: return Var(b.value);
    case BoundLine::a_lo:
    case BoundLine::a_hi: {
      const Var level = b.line == BoundLine::a_lo ? u1 : u1 + 1.0;
      return (level - x * ad::cos(alpha)) / ad::sin(alpha);
    }
    case BoundLine::b_lo:
    case BoundLine::b_hi: {
      const Var level = b.line == BoundLine::b_lo ? u2 : u2 + 1.0;
      return (level + x * ad::sin(alpha)) / ad::cos(alpha);
    }
  }
  return Var(b.value);
}

std::array<double, 2> center_derivative(const Bound& b, double alpha) {
  switch (b.line) {
    case BoundLine::a_lo:
    case BoundLine::a_hi: return {1.0 / std::sin(alpha), 0.0};
    case BoundLine::b_lo:
    case BoundLine::b_hi: return {0.0, 1.0 / std::cos(alpha)};
    case BoundLine::constant: break;
  }
  return {0.0, 0.0};
}

std::vector<VarInterval> corridor_intervals(const Var& u1, const Var& u2, double alpha, double x) {
  if (!(alpha > 0.0) || alpha > M_PI / 2 + 1e-12) throw ConfigError("corridor_intervals: alpha must be in (0, pi/2]");
  const ColumnIntervals col = corridor_column({alpha, u1.value(), u2.value(), 0}, x);
  std::vector<VarInterval> out;
  for (const auto& iv : col.items) {
    out.push_back({materialize(iv.lo, x, u1, u2, Var(alpha)), materialize(iv.hi, x, u1, u2, Var(alpha))});
  }
  return out;
}

std::vector<VarInterval> butterfly_intervals(double beta1, double beta2, double x) {
  if (beta1 > beta2) throw ConfigError("butterfly_intervals: need beta1 <= beta2");
  const ColumnIntervals col = butterfly_column(beta1, beta2, x);
  std::vector<VarInterval> out;
  for (const auto& iv : col.items) out.push_back({Var(iv.lo.value), Var(iv.hi.value)});
  return out;
}

}  // namespace sofa::geom
