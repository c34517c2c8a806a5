#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "sofa/ad.hpp"

namespace sofa::geom {

using ad::Var;

/// Pseudo-time samples: strictly increasing, t[0] = 0, t[n-1] = 1.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> t);
  static TimeGrid uniform(int n_points);

  std::size_t size() const { return t_.size(); }
  double operator[](std::size_t i) const { return t_[i]; }
  std::span<const double> values() const { return t_; }

 private:
  std::vector<double> t_;
};

/// Corridor movement sampled on a grid: inner-corner trajectory (x_p, y_p),
/// rotation alpha, and their t-derivatives.
struct MovementSample {
  TimeGrid grid = TimeGrid::uniform(2);
  std::vector<Var> x_p, y_p, alpha;
  std::vector<Var> dx_p, dy_p, dalpha;

  std::size_t size() const { return grid.size(); }
  /// Throws ConfigError on length mismatch or a violated initial condition.
  void validate() const;
};

enum class DerivativeBackend { grid_fd, exact_slope };

/// Three scalar functions of t; the slope closures are required only for
/// DerivativeBackend::exact_slope.
struct MovementFunctions {
  std::function<Var(double)> x_p, y_p, alpha;
  std::function<Var(double)> dx_p, dy_p, dalpha;
};

MovementSample sample_movement(const MovementFunctions& f, const TimeGrid& grid,
                               DerivativeBackend backend = DerivativeBackend::grid_fd);

/// Central differences on the grid, one-sided at the two ends.
std::vector<Var> grid_derivative(std::span<const Var> values, const TimeGrid& grid);

/// Semicircular corner path of radius parameter r: alpha = t*pi/2,
/// p = (-r(1 - cos 2alpha), r sin 2alpha), analytic derivatives. With a tape,
/// every sample value is a leaf on it.
MovementSample hammersley_movement(double r, const TimeGrid& grid, ad::Tape* tape = nullptr);

/// Rotation about the fixed corner: p = 0, alpha = t*pi/2.
MovementSample corner_rotation_movement(const TimeGrid& grid, ad::Tape* tape = nullptr);

struct Point {
  Var x, y;
};
using Polyline = std::vector<Point>;

/// One point per grid sample with a validity flag per sample.
struct MaskedPolyline {
  std::vector<Point> points;
  std::vector<std::uint8_t> valid;

  /// Maximal runs of valid samples; a masked sample splits the curve.
  std::vector<Polyline> pieces() const;
  std::size_t valid_count() const;
};

struct EnvelopeSet {
  MaskedPolyline e_ih, e_iv, e_oh, e_ov;
  double mask_epsilon = 1e-6;
};

/// Envelopes of the four wall line families; samples with |alpha'| below
/// mask_epsilon are masked, and so is any tangency point that falls on the
/// line beyond the end of its wall. Throws EnvelopeUndefined when every
/// sample is masked by the first rule.
EnvelopeSet compute_envelopes(const MovementSample& m, double mask_epsilon = 1e-6);

/// Corridor pose whose walls constrain the shape column-wise.
struct Pose {
  Var x_p, y_p, alpha;
  /// Only the exit arm {0 <= x_c <= 1, y_c <= 1} constrains the shape.
  bool exit_arm = false;
};

struct FringeCurves {
  std::vector<Polyline> lower;  // trajectory, e_ih, e_iv pieces, then y = 0
  std::vector<Polyline> upper;  // e_oh, e_ov pieces, then y = 1
  std::array<double, 2> x_window{0.0, 0.0};
  /// Every sampled pose, used to clamp the columns exactly; the last one
  /// contributes only its exit arm.
  std::vector<Pose> poses;
};

inline constexpr double kMinWindowX = -8.0;
/// Window edges are rounded outward to multiples of this, so the source
/// abscissae stay put under small changes of the geometry.
inline constexpr double kWindowQuantum = 1.0 / 64.0;

std::array<double, 2> snap_window(double lo, double hi);

FringeCurves assemble_fringes(const MovementSample& m, const EnvelopeSet& e, double margin = 0.1);

/// Keeps the parts of `line` with x in [lo, hi], cutting segments at the edges.
std::vector<Polyline> clip_polyline(const Polyline& line, double lo, double hi);

// ---------------------------------------------------------------------------
// Column intervals of rotated corridors and strips.
//
// At a fixed x every constraint is linear in y, so the set of admissible y is a
// union of closed intervals. Each interval endpoint remembers which line
// produced it, which is enough to rebuild it as a differentiable expression or
// to read off its derivative with respect to the rotation center.

enum class BoundLine : std::uint8_t {
  constant,  // strip edge or a fixed line
  a_lo,      // x cos(alpha) + y sin(alpha) = u1
  a_hi,      //                              = u1 + 1
  b_lo,      // -x sin(alpha) + y cos(alpha) = u2
  b_hi,      //                               = u2 + 1
};

struct Bound {
  double value = 0.0;
  std::int32_t source = -1;  // corridor index, -1 for constants
  BoundLine line = BoundLine::constant;
};

struct Interval {
  Bound lo, hi;
  double length() const { return hi.value - lo.value; }
};

/// Sorted, disjoint closed intervals.
struct ColumnIntervals {
  std::vector<Interval> items;

  bool empty() const { return items.empty(); }
  double total_length() const;
  static ColumnIntervals strip();  // [0, 1]
};

/// Corridor rotated by alpha about u (pre-rotation coordinates of the inner
/// corner), values only; `source` tags the endpoints.
struct CorridorFrame {
  double alpha = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;
  std::int32_t source = 0;
  bool exit_arm = false;  // restrict to the arm along which the shape leaves
};

/// {y : (x, y) in corridor} intersected with [0, 1].
ColumnIntervals corridor_column(const CorridorFrame& c, double x);

/// Frame with its rotation precomputed, for many column queries.
struct CorridorCache {
  CorridorFrame frame;
  double sin_a = 0.0;
  double cos_a = 1.0;

  explicit CorridorCache(const CorridorFrame& f);
};

/// At most two sorted disjoint intervals, without allocation.
struct IntervalPair {
  std::array<Interval, 2> items;
  int count = 0;
};

IntervalPair corridor_pair(const CorridorCache& c, double x);

struct ButterflyCache {
  double sin1, cos1, sin2, cos2;
  ButterflyCache(double beta1, double beta2);
};

IntervalPair butterfly_pair(const ButterflyCache& b, double x);

/// Sorted disjoint intervals in a fixed buffer. On overflow the shortest
/// piece is dropped.
struct PieceSet {
  static constexpr std::size_t kCapacity = 16;
  std::array<Interval, kCapacity> items;
  std::size_t count = 0;
};

void intersect_into(const PieceSet& a, const IntervalPair& b, PieceSet& out);
/// {y : (x, y) in butterfly(beta1, beta2)} intersected with [0, 1].
ColumnIntervals butterfly_column(double beta1, double beta2, double x);
ColumnIntervals intersect(const ColumnIntervals& a, const ColumnIntervals& b);

/// x-range containing corridor ∩ strip; infinite ends where unbounded.
std::array<double, 2> corridor_x_range(const CorridorFrame& c);

/// Rotation center of the corridor pose with inner corner p and angle alpha.
std::array<Var, 2> pose_center(const Var& x_p, const Var& y_p, const Var& alpha);

/// Value-only corridor frame of a pose, tagged with `source`.
CorridorFrame pose_frame(const Pose& p, std::int32_t source);

/// Rebuilds an endpoint as a differentiable expression in (u1, u2, alpha).
Var materialize(const Bound& b, double x, const Var& u1, const Var& u2, const Var& alpha);
/// d(endpoint)/d(u1) and d(endpoint)/d(u2) for a fixed alpha.
std::array<double, 2> center_derivative(const Bound& b, double alpha);

using VarInterval = std::array<Var, 2>;

/// Both corridor branches at fixed x as intervals in y within [0, 1], with
/// endpoints differentiable in (u1, u2).
std::vector<VarInterval> corridor_intervals(const Var& u1, const Var& u2, double alpha, double x);
std::vector<VarInterval> butterfly_intervals(double beta1, double beta2, double x);

// ---------------------------------------------------------------------------

/// CSV with columns index,x,y,valid.
void write_polyline_csv(std::ostream& os, const MaskedPolyline& line);
void write_polyline_csv(std::ostream& os, const Polyline& line);

}  // namespace sofa::geom
