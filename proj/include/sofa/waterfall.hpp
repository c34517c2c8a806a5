#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "sofa/geom.hpp"

namespace sofa::waterfall {

using ad::Var;
using geom::Polyline;

struct WaterfallConfig {
  int n_sources = 10000;
  /// Segments narrower than this in x are treated as vertical.
  double vertical_eps = 1e-9;

  void validate() const;
};

enum class Direction {
  down,  // sources above everything: stops at the topmost crossing
  up,    // sources below everything: stops at the bottommost crossing
};

/// Stopping heights of the water columns at the source abscissae.
struct Profile {
  std::vector<double> x_coords;
  std::vector<Var> heights;
  double dx = 0.0;

  std::size_t size() const { return x_coords.size(); }
};

struct AreaResult {
  Var area;
  Profile lower, upper;
};

/// Midpoints of n equal cells spanning the window.
std::vector<double> source_abscissae(int n_sources, std::array<double, 2> x_window);

/// Per column, the crossing of the vertical line with `curves` reached first by
/// water falling in `direction`; columns with no crossing get 0 (down) or 1 (up).
/// Crossing heights interpolate segment endpoints and are differentiable in
/// them; ties go to the lowest curve index.
Profile fall(const std::vector<Polyline>& curves, const WaterfallConfig& config, Direction direction,
             std::array<double, 2> x_window);

/// Midpoint rule Σ max(upper - lower, 0) dx.
Var area_between(const Profile& lower, const Profile& upper);

/// Lower profile from the lower fringe, upper profile from the upper fringe,
/// then each column is cut to the corridors of all sampled poses; where that
/// leaves several pieces the longest one is kept.
AreaResult compute_area(const geom::FringeCurves& f, const WaterfallConfig& config);

void write_profiles_csv(std::ostream& os, const AreaResult& r);

}  // namespace sofa::waterfall
