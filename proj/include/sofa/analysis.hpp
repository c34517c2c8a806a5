#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "sofa/nn.hpp"

namespace sofa::analysis {

struct EigenResult {
  std::vector<std::vector<double>> directions;  // unit length, mutually orthogonal
  std::vector<double> eigenvalues;
  std::vector<double> residuals;  // |Hv - lambda v|
  bool converged = false;
};

struct PowerConfig {
  int count = 2;
  int iters = 100;
  double tol = 1e-6;  // relative change of the eigenvalue estimate
  std::uint64_t seed = 0;
};

/// Dominant (largest magnitude) Hessian eigenpairs by power iteration with
/// deflation. Hessian-vector products come from central differences of the
/// gradient with step 1e-4 * |params| / |v|.
EigenResult top_hessian_eigvecs(const nn::Objective& f, std::span<const double> params, const PowerConfig& cfg = {});

/// One Hessian-vector product as used above.
std::vector<double> hessian_vector(const nn::Objective& f, std::span<const double> params, std::span<const double> v);

using ValueFn = std::function<double(std::span<const double>)>;

struct LandscapeSpec {
  double extent = 1.5;
  int resolution = 41;
};

/// values[i * resolution + j] = f(params + a_i d1 + b_j d2).
struct LandscapeGrid {
  std::array<std::vector<double>, 2> directions;
  double extent = 0.0;
  int resolution = 0;
  std::vector<double> coords;  // a_i, with the middle one exactly 0
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
  double center_value = 0.0;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i * resolution + j)]; }
};

/// Directions are orthonormalized (Gram-Schmidt) first. Failed evaluations are
/// recorded as invalid points rather than aborting the grid.
LandscapeGrid landscape(const ValueFn& f, std::span<const double> params, std::span<const double> d1,
                        std::span<const double> d2, const LandscapeSpec& spec = {});

struct PeakReport {
  bool center_is_max = false;
  int local_maxima = 0;
  /// Local maxima farther than the basin radius from the center.
  int outer_maxima = 0;
  /// Highest local maximum outside the basin, -inf when there is none.
  double outer_peak = -std::numeric_limits<double>::infinity();
  double center_value = 0.0;
  double max_value = 0.0;
  /// Center is the global max and nothing outside the basin reaches it.
  bool single_peak() const { return center_is_max && outer_peak < center_value; }
};

/// Local maxima over the 8-neighbourhood; `basin_radius` is in units of a, b.
PeakReport peak_report(const LandscapeGrid& g, double basin_radius = 1.0);

void write_landscape_csv(std::ostream& os, const LandscapeGrid& g);

}  // namespace sofa::analysis
