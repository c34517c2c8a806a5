#pragma once

#include <iosfwd>
#include <optional>
#include <span>

#include "sofa/analysis.hpp"
#include "sofa/geom.hpp"
#include "sofa/waterfall.hpp"

// Deterministic SVG: fixed viewBoxes, coordinates printed with 6 decimals.
namespace sofa::render {

/// Sofa shape filled between the clamped profiles, with the corner
/// trajectory, the four envelopes and the pose at t = 1.
void sofa_svg(std::ostream& os, const geom::MovementSample& m, const std::optional<geom::EnvelopeSet>& env,
              const waterfall::AreaResult& area);

struct ConvergencePoint {
  int n = 0;
  double G = 0.0;
};

/// G against n (left) and G - reference on a log axis (right).
void convergence_svg(std::ostream& os, std::span<const ConvergencePoint> points, double reference);

/// Grey-scale heightmap of the grid, invalid points drawn red.
void landscape_svg(std::ostream& os, const analysis::LandscapeGrid& g);

}  // namespace sofa::render
