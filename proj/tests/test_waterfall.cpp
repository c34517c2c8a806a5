#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"
#include "sofa/waterfall.hpp"

using namespace sofa;
using ad::Tape;
using ad::Var;
using geom::Polyline;
using waterfall::Direction;

namespace {

Polyline make_line(std::initializer_list<std::pair<double, double>> pts) {
  Polyline l;
  for (const auto& [x, y] : pts) l.push_back({Var(x), Var(y)});
  return l;
}

// Brute force: every segment crossing the vertical line, pick the extreme one.
double brute_fall(const std::vector<Polyline>& curves, double x, Direction d) {
  bool any = false;
  double best = 0.0;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      const double x0 = c[i].x.value(), x1 = c[i + 1].x.value();
      const double y0 = c[i].y.value(), y1 = c[i + 1].y.value();
      if (x < std::min(x0, x1) || x > std::max(x0, x1) || x0 == x1) continue;
      const double y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
      if (!any || (d == Direction::down ? y > best : y < best)) best = y;
      any = true;
    }
  }
  return any ? best : (d == Direction::down ? 0.0 : 1.0);
}

}  // namespace

TEST(Waterfall, SourceAbscissaeAreCellMidpoints) {
  const auto xs = waterfall::source_abscissae(4, {0.0, 1.0});
  ASSERT_EQ(xs.size(), 4u);
  EXPECT_DOUBLE_EQ(xs[0], 0.125);
  EXPECT_DOUBLE_EQ(xs[3], 0.875);
}

TEST(Waterfall, TopmostAndBottommostCrossings) {
  const std::vector<Polyline> curves{make_line({{0, 0.2}, {1, 0.2}}), make_line({{0, 0.6}, {1, 0.6}})};
  const waterfall::WaterfallConfig cfg{10};
  const auto down = waterfall::fall(curves, cfg, Direction::down, {0.0, 1.0});
  const auto up = waterfall::fall(curves, cfg, Direction::up, {0.0, 1.0});
  for (std::size_t i = 0; i < down.size(); ++i) {
    EXPECT_DOUBLE_EQ(down.heights[i].value(), 0.6);
    EXPECT_DOUBLE_EQ(up.heights[i].value(), 0.2);
  }
}

TEST(Waterfall, FloorWithoutCrossing) {
  const std::vector<Polyline> curves{make_line({{0.0, 0.5}, {0.4, 0.5}})};
  const waterfall::WaterfallConfig cfg{10};
  const auto down = waterfall::fall(curves, cfg, Direction::down, {0.0, 1.0});
  const auto up = waterfall::fall(curves, cfg, Direction::up, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(down.heights[9].value(), 0.0);
  EXPECT_DOUBLE_EQ(up.heights[9].value(), 1.0);
  EXPECT_DOUBLE_EQ(down.heights[0].value(), 0.5);
}

TEST(Waterfall, VerticalSegmentUsesExtremeEndpoint) {
  // A vertical step exactly on a source abscissa.
  const std::vector<Polyline> curves{make_line({{0.0, 0.1}, {0.25, 0.1}, {0.25, 0.9}, {1.0, 0.9}})};
  const waterfall::WaterfallConfig cfg{2};
  const auto down = waterfall::fall(curves, cfg, Direction::down, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(down.heights[0].value(), 0.9);
}

TEST(Waterfall, MatchesBruteForceOnRandomCurves) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Polyline> curves;
    for (int c = 0; c < 4; ++c) {
      Polyline l;
      double x = rng.uniform(-1.5, 0.0);
      for (int k = 0; k < 30; ++k) {
        l.push_back({Var(x), Var(rng.uniform(-0.5, 1.5))});
        x += rng.uniform(-0.05, 0.15);  // occasional backtracking
      }
      curves.push_back(l);
    }
    const waterfall::WaterfallConfig cfg{997};
    for (auto d : {Direction::down, Direction::up}) {
      const auto prof = waterfall::fall(curves, cfg, d, {-1.0, 1.0});
      for (std::size_t i = 0; i < prof.size(); ++i) {
        ASSERT_NEAR(prof.heights[i].value(), brute_fall(curves, prof.x_coords[i], d), 1e-12);
      }
    }
  }
}

TEST(Waterfall, AreaBetweenMatchesShoelace) {
  // Convex polygon: lower and upper chains with a common x range.
  const std::vector<std::pair<double, double>> lower{{-1, 0.5}, {-0.5, 0.1}, {0.3, 0.0}, {1, 0.4}};
  const std::vector<std::pair<double, double>> upper{{-1, 0.5}, {-0.2, 0.95}, {0.6, 0.9}, {1, 0.4}};
  std::vector<std::pair<double, double>> poly = lower;
  for (auto it = upper.rbegin() + 1; it + 1 != upper.rend(); ++it) poly.push_back(*it);
  double shoelace = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    shoelace += a.first * b.second - b.first * a.second;
  }
  shoelace = std::fabs(shoelace) / 2;
  Polyline lo, hi;
  for (const auto& [x, y] : lower) lo.push_back({Var(x), Var(y)});
  for (const auto& [x, y] : upper) hi.push_back({Var(x), Var(y)});
  const waterfall::WaterfallConfig cfg{20000};
  const auto a = waterfall::area_between(waterfall::fall({lo}, cfg, Direction::down, {-1, 1}),
                                         waterfall::fall({hi}, cfg, Direction::up, {-1, 1}));
  EXPECT_NEAR(a.value(), shoelace, 1e-6);
}

TEST(Waterfall, AreaBetweenRejectsMismatchedProfiles) {
  const std::vector<Polyline> c{make_line({{0, 0.2}, {1, 0.2}})};
  const auto a = waterfall::fall(c, {10}, Direction::down, {0, 1});
  const auto b = waterfall::fall(c, {11}, Direction::up, {0, 1});
  EXPECT_THROW(waterfall::area_between(a, b), ShapeMismatch);
}

TEST(Waterfall, AreaGradientMatchesFiniteDifferences) {
  Rng rng(2);
  std::vector<double> lo_y, hi_y;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    lo_y.push_back(rng.uniform(0.0, 0.4));
    hi_y.push_back(rng.uniform(0.6, 1.0));
  }
  const waterfall::WaterfallConfig cfg{1000};
  const auto area_of = [&](const std::vector<double>& a, const std::vector<double>& b, Tape* tape,
                           std::vector<Var>* leaves) {
    Polyline lo, hi;
    for (int i = 0; i < n; ++i) {
      const double x = -1.0 + 2.0 * i / (n - 1) + 0.013 * std::sin(i);
      Var ya = tape ? tape->variable(a[static_cast<std::size_t>(i)]) : Var(a[static_cast<std::size_t>(i)]);
      Var yb = tape ? tape->variable(b[static_cast<std::size_t>(i)]) : Var(b[static_cast<std::size_t>(i)]);
      if (leaves) {
        leaves->push_back(ya);
        leaves->push_back(yb);
      }
      lo.push_back({Var(x), ya});
      hi.push_back({Var(x), yb});
    }
    return waterfall::area_between(waterfall::fall({lo}, cfg, Direction::down, {-0.9, 0.9}),
                                   waterfall::fall({hi}, cfg, Direction::up, {-0.9, 0.9}));
  };
  Tape tape;
  std::vector<Var> leaves;
  const Var area = area_of(lo_y, hi_y, &tape, &leaves);
  const auto g = ad::gradient(area, leaves);
  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    for (int side = 0; side < 2; ++side) {
      auto a = lo_y, b = hi_y, c = lo_y, d = hi_y;
      (side ? b : a)[static_cast<std::size_t>(i)] += h;
      (side ? d : c)[static_cast<std::size_t>(i)] -= h;
      const double fd = (area_of(a, b, nullptr, nullptr).value() - area_of(c, d, nullptr, nullptr).value()) / (2 * h);
      const double an = g[static_cast<std::size_t>(2 * i + side)];
      EXPECT_LE(std::fabs(an - fd) / std::max(1e-3, std::fabs(fd)), 1e-5) << i << " " << side;
    }
  }
}

TEST(Waterfall, RotationAboutCornerIsQuarterDisc) {
  const auto m = geom::corner_rotation_movement(geom::TimeGrid::uniform(1000));
  const auto env = geom::compute_envelopes(m);
  const auto area = waterfall::compute_area(geom::assemble_fringes(m, env), {5000});
  EXPECT_NEAR(area.area.value(), M_PI / 2, 2e-3);
}

TEST(Waterfall, HammersleyRadiusOneIsTwoUnitSquares) {
  const auto m = geom::hammersley_movement(1.0, geom::TimeGrid::uniform(1000));
  const auto env = geom::compute_envelopes(m);
  const auto area = waterfall::compute_area(geom::assemble_fringes(m, env), {5000});
  EXPECT_NEAR(area.area.value(), 2.0, 2e-3);
}

TEST(Waterfall, ProfilesCsvHasOneRowPerSource) {
  const auto m = geom::hammersley_movement(0.5, geom::TimeGrid::uniform(100));
  const auto area = waterfall::compute_area(geom::assemble_fringes(m, geom::compute_envelopes(m)), {50});
  std::ostringstream os;
  waterfall::write_profiles_csv(os, area);
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 51);
  EXPECT_EQ(s.rfind("index,x,lower,upper\n", 0), 0u);
}
