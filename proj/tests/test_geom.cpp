#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/geom.hpp"
#include "sofa/rng.hpp"

using namespace sofa;
using ad::Tape;
using ad::Var;

namespace {

struct Line {
  double px, py, dx, dy;  // point and direction
};

std::array<double, 2> intersect_lines(const Line& a, const Line& b) {
  const double det = a.dx * (-b.dy) - a.dy * (-b.dx);
  const double rx = b.px - a.px, ry = b.py - a.py;
  const double s = (rx * (-b.dy) - ry * (-b.dx)) / det;
  return {a.px + s * a.dx, a.py + s * a.dy};
}

// Hammersley movement written out independently of the library.
struct Hammersley {
  double r;
  double alpha(double t) const { return t * M_PI / 2; }
  double xp(double t) const { return -r * (1 - std::cos(2 * alpha(t))); }
  double yp(double t) const { return r * std::sin(2 * alpha(t)); }

  // Wall lines at time t: 0 inner horizontal, 1 inner vertical, 2 outer horizontal, 3 outer vertical.
  Line wall(int which, double t) const {
    const double a = alpha(t), c = std::cos(a), s = std::sin(a);
    switch (which) {
      case 0: return {xp(t), yp(t), c, s};
      case 1: return {xp(t), yp(t), -s, c};
      case 2: return {xp(t) - s, yp(t) + c, c, s};
      default: return {xp(t) + c, yp(t) + s, -s, c};
    }
  }
};

bool in_corridor(double x, double y, double alpha, double x_p, double y_p, bool exit_arm) {
  const double c = std::cos(alpha), s = std::sin(alpha);
  const double xc = (x - x_p) * c + (y - y_p) * s;
  const double yc = -(x - x_p) * s + (y - y_p) * c;
  const bool upright = xc >= 0 && xc <= 1 && yc <= 1;
  const bool level = xc <= 1 && yc >= 0 && yc <= 1;
  return upright || (!exit_arm && level);
}

geom::MovementSample leaf_sample(const std::array<std::vector<double>, 6>& v, const geom::TimeGrid& g, Tape& tape) {
  geom::MovementSample m;
  m.grid = g;
  std::array<std::vector<Var>*, 6> dst{&m.x_p, &m.y_p, &m.alpha, &m.dx_p, &m.dy_p, &m.dalpha};
  for (std::size_t c = 0; c < 6; ++c) {
    for (double x : v[c]) dst[c]->push_back(tape.variable(x));
  }
  return m;
}

}  // namespace

TEST(TimeGrid, UniformEndpoints) {
  const auto g = geom::TimeGrid::uniform(5);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[4], 1.0);
  EXPECT_THROW(geom::TimeGrid(std::vector<double>{0.0, 0.5, 0.4, 1.0}), ConfigError);
}

TEST(Movement, InitialConditionsEnforced) {
  auto m = geom::corner_rotation_movement(geom::TimeGrid::uniform(10));
  EXPECT_NO_THROW(m.validate());
  m.alpha[0] = Var(0.1);
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Movement, GridDerivativeOfQuadratic) {
  const auto g = geom::TimeGrid::uniform(101);
  std::vector<Var> v;
  for (std::size_t i = 0; i < g.size(); ++i) v.emplace_back(g[i] * g[i]);
  const auto d = geom::grid_derivative(v, g);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) EXPECT_NEAR(d[i].value(), 2 * g[i], 1e-12);
}

TEST(Envelope, MatchesNeighbouringLineIntersections) {
  const Hammersley h{0.45};
  const auto grid = geom::TimeGrid::uniform(41);
  const auto m = geom::hammersley_movement(h.r, grid);
  const auto env = geom::compute_envelopes(m);
  const std::array<const geom::MaskedPolyline*, 4> curves{&env.e_ih, &env.e_iv, &env.e_oh, &env.e_ov};
  const double d = 1e-5;
  for (std::size_t i = 1; i + 1 < grid.size(); i += 5) {
    const double t = grid[i];
    for (int w = 0; w < 4; ++w) {
      const auto p = intersect_lines(h.wall(w, t - d), h.wall(w, t + d));
      const auto& q = curves[static_cast<std::size_t>(w)]->points[i];
      ASSERT_TRUE(curves[static_cast<std::size_t>(w)]->valid[i]);
      EXPECT_NEAR(q.x.value(), p[0], 1e-7) << "wall " << w << " t " << t;
      EXPECT_NEAR(q.y.value(), p[1], 1e-7) << "wall " << w << " t " << t;
    }
  }
}

TEST(Envelope, PureTranslationIsUndefined) {
  const auto grid = geom::TimeGrid::uniform(10);
  geom::MovementSample m;
  m.grid = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m.x_p.emplace_back(-grid[i]);
    m.y_p.emplace_back(0.0);
    m.alpha.emplace_back(0.0);
  }
  m.dx_p = geom::grid_derivative(m.x_p, grid);
  m.dy_p = geom::grid_derivative(m.y_p, grid);
  m.dalpha = geom::grid_derivative(m.alpha, grid);
  EXPECT_THROW(geom::compute_envelopes(m), EnvelopeUndefined);
}

TEST(Envelope, SlowRotationSamplesAreMasked) {
  const auto grid = geom::TimeGrid::uniform(11);
  auto m = geom::corner_rotation_movement(grid);
  m.dalpha[5] = Var(1e-9);
  const auto env = geom::compute_envelopes(m, 1e-6);
  EXPECT_FALSE(env.e_ih.valid[5]);
  EXPECT_TRUE(env.e_ih.valid[4]);
  EXPECT_EQ(env.e_ih.pieces().size(), 2u);
}

TEST(Envelope, TangencyBeyondTheWallIsMasked) {
  const auto grid = geom::TimeGrid::uniform(3);
  auto m = geom::corner_rotation_movement(grid);
  // Sliding along the corridor axis while turning: the tangency points sit at
  // x_c = sin(alpha) > 0 and y_c = cos(alpha) > 0, past both inner walls.
  const double a = m.alpha[1].value();
  m.dx_p[1] = Var(1.0);
  m.dy_p[1] = Var(0.0);
  m.dalpha[1] = Var(1.0);
  const auto env = geom::compute_envelopes(m);
  ASSERT_LT(std::sin(a), 1.0);
  EXPECT_FALSE(env.e_ih.valid[1]);
  EXPECT_FALSE(env.e_iv.valid[1]);
  EXPECT_TRUE(env.e_oh.valid[1]);
  EXPECT_TRUE(env.e_ov.valid[1]);
  EXPECT_TRUE(env.e_ih.valid[0]);
  m.dx_p[1] = Var(3.0);
  const auto far = geom::compute_envelopes(m);
  EXPECT_FALSE(far.e_oh.valid[1]);
  EXPECT_FALSE(far.e_ov.valid[1]);
}

TEST(Envelope, GradientMatchesFiniteDifferences) {
  const auto grid = geom::TimeGrid::uniform(30);
  const auto base = geom::hammersley_movement(0.55, grid);
  std::array<std::vector<double>, 6> vals;
  const std::array<const std::vector<Var>*, 6> src{&base.x_p, &base.y_p, &base.alpha,
                                                   &base.dx_p, &base.dy_p, &base.dalpha};
  for (std::size_t c = 0; c < 6; ++c) {
    for (const auto& v : *src[c]) vals[c].push_back(v.value());
  }
  Rng rng(4);
  std::vector<double> w(grid.size() * 8);
  for (double& x : w) x = rng.uniform(-1, 1);
  const auto objective = [&](const geom::MovementSample& m) {
    const auto e = geom::compute_envelopes(m);
    std::vector<Var> terms;
    std::size_t k = 0;
    for (const auto* c : {&e.e_ih, &e.e_iv, &e.e_oh, &e.e_ov}) {
      for (const auto& p : c->points) {
        terms.push_back(w[k++] * p.x);
        terms.push_back(w[k++] * p.y);
      }
    }
    return ad::sum(terms);
  };
  Tape tape;
  const auto m = leaf_sample(vals, grid, tape);
  const Var out = objective(m);
  tape.backward(out);
  const std::array<const std::vector<Var>*, 6> leaves{&m.x_p, &m.y_p, &m.alpha, &m.dx_p, &m.dy_p, &m.dalpha};
  for (int probe = 0; probe < 30; ++probe) {
    const auto c = static_cast<std::size_t>(rng.uniform() * 6);
    const auto i = 1 + static_cast<std::size_t>(rng.uniform() * (grid.size() - 1));
    if (c == 2 && i == 0) continue;
    const double h = 1e-6;
    auto up = vals, dn = vals;
    up[c][i] += h;
    dn[c][i] -= h;
    Tape t1, t2;
    const double fd = (objective(leaf_sample(up, grid, t1)).value() - objective(leaf_sample(dn, grid, t2)).value()) /
                      (2 * h);
    const double g = tape.adjoint((*leaves[c])[i]);
    EXPECT_LE(std::fabs(g - fd) / std::max(1.0, std::fabs(fd)), 1e-5) << "channel " << c << " sample " << i;
  }
}

TEST(Corridor, ColumnsMatchPointMembership) {
  Rng rng(8);
  for (int k = 0; k < 40; ++k) {
    const double alpha = rng.uniform(0.05, 1.7);
    const double x_p = rng.uniform(-1.0, 0.2), y_p = rng.uniform(-0.2, 0.8);
    const bool exit_arm = k % 3 == 0;
    geom::Pose pose{Var(x_p), Var(y_p), Var(alpha), exit_arm};
    const auto frame = geom::pose_frame(pose, 0);
    for (int j = 0; j < 20; ++j) {
      const double x = rng.uniform(-3.0, 2.0);
      const auto col = geom::corridor_column(frame, x);
      for (int s = 0; s <= 200; ++s) {
        const double y = s / 200.0;
        bool in_col = false, near_edge = false;
        for (const auto& iv : col.items) {
          in_col = in_col || (y >= iv.lo.value && y <= iv.hi.value);
          near_edge = near_edge || std::fabs(y - iv.lo.value) < 1e-9 || std::fabs(y - iv.hi.value) < 1e-9;
        }
        if (near_edge) continue;
        EXPECT_EQ(in_col, in_corridor(x, y, alpha, x_p, y_p, exit_arm))
            << "alpha " << alpha << " x " << x << " y " << y;
      }
    }
  }
}

TEST(Corridor, CachedPairAgreesWithColumn) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const geom::CorridorFrame f{rng.uniform(0.0, 1.6), rng.uniform(-1, 1), rng.uniform(-1, 1), 3, k % 2 == 0};
    const double x = rng.uniform(-3, 3);
    const auto col = geom::corridor_column(f, x);
    const auto pair = geom::corridor_pair(geom::CorridorCache(f), x);
    ASSERT_EQ(static_cast<std::size_t>(pair.count), col.items.size());
    for (int i = 0; i < pair.count; ++i) {
      EXPECT_DOUBLE_EQ(pair.items[static_cast<std::size_t>(i)].lo.value, col.items[static_cast<std::size_t>(i)].lo.value);
      EXPECT_DOUBLE_EQ(pair.items[static_cast<std::size_t>(i)].hi.value, col.items[static_cast<std::size_t>(i)].hi.value);
    }
  }
}

TEST(Corridor, EndpointDerivativesMatchFiniteDifferences) {
  Rng rng(12);
  for (int k = 0; k < 50; ++k) {
    const double alpha = rng.uniform(0.1, 1.5), u1 = rng.uniform(-1, 0.5), u2 = rng.uniform(-0.5, 0.5);
    const double x = rng.uniform(-2, 1);
    const auto col = geom::corridor_column({alpha, u1, u2, 0}, x);
    for (std::size_t i = 0; i < col.items.size(); ++i) {
      for (const auto* b : {&col.items[i].lo, &col.items[i].hi}) {
        if (b->line == geom::BoundLine::constant) continue;
        const auto d = geom::center_derivative(*b, alpha);
        const double h = 1e-7;
        const auto c1 = geom::corridor_column({alpha, u1 + h, u2, 0}, x);
        const auto c2 = geom::corridor_column({alpha, u1, u2 + h, 0}, x);
        if (c1.items.size() != col.items.size() || c2.items.size() != col.items.size()) continue;
        const double v = b->value;
        const double v1 = b == &col.items[i].lo ? c1.items[i].lo.value : c1.items[i].hi.value;
        const double v2 = b == &col.items[i].lo ? c2.items[i].lo.value : c2.items[i].hi.value;
        EXPECT_NEAR(d[0], (v1 - v) / h, 1e-5);
        EXPECT_NEAR(d[1], (v2 - v) / h, 1e-5);
        Tape tape;
        const Var U1 = tape.variable(u1), U2 = tape.variable(u2);
        const Var m = geom::materialize(*b, x, U1, U2, Var(alpha));
        EXPECT_NEAR(m.value(), v, 1e-12);
        const auto g = ad::gradient(m, std::vector<Var>{U1, U2});
        EXPECT_NEAR(g[0], d[0], 1e-12);
        EXPECT_NEAR(g[1], d[1], 1e-12);
      }
    }
  }
}

TEST(Corridor, PoseCenterMapsCornerToOrigin) {
  const double x_p = -0.3, y_p = 0.4, alpha = 0.7;
  const auto u = geom::pose_center(Var(x_p), Var(y_p), Var(alpha));
  EXPECT_NEAR(u[0].value(), x_p * std::cos(alpha) + y_p * std::sin(alpha), 1e-15);
  EXPECT_NEAR(u[1].value(), y_p * std::cos(alpha) - x_p * std::sin(alpha), 1e-15);
}

TEST(Fringes, LastPoseIsExitArm) {
  const auto m = geom::hammersley_movement(0.5, geom::TimeGrid::uniform(50));
  const auto env = geom::compute_envelopes(m);
  const auto f = geom::assemble_fringes(m, env);
  ASSERT_EQ(f.poses.size(), 50u);
  EXPECT_TRUE(f.poses.back().exit_arm);
  EXPECT_FALSE(f.poses.front().exit_arm);
  EXPECT_LT(f.x_window[0], f.x_window[1]);
  EXPECT_GE(f.x_window[0], geom::kMinWindowX);
}

TEST(Fringes, ClipPolyline) {
  const geom::Polyline line{{Var(-2.0), Var(0.0)}, {Var(0.0), Var(1.0)}, {Var(2.0), Var(0.0)}};
  const auto parts = geom::clip_polyline(line, -1.0, 1.0);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_DOUBLE_EQ(parts[0].front().x.value(), -1.0);
  EXPECT_DOUBLE_EQ(parts[0].front().y.value(), 0.5);
  EXPECT_DOUBLE_EQ(parts[0].back().x.value(), 1.0);
}

TEST(Fringes, ClipPolylineWithVerticesOnTheEdges) {
  const geom::Polyline line{{Var(-2.0), Var(0.0)}, {Var(-1.0), Var(0.5)}, {Var(1.0), Var(0.5)}, {Var(3.0), Var(0.0)}};
  const auto parts = geom::clip_polyline(line, -1.0, 1.0);
  ASSERT_EQ(parts.size(), 1u);
  ASSERT_EQ(parts[0].size(), 2u);
  EXPECT_DOUBLE_EQ(parts[0].front().x.value(), -1.0);
  EXPECT_DOUBLE_EQ(parts[0].back().x.value(), 1.0);
}
