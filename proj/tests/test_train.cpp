#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"
#include "sofa/train.hpp"

using namespace sofa;
using namespace sofa::train;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 20;
  c.architecture = {1, 32, 32, 1};
  c.n_time = 80;
  c.n_sources = 400;
  c.lr = 1e-3;
  return c;
}

// [1, n, 1] ReLU net interpolating f linearly between the grid points.
nn::MlpParams interpolating_net(const std::function<double(double)>& f, const geom::TimeGrid& g) {
  const std::size_t n = g.size() - 1;
  auto p = nn::zero_params(std::vector<int>{1, static_cast<int>(n), 1}, nn::Activation::relu);
  double prev_slope = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double slope = (f(g[j + 1]) - f(g[j])) / (g[j + 1] - g[j]);
    p.weights[0](static_cast<int>(j), 0) = 1.0;
    p.biases[0](static_cast<int>(j)) = -g[j];
    p.weights[1](0, static_cast<int>(j)) = slope - prev_slope;
    prev_slope = slope;
  }
  p.biases[1](0) = f(0.0);
  return p;
}

}  // namespace

TEST(Train, ThetaStar) { EXPECT_NEAR(kThetaStar * 180 / M_PI, 81.2, 0.05); }

TEST(Train, ZeroNetworksFallBackToPenalty) {
  auto c = small_config();
  auto m = make_model(c);
  for (auto& net : m.nets) net = nn::zero_params(c.architecture, c.activation);
  const auto v = loss_only(m, {c.n_sources});
  EXPECT_TRUE(v.degenerate);
  EXPECT_EQ(v.area, 0.0);
  EXPECT_DOUBLE_EQ(v.total, kThetaStar);
}

TEST(Train, PenaltyArithmetic) {
  ad::Tape tape;
  const ad::Var area = tape.variable(2.0);
  const ad::Var alpha_end = tape.variable(kThetaStar - 0.01);
  const ad::Var total = ad::relu(kThetaStar - alpha_end) - area;
  EXPECT_NEAR(total.value(), -2.0 + 0.01, 1e-15);
  const ad::Var satisfied = ad::relu(kThetaStar - tape.variable(1.6)) - area;
  EXPECT_DOUBLE_EQ(satisfied.value(), -2.0);
}

TEST(Train, RiggedNetworksReproduceHammersley) {
  const double r = 2.0 / M_PI;
  auto c = small_config();
  c.n_time = 400;
  c.n_sources = 4000;
  ConstrainedMovementModel m = make_model(c);
  m.nets[kXp] = interpolating_net([&](double t) { return r * (1 - std::cos(M_PI * t)); }, m.grid);
  m.nets[kYp] = interpolating_net([&](double t) { return r * std::sin(M_PI * t); }, m.grid);
  m.nets[kAlpha] = interpolating_net([](double t) { return t * M_PI / 2; }, m.grid);
  const auto v = loss_only(m, {c.n_sources});
  EXPECT_NEAR(v.area, M_PI / 2 + 2 / M_PI, 2e-3);
  EXPECT_EQ(v.penalty, 0.0);
  EXPECT_NEAR(v.total, -v.area, 0.0);
}

TEST(Train, ConstraintsHoldByConstruction) {
  auto c = small_config();
  const auto res = train::train(c);
  for (const auto* m : {&res.final_model, &res.checkpoint}) {
    ad::Tape tape;
    const auto ev = evaluate(*m, {c.n_sources}, tape);
    EXPECT_EQ(ev.movement.x_p[0].value(), 0.0);
    EXPECT_EQ(ev.movement.y_p[0].value(), 0.0);
    EXPECT_EQ(ev.movement.alpha[0].value(), 0.0);
    for (std::size_t i = 0; i < ev.movement.size(); ++i) {
      EXPECT_LE(ev.movement.x_p[i].value(), 0.0);
      EXPECT_GE(ev.movement.y_p[i].value(), 0.0);
      EXPECT_GE(ev.movement.alpha[i].value(), 0.0);
    }
  }
}

TEST(Train, HistoryAndDeterminism) {
  auto c = small_config();
  const auto a = train::train(c);
  const auto b = train::train(c);
  ASSERT_EQ(a.history.size(), static_cast<std::size_t>(c.epochs));
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].area, b.history[i].area);
    EXPECT_EQ(a.history[i].penalty, b.history[i].penalty);
  }
  EXPECT_EQ(a.final_model.flatten(), b.final_model.flatten());
  double feasible_max = 0.0;
  for (const auto& e : a.history) {
    if (e.penalty == 0.0 && !e.degenerate) feasible_max = std::max(feasible_max, e.area);
  }
  EXPECT_GE(a.best_area, feasible_max);
}

TEST(Train, VanishedRunStopsEarly) {
  auto c = small_config();
  c.vanish_area = 100.0;
  c.vanish_epochs = 5;
  const auto res = train::train(c);
  EXPECT_TRUE(res.vanished);
  EXPECT_EQ(res.history.size(), 5u);
}

TEST(Train, LossGradientMatchesFiniteDifferences) {
  for (auto backend : {geom::DerivativeBackend::grid_fd, geom::DerivativeBackend::exact_slope}) {
    auto c = small_config();
    c.epochs = 60;
    c.backend = backend;
    const auto mid = train::train(c).final_model;
    const waterfall::WaterfallConfig w{c.n_sources};
    std::vector<double> g;
    loss_and_gradient(mid, w, g);
    const auto p0 = mid.flatten();
    const auto loss_at = [&](const std::vector<double>& p) {
      auto m = mid;
      m.assign(p);
      return loss_only(m, w).total;
    };
    const auto central = [&](std::size_t i, double h) {
      auto up = p0, dn = p0;
      up[i] += h;
      dn[i] -= h;
      return (loss_at(up) - loss_at(dn)) / (2 * h);
    };
    Rng rng(31);
    int checked = 0;
    for (int attempt = 0; attempt < 400 && checked < 10; ++attempt) {
      const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(p0.size()));
      if (std::fabs(g[i]) < 1e-4) continue;
      const double fd = central(i, 1e-6);
      // Probes whose step crosses a kink or a selection switch disagree across step sizes.
      if (std::fabs(fd - central(i, 2.5e-7)) > 1e-7 * std::max(1.0, std::fabs(fd))) continue;
      EXPECT_LE(std::fabs(g[i] - fd) / std::fabs(fd), 1e-5) << "coordinate " << i;
      ++checked;
    }
    EXPECT_EQ(checked, 10);
  }
}

TEST(Train, CheckpointRoundTripIsBitExact) {
  auto c = small_config();
  c.epochs = 5;
  const auto res = train::train(c);
  const auto j = nlohmann::json::parse(checkpoint_to_json(res.checkpoint).dump());
  const auto back = checkpoint_from_json(j);
  EXPECT_EQ(back.flatten(), res.checkpoint.flatten());
  EXPECT_EQ(loss_only(back, {c.n_sources}).area, loss_only(res.checkpoint, {c.n_sources}).area);
  EXPECT_EQ(j.at("alpha").at("s").get<double>(), c.scales.alpha);
}

TEST(Train, ConfigJson) {
  TrainConfig c;
  c.seed = 9;
  c.activation = nn::Activation::tanh;
  c.scales.alpha = 4.0;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.activation, nn::Activation::tanh);
  EXPECT_EQ(back.scales.alpha, 4.0);
  EXPECT_EQ(to_json(c).at("precision"), "double");
  EXPECT_THROW(train_config_from_json({{"precision", "float"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"backend", "magic"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"lr", -1.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"epochs", "many"}}), ConfigError);
}

TEST(Train, CoverageGrowsWithScale) {
  const std::vector<int> sizes{1, 256, 256, 1};
  const std::vector<double> scales{1.0, 4.0, 8.0};
  const auto rows = coverage_sweep(sizes, nn::Activation::relu, scales, 100, 200);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LT(rows[0].p95, rows[1].p95);
  EXPECT_LT(rows[1].p95, rows[2].p95);
  const auto s = smallest_covering_scale(rows, M_PI / 2);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(*s, 4.0);
}
