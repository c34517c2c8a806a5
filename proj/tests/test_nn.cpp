#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sofa/ad.hpp"
#include "sofa/error.hpp"
#include "sofa/nn.hpp"
#include "sofa/rng.hpp"

using namespace sofa;
using ad::Tape;
using ad::Var;

namespace {

// Straight-line reference evaluation that shares no code with the library.
double reference_mlp(const nn::MlpParams& p, double t) {
  std::vector<double> a{t};
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& W = p.weights[l];
    std::vector<double> z(static_cast<std::size_t>(W.rows()));
    for (int r = 0; r < W.rows(); ++r) {
      double s = p.biases[l](r);
      for (int c = 0; c < W.cols(); ++c) s += W(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = s;
    }
    if (l + 1 < p.weights.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = z;
  }
  return a[0];
}

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b))); }

}  // namespace

TEST(Tape, SquareAndAbs) {
  Tape tape;
  Var x = tape.variable(3.0);
  Var y = x * x;
  EXPECT_DOUBLE_EQ(ad::gradient(y, std::vector<Var>{x})[0], 6.0);

  Var a = tape.variable(-2.0);
  EXPECT_DOUBLE_EQ(ad::gradient(ad::abs(a), std::vector<Var>{a})[0], -1.0);
  Var z = tape.variable(0.0);
  EXPECT_DOUBLE_EQ(ad::gradient(ad::abs(z), std::vector<Var>{z})[0], 0.0);
  EXPECT_DOUBLE_EQ(ad::gradient(ad::relu(z), std::vector<Var>{z})[0], 0.0);
}

TEST(Tape, CompositeMatchesFiniteDifferences) {
  const auto f = [](const Var& x, const Var& y) {
    return ad::sin(x * y) + ad::exp(x / (y + 3.0)) - ad::sqrt(x * x + 1.0) * ad::tanh(y) + ad::log(y * y + 2.0);
  };
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const double x0 = rng.uniform(-1.5, 1.5), y0 = rng.uniform(-1.5, 1.5);
    Tape tape;
    Var x = tape.variable(x0), y = tape.variable(y0);
    const auto g = ad::gradient(f(x, y), std::vector<Var>{x, y});
    const double h = 1e-6;
    const double fx = (f(x0 + h, y0).value() - f(x0 - h, y0).value()) / (2 * h);
    const double fy = (f(x0, y0 + h).value() - f(x0, y0 - h).value()) / (2 * h);
    EXPECT_LT(rel_err(g[0], fx), 1e-7);
    EXPECT_LT(rel_err(g[1], fy), 1e-7);
  }
}

TEST(Tape, ConstantsStayOffTape) {
  Tape tape;
  Var c = Var(2.0) * Var(3.0) + 1.0;
  EXPECT_TRUE(c.is_constant());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, NonFiniteValueThrows) {
  Tape tape;
  Var x = tape.variable(-1.0);
  EXPECT_THROW(ad::log(x), NumericalError);
}

TEST(Mlp, IdentityAndZero) {
  auto p = nn::zero_params(std::vector<int>{1, 1}, nn::Activation::relu);
  p.weights[0](0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(nn::evaluate(p, 0.37), 0.37);
  const auto z = nn::zero_params(std::vector<int>{1, 8, 8, 1}, nn::Activation::relu);
  for (double t : {0.0, 0.3, 1.0}) EXPECT_EQ(nn::evaluate(z, t), 0.0);
}

TEST(Mlp, MatchesReferenceImplementation) {
  const auto p = nn::init_params(std::vector<int>{1, 32, 32, 1}, nn::Activation::relu, {2.0, 11});
  for (double t : {0.0, 0.3, 0.77, 1.0}) EXPECT_NEAR(nn::evaluate(p, t), reference_mlp(p, t), 1e-12);
  Tape tape;
  nn::TapedMlp net(p, tape);
  EXPECT_NEAR(nn::forward(net, tape.variable(0.3)).value(), reference_mlp(p, 0.3), 1e-12);
  nn::MlpBatch batch;
  const std::vector<double> ts{0.0, 0.3, 0.6};
  batch.forward(p, ts, true);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_NEAR(batch.values()(static_cast<int>(i)), reference_mlp(p, ts[i]), 1e-12);
  }
}

TEST(Mlp, InitRangesAndReproducibility) {
  const auto a = nn::init_params(std::vector<int>{1, 256, 1}, nn::Activation::relu, {1.0, 3});
  EXPECT_LE(a.weights[0].cwiseAbs().maxCoeff(), 1.0);
  EXPECT_GT(a.weights[0].cwiseAbs().maxCoeff(), 0.9);
  EXPECT_LE(a.weights[1].cwiseAbs().maxCoeff(), 1.0 / 16.0);
  EXPECT_GT(a.weights[1].cwiseAbs().maxCoeff(), 0.9 / 16.0);
  const auto b = nn::init_params(std::vector<int>{1, 256, 1}, nn::Activation::relu, {1.0, 3});
  EXPECT_EQ(a.flatten(), b.flatten());
  const auto c = nn::init_params(std::vector<int>{1, 256, 1}, nn::Activation::relu, {1.0, 4});
  EXPECT_NE(a.flatten(), c.flatten());
}

TEST(Mlp, ParameterGradientMatchesFiniteDifferences) {
  auto p = nn::init_params(std::vector<int>{1, 16, 16, 1}, nn::Activation::relu, {2.0, 7});
  const double t = 0.41;
  Tape tape;
  nn::TapedMlp net(p, tape);
  tape.backward(nn::forward(net, Var(t)));
  const auto g = net.gradient();
  auto flat = p.flatten();
  const double h = 1e-6;
  for (std::size_t i = 0; i < flat.size(); i += 7) {
    auto q = p;
    auto f = flat;
    f[i] += h;
    q.assign(f);
    const double up = nn::evaluate(q, t);
    f[i] -= 2 * h;
    q.assign(f);
    const double down = nn::evaluate(q, t);
    EXPECT_LT(rel_err(g[i], (up - down) / (2 * h)), 1e-6) << "parameter " << i;
  }
}

TEST(Mlp, BatchBackwardMatchesTape) {
  const auto p = nn::init_params(std::vector<int>{1, 12, 12, 1}, nn::Activation::tanh, {1.5, 2});
  const std::vector<double> ts{0.1, 0.5, 0.9};
  const std::vector<double> w{0.7, -1.3, 2.0};
  nn::MlpBatch batch;
  batch.forward(p, ts, false);
  const auto gb = batch.backward(p, w);
  Tape tape;
  nn::TapedMlp net(p, tape);
  std::vector<Var> outs;
  for (double t : ts) outs.push_back(nn::forward(net, Var(t)));
  tape.backward(ad::dot(w, outs));
  const auto gt = net.gradient();
  ASSERT_EQ(gb.size(), gt.size());
  for (std::size_t i = 0; i < gb.size(); ++i) EXPECT_NEAR(gb[i], gt[i], 1e-12);
}

TEST(Mlp, InputSlope) {
  auto lin = nn::zero_params(std::vector<int>{1, 1}, nn::Activation::relu);
  lin.weights[0](0, 0) = -2.5;
  Tape tape;
  EXPECT_DOUBLE_EQ(nn::input_slope(nn::TapedMlp(lin, tape), 0.4).value(), -2.5);

  // f(t) = relu(t - 0.5)
  auto kink = nn::zero_params(std::vector<int>{1, 1, 1}, nn::Activation::relu);
  kink.weights[0](0, 0) = 1.0;
  kink.biases[0](0) = -0.5;
  kink.weights[1](0, 0) = 1.0;
  nn::TapedMlp k(kink, tape);
  EXPECT_EQ(nn::input_slope(k, 0.2).value(), 0.0);
  EXPECT_EQ(nn::input_slope(k, 0.8).value(), 1.0);

  auto tanh_net = nn::zero_params(std::vector<int>{1, 2, 1}, nn::Activation::tanh);
  EXPECT_THROW(nn::input_slope(nn::TapedMlp(tanh_net, tape), 0.5), Unsupported);
}

TEST(Mlp, InputSlopeMatchesFiniteDifferencesAndIsPiecewiseConstant) {
  const auto p = nn::init_params(std::vector<int>{1, 64, 64, 1}, nn::Activation::relu, {2.0, 9});
  Tape tape;
  nn::TapedMlp net(p, tape);
  Rng rng(1);
  int checked = 0;
  for (int k = 0; k < 50 && checked < 10; ++k) {
    const double t = rng.uniform(0.05, 0.95), h = 1e-7;
    const double s = nn::input_slope(net, t).value();
    // Skip probes straddling a kink: the one-sided slopes would differ.
    const double left = (nn::evaluate(p, t) - nn::evaluate(p, t - h)) / h;
    const double right = (nn::evaluate(p, t + h) - nn::evaluate(p, t)) / h;
    if (rel_err(left, right) > 1e-6) continue;
    EXPECT_LT(rel_err(s, (nn::evaluate(p, t + h) - nn::evaluate(p, t - h)) / (2 * h)), 1e-8);
    EXPECT_EQ(s, nn::input_slope(net, t + 1e-12).value());
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Mlp, JsonRoundTripIsBitExact) {
  const auto p = nn::init_params(std::vector<int>{1, 8, 8, 1}, nn::Activation::softplus, {1.7, 21});
  const auto q = nn::mlp_from_json(nlohmann::json::parse(nn::to_json(p).dump()));
  EXPECT_EQ(p.flatten(), q.flatten());
  EXPECT_EQ(q.seed, 21u);
  EXPECT_EQ(q.scale, 1.7);
  EXPECT_EQ(q.activation, nn::Activation::softplus);
}

TEST(Mlp, RejectsBadShapes) {
  EXPECT_THROW(nn::zero_params(std::vector<int>{2, 4, 1}, nn::Activation::relu), ConfigError);
  EXPECT_THROW(nn::zero_params(std::vector<int>{1, 4, 3}, nn::Activation::relu), ConfigError);
}

TEST(Adam, FirstStepClosedForm) {
  // f(x) = x^2 at x = 1: g = 2, mhat = 2, vhat = 4, step = lr * 2 / (2 + eps).
  nn::Adam adam(1, {0.1, 0.9, 0.999, 1e-8, 2000});
  std::vector<double> x{1.0};
  const std::vector<double> g{2.0};
  adam.step(x, g);
  EXPECT_LT(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8));
}

TEST(Adam, HalvingSchedule) {
  nn::Adam adam(1, {1e-4, 0.9, 0.999, 1e-8, 2000});
  EXPECT_EQ(adam.lr_at(1999), 1e-4);
  EXPECT_EQ(adam.lr_at(2000), 5e-5);
  EXPECT_EQ(adam.lr_at(4000), 2.5e-5);
}

TEST(Adam, NonFiniteGradientThrows) {
  nn::Adam adam(1, {});
  std::vector<double> x{1.0};
  const std::vector<double> g{std::nan("")};
  EXPECT_THROW(adam.step(x, g), NumericalError);
}

TEST(Lbfgs, ConvexQuadratic) {
  // f(x) = 1/2 sum d_i (x_i - c_i)^2
  const int n = 10;
  std::vector<double> d(n), c(n);
  for (int i = 0; i < n; ++i) {
    d[static_cast<std::size_t>(i)] = 1.0 + i;
    c[static_cast<std::size_t>(i)] = std::sin(i + 1.0);
  }
  const nn::Objective f = [&](std::span<const double> x, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = x[i] - c[i];
      v += 0.5 * d[i] * r * r;
      g[i] = d[i] * r;
    }
    return v;
  };
  std::vector<double> x(n, 0.0);
  const auto r = nn::lbfgs_refine(x, f, {25});
  EXPECT_LE(r.iterations, 25);
  for (int i = 0; i < n; ++i) EXPECT_NEAR(x[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(i)], 1e-10);
}

TEST(Rng, SplitStreamsAreIndependentAndDeterministic) {
  Rng a(42), b(42);
  EXPECT_EQ(a.next(), b.next());
  Rng s1 = Rng(42).split(1), s2 = Rng(42).split(2), s1b = Rng(42).split(1);
  const auto v1 = s1.next();
  EXPECT_EQ(v1, s1b.next());
  EXPECT_NE(v1, s2.next());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
