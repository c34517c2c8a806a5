#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "sofa/error.hpp"
#include "sofa/nn.hpp"

namespace sofa::nn {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct Probe {
  double alpha;
  double value;
  double slope;  // directional derivative along the search direction
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), safeguarded
// into the interior of [a, b].
double cubic_step(const Probe& a, const Probe& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  double x;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    x = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
  } else {
    x = 0.5 * (a.alpha + b.alpha);
  }
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double pad = 0.1 * (hi - lo);
  if (!std::isfinite(x) || x < lo + pad || x > hi - pad) x = 0.5 * (lo + hi);
  return x;
}

class LineSearch {
 public:
  LineSearch(const Objective& f, std::span<const double> x0, std::span<const double> dir, const LbfgsConfig& cfg)
      : f_(f), x0_(x0), dir_(dir), cfg_(cfg), x_(x0.size()), g_(x0.size()) {}

  Probe eval(double alpha) {
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] = x0_[i] + alpha * dir_[i];
    const double v = f_(x_, g_);
    return {alpha, v, dot(g_, dir_)};
  }

  // Strong Wolfe search; on success x_/g_ hold the accepted point.
  bool run(const Probe& start, double alpha0, Probe& out) {
    Probe prev = start;
    double alpha = alpha0;
    for (int it = 0; it < cfg_.max_line_search; ++it) {
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.value) || cur.value > start.value + cfg_.c1 * alpha * start.slope ||
          (it > 0 && cur.value >= prev.value)) {
        return zoom(start, prev, cur, out);
      }
      if (std::fabs(cur.slope) <= -cfg_.c2 * start.slope) {
        out = cur;
        return true;
      }
      if (cur.slope >= 0.0) return zoom(start, cur, prev, out);
      prev = cur;
      alpha *= 2.0;
    }
    return false;
  }

  std::span<const double> x() const { return x_; }
  std::span<const double> g() const { return g_; }

 private:
  bool zoom(const Probe& start, Probe lo, Probe hi, Probe& out) {
    for (int it = 0; it < cfg_.max_line_search; ++it) {
      const double alpha = std::isfinite(hi.value) ? cubic_step(lo, hi) : 0.5 * (lo.alpha + hi.alpha);
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.value) || cur.value > start.value + cfg_.c1 * alpha * start.slope ||
          cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::fabs(cur.slope) <= -cfg_.c2 * start.slope) {
          out = cur;
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = cur;
      }
      if (std::fabs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    // Accept the best sufficient-decrease point if the curvature test never passed.
    if (lo.alpha > 0.0 && lo.value < start.value) {
      out = eval(lo.alpha);
      return true;
    }
    return false;
  }

  const Objective& f_;
  std::span<const double> x0_;
  std::span<const double> dir_;
  const LbfgsConfig& cfg_;
  std::vector<double> x_;
  std::vector<double> g_;
};

}  // namespace

LbfgsResult lbfgs_refine(std::vector<double>& x, const Objective& f, const LbfgsConfig& cfg) {
  const std::size_t n = x.size();
  std::vector<double> g(n);
  LbfgsResult res;
  res.value = f(x, g);
  if (!std::isfinite(res.value)) throw NumericalError("lbfgs: non-finite objective at start");

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> hist;
  std::vector<double> dir(n), q(n), alpha_k(static_cast<std::size_t>(cfg.history));

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    res.grad_norm = std::sqrt(dot(g, g));
    if (res.grad_norm <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion: dir = -H g.
    q = g;
    for (std::size_t i = hist.size(); i-- > 0;) {
      const double a = hist[i].rho * dot(hist[i].s, q);
      alpha_k[i] = a;
      for (std::size_t j = 0; j < n; ++j) q[j] -= a * hist[i].y[j];
    }
    double gamma = 1.0;
    if (!hist.empty()) gamma = dot(hist.back().s, hist.back().y) / dot(hist.back().y, hist.back().y);
    for (std::size_t j = 0; j < n; ++j) q[j] *= gamma;
    for (std::size_t i = 0; i < hist.size(); ++i) {
      const double b = hist[i].rho * dot(hist[i].y, q);
      for (std::size_t j = 0; j < n; ++j) q[j] += hist[i].s[j] * (alpha_k[i] - b);
    }
    for (std::size_t j = 0; j < n; ++j) dir[j] = -q[j];

    double slope = dot(g, dir);
    if (slope >= 0.0) {
      // Lost descent; restart from steepest descent.
      hist.clear();
      for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j];
      slope = -res.grad_norm * res.grad_norm;
    }
    const double alpha0 = hist.empty() ? std::min(1.0, 1.0 / res.grad_norm) : 1.0;

    LineSearch ls(f, x, dir, cfg);
    Probe accepted{};
    if (!ls.run({0.0, res.value, slope}, alpha0, accepted)) break;

    Pair pr{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      pr.s[j] = ls.x()[j] - x[j];
      pr.y[j] = ls.g()[j] - g[j];
    }
    const double sy = dot(pr.s, pr.y);
    x.assign(ls.x().begin(), ls.x().end());
    g.assign(ls.g().begin(), ls.g().end());
    res.value = accepted.value;
    res.iterations = iter + 1;
    if (sy > 1e-300) {
      pr.rho = 1.0 / sy;
      hist.push_back(std::move(pr));
      if (static_cast<int>(hist.size()) > cfg.history) hist.pop_front();
    }
  }
  res.grad_norm = std::sqrt(dot(g, g));
  if (res.grad_norm <= cfg.grad_tol) res.converged = true;
  return res;
}

}  // namespace sofa::nn
