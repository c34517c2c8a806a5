#include "sofa/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"

namespace sofa::analysis {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double s, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

void normalize(std::vector<double>& v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw NumericalError("zero vector cannot be normalized");
  for (double& x : v) x /= n;
}

}  // namespace

std::vector<double> hessian_vector(const nn::Objective& f, std::span<const double> params, std::span<const double> v) {
  const double theta = norm(params);
  const double vn = norm(v);
  if (!(vn > 0.0)) throw ConfigError("hessian_vector: zero direction");
  const double eps = 1e-4 * (theta > 0.0 ? theta : 1.0) / vn;
  std::vector<double> plus(params.begin(), params.end()), minus(params.begin(), params.end());
  axpy(eps, v, plus);
  axpy(-eps, v, minus);
  std::vector<double> gp(params.size()), gm(params.size());
  f(plus, gp);
  f(minus, gm);
  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = (gp[i] - gm[i]) / (2.0 * eps);
  return gp;
}

EigenResult top_hessian_eigvecs(const nn::Objective& f, std::span<const double> params, const PowerConfig& cfg) {
  if (cfg.count < 1 || cfg.iters < 1) throw ConfigError("power iteration: count and iters must be >= 1");
  EigenResult res;
  res.converged = true;
  Rng rng(cfg.seed);
  const std::size_t n = params.size();
  for (int e = 0; e < cfg.count; ++e) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    const auto deflate = [&](std::vector<double>& w) {
      for (const auto& d : res.directions) axpy(-dot(d, w), d, w);
    };
    // H restricted to the complement of the directions already found.
    const auto apply = [&](std::vector<double>& w) {
      deflate(w);
      auto hw = hessian_vector(f, params, w);
      deflate(hw);
      return hw;
    };
    deflate(v);
    normalize(v);
    double lambda = 0.0;
    bool ok = false;
    std::vector<double> hv;
    for (int it = 0; it < cfg.iters; ++it) {
      hv = apply(v);
      const double next = dot(v, hv);
      if (!std::isfinite(next)) throw NumericalError("power iteration: non-finite Hessian product");
      const bool settled = it > 0 && std::fabs(next - lambda) <= cfg.tol * std::max(1.0, std::fabs(next));
      lambda = next;
      if (norm(hv) == 0.0) {
        ok = true;
        break;
      }
      v = hv;
      normalize(v);
      if (settled) {
        ok = true;
        break;
      }
    }
    hv = apply(v);
    lambda = dot(v, hv);
    axpy(-lambda, v, hv);
    res.residuals.push_back(norm(hv));
    res.eigenvalues.push_back(lambda);
    res.directions.push_back(std::move(v));
    res.converged = res.converged && ok;
  }
  return res;
}

LandscapeGrid landscape(const ValueFn& f, std::span<const double> params, std::span<const double> d1,
                        std::span<const double> d2, const LandscapeSpec& spec) {
  if (spec.resolution < 3 || spec.resolution % 2 == 0) throw ConfigError("landscape: resolution must be odd and >= 3");
  if (!(spec.extent > 0.0)) throw ConfigError("landscape: extent must be positive");
  if (d1.size() != params.size() || d2.size() != params.size()) throw ShapeMismatch("landscape: direction size");
  LandscapeGrid g;
  g.extent = spec.extent;
  g.resolution = spec.resolution;
  g.directions[0].assign(d1.begin(), d1.end());
  normalize(g.directions[0]);
  g.directions[1].assign(d2.begin(), d2.end());
  axpy(-dot(g.directions[0], g.directions[1]), g.directions[0], g.directions[1]);
  normalize(g.directions[1]);

  const int res = spec.resolution;
  for (int i = 0; i < res; ++i) g.coords.push_back(spec.extent * (2 * i - (res - 1)) / (res - 1));
  g.values.assign(static_cast<std::size_t>(res * res), std::nan(""));
  g.valid.assign(static_cast<std::size_t>(res * res), 0);
  std::vector<double> p(params.size());
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const double a = g.coords[static_cast<std::size_t>(i)];
      const double b = g.coords[static_cast<std::size_t>(j)];
      if (a == 0.0 && b == 0.0) {
        p.assign(params.begin(), params.end());
      } else {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = params[k] + a * g.directions[0][k] + b * g.directions[1][k];
      }
      const auto idx = static_cast<std::size_t>(i * res + j);
      try {
        const double v = f(p);
        if (std::isfinite(v)) {
          g.values[idx] = v;
          g.valid[idx] = 1;
        }
      } catch (const Error&) {
        // left invalid
      }
    }
  }
  g.center_value = g.at(res / 2, res / 2);
  return g;
}

PeakReport peak_report(const LandscapeGrid& g, double basin_radius) {
  PeakReport r;
  const int res = g.resolution;
  const int c = res / 2;
  r.center_value = g.at(c, c);
  r.max_value = -std::numeric_limits<double>::infinity();
  const auto valid = [&](int i, int j) { return g.valid[static_cast<std::size_t>(i * res + j)] != 0; };
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      if (!valid(i, j)) continue;
      const double v = g.at(i, j);
      r.max_value = std::max(r.max_value, v);
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int a = i + di, b = j + dj;
          if ((di == 0 && dj == 0) || a < 0 || b < 0 || a >= res || b >= res || !valid(a, b)) continue;
          // Plateaus count once, at their first grid index.
          const double w = g.at(a, b);
          if (w > v || (w == v && a * res + b < i * res + j)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      ++r.local_maxima;
      const double da = g.coords[static_cast<std::size_t>(i)];
      const double db = g.coords[static_cast<std::size_t>(j)];
      if (std::hypot(da, db) > basin_radius) {
        ++r.outer_maxima;
        r.outer_peak = std::max(r.outer_peak, v);
      }
    }
  }
  r.center_is_max = valid(c, c) && r.center_value >= r.max_value;
  return r;
}

void write_landscape_csv(std::ostream& os, const LandscapeGrid& g) {
  os << "a,b,value\n" << std::setprecision(17);
  for (int i = 0; i < g.resolution; ++i) {
    for (int j = 0; j < g.resolution; ++j) {
      os << g.coords[static_cast<std::size_t>(i)] << ',' << g.coords[static_cast<std::size_t>(j)] << ',';
      if (g.valid[static_cast<std::size_t>(i * g.resolution + j)]) {
        os << g.at(i, j);
      }
      os << '\n';
    }
  }
}

}  // namespace sofa::analysis
