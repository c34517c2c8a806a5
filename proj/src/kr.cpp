#include "sofa/kr.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"

namespace sofa::kr {

using nlohmann::json;

namespace {

constexpr double kHalfPi = M_PI / 2;
// Tolerance for treating beta2 as pi/2, where the butterfly covers the strip.
constexpr double kRightAngleTol = 1e-15;
constexpr int kMaxInitDraws = 100;

}  // namespace

void AngleSequence::validate() const {
  if (alphas.empty()) throw ConfigError("angles: need at least one alpha");
  for (std::size_t j = 0; j < alphas.size(); ++j) {
    if (!(alphas[j] > 0.0) || alphas[j] > kHalfPi + 1e-12) throw ConfigError("angles: alpha outside (0, pi/2]");
    if (j > 0 && !(alphas[j] > alphas[j - 1])) throw ConfigError("angles: alphas must be strictly increasing");
  }
  if (!(alphas.back() <= beta1 + 1e-12 && beta1 <= beta2 && beta2 <= kHalfPi + 1e-12)) {
    throw ConfigError("angles: need alpha_k <= beta1 <= beta2 <= pi/2");
  }
}

AngleSequence AngleSequence::five_angles() {
  return {{std::asin(7.0 / 25), std::asin(33.0 / 65), std::asin(119.0 / 169), std::asin(56.0 / 65),
           std::asin(24.0 / 25)},
          kHalfPi,
          kHalfPi};
}

AngleSequence AngleSequence::five_angles_split() {
  return {{std::asin(7.0 / 25), std::asin(33.0 / 65), std::asin(119.0 / 169)},
          std::asin(56.0 / 65),
          std::asin(24.0 / 25)};
}

AngleSequence AngleSequence::gamma(int n, int k) {
  if (n < 3) throw ConfigError("gamma sequence: need n >= 3");
  if (k < 1 || n - k - 1 < 1) throw ConfigError("gamma sequence: need 1 <= k <= n - 2");
  const auto g = [n](int j) { return j == n ? kHalfPi : (static_cast<double>(j) / n) * kHalfPi; };
  AngleSequence a;
  for (int j = 1; j <= n - k - 1; ++j) a.alphas.push_back(g(j));
  a.beta1 = g(n - k);
  a.beta2 = g(n - k + 1);
  return a;
}

json to_json(const AngleSequence& a) { return json{{"alphas", a.alphas}, {"beta1", a.beta1}, {"beta2", a.beta2}}; }

std::array<double, 2> g_window(const AngleSequence& angles, std::span<const Center> centers, double margin) {
  if (centers.size() != angles.size()) throw ShapeMismatch("g: one center per angle required");
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const auto r = geom::corridor_x_range({angles.alphas[j], centers[j][0], centers[j][1], 0});
    lo = std::max(lo, r[0]);
    hi = std::min(hi, r[1]);
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw UnboundedRegion("g: region is unbounded in x; add an angle strictly inside (0, pi/2)");
  }
  if (!(lo < hi)) return geom::snap_window(lo - margin, lo + margin);
  return geom::snap_window(lo - margin, hi + margin);
}

namespace {

struct Piece {
  geom::Interval iv;
  double x;
};

// Column pieces of the region and its largest connected component.
struct Region {
  std::vector<Piece> pieces;
  std::vector<std::size_t> best;  // indices into pieces
  double value = 0.0;
  double reachable = 0.0;
  double dx = 0.0;
  std::array<double, 2> window{};
  int components = 0;
};

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

Region build_region(const AngleSequence& angles, std::span<const Center> centers, const GConfig& cfg) {
  angles.validate();
  if (cfg.n_sources < 2) throw ConfigError("g: n_sources must be >= 2");
  Region reg;
  reg.window = g_window(angles, centers, cfg.margin);
  const int n = cfg.n_sources;
  reg.dx = (reg.window[1] - reg.window[0]) / n;

  std::vector<geom::CorridorCache> frames;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    frames.emplace_back(geom::CorridorFrame{angles.alphas[j], centers[j][0], centers[j][1], static_cast<std::int32_t>(j)});
  }
  const bool butterfly = angles.beta2 < kHalfPi - kRightAngleTol;
  const geom::ButterflyCache bfly(angles.beta1, angles.beta2);

  std::vector<std::size_t> col_start(static_cast<std::size_t>(n) + 1, 0);
  geom::PieceSet cur, next;
  for (int i = 0; i < n; ++i) {
    const double x = reg.window[0] + (i + 0.5) * reg.dx;
    cur.count = 1;
    cur.items[0] = {{0.0, -1, geom::BoundLine::constant}, {1.0, -1, geom::BoundLine::constant}};
    if (butterfly) {
      geom::intersect_into(cur, geom::butterfly_pair(bfly, x), next);
      std::swap(cur, next);
    }
    for (const auto& fr : frames) {
      if (cur.count == 0) break;
      geom::intersect_into(cur, geom::corridor_pair(fr, x), next);
      std::swap(cur, next);
    }
    for (std::size_t k = 0; k < cur.count; ++k) {
      reg.pieces.push_back({cur.items[k], x});
      if (cur.items[k].lo.value <= 0.5 && 0.5 <= cur.items[k].hi.value) reg.reachable += cur.items[k].length() * reg.dx;
    }
    col_start[static_cast<std::size_t>(i) + 1] = reg.pieces.size();
  }

  // Pieces in neighbouring columns that overlap in y are connected.
  DisjointSets sets(reg.pieces.size());
  for (std::size_t i = 0; i + 1 < static_cast<std::size_t>(n); ++i) {
    std::size_t a = col_start[i], b = col_start[i + 1];
    const std::size_t a_end = col_start[i + 1], b_end = col_start[i + 2];
    while (a < a_end && b < b_end) {
      const auto& p = reg.pieces[a].iv;
      const auto& q = reg.pieces[b].iv;
      if (p.lo.value < q.hi.value && q.lo.value < p.hi.value) sets.unite(a, b);
      if (p.hi.value < q.hi.value) {
        ++a;
      } else {
        ++b;
      }
    }
  }
  std::vector<double> area(reg.pieces.size(), 0.0);
  for (std::size_t k = 0; k < reg.pieces.size(); ++k) {
    const std::size_t r = sets.find(k);
    if (r == k) ++reg.components;
    area[r] += reg.pieces[k].iv.length() * reg.dx;
  }
  std::size_t best_root = reg.pieces.size();
  for (std::size_t k = 0; k < reg.pieces.size(); ++k) {
    if (sets.find(k) == k && (best_root == reg.pieces.size() || area[k] > area[best_root])) best_root = k;
  }
  if (best_root < reg.pieces.size()) {
    reg.value = area[best_root];
    for (std::size_t k = 0; k < reg.pieces.size(); ++k) {
      if (sets.find(k) == best_root) reg.best.push_back(k);
    }
  }
  return reg;
}

}  // namespace

GEvaluation g_area(const AngleSequence& angles, std::span<const Center> centers, const GConfig& cfg) {
  const Region reg = build_region(angles, centers, cfg);
  GEvaluation out;
  out.value = reg.value;
  out.reachable = reg.reachable;
  out.x_window = reg.window;
  out.components = reg.components;
  out.gradient.assign(centers.size(), {0.0, 0.0});
  for (std::size_t k : reg.best) {
    const auto& iv = reg.pieces[k].iv;
    for (const auto* b : {&iv.hi, &iv.lo}) {
      if (b->source < 0) continue;
      const double sign = b == &iv.hi ? reg.dx : -reg.dx;
      const auto j = static_cast<std::size_t>(b->source);
      const auto d = geom::center_derivative(*b, angles.alphas[j]);
      out.gradient[j][0] += sign * d[0];
      out.gradient[j][1] += sign * d[1];
    }
  }
  return out;
}

ad::Var g_area(const AngleSequence& angles, std::span<const std::array<ad::Var, 2>> centers, const GConfig& cfg) {
  std::vector<Center> values;
  ad::Tape* tape = nullptr;
  for (const auto& c : centers) {
    values.push_back({c[0].value(), c[1].value()});
    for (const auto& v : c) {
      if (v.tape()) tape = v.tape();
    }
  }
  const Region reg = build_region(angles, values, cfg);
  if (!tape) return ad::Var(reg.value);
  std::vector<ad::Var> parents;
  std::vector<double> partials;
  for (std::size_t k : reg.best) {
    const auto& piece = reg.pieces[k];
    for (const auto* b : {&piece.iv.hi, &piece.iv.lo}) {
      if (b->source < 0) continue;
      const auto j = static_cast<std::size_t>(b->source);
      const ad::Var alpha(angles.alphas[j]);
      parents.push_back(geom::materialize(*b, piece.x, centers[j][0], centers[j][1], alpha));
      partials.push_back(b == &piece.iv.hi ? reg.dx : -reg.dx);
    }
  }
  return tape->record(reg.value, parents, partials);
}

std::string to_string(CenterMode m) { return m == CenterMode::free ? "free" : "networked"; }

CenterMode parse_center_mode(const std::string& s) {
  if (s == "free") return CenterMode::free;
  if (s == "networked") return CenterMode::networked;
  throw ConfigError("unknown center mode '" + s + "'");
}

std::vector<Center> RotationCenters::evaluate(const AngleSequence& angles) const {
  if (mode == CenterMode::free) {
    if (points.size() != angles.size()) throw ShapeMismatch("centers: one point per angle required");
    return points;
  }
  std::vector<Center> out(angles.size());
  for (std::size_t c = 0; c < 2; ++c) {
    nn::MlpBatch batch;
    batch.forward(nets[c], angles.alphas, false);
    for (std::size_t j = 0; j < out.size(); ++j) out[j][c] = batch.values()(static_cast<Eigen::Index>(j));
  }
  return out;
}

std::size_t RotationCenters::parameter_count() const {
  if (mode == CenterMode::free) return 2 * points.size();
  return nets[0].parameter_count() + nets[1].parameter_count();
}

std::vector<double> RotationCenters::flatten() const {
  std::vector<double> out;
  if (mode == CenterMode::free) {
    for (const auto& p : points) out.insert(out.end(), p.begin(), p.end());
    return out;
  }
  for (const auto& n : nets) {
    const auto f = n.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

void RotationCenters::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeMismatch("centers: parameter vector has wrong length");
  if (mode == CenterMode::free) {
    for (std::size_t j = 0; j < points.size(); ++j) points[j] = {flat[2 * j], flat[2 * j + 1]};
    return;
  }
  const std::size_t n0 = nets[0].parameter_count();
  nets[0].assign(flat.subspan(0, n0));
  nets[1].assign(flat.subspan(n0));
}

std::vector<double> RotationCenters::pullback(const AngleSequence& angles, std::span<const Center> du) const {
  if (mode == CenterMode::free) {
    std::vector<double> out;
    for (const auto& d : du) out.insert(out.end(), d.begin(), d.end());
    return out;
  }
  std::vector<double> out;
  for (std::size_t c = 0; c < 2; ++c) {
    nn::MlpBatch batch;
    batch.forward(nets[c], angles.alphas, false);
    std::vector<double> dv(du.size());
    for (std::size_t j = 0; j < du.size(); ++j) dv[j] = du[j][c];
    const auto g = batch.backward(nets[c], dv);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

json to_json(const RotationCenters& c, const AngleSequence& angles) {
  json j{{"mode", to_string(c.mode)}};
  json pts = json::array();
  for (const auto& p : c.evaluate(angles)) pts.push_back({p[0], p[1]});
  j["centers"] = pts;
  if (c.mode == CenterMode::networked) j["networks"] = {nn::to_json(c.nets[0]), nn::to_json(c.nets[1])};
  return j;
}

json to_json(const OptimizeConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"halve_every", c.halve_every},
              {"seed", c.seed},
              {"architecture", c.architecture},
              {"init_scale", c.init_scale},
              {"init_range", c.init_range},
              {"n_sources", c.g.n_sources},
              {"margin", c.g.margin}};
}

namespace {

RotationCenters draw_centers(const AngleSequence& angles, const OptimizeConfig& cfg, Rng& rng) {
  RotationCenters rc;
  rc.mode = cfg.mode;
  if (cfg.mode == CenterMode::free) {
    for (std::size_t j = 0; j < angles.size(); ++j) {
      const double a = rng.uniform(-cfg.init_range, cfg.init_range);
      const double b = rng.uniform(-cfg.init_range, cfg.init_range);
      rc.points.push_back({a, b});
    }
    return rc;
  }
  for (std::size_t c = 0; c < 2; ++c) {
    rc.nets[c] = nn::init_params(cfg.architecture, nn::Activation::relu, {cfg.init_scale, rng.next()});
  }
  return rc;
}

}  // namespace

RotationCenters init_centers(const AngleSequence& angles, const OptimizeConfig& cfg) {
  // An empty region has no gradient, so redraw from the same stream.
  Rng rng(cfg.seed);
  RotationCenters rc = draw_centers(angles, cfg, rng);
  for (int attempt = 1; attempt < kMaxInitDraws; ++attempt) {
    if (g_area(angles, rc.evaluate(angles), cfg.g).value > 0.0) break;
    rc = draw_centers(angles, cfg, rng);
  }
  return rc;
}

GResult optimize_G(const AngleSequence& angles, const OptimizeConfig& cfg) {
  angles.validate();
  if (cfg.epochs < 0 || !(cfg.lr > 0.0)) throw ConfigError("optimize_G: need epochs >= 0 and lr > 0");
  GResult res;
  res.model = init_centers(angles, cfg);
  std::vector<double> params = res.model.flatten();
  nn::Adam adam(params.size(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.halve_every});
  res.value = -1.0;
  RotationCenters work = res.model;

  const auto consider = [&](const GEvaluation& ev, const std::vector<Center>& centers, int epoch) {
    if (ev.value <= res.value) return;
    res.value = ev.value;
    res.reachable = ev.reachable;
    res.centers = centers;
    res.model = work;
    res.best_epoch = epoch;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto centers = work.evaluate(angles);
    const GEvaluation ev = g_area(angles, centers, cfg.g);
    res.history.push_back(ev.value);
    consider(ev, centers, epoch);
    std::vector<double> grad = work.pullback(angles, ev.gradient);
    for (double& g : grad) g = -g;
    adam.step(params, grad);
    work.assign(params);
  }
  const auto centers = work.evaluate(angles);
  consider(g_area(angles, centers, cfg.g), centers, cfg.epochs);
  res.component_disagreement = std::fabs(res.value - res.reachable) > 1e-2;
  return res;
}

std::string to_string(KPolicy p) { return p == KPolicy::k1_only ? "k1_only" : "full_ceil_n_over_3"; }

KPolicy parse_k_policy(const std::string& s) {
  if (s == "k1_only") return KPolicy::k1_only;
  if (s == "full_ceil_n_over_3") return KPolicy::full_ceil_n_over_3;
  throw ConfigError("unknown k policy '" + s + "'");
}

std::vector<SweepCell> convergence_sweep(const SweepSpec& spec, const std::function<void(const SweepCell&)>& on_cell) {
  std::vector<SweepCell> cells;
  for (int n : spec.n_list) {
    if (n < 3) throw ConfigError("sweep: every n must be >= 3");
    const int k_max = spec.policy == KPolicy::k1_only ? 1 : (n + 2) / 3;
    for (int k = 1; k <= std::min(k_max, n - 2); ++k) {
      const int seeds = k == 1 ? spec.seeds : 1;
      for (int s = 0; s < seeds; ++s) {
        SweepCell c;
        c.n = n;
        c.k = k;
        c.seed = spec.optimize.seed + static_cast<std::uint64_t>(s);
        cells.push_back(c);
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex report;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& c = cells[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        OptimizeConfig oc = spec.optimize;
        oc.seed = c.seed;
        const GResult r = optimize_G(AngleSequence::gamma(c.n, c.k), oc);
        c.G = r.value;
        c.epochs = oc.epochs;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
      c.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (on_cell) {
        std::lock_guard<std::mutex> lock(report);
        on_cell(c);
      }
    }
  };
  unsigned workers = spec.workers > 0 ? static_cast<unsigned>(spec.workers) : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(cells.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return cells;
}

}  // namespace sofa::kr
