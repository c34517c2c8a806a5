#include "sofa/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"

namespace sofa::train {

using ad::Var;
using nlohmann::json;

namespace {

const char* backend_name(geom::DerivativeBackend b) {
  return b == geom::DerivativeBackend::grid_fd ? "grid_fd" : "exact_slope";
}

geom::DerivativeBackend parse_backend(const std::string& s) {
  if (s == "grid_fd") return geom::DerivativeBackend::grid_fd;
  if (s == "exact_slope") return geom::DerivativeBackend::exact_slope;
  throw ConfigError("unknown derivative backend '" + s + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (architecture.size() < 2 || architecture.front() != 1 || architecture.back() != 1) {
    throw ConfigError("train: architecture must start and end with 1");
  }
  for (int s : architecture) {
    if (s < 1) throw ConfigError("train: layer sizes must be positive");
  }
  if (n_time < 3) throw ConfigError("train: n_time must be >= 3");
  if (n_sources < 2) throw ConfigError("train: n_sources must be >= 2");
  if (!(scales.x_p > 0.0 && scales.y_p > 0.0 && scales.alpha > 0.0)) {
    throw ConfigError("train: init scales must be positive");
  }
  if (!(mask_epsilon >= 0.0) || !(margin >= 0.0)) throw ConfigError("train: mask_epsilon and margin must be >= 0");
  if (halve_every < 0 || vanish_epochs < 1 || lbfgs_iters < 0) throw ConfigError("train: invalid schedule settings");
  if (backend == geom::DerivativeBackend::exact_slope && activation != nn::Activation::relu) {
    throw ConfigError("train: exact_slope requires relu activation");
  }
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"architecture", c.architecture},
              {"seed", c.seed},
              {"n_time", c.n_time},
              {"n_sources", c.n_sources},
              {"activation", nn::to_string(c.activation)},
              {"scales", {{"x_p", c.scales.x_p}, {"y_p", c.scales.y_p}, {"alpha", c.scales.alpha}}},
              {"backend", backend_name(c.backend)},
              {"mask_epsilon", c.mask_epsilon},
              {"margin", c.margin},
              {"halve_every", c.halve_every},
              {"vanish_area", c.vanish_area},
              {"vanish_epochs", c.vanish_epochs},
              {"lbfgs_iters", c.lbfgs_iters},
              {"precision", "double"}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    read(j, "epochs", c.epochs);
    read(j, "lr", c.lr);
    read(j, "architecture", c.architecture);
    read(j, "seed", c.seed);
    read(j, "n_time", c.n_time);
    read(j, "n_sources", c.n_sources);
    if (j.contains("activation")) c.activation = nn::parse_activation(j.at("activation").get<std::string>());
    if (j.contains("scales")) {
      const auto& s = j.at("scales");
      read(s, "x_p", c.scales.x_p);
      read(s, "y_p", c.scales.y_p);
      read(s, "alpha", c.scales.alpha);
    }
    if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
    read(j, "mask_epsilon", c.mask_epsilon);
    read(j, "margin", c.margin);
    read(j, "halve_every", c.halve_every);
    read(j, "vanish_area", c.vanish_area);
    read(j, "vanish_epochs", c.vanish_epochs);
    read(j, "lbfgs_iters", c.lbfgs_iters);
    if (j.contains("precision") && j.at("precision") != "double") {
      throw ConfigError("only double precision is supported");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t ConstrainedMovementModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : nets) n += p.parameter_count();
  return n;
}

std::vector<double> ConstrainedMovementModel::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& p : nets) {
    const auto f = p.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

void ConstrainedMovementModel::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeMismatch("model: parameter vector has wrong length");
  std::size_t off = 0;
  for (auto& p : nets) {
    const std::size_t n = p.parameter_count();
    p.assign(flat.subspan(off, n));
    off += n;
  }
}

ConstrainedMovementModel make_model(const TrainConfig& cfg) {
  cfg.validate();
  ConstrainedMovementModel m;
  Rng root(cfg.seed);
  for (std::size_t c = 0; c < 3; ++c) {
    const nn::InitConfig init{cfg.scales[c], root.split(c).next()};
    m.nets[c] = nn::init_params(cfg.architecture, cfg.activation, init);
  }
  m.grid = geom::TimeGrid::uniform(cfg.n_time);
  m.backend = cfg.backend;
  m.mask_epsilon = cfg.mask_epsilon;
  m.margin = cfg.margin;
  return m;
}

std::array<double, 3> movement_at(const ConstrainedMovementModel& model, double t) {
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double r = std::fabs(nn::evaluate(model.nets[c], t) - nn::evaluate(model.nets[c], 0.0));
    out[c] = c == kXp ? -r : r;
  }
  return out;
}

Evaluation evaluate(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg, ad::Tape& tape) {
  const bool exact = model.backend == geom::DerivativeBackend::exact_slope;
  const auto& grid = model.grid;
  const std::size_t n = grid.size();
  Evaluation ev;
  geom::MovementSample& m = ev.movement;
  m.grid = grid;
  std::array<std::vector<Var>*, 3> pos{&m.x_p, &m.y_p, &m.alpha};
  std::array<std::vector<Var>*, 3> vel{&m.dx_p, &m.dy_p, &m.dalpha};

  for (std::size_t c = 0; c < 3; ++c) {
    auto& batch = ev.batches[c];
    batch.forward(model.nets[c], grid.values(), exact);
    auto& values = ev.value_leaves[c];
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = tape.variable(batch.values()(static_cast<Eigen::Index>(i)));
    // grid[0] == 0, so the first sample doubles as the anchor F(0).
    pos[c]->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Var r = ad::abs(values[i] - values[0]);
      (*pos[c])[i] = c == kXp ? -r : r;
    }
    if (exact) {
      auto& slopes = ev.slope_leaves[c];
      slopes.resize(n);
      vel[c]->resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        slopes[i] = tape.variable(batch.slopes()(static_cast<Eigen::Index>(i)));
        const double d = values[i].value() - values[0].value();
        double sign = d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0;
        if (c == kXp) sign = -sign;
        (*vel[c])[i] = sign * slopes[i];
      }
    } else {
      *vel[c] = geom::grid_derivative(*pos[c], grid);
    }
  }
  m.validate();

  ev.loss.penalty = ad::relu(kThetaStar - m.alpha.back());
  try {
    ev.envelopes = geom::compute_envelopes(m, model.mask_epsilon);
    ev.fringes = geom::assemble_fringes(m, *ev.envelopes, model.margin);
    ev.area = waterfall::compute_area(*ev.fringes, wcfg);
    ev.loss.area = ev.area->area;
  } catch (const EnvelopeUndefined&) {
    ev.loss.degenerate = true;
  } catch (const DegenerateGeometry&) {
    ev.loss.degenerate = true;
  }
  if (ev.loss.degenerate) {
    ev.envelopes.reset();
    ev.fringes.reset();
    ev.area.reset();
    ev.loss.area = Var(0.0);
  }
  ev.loss.total = ev.loss.penalty - ev.loss.area;
  return ev;
}

namespace {

LossValues values_of(const Evaluation& ev) {
  return {ev.loss.area.value(), ev.loss.penalty.value(), ev.loss.total.value(), ev.movement.alpha.back().value(),
          ev.loss.degenerate};
}

}  // namespace

LossValues loss_and_gradient(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg,
                             std::vector<double>& grad) {
  ad::Tape tape;
  Evaluation ev = evaluate(model, wcfg, tape);
  grad.assign(model.parameter_count(), 0.0);
  if (!ev.loss.total.is_constant()) {
    tape.backward(ev.loss.total);
    std::size_t off = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& vl = ev.value_leaves[c];
      std::vector<double> dv(vl.size()), ds;
      for (std::size_t i = 0; i < vl.size(); ++i) dv[i] = tape.adjoint(vl[i]);
      if (!ev.slope_leaves[c].empty()) {
        ds.resize(vl.size());
        for (std::size_t i = 0; i < vl.size(); ++i) ds[i] = tape.adjoint(ev.slope_leaves[c][i]);
      }
      const auto g = ev.batches[c].backward(model.nets[c], dv, ds);
      std::copy(g.begin(), g.end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
      off += g.size();
    }
  }
  return values_of(ev);
}

LossValues loss_only(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg) {
  ad::Tape tape;
  return values_of(evaluate(model, wcfg, tape));
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return train(cfg, make_model(cfg), on_epoch);
}

TrainResult train(const TrainConfig& cfg, ConstrainedMovementModel model, const EpochCallback& on_epoch) {
  cfg.validate();
  const waterfall::WaterfallConfig wcfg{cfg.n_sources};
  nn::Adam adam(model.parameter_count(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.halve_every});
  std::vector<double> params = model.flatten();
  std::vector<double> grad;

  TrainResult res;
  res.history.reserve(static_cast<std::size_t>(cfg.epochs));
  bool have_feasible = false;
  double best_total = std::numeric_limits<double>::infinity();
  int low_streak = 0;

  const auto consider = [&](const LossValues& v, int epoch) {
    const bool feasible = v.penalty == 0.0 && !v.degenerate;
    const bool better = feasible ? (!have_feasible || v.area > res.best_area) : (!have_feasible && v.total < best_total);
    if (!better) return;
    if (feasible) have_feasible = true;
    best_total = v.total;
    res.best_area = v.area;
    res.best_epoch = epoch;
    res.checkpoint = model;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossValues v = loss_and_gradient(model, wcfg, grad);
    const EpochRecord rec{epoch, v.area, v.penalty, adam.current_lr(), v.degenerate};
    res.history.push_back(rec);
    if (v.degenerate) ++res.degenerate_epochs;
    consider(v, epoch);
    if (on_epoch) on_epoch(rec);

    low_streak = v.area < cfg.vanish_area ? low_streak + 1 : 0;
    if (low_streak >= cfg.vanish_epochs) {
      res.vanished = true;
      break;
    }
    adam.step(params, grad);
    model.assign(params);
  }

  const LossValues last = loss_only(model, wcfg);
  consider(last, static_cast<int>(res.history.size()));
  res.final_area = last.area;
  res.final_penalty = last.penalty;
  res.final_alpha_end = last.alpha_end;
  res.final_model = model;
  if (res.best_epoch < 0) res.checkpoint = model;

  if (cfg.lbfgs_iters > 0 && !res.vanished) {
    ConstrainedMovementModel work = res.checkpoint;
    std::vector<double> x = work.flatten();
    const nn::Objective f = [&](std::span<const double> p, std::span<double> g) {
      work.assign(p);
      std::vector<double> gv;
      const LossValues v = loss_and_gradient(work, wcfg, gv);
      std::copy(gv.begin(), gv.end(), g.begin());
      return v.total;
    };
    res.lbfgs = nn::lbfgs_refine(x, f, {cfg.lbfgs_iters});
    work.assign(x);
    const LossValues v = loss_only(work, wcfg);
    res.refined_area = v.area;
    if (v.penalty == 0.0 && v.area > res.best_area) {
      res.best_area = v.area;
      res.checkpoint = work;
    }
  }
  return res;
}

json checkpoint_to_json(const ConstrainedMovementModel& m) {
  return json{{"x_p", nn::to_json(m.nets[kXp])},
              {"y_p", nn::to_json(m.nets[kYp])},
              {"alpha", nn::to_json(m.nets[kAlpha])},
              {"n_time", m.grid.size()},
              {"backend", backend_name(m.backend)},
              {"mask_epsilon", m.mask_epsilon},
              {"margin", m.margin}};
}

ConstrainedMovementModel checkpoint_from_json(const json& j) {
  try {
    ConstrainedMovementModel m;
    m.nets[kXp] = nn::mlp_from_json(j.at("x_p"));
    m.nets[kYp] = nn::mlp_from_json(j.at("y_p"));
    m.nets[kAlpha] = nn::mlp_from_json(j.at("alpha"));
    m.grid = geom::TimeGrid::uniform(j.at("n_time").get<int>());
    m.backend = parse_backend(j.at("backend").get<std::string>());
    m.mask_epsilon = j.at("mask_epsilon").get<double>();
    m.margin = j.at("margin").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

std::vector<CoverageRow> coverage_sweep(std::span<const int> layer_sizes, nn::Activation activation,
                                        std::span<const double> scales, int n_seeds, int n_t,
                                        std::uint64_t base_seed) {
  if (n_seeds < 1 || n_t < 2) throw ConfigError("coverage_sweep: need n_seeds >= 1 and n_t >= 2");
  const geom::TimeGrid grid = geom::TimeGrid::uniform(n_t);
  std::vector<CoverageRow> rows;
  for (double s : scales) {
    std::vector<double> ranges;
    for (int k = 0; k < n_seeds; ++k) {
      const auto p = nn::init_params(layer_sizes, activation, {s, base_seed + static_cast<std::uint64_t>(k)});
      nn::MlpBatch batch;
      batch.forward(p, grid.values(), false);
      const auto& v = batch.values();
      ranges.push_back((v.array() - v(0)).abs().maxCoeff());
    }
    std::sort(ranges.begin(), ranges.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ranges.size()))) - 1;
    rows.push_back({s, ranges[idx], ranges.back()});
  }
  return rows;
}

std::optional<double> smallest_covering_scale(std::span<const CoverageRow> rows, double target) {
  std::optional<double> best;
  for (const auto& r : rows) {
    if (r.p95 >= target && (!best || r.scale < *best)) best = r.scale;
  }
  return best;
}

}  // namespace sofa::train
