#include "sofa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sofa/analysis.hpp"
#include "sofa/geom.hpp"
#include "sofa/io.hpp"
#include "sofa/kr.hpp"
#include "sofa/render.hpp"
#include "sofa/train.hpp"
#include "sofa/waterfall.hpp"

namespace sofa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Shared option plumbing

struct Common {
  std::string config_path;
  std::string run_id;
  std::string out_root;
  bool quiet = false;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (flags override it)");
    app->add_option("--run-id", run_id, "Run directory name (default: derived from the config)");
    app->add_option("--out", out_root, "Output root (default: $SOFA_OUT or ./runs)");
    app->add_flag("--quiet", quiet, "No progress output");
  }

  json config() const {
    if (config_path.empty()) return json::object();
    if (!fs::exists(config_path)) throw MissingInput("config file not found: " + config_path);
    return io::read_json(config_path);
  }

  io::RunRegistry registry() const {
    return io::RunRegistry(out_root.empty() ? io::RunRegistry::default_root() : fs::path(out_root));
  }
};

template <class T>
void take(const CLI::Option* o, const T& v, T& dst) {
  if (o->count() > 0) dst = v;
}

std::vector<int> parse_arch(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x != std::string::npos) {
      const int width = std::stoi(s.substr(0, x));
      const int depth = std::stoi(s.substr(x + 1));
      if (width < 1 || depth < 1) throw ConfigError("bad architecture '" + s + "'");
      std::vector<int> a{1};
      a.insert(a.end(), static_cast<std::size_t>(depth), width);
      a.push_back(1);
      return a;
    }
    std::vector<int> a;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) a.push_back(std::stoi(item));
    return a;
  } catch (const std::logic_error&) {
    throw ConfigError("bad architecture '" + s + "' (use WIDTHxDEPTH or 1,W,...,1)");
  }
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    throw ConfigError("bad integer list '" + s + "'");
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

kr::OptimizeConfig optimize_from_json(const json& j, kr::OptimizeConfig c) {
  try {
    if (j.contains("mode")) c.mode = kr::parse_center_mode(j.at("mode").get<std::string>());
    read(j, "epochs", c.epochs);
    read(j, "lr", c.lr);
    read(j, "halve_every", c.halve_every);
    read(j, "seed", c.seed);
    read(j, "architecture", c.architecture);
    read(j, "init_scale", c.init_scale);
    read(j, "init_range", c.init_range);
    read(j, "n_sources", c.g.n_sources);
    read(j, "margin", c.g.margin);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("kr config: ") + e.what());
  }
  return c;
}

struct OptimizeFlags {
  std::string mode;
  int epochs = 0;
  double lr = 0.0;
  std::int64_t halve_every = 0;
  std::uint64_t seed = 0;
  std::string arch;
  double init_scale = 0.0;
  int sources = 0;
  CLI::Option *o_mode, *o_epochs, *o_lr, *o_halve, *o_seed, *o_arch, *o_scale, *o_sources;

  void add(CLI::App* app) {
    o_mode = app->add_option("--mode", mode, "free | networked");
    o_epochs = app->add_option("--epochs", epochs);
    o_lr = app->add_option("--lr", lr);
    o_halve = app->add_option("--halve-every", halve_every);
    o_seed = app->add_option("--seed", seed);
    o_arch = app->add_option("--arch", arch, "networked mode: WIDTHxDEPTH or 1,W,...,1");
    o_scale = app->add_option("--init-scale", init_scale);
    o_sources = app->add_option("--sources", sources);
  }

  void apply(kr::OptimizeConfig& c) const {
    if (o_mode->count()) c.mode = kr::parse_center_mode(mode);
    take(o_epochs, epochs, c.epochs);
    take(o_lr, lr, c.lr);
    take(o_halve, halve_every, c.halve_every);
    take(o_seed, seed, c.seed);
    if (o_arch->count()) c.architecture = parse_arch(arch);
    take(o_scale, init_scale, c.init_scale);
    take(o_sources, sources, c.g.n_sources);
    if (c.epochs < 1 || !(c.lr > 0.0) || c.g.n_sources < 2) throw ConfigError("kr: invalid epochs, lr or sources");
  }
};

void progress(const Common& c, std::ostream& err, const std::string& line) {
  if (!c.quiet) err << line << std::endl;
}

// ---------------------------------------------------------------------------
// Geometry helpers shared by area-train, eval-movement and render

struct ShapeEval {
  std::optional<geom::EnvelopeSet> envelopes;
  waterfall::AreaResult area;
  bool degenerate = false;
};

ShapeEval shape_of(const geom::MovementSample& m, int n_sources, double mask_epsilon = 1e-6, double margin = 0.1) {
  ShapeEval s;
  try {
    s.envelopes = geom::compute_envelopes(m, mask_epsilon);
    const auto f = geom::assemble_fringes(m, *s.envelopes, margin);
    s.area = waterfall::compute_area(f, waterfall::WaterfallConfig{n_sources});
  } catch (const EnvelopeUndefined&) {
    s.degenerate = true;
  } catch (const DegenerateGeometry&) {
    s.degenerate = true;
  }
  if (s.degenerate) {
    s.envelopes.reset();
    s.area = {};
    s.area.area = ad::Var(0.0);
  }
  return s;
}

std::string svg_of(const geom::MovementSample& m, const ShapeEval& s) {
  std::ostringstream os;
  render::sofa_svg(os, m, s.envelopes, s.area);
  return os.str();
}

/// Plain-valued copy of the sampled movement of a model.
geom::MovementSample movement_of(const train::ConstrainedMovementModel& model, int n_sources) {
  ad::Tape tape;
  auto ev = train::evaluate(model, waterfall::WaterfallConfig{n_sources}, tape);
  geom::MovementSample m;
  m.grid = ev.movement.grid;
  const auto copy = [](const std::vector<ad::Var>& in) {
    std::vector<ad::Var> out;
    out.reserve(in.size());
    for (const auto& v : in) out.emplace_back(v.value());
    return out;
  };
  m.x_p = copy(ev.movement.x_p);
  m.y_p = copy(ev.movement.y_p);
  m.alpha = copy(ev.movement.alpha);
  m.dx_p = copy(ev.movement.dx_p);
  m.dy_p = copy(ev.movement.dy_p);
  m.dalpha = copy(ev.movement.dalpha);
  return m;
}

std::string movement_csv(const geom::MovementSample& m) {
  std::ostringstream os;
  io::write_movement_csv(os, m);
  return os.str();
}

// ---------------------------------------------------------------------------
// area-train

struct AreaTrain {
  Common common;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::string arch, activation, backend;
  int epochs = 0, time_points = 0, sources = 0, lbfgs = 0;
  std::int64_t halve_every = 0;
  double s_xp = 0.0, s_yp = 0.0, s_alpha = 0.0;
  CLI::Option *o_seed, *o_lr, *o_arch, *o_act, *o_backend, *o_epochs, *o_tp, *o_src, *o_lbfgs, *o_halve, *o_sxp,
      *o_syp, *o_salpha;

  void add(CLI::App* app) {
    common.add(app);
    o_seed = app->add_option("--seed", seed);
    o_lr = app->add_option("--lr", lr);
    o_arch = app->add_option("--arch", arch, "WIDTHxDEPTH (e.g. 256x2) or 1,W,...,1");
    o_act = app->add_option("--activation", activation, "relu | tanh | softplus");
    o_backend = app->add_option("--backend", backend, "grid_fd | exact_slope");
    o_epochs = app->add_option("--epochs", epochs);
    o_tp = app->add_option("--time-points", time_points);
    o_src = app->add_option("--sources", sources);
    o_lbfgs = app->add_option("--lbfgs", lbfgs, "L-BFGS iterations on the best checkpoint");
    o_halve = app->add_option("--halve-every", halve_every);
    o_sxp = app->add_option("--scale-xp", s_xp);
    o_syp = app->add_option("--scale-yp", s_yp);
    o_salpha = app->add_option("--scale-alpha", s_alpha);
  }

  train::TrainConfig resolve() const {
    const json file = common.config();
    train::TrainConfig c = train::train_config_from_json(file.contains("train") ? file.at("train") : file);
    take(o_seed, seed, c.seed);
    take(o_lr, lr, c.lr);
    if (o_arch->count()) c.architecture = parse_arch(arch);
    if (o_act->count()) c.activation = nn::parse_activation(activation);
    if (o_backend->count()) {
      c = train::train_config_from_json(json{{"backend", backend}}, c);
    }
    take(o_epochs, epochs, c.epochs);
    take(o_tp, time_points, c.n_time);
    take(o_src, sources, c.n_sources);
    take(o_lbfgs, lbfgs, c.lbfgs_iters);
    take(o_halve, halve_every, c.halve_every);
    take(o_sxp, s_xp, c.scales.x_p);
    take(o_syp, s_yp, c.scales.y_p);
    take(o_salpha, s_alpha, c.scales.alpha);
    c.validate();
    return c;
  }

  int operator()(std::ostream& out, std::ostream& err) const {
    const train::TrainConfig cfg = resolve();
    json resolved{{"command", "area-train"}, {"train", train::to_json(cfg)}};
    const std::string id = common.run_id.empty() ? io::derive_run_id("area-train", resolved) : common.run_id;
    resolved["run_id"] = id;
    const auto reg = common.registry();
    const fs::path dir = reg.create(id);
    io::write_json(dir / "config.json", resolved);

    const auto res = train::train(cfg, [&](const train::EpochRecord& r) {
      if (r.epoch % 100 == 0) {
        std::ostringstream os;
        os << "epoch " << r.epoch << " area " << io::format6(r.area) << " penalty " << io::format6(r.penalty);
        progress(common, err, os.str());
      }
    });

    std::ostringstream hist;
    io::write_history_csv(hist, res.history);
    io::write_text(dir / "history.csv", hist.str());
    json ck = train::checkpoint_to_json(res.checkpoint);
    ck["area"] = res.best_area;
    ck["epoch"] = res.best_epoch;
    io::write_json(dir / "checkpoint.json", ck);

    const auto m = movement_of(res.checkpoint, cfg.n_sources);
    io::write_text(dir / "movement.csv", movement_csv(m));
    io::write_text(dir / "shape.svg", svg_of(m, shape_of(m, cfg.n_sources, cfg.mask_epsilon, cfg.margin)));

    json summary{{"final_area", res.final_area},
                 {"final_penalty", res.final_penalty},
                 {"final_alpha_end", res.final_alpha_end},
                 {"best_area", res.best_area},
                 {"best_epoch", res.best_epoch},
                 {"epochs_run", res.history.size()},
                 {"vanished", res.vanished},
                 {"degenerate_epochs", res.degenerate_epochs}};
    if (res.lbfgs) {
      summary["lbfgs_iterations"] = res.lbfgs->iterations;
      summary["refined_area"] = res.refined_area;
    }
    reg.complete(dir, summary);
    out << summary.dump() << "\n" << dir.string() << "\n";
    return res.vanished ? kFlagged : kOk;
  }
};

// ---------------------------------------------------------------------------
// kr-five

json run_variant(const std::string& name, const kr::AngleSequence& angles, const kr::OptimizeConfig& base, int seeds,
                 const Common& common, std::ostream& err) {
  json runs = json::array();
  double best = -1.0, lo = 1e300, hi = -1e300, sum = 0.0;
  json best_run;
  for (int s = 0; s < seeds; ++s) {
    kr::OptimizeConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(s);
    const auto r = kr::optimize_G(angles, c);
    json centers = json::array();
    for (const auto& u : r.centers) centers.push_back({u[0], u[1]});
    json jr{{"seed", c.seed},
            {"G", r.value},
            {"reachable", r.reachable},
            {"best_epoch", r.best_epoch},
            {"component_disagreement", r.component_disagreement},
            {"centers", centers}};
    progress(common, err, name + " seed " + std::to_string(c.seed) + " G " + io::format17(r.value));
    runs.push_back(jr);
    lo = std::min(lo, r.value);
    hi = std::max(hi, r.value);
    sum += r.value;
    if (r.value > best) {
      best = r.value;
      best_run = jr;
    }
  }
  return json{{"angles", kr::to_json(angles)},
              {"runs", runs},
              {"G_best", best},
              {"G_mean", sum / seeds},
              {"G_spread", hi - lo},
              {"best_centers", best_run.at("centers")}};
}

struct KrFive {
  Common common;
  OptimizeFlags opt;
  int seeds = 1;
  std::string variant = "both";
  CLI::Option *o_seeds, *o_variant;

  void add(CLI::App* app) {
    common.add(app);
    opt.add(app);
    o_seeds = app->add_option("--seeds", seeds, "Consecutive seeds per variant");
    o_variant = app->add_option("--variant", variant, "five | split | both")
                    ->check(CLI::IsMember({"five", "split", "both"}));
  }

  int operator()(std::ostream& out, std::ostream& err) const {
    const json file = common.config();
    kr::OptimizeConfig c = optimize_from_json(file.contains("optimize") ? file.at("optimize") : file, {});
    int n_seeds = file.value("seeds", 1);
    std::string var = file.value("variant", std::string("both"));
    opt.apply(c);
    take(o_seeds, seeds, n_seeds);
    take(o_variant, variant, var);
    if (n_seeds < 1) throw ConfigError("kr-five: seeds must be >= 1");

    json resolved{{"command", "kr-five"}, {"optimize", kr::to_json(c)}, {"seeds", n_seeds}, {"variant", var}};
    const std::string id = common.run_id.empty() ? io::derive_run_id("kr-five", resolved) : common.run_id;
    resolved["run_id"] = id;
    const auto reg = common.registry();
    const fs::path dir = reg.create(id);
    io::write_json(dir / "config.json", resolved);

    json report = json::object();
    if (var != "split") report["five"] = run_variant("five", kr::AngleSequence::five_angles(), c, n_seeds, common, err);
    if (var != "five") {
      report["split"] = run_variant("split", kr::AngleSequence::five_angles_split(), c, n_seeds, common, err);
    }
    io::write_json(dir / "report.json", report);
    json summary = json::object();
    for (const auto& [k, v] : report.items()) summary[k] = v.at("G_best");
    reg.complete(dir, summary);
    out << summary.dump() << "\n" << dir.string() << "\n";
    return kOk;
  }
};

// ---------------------------------------------------------------------------
// kr-converge

struct KrConverge {
  Common common;
  OptimizeFlags opt;
  std::string n_list = "10,20,30";
  std::string policy = "k1_only";
  int seeds = 3;
  int workers = 0;
  CLI::Option *o_n, *o_k, *o_seeds, *o_workers;

  void add(CLI::App* app) {
    common.add(app);
    opt.add(app);
    o_n = app->add_option("--n", n_list, "Comma-separated angle counts");
    o_k = app->add_option("--k", policy, "k1_only | full_ceil_n_over_3");
    o_seeds = app->add_option("--seeds", seeds, "Seeds at k = 1");
    o_workers = app->add_option("--workers", workers, "Worker threads (0: all cores)");
  }

  int operator()(std::ostream& out, std::ostream& err) const {
    const json file = common.config();
    kr::SweepSpec spec;
    spec.optimize = optimize_from_json(file.contains("optimize") ? file.at("optimize") : file, {});
    opt.apply(spec.optimize);
    std::string ns = n_list, pol = policy;
    if (file.contains("n")) {
      spec.n_list = file.at("n").get<std::vector<int>>();
    }
    if (o_n->count() || spec.n_list.empty()) spec.n_list = parse_int_list(ns);
    if (file.contains("k")) pol = file.at("k").get<std::string>();
    take(o_k, policy, pol);
    spec.policy = kr::parse_k_policy(pol);
    spec.seeds = file.value("seeds", 3);
    take(o_seeds, seeds, spec.seeds);
    spec.workers = file.value("workers", 0);
    take(o_workers, workers, spec.workers);
    if (spec.seeds < 1) throw ConfigError("kr-converge: seeds must be >= 1");

    json resolved{{"command", "kr-converge"},
                  {"optimize", kr::to_json(spec.optimize)},
                  {"n", spec.n_list},
                  {"k", kr::to_string(spec.policy)},
                  {"seeds", spec.seeds}};
    const std::string id = common.run_id.empty() ? io::derive_run_id("kr-converge", resolved) : common.run_id;
    resolved["run_id"] = id;
    resolved["workers"] = spec.workers;
    const auto reg = common.registry();
    const fs::path dir = reg.create(id);
    io::write_json(dir / "config.json", resolved);

    const std::string header = "n,k,seed,G,epochs,wall_seconds,error\n";
    const auto row = [](const kr::SweepCell& c) {
      return std::to_string(c.n) + "," + std::to_string(c.k) + "," + std::to_string(c.seed) + "," +
             io::format17(c.G) + "," + std::to_string(c.epochs) + "," + io::format17(c.wall_seconds) + "," +
             c.error + "\n";
    };
    // Cells are appended as they finish, then rewritten in (n, k, seed) order.
    std::ofstream live(dir / "sweep.csv", std::ios::binary | std::ios::trunc);
    if (!live) throw IoError("cannot write sweep.csv");
    live << header << std::flush;
    std::mutex m;
    const auto cells = kr::convergence_sweep(spec, [&](const kr::SweepCell& c) {
      std::lock_guard lock(m);
      live << row(c) << std::flush;
      progress(common, err,
               "n " + std::to_string(c.n) + " k " + std::to_string(c.k) + " seed " + std::to_string(c.seed) + " G " +
                   io::format17(c.G) + (c.error.empty() ? "" : " error: " + c.error));
    });
    live.close();
    std::string sorted = header;
    int failures = 0;
    for (const auto& c : cells) {
      sorted += row(c);
      if (!c.error.empty()) ++failures;
    }
    io::write_text(dir / "sweep.csv", sorted);

    std::map<int, double> best;
    for (const auto& c : cells) {
      if (!c.error.empty()) continue;
      auto it = best.find(c.n);
      if (it == best.end() || c.G > it->second) best[c.n] = c.G;
    }
    std::string conv = "n,G,G_minus_gerver\n";
    std::vector<render::ConvergencePoint> pts;
    json jb = json::object();
    for (const auto& [n, g] : best) {
      conv += std::to_string(n) + "," + io::format17(g) + "," + io::format17(g - train::kGerverArea) + "\n";
      pts.push_back({n, g});
      jb[std::to_string(n)] = g;
    }
    io::write_text(dir / "convergence.csv", conv);
    std::ostringstream svg;
    render::convergence_svg(svg, pts, train::kGerverArea);
    io::write_text(dir / "convergence.svg", svg.str());
    const json summary{{"best_G", jb}, {"cells", cells.size()}, {"failures", failures}};
    reg.complete(dir, summary);
    out << summary.dump() << "\n" << dir.string() << "\n";
    return failures ? kFlagged : kOk;
  }
};

// ---------------------------------------------------------------------------
// landscape

struct Landscape {
  Common common;
  std::string run_dir;
  std::string variant = "five";
  double extent = 0.0;
  int resolution = 41;
  int power_iters = 30;
  std::uint64_t seed = 0;
  int sources = 0;
  double basin = 1.0;
  CLI::Option *o_extent, *o_res, *o_iters, *o_seed, *o_sources, *o_basin, *o_variant;

  void add(CLI::App* app) {
    common.add(app);
    app->add_option("--run", run_dir, "area-train or kr-five run directory")->required();
    o_variant = app->add_option("--variant", variant, "kr-five runs: five | split");
    o_extent = app->add_option("--extent", extent, "Half-width r of the [-r, r]^2 grid");
    o_res = app->add_option("--resolution", resolution, "Odd grid size");
    o_iters = app->add_option("--power-iters", power_iters);
    o_seed = app->add_option("--seed", seed, "Power-iteration start vectors");
    o_sources = app->add_option("--sources", sources, "Waterfall sources (sofa runs)");
    o_basin = app->add_option("--basin-radius", basin);
  }

  int operator()(std::ostream& out, std::ostream& err) const {
    const fs::path src(run_dir);
    const bool sofa = fs::exists(src / "checkpoint.json");
    const bool krr = fs::exists(src / "report.json");
    if (!sofa && !krr) throw MissingInput("no checkpoint.json or report.json in " + run_dir);

    const json file = common.config();
    analysis::LandscapeSpec spec;
    spec.extent = sofa ? 1.5 : 1.0;
    read(file, "extent", spec.extent);
    read(file, "resolution", spec.resolution);
    take(o_extent, extent, spec.extent);
    take(o_res, resolution, spec.resolution);
    analysis::PowerConfig pc;
    pc.iters = file.value("power_iters", 30);
    take(o_iters, power_iters, pc.iters);
    pc.seed = file.value("seed", std::uint64_t{0});
    take(o_seed, seed, pc.seed);
    double radius = file.value("basin_radius", 1.0);
    take(o_basin, basin, radius);
    std::string var = file.value("variant", std::string("five"));
    take(o_variant, variant, var);

    std::vector<double> params;
    analysis::ValueFn value;
    nn::Objective loss;
    json about;
    std::optional<train::ConstrainedMovementModel> model;
    waterfall::WaterfallConfig wcfg;
    kr::AngleSequence angles;
    kr::GConfig gcfg;
    if (sofa) {
      model = train::checkpoint_from_json(io::read_json(src / "checkpoint.json"));
      wcfg.n_sources = 2000;
      if (fs::exists(src / "config.json")) {
        const json rc = io::read_json(src / "config.json");
        if (rc.contains("train")) wcfg.n_sources = rc["train"].value("n_sources", 2000);
      }
      read(file, "n_sources", wcfg.n_sources);
      take(o_sources, sources, wcfg.n_sources);
      params = model->flatten();
      value = [&, work = *model](std::span<const double> p) mutable {
        work.assign(p);
        return train::loss_only(work, wcfg).area;
      };
      loss = [&, work = *model](std::span<const double> p, std::span<double> g) mutable {
        work.assign(p);
        std::vector<double> gv;
        const auto v = train::loss_and_gradient(work, wcfg, gv);
        std::copy(gv.begin(), gv.end(), g.begin());
        return v.total;
      };
      about = {{"kind", "sofa"}, {"n_sources", wcfg.n_sources}};
    } else {
      const json rep = io::read_json(src / "report.json");
      if (!rep.contains(var)) throw MissingInput("report.json has no '" + var + "' variant");
      const json& v = rep.at(var);
      angles.alphas = v.at("angles").at("alphas").get<std::vector<double>>();
      angles.beta1 = v.at("angles").at("beta1").get<double>();
      angles.beta2 = v.at("angles").at("beta2").get<double>();
      angles.validate();
      if (fs::exists(src / "config.json")) {
        const json rc = io::read_json(src / "config.json");
        if (rc.contains("optimize")) gcfg.n_sources = rc["optimize"].value("n_sources", gcfg.n_sources);
      }
      take(o_sources, sources, gcfg.n_sources);
      for (const auto& c : v.at("best_centers")) {
        params.push_back(c.at(0).get<double>());
        params.push_back(c.at(1).get<double>());
      }
      const auto centers_of = [](std::span<const double> p) {
        std::vector<kr::Center> c(p.size() / 2);
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = {p[2 * j], p[2 * j + 1]};
        return c;
      };
      value = [&, centers_of](std::span<const double> p) { return kr::g_area(angles, centers_of(p), gcfg).value; };
      loss = [&, centers_of](std::span<const double> p, std::span<double> g) {
        const auto e = kr::g_area(angles, centers_of(p), gcfg);
        for (std::size_t j = 0; j < e.gradient.size(); ++j) {
          g[2 * j] = -e.gradient[j][0];
          g[2 * j + 1] = -e.gradient[j][1];
        }
        return -e.value;
      };
      about = {{"kind", "kr"}, {"variant", var}, {"n_sources", gcfg.n_sources}};
    }

    json resolved{{"command", "landscape"},
                  {"source", about},
                  {"extent", spec.extent},
                  {"resolution", spec.resolution},
                  {"power_iters", pc.iters},
                  {"seed", pc.seed},
                  {"basin_radius", radius}};
    const std::string id = common.run_id.empty() ? io::derive_run_id("landscape", resolved) : common.run_id;
    resolved["run_id"] = id;
    resolved["source_run"] = fs::path(run_dir).filename().string();
    const auto reg = common.registry();
    const fs::path dir = reg.create(id);
    io::write_json(dir / "config.json", resolved);

    progress(common, err, "power iteration on " + std::to_string(params.size()) + " parameters");
    const auto eig = analysis::top_hessian_eigvecs(loss, params, pc);
    progress(common, err, "grid " + std::to_string(spec.resolution) + "x" + std::to_string(spec.resolution));
    const auto grid = analysis::landscape(value, params, eig.directions[0], eig.directions[1], spec);
    const double unperturbed = value(params);
    const auto peaks = analysis::peak_report(grid, radius);

    std::ostringstream csv, svg;
    analysis::write_landscape_csv(csv, grid);
    io::write_text(dir / "landscape.csv", csv.str());
    render::landscape_svg(svg, grid);
    io::write_text(dir / "landscape.svg", svg.str());
    const bool exact = grid.center_value == unperturbed;
    const json summary{{"eigenvalues", eig.eigenvalues},
                       {"residuals", eig.residuals},
                       {"converged", eig.converged},
                       {"center_value", grid.center_value},
                       {"unperturbed_value", unperturbed},
                       {"center_exact", exact},
                       {"max_value", peaks.max_value},
                       {"local_maxima", peaks.local_maxima},
                       {"outer_maxima", peaks.outer_maxima},
                       {"outer_peak", peaks.outer_maxima > 0 ? json(peaks.outer_peak) : json(nullptr)},
                       {"center_is_max", peaks.center_is_max},
                       {"single_peak", peaks.single_peak()}};
    reg.complete(dir, summary);
    out << summary.dump() << "\n" << dir.string() << "\n";
    return peaks.single_peak() && exact ? kOk : kFlagged;
  }
};

// ---------------------------------------------------------------------------
// eval-movement

struct EvalMovement {
  Common common;
  std::string movement;
  std::string fixture;
  double radius = 2.0 / M_PI;
  int time_points = 2000;
  int sources = 10000;
  CLI::Option *o_radius, *o_tp, *o_sources;

  void add(CLI::App* app) {
    common.add(app);
    auto* om = app->add_option("--movement", movement, "movement.csv to evaluate");
    auto* of = app->add_option("--fixture", fixture, "Write and evaluate a fixture: hammersley | corner")
                   ->check(CLI::IsMember({"hammersley", "corner"}));
    om->excludes(of);
    o_radius = app->add_option("--radius", radius, "Hammersley radius parameter");
    o_tp = app->add_option("--time-points", time_points);
    o_sources = app->add_option("--sources", sources);
  }

  int operator()(std::ostream& out, std::ostream&) const {
    const json file = common.config();
    int n_src = file.value("n_sources", 10000);
    int n_t = file.value("n_time", 2000);
    double r = file.value("radius", 2.0 / M_PI);
    std::string fx = file.value("fixture", std::string());
    take(o_sources, sources, n_src);
    take(o_tp, time_points, n_t);
    take(o_radius, radius, r);
    if (!fixture.empty()) fx = fixture;
    if (n_src < 2 || n_t < 3) throw ConfigError("eval-movement: need sources >= 2 and time-points >= 3");

    if (!movement.empty()) {
      if (!fs::exists(movement)) throw MissingInput("movement file not found: " + movement);
      const auto m = io::read_movement_csv(fs::path(movement));
      const auto s = shape_of(m, n_src);
      const json j{{"area", s.area.area.value()}, {"degenerate", s.degenerate}, {"n_sources", n_src},
                   {"n_time", m.size()}};
      out << j.dump() << "\n";
      return kOk;
    }
    if (fx.empty()) throw ConfigError("eval-movement: give --movement FILE or --fixture NAME");

    const auto grid = geom::TimeGrid::uniform(n_t);
    const auto m = fx == "hammersley" ? geom::hammersley_movement(r, grid) : geom::corner_rotation_movement(grid);
    json resolved{{"command", "eval-movement"}, {"fixture", fx}, {"n_time", n_t}, {"n_sources", n_src}};
    if (fx == "hammersley") resolved["radius"] = r;
    const std::string id = common.run_id.empty() ? io::derive_run_id("eval-" + fx, resolved) : common.run_id;
    resolved["run_id"] = id;
    const auto reg = common.registry();
    const fs::path dir = reg.create(id);
    io::write_json(dir / "config.json", resolved);
    io::write_text(dir / "movement.csv", movement_csv(m));
    const auto s = shape_of(m, n_src);
    std::ostringstream prof;
    waterfall::write_profiles_csv(prof, s.area);
    io::write_text(dir / "profiles.csv", prof.str());
    const json summary{{"area", s.area.area.value()}, {"degenerate", s.degenerate}};
    io::write_json(dir / "area.json", summary);
    reg.complete(dir, summary);
    out << summary.dump() << "\n" << dir.string() << "\n";
    return kOk;
  }
};

// ---------------------------------------------------------------------------
// render

analysis::LandscapeGrid read_landscape_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::array<double, 3>> rows;
  std::vector<std::uint8_t> valid;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("a,b,value", 0) != 0) throw ParseError("landscape header must be a,b,value", 1);
      continue;
    }
    if (line.empty()) continue;
    std::array<double, 3> r{};
    std::stringstream ss(line);
    std::string f;
    int k = 0;
    bool ok = true;
    while (std::getline(ss, f, ',') && k < 3) {
      if (f.empty()) {
        ok = false;
      } else {
        try {
          r[static_cast<std::size_t>(k)] = std::stod(f);
        } catch (const std::logic_error&) {
          throw ParseError("not a number: '" + f + "'", lineno);
        }
      }
      ++k;
    }
    if (k < 2) throw ParseError("expected a,b,value", lineno);
    if (k == 2) ok = false;
    rows.push_back(r);
    valid.push_back(ok ? 1 : 0);
  }
  const auto res = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows.size()))));
  if (res < 1 || static_cast<std::size_t>(res * res) != rows.size()) {
    throw ParseError("landscape grid is not square", lineno);
  }
  analysis::LandscapeGrid g;
  g.resolution = res;
  for (int i = 0; i < res; ++i) g.coords.push_back(rows[static_cast<std::size_t>(i * res)][0]);
  g.extent = g.coords.back();
  for (std::size_t k = 0; k < rows.size(); ++k) g.values.push_back(valid[k] ? rows[k][2] : std::nan(""));
  g.valid = valid;
  return g;
}

struct Render {
  std::string run_dir;
  std::string output;

  void add(CLI::App* app) {
    app->add_option("run_dir", run_dir, "Run directory")->required();
    app->add_option("--output", output, "Directory for the SVGs (default: the run directory)");
  }

  int operator()(std::ostream& out, std::ostream&) const {
    const fs::path src(run_dir);
    if (!fs::is_directory(src)) throw MissingInput("no such run directory: " + run_dir);
    const fs::path dst = output.empty() ? src : fs::path(output);
    fs::create_directories(dst);
    int written = 0;
    if (fs::exists(src / "movement.csv")) {
      int n_src = 10000;
      if (fs::exists(src / "config.json")) {
        const json rc = io::read_json(src / "config.json");
        if (rc.contains("train")) n_src = rc["train"].value("n_sources", n_src);
        n_src = rc.value("n_sources", n_src);
      }
      const auto m = io::read_movement_csv(src / "movement.csv");
      io::write_text(dst / "shape.svg", svg_of(m, shape_of(m, n_src)));
      out << (dst / "shape.svg").string() << "\n";
      ++written;
    }
    if (fs::exists(src / "convergence.csv")) {
      std::ifstream in(src / "convergence.csv");
      std::string line;
      std::getline(in, line);
      std::vector<render::ConvergencePoint> pts;
      std::size_t lineno = 1;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string n, g;
        std::getline(ss, n, ',');
        std::getline(ss, g, ',');
        try {
          pts.push_back({std::stoi(n), std::stod(g)});
        } catch (const std::logic_error&) {
          throw ParseError("bad convergence row", lineno);
        }
      }
      std::ostringstream svg;
      render::convergence_svg(svg, pts, train::kGerverArea);
      io::write_text(dst / "convergence.svg", svg.str());
      out << (dst / "convergence.svg").string() << "\n";
      ++written;
    }
    if (fs::exists(src / "landscape.csv")) {
      std::ostringstream svg;
      render::landscape_svg(svg, read_landscape_csv(src / "landscape.csv"));
      io::write_text(dst / "landscape.svg", svg.str());
      out << (dst / "landscape.svg").string() << "\n";
      ++written;
    }
    if (written == 0) throw MissingInput("nothing to render in " + run_dir);
    return kOk;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Moving sofa experiments: area training, corridor upper bounds, landscapes"};
  app.require_subcommand(1);
  AreaTrain area_train;
  KrFive kr_five;
  KrConverge kr_converge;
  Landscape landscape;
  EvalMovement eval;
  Render rend;
  auto* s_train = app.add_subcommand("area-train", "Train a movement and record the sofa area");
  area_train.add(s_train);
  auto* s_five = app.add_subcommand("kr-five", "Optimize the five-angle upper bound");
  kr_five.add(s_five);
  auto* s_conv = app.add_subcommand("kr-converge", "Upper bound sweep over the number of angles");
  kr_converge.add(s_conv);
  auto* s_land = app.add_subcommand("landscape", "Objective landscape along the top Hessian eigenvectors");
  landscape.add(s_land);
  auto* s_eval = app.add_subcommand("eval-movement", "Area of a serialized movement or a fixture");
  eval.add(s_eval);
  auto* s_render = app.add_subcommand("render", "Render the SVGs of a run directory");
  rend.add(s_render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (s_train->parsed()) return area_train(out, err);
    if (s_five->parsed()) return kr_five(out, err);
    if (s_conv->parsed()) return kr_converge(out, err);
    if (s_land->parsed()) return landscape(out, err);
    if (s_eval->parsed()) return eval(out, err);
    if (s_render->parsed()) return rend(out, err);
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kNoInput;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"sofa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sofa::cli
