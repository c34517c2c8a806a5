#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/geom.hpp"
#include "sofa/nn.hpp"
#include "sofa/waterfall.hpp"

namespace sofa::train {

/// Minimum final rotation, arcsin(84/85) rad (about 81.2 degrees).
inline const double kThetaStar = std::asin(84.0 / 85.0);
/// Gerver's sofa area, the best known lower bound.
inline constexpr double kGerverArea = 2.219532;

enum Channel : std::size_t { kXp = 0, kYp = 1, kAlpha = 2 };

/// Init scales of the three networks.
struct ScaleSet {
  double x_p = 0.25;
  double y_p = 0.25;
  double alpha = 0.25;

  double operator[](std::size_t c) const { return c == kXp ? x_p : c == kYp ? y_p : alpha; }
};

struct TrainConfig {
  int epochs = 10000;
  double lr = 1e-4;
  std::vector<int> architecture{1, 256, 256, 1};
  std::uint64_t seed = 0;
  int n_time = 2000;
  int n_sources = 10000;
  nn::Activation activation = nn::Activation::relu;
  ScaleSet scales;
  geom::DerivativeBackend backend = geom::DerivativeBackend::grid_fd;
  double mask_epsilon = 1e-6;
  double margin = 0.1;
  std::int64_t halve_every = 2000;
  double vanish_area = 0.5;
  int vanish_epochs = 500;
  /// L-BFGS iterations on the best checkpoint after Adam; 0 disables.
  int lbfgs_iters = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep the values already in `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Three unconstrained networks F realising x_p = -|F(t) - F(0)|,
/// y_p = |F(t) - F(0)| and alpha = |F(t) - F(0)| on a fixed grid.
struct ConstrainedMovementModel {
  std::array<nn::MlpParams, 3> nets;
  geom::TimeGrid grid = geom::TimeGrid::uniform(2);
  geom::DerivativeBackend backend = geom::DerivativeBackend::grid_fd;
  double mask_epsilon = 1e-6;
  double margin = 0.1;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

/// Networks initialized from cfg; per-network seeds are split from cfg.seed.
ConstrainedMovementModel make_model(const TrainConfig& cfg);

/// Realised (x_p, y_p, alpha) at t from plain double evaluation.
std::array<double, 3> movement_at(const ConstrainedMovementModel& model, double t);

struct LossBreakdown {
  ad::Var area;
  ad::Var penalty;
  ad::Var total;  // -area + penalty
  bool degenerate = false;
};

/// Everything built by one forward pass; the Vars live on the caller's tape.
struct Evaluation {
  geom::MovementSample movement;
  std::optional<geom::EnvelopeSet> envelopes;
  std::optional<geom::FringeCurves> fringes;
  std::optional<waterfall::AreaResult> area;
  LossBreakdown loss;
  std::array<nn::MlpBatch, 3> batches;
  std::array<std::vector<ad::Var>, 3> value_leaves;
  std::array<std::vector<ad::Var>, 3> slope_leaves;
};

Evaluation evaluate(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg,
                    ad::Tape& tape);

struct LossValues {
  double area = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double alpha_end = 0.0;
  bool degenerate = false;
};

/// Loss and its gradient over model.flatten().
LossValues loss_and_gradient(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg,
                             std::vector<double>& grad);
LossValues loss_only(const ConstrainedMovementModel& model, const waterfall::WaterfallConfig& wcfg);

struct EpochRecord {
  int epoch = 0;
  double area = 0.0;
  double penalty = 0.0;
  double lr = 0.0;
  bool degenerate = false;
};

struct TrainResult {
  double final_area = 0.0;
  double final_penalty = 0.0;
  double final_alpha_end = 0.0;
  double best_area = 0.0;
  int best_epoch = -1;
  std::vector<EpochRecord> history;
  ConstrainedMovementModel final_model;
  ConstrainedMovementModel checkpoint;  // best feasible area seen
  bool vanished = false;
  int degenerate_epochs = 0;
  std::optional<nn::LbfgsResult> lbfgs;
  double refined_area = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full-batch Adam on the loss. Stops early once the area has stayed below
/// cfg.vanish_area for cfg.vanish_epochs epochs. NumericalError propagates.
TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});
/// Same, starting from an existing model.
TrainResult train(const TrainConfig& cfg, ConstrainedMovementModel model, const EpochCallback& on_epoch = {});

nlohmann::json checkpoint_to_json(const ConstrainedMovementModel& m);
ConstrainedMovementModel checkpoint_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

struct CoverageRow {
  double scale = 0.0;
  double p95 = 0.0;       // 95th percentile over seeds of max_t |F(t) - F(0)|
  double max_range = 0.0;
};

/// Range reached by freshly initialized networks for each scale.
std::vector<CoverageRow> coverage_sweep(std::span<const int> layer_sizes, nn::Activation activation,
                                        std::span<const double> scales, int n_seeds, int n_t,
                                        std::uint64_t base_seed = 0);
/// Smallest scale whose p95 reaches `target`, or nullopt.
std::optional<double> smallest_covering_scale(std::span<const CoverageRow> rows, double target);

}  // namespace sofa::train
