#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/ad.hpp"
#include "sofa/geom.hpp"
#include "sofa/nn.hpp"

// Upper bound on the sofa area from finitely many rotated corridors: the
// largest connected piece of the strip H cut by corridors rotated by fixed
// angles about free centers and by a butterfly of two rotated strips.
namespace sofa::kr {

using Center = std::array<double, 2>;

struct AngleSequence {
  std::vector<double> alphas;  // strictly increasing in (0, pi/2]
  double beta1 = M_PI / 2;
  double beta2 = M_PI / 2;

  std::size_t size() const { return alphas.size(); }
  /// Throws ConfigError unless alpha_1 < ... < alpha_k <= beta1 <= beta2 <= pi/2.
  void validate() const;

  /// The five arcsine angles with beta1 = beta2 = pi/2.
  static AngleSequence five_angles();
  /// First three of them, with (beta1, beta2) = (alpha4, alpha5).
  static AngleSequence five_angles_split();
  /// gamma_j = (j/n)(pi/2): angles gamma_1..gamma_{n-k-1}, betas gamma_{n-k}, gamma_{n-k+1}.
  static AngleSequence gamma(int n, int k);
};

nlohmann::json to_json(const AngleSequence& a);

struct GConfig {
  int n_sources = 10000;
  double margin = 0.5;
};

struct GEvaluation {
  double value = 0.0;      // largest connected component
  double reachable = 0.0;  // columns' pieces containing y = 1/2
  std::array<double, 2> x_window{0.0, 0.0};
  std::vector<Center> gradient;  // d value / d u_j
  int components = 0;
};

/// x range containing the region: intersection of the corridors' ranges plus
/// margin. Throws UnboundedRegion when no corridor bounds one side.
std::array<double, 2> g_window(const AngleSequence& angles, std::span<const Center> centers, double margin);

/// Value and gradient with respect to the centers.
GEvaluation g_area(const AngleSequence& angles, std::span<const Center> centers, const GConfig& cfg = {});

/// Same value built on a tape from differentiable centers.
ad::Var g_area(const AngleSequence& angles, std::span<const std::array<ad::Var, 2>> centers,
               const GConfig& cfg = {});

enum class CenterMode { free, networked };

std::string to_string(CenterMode m);
CenterMode parse_center_mode(const std::string& s);

/// Centers u_j either as free points or as two unconstrained networks u1(alpha), u2(alpha).
struct RotationCenters {
  CenterMode mode = CenterMode::free;
  std::vector<Center> points;
  std::array<nn::MlpParams, 2> nets;

  std::vector<Center> evaluate(const AngleSequence& angles) const;
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  /// Chain rule from d/du_j to the parameters.
  std::vector<double> pullback(const AngleSequence& angles, std::span<const Center> du) const;
};

nlohmann::json to_json(const RotationCenters& c, const AngleSequence& angles);

struct OptimizeConfig {
  CenterMode mode = CenterMode::networked;
  int epochs = 3000;
  double lr = 1e-3;
  std::int64_t halve_every = 1000;
  std::uint64_t seed = 0;
  std::vector<int> architecture{1, 64, 64, 1};
  double init_scale = 1.0;
  /// Free mode: centers drawn from U(-r, r)^2.
  double init_range = 1.0;
  GConfig g;
};

nlohmann::json to_json(const OptimizeConfig& c);

struct GResult {
  double value = 0.0;
  double reachable = 0.0;
  std::vector<Center> centers;
  RotationCenters model;
  std::vector<double> history;
  int best_epoch = -1;
  /// Largest chain and source-reachable areas differ by more than 1e-2.
  bool component_disagreement = false;
};

RotationCenters init_centers(const AngleSequence& angles, const OptimizeConfig& cfg);

/// Adam ascent on g over the centers; keeps the best value seen.
GResult optimize_G(const AngleSequence& angles, const OptimizeConfig& cfg);

enum class KPolicy { k1_only, full_ceil_n_over_3 };

std::string to_string(KPolicy p);
KPolicy parse_k_policy(const std::string& s);

struct SweepCell {
  int n = 0;
  int k = 0;
  std::uint64_t seed = 0;
  double G = 0.0;
  int epochs = 0;
  double wall_seconds = 0.0;
  std::string error;  // empty on success
};

struct SweepSpec {
  std::vector<int> n_list;
  KPolicy policy = KPolicy::k1_only;
  int seeds = 3;  // at k = 1; one seed otherwise
  OptimizeConfig optimize;
  int workers = 0;  // 0: hardware concurrency
};

/// Runs every (n, k, seed) cell on a bounded worker pool. Cells are returned
/// in (n, k, seed) order; `on_cell` sees them as they finish, one at a time.
std::vector<SweepCell> convergence_sweep(const SweepSpec& spec,
                                         const std::function<void(const SweepCell&)>& on_cell = {});

}  // namespace sofa::kr
