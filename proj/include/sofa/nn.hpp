#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/ad.hpp"

namespace sofa::nn {

enum class Activation { relu, tanh, softplus };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Fully-connected scalar-to-scalar network. weights[l] is (out x in).
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation activation = Activation::relu;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::uint64_t seed = 0;
  double scale = 1.0;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;
  /// Throws ConfigError unless sizes are consistent and input/output are 1.
  void validate() const;

  /// Layer by layer: weights row-major, then biases.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

/// Scaled uniform initialization U(-s*sqrt(k), s*sqrt(k)) with k = 1/fan_in.
struct InitConfig {
  double scale = 1.0;
  std::uint64_t seed = 0;
};

MlpParams init_params(std::span<const int> layer_sizes, Activation activation, const InitConfig& cfg);
MlpParams zero_params(std::span<const int> layer_sizes, Activation activation);

/// Plain double evaluation; the reference path everything else is checked against.
double evaluate(const MlpParams& p, double t);

/// Parameters bound to leaves of a tape, for scalar-at-a-time evaluation.
class TapedMlp {
 public:
  TapedMlp(const MlpParams& params, ad::Tape& tape);

  ad::Var forward(const ad::Var& t) const;
  /// d forward / dt from the ReLU activation pattern at t, as a product of
  /// masked weight matrices. Throws Unsupported for other activations.
  ad::Var input_slope(double t) const;

  const MlpParams& params() const { return params_; }
  std::span<const ad::Var> leaves() const { return leaves_; }
  /// Adjoints of the parameter leaves in flatten() order (after a backward()).
  std::vector<double> gradient() const;

 private:
  const ad::Var& weight(std::size_t layer, Eigen::Index r, Eigen::Index c) const;
  const ad::Var& bias(std::size_t layer, Eigen::Index r) const;

  const MlpParams& params_;
  ad::Tape& tape_;
  std::vector<ad::Var> leaves_;
  std::vector<std::size_t> offsets_;
};

ad::Var forward(const TapedMlp& net, const ad::Var& t);
ad::Var input_slope(const TapedMlp& net, double t);

/// Batched evaluation over many inputs with a matching reverse pass.
class MlpBatch {
 public:
  /// Evaluates the network at every t; with `with_slope` also propagates the
  /// input tangent (ReLU only).
  void forward(const MlpParams& p, std::span<const double> t, bool with_slope);

  const Eigen::RowVectorXd& values() const { return values_; }
  const Eigen::RowVectorXd& slopes() const { return slopes_; }

  /// Accumulates parameter gradients (flatten() order) given dL/dvalue and,
  /// optionally, dL/dslope per input.
  std::vector<double> backward(const MlpParams& p, std::span<const double> dvalues,
                               std::span<const double> dslopes = {}) const;

 private:
  std::vector<Eigen::MatrixXd> pre_;    // Z_l
  std::vector<Eigen::MatrixXd> post_;   // A_l, with A_0 the input row
  std::vector<Eigen::MatrixXd> tangent_;
  Eigen::RowVectorXd values_;
  Eigen::RowVectorXd slopes_;
  bool has_slope_ = false;
};

nlohmann::json to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Optimizers

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Learning rate is halved every this many steps; 0 disables the schedule.
  std::int64_t halve_every = 2000;
};

class Adam {
 public:
  Adam(std::size_t n_params, AdamConfig cfg);

  /// Learning rate used by the step with 0-based index `step`.
  double lr_at(std::int64_t step) const;
  double current_lr() const { return lr_at(steps_); }
  std::int64_t steps() const { return steps_; }

  /// Descent step (minimizes). Throws NumericalError on a non-finite gradient.
  void step(std::span<double> params, std::span<const double> grads);

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t steps_ = 0;
};

/// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsConfig {
  int max_iter = 100;
  int history = 10;
  double grad_tol = 1e-12;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 25;
};

struct LbfgsResult {
  int iterations = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

/// L-BFGS (two-loop recursion, strong-Wolfe line search); minimizes in place.
LbfgsResult lbfgs_refine(std::vector<double>& x, const Objective& f, const LbfgsConfig& cfg = {});

}  // namespace sofa::nn
