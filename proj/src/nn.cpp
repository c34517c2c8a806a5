#include "sofa/nn.hpp"

#include <cmath>

#include "sofa/error.hpp"
#include "sofa/rng.hpp"

namespace sofa::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + name + "'");
}

namespace {

double act(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  return z;
}

double act_grad(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
    case Activation::softplus: return 1.0 / (1.0 + std::exp(-z));
  }
  return 1.0;
}

ad::Var act(Activation a, const ad::Var& z) {
  switch (a) {
    case Activation::relu: return ad::relu(z);
    case Activation::tanh: return ad::tanh(z);
    case Activation::softplus: return ad::softplus(z);
  }
  return z;
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

void MlpParams::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
  if (layer_sizes.front() != 1 || layer_sizes.back() != 1) {
    throw ConfigError("mlp: input and output size must be 1");
  }
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
    throw ConfigError("mlp: layer count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (layer_sizes[l] <= 0 || weights[l].cols() != layer_sizes[l] || weights[l].rows() != layer_sizes[l + 1] ||
        biases[l].size() != layer_sizes[l + 1]) {
      throw ConfigError("mlp: size mismatch at layer " + std::to_string(l));
    }
  }
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) flat.push_back(biases[l](r));
  }
  return flat;
}

void MlpParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeMismatch("mlp: flat parameter size mismatch");
  std::size_t k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) biases[l](r) = flat[k++];
  }
}

MlpParams zero_params(std::span<const int> layer_sizes, Activation activation) {
  MlpParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  p.activation = activation;
  if (p.layer_sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    if (p.layer_sizes[l] <= 0 || p.layer_sizes[l + 1] <= 0) throw ConfigError("mlp: layer sizes must be positive");
    p.weights.emplace_back(Eigen::MatrixXd::Zero(p.layer_sizes[l + 1], p.layer_sizes[l]));
    p.biases.emplace_back(Eigen::VectorXd::Zero(p.layer_sizes[l + 1]));
  }
  p.validate();
  return p;
}

MlpParams init_params(std::span<const int> layer_sizes, Activation activation, const InitConfig& cfg) {
  if (!(cfg.scale > 0.0)) throw ConfigError("init: scale must be positive");
  MlpParams p = zero_params(layer_sizes, activation);
  p.seed = cfg.seed;
  p.scale = cfg.scale;
  Rng rng(cfg.seed);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double bound = cfg.scale * std::sqrt(1.0 / static_cast<double>(p.layer_sizes[l]));
    auto& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = rng.uniform(-bound, bound);
  }
  return p;
}

double evaluate(const MlpParams& p, double t) {
  Eigen::VectorXd a(1);
  a(0) = t;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::VectorXd z = p.weights[l] * a + p.biases[l];
    if (l + 1 < p.weights.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = act(p.activation, z(i));
    }
    a = std::move(z);
  }
  return a(0);
}

// ---------------------------------------------------------------------------

TapedMlp::TapedMlp(const MlpParams& params, ad::Tape& tape) : params_(params), tape_(tape) {
  params_.validate();
  const std::vector<double> flat = params_.flatten();
  leaves_.reserve(flat.size());
  for (double v : flat) leaves_.push_back(tape_.variable(v));
  std::size_t off = 0;
  for (std::size_t l = 0; l < params_.weights.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(params_.weights[l].size() + params_.biases[l].size());
  }
}

const ad::Var& TapedMlp::weight(std::size_t layer, Eigen::Index r, Eigen::Index c) const {
  return leaves_[offsets_[layer] + static_cast<std::size_t>(r * params_.weights[layer].cols() + c)];
}

const ad::Var& TapedMlp::bias(std::size_t layer, Eigen::Index r) const {
  return leaves_[offsets_[layer] + static_cast<std::size_t>(params_.weights[layer].size() + r)];
}

ad::Var TapedMlp::forward(const ad::Var& t) const {
  std::vector<ad::Var> a{t};
  std::vector<ad::Var> parents;
  std::vector<double> partials;
  for (std::size_t l = 0; l < params_.weights.size(); ++l) {
    const auto& w = params_.weights[l];
    std::vector<ad::Var> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      parents.clear();
      partials.clear();
      double v = params_.biases[l](r);
      parents.push_back(bias(l, r));
      partials.push_back(1.0);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const ad::Var& x = a[static_cast<std::size_t>(c)];
        v += w(r, c) * x.value();
        parents.push_back(weight(l, r, c));
        partials.push_back(x.value());
        parents.push_back(x);
        partials.push_back(w(r, c));
      }
      ad::Var zr = tape_.record(v, parents, partials);
      z[static_cast<std::size_t>(r)] = (l + 1 < params_.weights.size()) ? act(params_.activation, zr) : zr;
    }
    a = std::move(z);
  }
  return a[0];
}

ad::Var TapedMlp::input_slope(double t) const {
  if (params_.activation != Activation::relu) throw Unsupported("input_slope requires relu activation");
  // Activation pattern at t from a plain forward pass.
  std::vector<std::vector<bool>> active;
  {
    Eigen::VectorXd a(1);
    a(0) = t;
    for (std::size_t l = 0; l + 1 < params_.weights.size(); ++l) {
      Eigen::VectorXd z = params_.weights[l] * a + params_.biases[l];
      std::vector<bool> mask(static_cast<std::size_t>(z.size()));
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        mask[static_cast<std::size_t>(i)] = z(i) > 0.0;
        z(i) = z(i) > 0.0 ? z(i) : 0.0;
      }
      active.push_back(std::move(mask));
      a = std::move(z);
    }
  }
  // Tangent propagation recorded on the tape: T_l = D_l (W_l T_{l-1}), T_0 = 1.
  std::vector<ad::Var> tangent{ad::Var(1.0)};
  std::vector<ad::Var> parents;
  std::vector<double> partials;
  for (std::size_t l = 0; l < params_.weights.size(); ++l) {
    const auto& w = params_.weights[l];
    const bool hidden = l + 1 < params_.weights.size();
    std::vector<ad::Var> next(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      if (hidden && !active[l][static_cast<std::size_t>(r)]) {
        next[static_cast<std::size_t>(r)] = ad::Var(0.0);
        continue;
      }
      parents.clear();
      partials.clear();
      double v = 0.0;
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const ad::Var& x = tangent[static_cast<std::size_t>(c)];
        if (x.is_constant() && x.value() == 0.0) continue;
        v += w(r, c) * x.value();
        parents.push_back(weight(l, r, c));
        partials.push_back(x.value());
        parents.push_back(x);
        partials.push_back(w(r, c));
      }
      next[static_cast<std::size_t>(r)] = parents.empty() ? ad::Var(0.0) : tape_.record(v, parents, partials);
    }
    tangent = std::move(next);
  }
  return tangent[0];
}

std::vector<double> TapedMlp::gradient() const {
  std::vector<double> g(leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) g[i] = tape_.adjoint(leaves_[i]);
  return g;
}

ad::Var forward(const TapedMlp& net, const ad::Var& t) { return net.forward(t); }
ad::Var input_slope(const TapedMlp& net, double t) { return net.input_slope(t); }

// ---------------------------------------------------------------------------

void MlpBatch::forward(const MlpParams& p, std::span<const double> t, bool with_slope) {
  if (with_slope && p.activation != Activation::relu) {
    throw Unsupported("exact slopes require relu activation; use the grid_fd backend");
  }
  const auto n = static_cast<Eigen::Index>(t.size());
  const std::size_t layers = p.weights.size();
  pre_.resize(layers);
  post_.resize(layers + 1);
  post_[0] = Eigen::Map<const Eigen::RowVectorXd>(t.data(), n);
  has_slope_ = with_slope;
  if (with_slope) {
    tangent_.resize(layers + 1);
    tangent_[0] = Eigen::RowVectorXd::Ones(n);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    pre_[l].noalias() = p.weights[l] * post_[l];
    pre_[l].colwise() += p.biases[l];
    if (l + 1 < layers) {
      post_[l + 1] = pre_[l].unaryExpr([a = p.activation](double z) { return act(a, z); });
    } else {
      post_[l + 1] = pre_[l];
    }
    if (with_slope) {
      Eigen::MatrixXd tz = p.weights[l] * tangent_[l];
      if (l + 1 < layers) tz = tz.cwiseProduct((pre_[l].array() > 0.0).cast<double>().matrix());
      tangent_[l + 1] = std::move(tz);
    }
  }
  values_ = post_[layers].row(0);
  if (with_slope) slopes_ = tangent_[layers].row(0);
}

std::vector<double> MlpBatch::backward(const MlpParams& p, std::span<const double> dvalues,
                                       std::span<const double> dslopes) const {
  const std::size_t layers = p.weights.size();
  const Eigen::Index n = post_[0].cols();
  if (static_cast<Eigen::Index>(dvalues.size()) != n) throw ShapeMismatch("mlp batch: dvalues size");
  const bool slope_path = !dslopes.empty();
  if (slope_path && (!has_slope_ || static_cast<Eigen::Index>(dslopes.size()) != n)) {
    throw ShapeMismatch("mlp batch: slope gradients need a forward pass with slopes");
  }

  std::vector<Eigen::MatrixXd> dw(layers);
  std::vector<Eigen::VectorXd> db(layers);
  Eigen::MatrixXd g = Eigen::Map<const Eigen::RowVectorXd>(dvalues.data(), n);
  Eigen::MatrixXd s;
  if (slope_path) s = Eigen::Map<const Eigen::RowVectorXd>(dslopes.data(), n);

  for (std::size_t l = layers; l-- > 0;) {
    dw[l].noalias() = g * post_[l].transpose();
    db[l] = g.rowwise().sum();
    if (slope_path) dw[l].noalias() += s * tangent_[l].transpose();
    if (l == 0) break;
    Eigen::MatrixXd deriv = pre_[l - 1].unaryExpr([a = p.activation](double z) { return act_grad(a, z); });
    Eigen::MatrixXd gp = p.weights[l].transpose() * g;
    g = gp.cwiseProduct(deriv);
    if (slope_path) {
      Eigen::MatrixXd sp = p.weights[l].transpose() * s;
      s = sp.cwiseProduct(deriv);
    }
  }

  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  for (std::size_t l = 0; l < layers; ++l) {
    for (Eigen::Index r = 0; r < dw[l].rows(); ++r)
      for (Eigen::Index c = 0; c < dw[l].cols(); ++c) flat.push_back(dw[l](r, c));
    for (Eigen::Index r = 0; r < db[l].size(); ++r) flat.push_back(db[l](r));
  }
  return flat;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json j;
  j["layer_sizes"] = p.layer_sizes;
  j["activation"] = to_string(p.activation);
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) w.push_back(p.weights[l](r, c));
    ws.push_back(w);
    bs.push_back(std::vector<double>(p.biases[l].data(), p.biases[l].data() + p.biases[l].size()));
  }
  j["weights"] = ws;
  j["biases"] = bs;
  j["seed"] = p.seed;
  j["s"] = p.scale;
  return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  try {
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    MlpParams p = zero_params(sizes, parse_activation(j.at("activation").get<std::string>()));
    p.seed = j.at("seed").get<std::uint64_t>();
    p.scale = j.at("s").get<double>();
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != p.weights.size() || bs.size() != p.biases.size()) {
      throw ConfigError("checkpoint: layer count mismatch");
    }
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      const auto w = ws[l].get<std::vector<double>>();
      const auto b = bs[l].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != p.weights[l].size() ||
          static_cast<Eigen::Index>(b.size()) != p.biases[l].size()) {
        throw ConfigError("checkpoint: parameter size mismatch at layer " + std::to_string(l));
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) p.weights[l](r, c) = w[k++];
      for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = b[static_cast<std::size_t>(r)];
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t n_params, AdamConfig cfg) : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam: lr must be positive");
}

double Adam::lr_at(std::int64_t step) const {
  if (cfg_.halve_every <= 0) return cfg_.lr;
  return std::ldexp(cfg_.lr, -static_cast<int>(step / cfg_.halve_every));
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeMismatch("adam: size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient");
  }
  const double lr = lr_at(steps_);
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

}  // namespace sofa::nn
