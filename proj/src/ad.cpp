#include "sofa/ad.hpp"

#include <cmath>
#include <string>

#include "sofa/error.hpp"

namespace sofa::ad {

namespace {

Tape* common_tape(const Var& a, const Var& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta && tb && ta != tb) throw ConfigError("ad: operands live on different tapes");
  return ta ? ta : tb;
}

void check_finite(double value) {
  if (!std::isfinite(value)) throw NumericalError("ad: non-finite value " + std::to_string(value));
}

}  // namespace

Var Tape::variable(double value) {
  check_finite(value);
  const auto edge = static_cast<std::uint32_t>(edge_parent_.size());
  nodes_.push_back({edge, edge});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1), this);
}

Var Tape::record(double value, std::span<const Var> parents, std::span<const double> partials) {
  check_finite(value);
  const auto begin = static_cast<std::uint32_t>(edge_parent_.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const Var& p = parents[i];
    if (p.is_constant()) continue;
    if (p.tape() != this) throw ConfigError("ad: parent recorded on another tape");
    edge_parent_.push_back(static_cast<std::uint32_t>(p.id()));
    edge_partial_.push_back(partials[i]);
  }
  const auto end = static_cast<std::uint32_t>(edge_parent_.size());
  nodes_.push_back({begin, end});
  return Var(value, static_cast<std::int32_t>(nodes_.size() - 1), this);
}

Var Tape::unary(double value, const Var& a, double da) {
  if (a.is_constant()) {
    check_finite(value);
    return Var(value);
  }
  const Var parents[1] = {a};
  const double partials[1] = {da};
  return record(value, parents, partials);
}

Var Tape::binary(double value, const Var& a, double da, const Var& b, double db) {
  const Var parents[2] = {a, b};
  const double partials[2] = {da, db};
  return record(value, parents, partials);
}

void Tape::backward(const Var& output, double seed) {
  if (output.tape() != this) throw ConfigError("ad: backward output not on this tape");
  adjoint_.assign(nodes_.size(), 0.0);
  adjoint_[static_cast<std::size_t>(output.id())] = seed;
  for (std::size_t n = static_cast<std::size_t>(output.id()) + 1; n-- > 0;) {
    const double adj = adjoint_[n];
    if (adj == 0.0) continue;
    const Node& node = nodes_[n];
    for (std::uint32_t e = node.edge_begin; e < node.edge_end; ++e) {
      adjoint_[edge_parent_[e]] += adj * edge_partial_[e];
    }
  }
}

double Tape::adjoint(const Var& v) const {
  if (v.is_constant()) return 0.0;
  const auto i = static_cast<std::size_t>(v.id());
  return i < adjoint_.size() ? adjoint_[i] : 0.0;
}

void Tape::clear() {
  nodes_.clear();
  edge_parent_.clear();
  edge_partial_.clear();
  adjoint_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  nodes_.reserve(nodes);
  edge_parent_.reserve(edges);
  edge_partial_.reserve(edges);
}

Var operator+(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() + b.value();
  if (!t) return Var(v);
  return t->binary(v, a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() - b.value();
  if (!t) return Var(v);
  return t->binary(v, a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() * b.value();
  if (!t) return Var(v);
  return t->binary(v, a, b.value(), b, a.value());
}

Var operator/(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() / b.value();
  if (!t) {
    check_finite(v);
    return Var(v);
  }
  const double inv = 1.0 / b.value();
  return t->binary(v, a, inv, b, -v * inv);
}

Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value());
  return a.tape()->unary(-a.value(), a, -1.0);
}

namespace {

template <class F, class D>
Var apply(const Var& a, F f, D df) {
  const double v = f(a.value());
  if (a.is_constant()) {
    check_finite(v);
    return Var(v);
  }
  return a.tape()->unary(v, a, df(a.value(), v));
}

}  // namespace

Var sin(const Var& a) {
  return apply(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return apply(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var exp(const Var& a) {
  return apply(a, [](double x) { return std::exp(x); }, [](double, double v) { return v; });
}

Var log(const Var& a) {
  return apply(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return apply(a, [](double x) { return std::sqrt(x); }, [](double, double v) { return 0.5 / v; });
}

Var tanh(const Var& a) {
  return apply(a, [](double x) { return std::tanh(x); }, [](double, double v) { return 1.0 - v * v; });
}

Var softplus(const Var& a) {
  return apply(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var square(const Var& a) {
  return apply(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return apply(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& a) {
  return apply(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sum(std::span<const Var> terms) {
  Tape* t = nullptr;
  double v = 0.0;
  for (const Var& x : terms) {
    v += x.value();
    if (x.tape()) {
      if (t && t != x.tape()) throw ConfigError("ad: sum over different tapes");
      t = x.tape();
    }
  }
  if (!t) return Var(v);
  std::vector<double> ones(terms.size(), 1.0);
  return t->record(v, terms, ones);
}

Var dot(std::span<const double> weights, std::span<const Var> values) {
  if (weights.size() != values.size()) throw ShapeMismatch("ad: dot size mismatch");
  Tape* t = nullptr;
  double v = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    v += weights[i] * values[i].value();
    if (values[i].tape()) t = values[i].tape();
  }
  if (!t) return Var(v);
  return t->record(v, values, weights);
}

std::vector<double> gradient(const Var& output, std::span<const Var> inputs) {
  std::vector<double> g(inputs.size(), 0.0);
  if (output.is_constant()) return g;
  output.tape()->backward(output);
  for (std::size_t i = 0; i < inputs.size(); ++i) g[i] = output.tape()->adjoint(inputs[i]);
  return g;
}

}  // namespace sofa::ad
