#pragma once

// Reverse-mode automatic differentiation on a flat Wengert list.
//
// A Var is a value plus an index into the Tape that recorded it. Vars with
// no tape are constants; arithmetic between constants never touches a tape.
// Every recorded node stores its parents together with the local partial
// derivatives, so backward() is a single reverse sweep.

#include <cstdint>
#include <span>
#include <vector>

namespace sofa::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: implicit constants are the point

  double value() const { return value_; }
  std::int32_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(double value, std::int32_t id, Tape* tape) : value_(value), id_(id), tape_(tape) {}

  double value_ = 0.0;
  std::int32_t id_ = -1;
  Tape* tape_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New independent variable (leaf).
  Var variable(double value);

  /// Records a node whose parents are `parents` with local partials `partials`.
  /// Constant parents are skipped. Throws NumericalError on a non-finite value.
  Var record(double value, std::span<const Var> parents, std::span<const double> partials);
  Var unary(double value, const Var& a, double da);
  Var binary(double value, const Var& a, double da, const Var& b, double db);

  /// Reverse sweep from `output`; adjoints of all earlier nodes are overwritten.
  void backward(const Var& output, double seed = 1.0);
  double adjoint(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();
  void reserve(std::size_t nodes, std::size_t edges);

 private:
  struct Node {
    std::uint32_t edge_begin;
    std::uint32_t edge_end;
  };
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> edge_parent_;
  std::vector<double> edge_partial_;
  std::vector<double> adjoint_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
/// Subgradient 0 at the origin.
Var abs(const Var& a);
/// Subgradient 0 at the origin.
Var relu(const Var& a);

/// Selection: the winning operand is returned as-is, so gradient flows to it
/// only. Ties go to `a`.
inline Var max(const Var& a, const Var& b) { return b.value() > a.value() ? b : a; }
inline Var min(const Var& a, const Var& b) { return b.value() < a.value() ? b : a; }

Var sum(std::span<const Var> terms);
/// Σ w_i · v_i as a single node.
Var dot(std::span<const double> weights, std::span<const Var> values);

/// Gradient of `output` with respect to `inputs` (runs backward on their tape).
std::vector<double> gradient(const Var& output, std::span<const Var> inputs);

}  // namespace sofa::ad
