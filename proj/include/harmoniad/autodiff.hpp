#pragma once

// Reverse-mode scalar for gradient evaluation.
//
// A Var carries its value and the index of the tape node that produced it.
// Constants (index -1) never touch the tape, so arithmetic on frozen inputs
// costs the same as plain doubles. Nodes record (parent, partial) edges;
// backward() sweeps them in reverse to accumulate adjoints.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace harmoniad::ad {

struct Edge {
  std::int32_t parent;
  double partial;
};

class Tape {
 public:
  Tape() { offsets_.push_back(0); }

  std::int32_t size() const { return static_cast<std::int32_t>(offsets_.size()) - 1; }
  std::size_t edge_count() const { return edges_.size(); }

  std::int32_t new_leaf() {
    offsets_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return size() - 1;
  }

  void add_edge(std::int32_t parent, double partial) {
    if (parent >= 0) edges_.push_back({parent, partial});
  }

  // Closes the node whose edges were appended since the previous close.
  std::int32_t close_node() {
    offsets_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return size() - 1;
  }

  void clear() {
    offsets_.resize(1);
    edges_.clear();
  }

  // Adjoints of every node with respect to `output`.
  std::vector<double> backward(std::int32_t output) const;
  // Same, writing into a caller-owned buffer so repeated sweeps reuse it.
  void backward(std::int32_t output, std::vector<double>& adjoint) const;

 private:
  std::vector<std::uint32_t> offsets_;
  std::vector<Edge> edges_;
};

// The tape that Var arithmetic records onto in this thread.
Tape* active_tape();

// Installs a tape for the current thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: constants convert implicitly
  Var(double value, std::int32_t node) : v(value), id(node) {}

  bool is_constant() const { return id < 0; }

  static Var leaf(double value) { return {value, active_tape()->new_leaf()}; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var operator+(const Var& a, const Var& b);
  friend Var operator-(const Var& a, const Var& b);
  friend Var operator*(const Var& a, const Var& b);
  friend Var operator/(const Var& a, const Var& b);
  friend Var operator-(const Var& a);
};

namespace detail {

inline Var unary(double value, const Var& a, double da) {
  if (a.is_constant()) return Var(value);
  Tape* t = active_tape();
  t->add_edge(a.id, da);
  return {value, t->close_node()};
}

inline Var binary(double value, const Var& a, double da, const Var& b, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  Tape* t = active_tape();
  t->add_edge(a.id, da);
  t->add_edge(b.id, db);
  return {value, t->close_node()};
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(q, a, 1.0 / b.v, b, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(-a.v, a, -1.0); }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator==(const Var& a, const Var& b) { return a.v == b.v; }
inline bool operator!=(const Var& a, const Var& b) { return a.v != b.v; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return detail::unary(e, a, e);
}
inline Var log(const Var& a) { return detail::unary(std::log(a.v), a, 1.0 / a.v); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return detail::unary(s, a, s > 0.0 ? 0.5 / s : 0.0);
}
inline Var abs(const Var& a) { return detail::unary(std::abs(a.v), a, a.v < 0.0 ? -1.0 : 1.0); }
inline Var relu(const Var& a) { return detail::unary(a.v > 0.0 ? a.v : 0.0, a, a.v > 0.0 ? 1.0 : 0.0); }

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
  const double s = stable_sigmoid(a.v);
  return detail::unary(s, a, s * (1.0 - s));
}
inline Var softplus(const Var& a) {
  const double y = a.v > 0.0 ? a.v + std::log1p(std::exp(-a.v)) : std::log1p(std::exp(a.v));
  return detail::unary(y, a, stable_sigmoid(a.v));
}
inline Var silu(const Var& a) {
  const double s = stable_sigmoid(a.v);
  return detail::unary(a.v * s, a, s * (1.0 + a.v * (1.0 - s)));
}

// |re + i·im|, with a zero subgradient at the origin.
inline Var magnitude(const Var& re, const Var& im) {
  const double m = std::hypot(re.v, im.v);
  if (m == 0.0) return detail::binary(0.0, re, 0.0, im, 0.0);
  return detail::binary(m, re, re.v / m, im, im.v / m);
}

// Σ a_i with one n-ary node.
inline Var sum(std::span<const Var> terms) {
  double total = 0.0;
  bool any = false;
  for (const Var& x : terms) {
    total += x.v;
    any = any || !x.is_constant();
  }
  if (!any) return Var(total);
  Tape* t = active_tape();
  for (const Var& x : terms) t->add_edge(x.id, 1.0);
  return {total, t->close_node()};
}

// Σ a[i*sa] * b[i*sb] with one n-ary node.
inline Var strided_dot(const Var* a, std::ptrdiff_t sa, const Var* b, std::ptrdiff_t sb, std::ptrdiff_t n) {
  double total = 0.0;
  bool any = false;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Var& x = a[i * sa];
    const Var& y = b[i * sb];
    total += x.v * y.v;
    any = any || !x.is_constant() || !y.is_constant();
  }
  if (!any) return Var(total);
  Tape* t = active_tape();
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Var& x = a[i * sa];
    const Var& y = b[i * sb];
    t->add_edge(x.id, y.v);
    t->add_edge(y.id, x.v);
  }
  return {total, t->close_node()};
}

// Σ w_i x_i for constant weights.
inline Var weighted_sum(std::span<const double> w, std::span<const Var> x) {
  double total = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += w[i] * x[i].v;
    any = any || !x[i].is_constant();
  }
  if (!any) return Var(total);
  Tape* t = active_tape();
  for (std::size_t i = 0; i < w.size(); ++i) t->add_edge(x[i].id, w[i]);
  return {total, t->close_node()};
}

}  // namespace harmoniad::ad

namespace Eigen {

template <>
struct NumTraits<harmoniad::ad::Var> : NumTraits<double> {
  using Real = harmoniad::ad::Var;
  using NonInteger = harmoniad::ad::Var;
  using Nested = harmoniad::ad::Var;
  using Literal = harmoniad::ad::Var;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 4,
    MulCost = 4
  };
};

}  // namespace Eigen
