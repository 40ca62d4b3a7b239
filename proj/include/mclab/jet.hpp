#pragma once

// Second-order forward-mode jets: a value together with its gradient and Hessian
// with respect to a small fixed set of independent variables.

#include <Eigen/Core>

#include <cmath>

namespace mclab {

inline constexpr int kMaxJetVars = 32;

class Jet2 {
 public:
  using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxJetVars, 1>;
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxJetVars, kMaxJetVars>;

  Jet2() = default;
  /// A constant in `dim` variables.
  Jet2(double value, int dim) : v(value), g(Vec::Zero(dim)), h(Mat::Zero(dim, dim)) {}
  /// The independent variable `index` taking value `value`.
  static Jet2 variable(double value, int index, int dim) {
    Jet2 j(value, dim);
    j.g(index) = 1.0;
    return j;
  }

  [[nodiscard]] int dim() const { return static_cast<int>(g.size()); }

  /// Applies a scalar function with derivatives f1 = φ'(v), f2 = φ''(v).
  [[nodiscard]] Jet2 chain(double f0, double f1, double f2) const {
    Jet2 r;
    r.v = f0;
    r.g = f1 * g;
    r.h = f1 * h + f2 * (g * g.transpose());
    return r;
  }

  double v = 0.0;
  Vec g;
  Mat h;
};

inline Jet2 operator-(const Jet2& a) {
  Jet2 r;
  r.v = -a.v;
  r.g = -a.g;
  r.h = -a.h;
  return r;
}

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v + b.v;
  r.g = a.g + b.g;
  r.h = a.h + b.h;
  return r;
}

inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v - b.v;
  r.g = a.g - b.g;
  r.h = a.h - b.h;
  return r;
}

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v * b.v;
  r.g = a.v * b.g + b.v * a.g;
  const Jet2::Mat cross = a.g * b.g.transpose();
  const Jet2::Mat sym = cross + cross.transpose();
  r.h = a.v * b.h + b.v * a.h + sym;
  return r;
}

inline Jet2 operator*(double s, const Jet2& a) {
  Jet2 r;
  r.v = s * a.v;
  r.g = s * a.g;
  r.h = s * a.h;
  return r;
}

inline Jet2 operator+(const Jet2& a, double s) {
  Jet2 r = a;
  r.v += s;
  return r;
}

inline Jet2 reciprocal(const Jet2& a) {
  const double inv = 1.0 / a.v;
  return a.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * reciprocal(b); }

inline Jet2 exp(const Jet2& a) {
  const double e = std::exp(a.v);
  return a.chain(e, e, e);
}

inline Jet2 log(const Jet2& a) { return a.chain(std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v)); }

inline Jet2 sqrt(const Jet2& a) {
  const double s = std::sqrt(a.v);
  return a.chain(s, 0.5 / s, -0.25 / (s * a.v));
}

inline Jet2 sin(const Jet2& a) { return a.chain(std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
inline Jet2 cos(const Jet2& a) { return a.chain(std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }

/// a^c for a constant exponent; well defined at a = 0 for integer c ≥ 2.
inline Jet2 pow(const Jet2& a, double c) {
  return a.chain(std::pow(a.v, c), c * std::pow(a.v, c - 1.0), c * (c - 1.0) * std::pow(a.v, c - 2.0));
}

inline Jet2 pow(const Jet2& a, const Jet2& b) {
  if (b.g.isZero(0.0) && b.h.isZero(0.0)) return pow(a, b.v);
  return exp(b * log(a));
}

}  // namespace mclab
