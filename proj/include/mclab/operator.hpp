#pragma once

// Nonlinear operators F(r, p, u, x, t) with r a symmetric n×n matrix, and their
// derivatives up to second order in (r, u, x).

#include "mclab/expr.hpp"
#include "mclab/linalg.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>

namespace mclab::opcheck {

struct Point {
  Matrix r;
  Vector p;
  double u = 0.0;
  Vector x;
  double t = 0.0;

  /// All-zero point of dimension n.
  static Point zero(int n);
};

struct Dependence {
  bool p = false;
  bool u = false;
  bool x = false;
  bool t = false;
};

/// Derivatives of F at one point. Second derivatives are stored over the variables
/// z = (r_11, r_12, …, r_1n, r_22, …, r_nn, u, x_1, …, x_n), the upper triangle of r
/// taken row by row, so F^{ij,kl} X_ij X_kl for symmetric X is a plain quadratic form.
struct OperatorDerivatives {
  int n = 0;
  double value = 0.0;
  Matrix grad_r;  ///< F^{ij}, symmetric
  double grad_u = 0.0;
  Vector grad_x;  ///< F^{x_i}
  Matrix hess;    ///< over z

  [[nodiscard]] int r_vars() const { return n * (n + 1) / 2; }
  [[nodiscard]] int u_var() const { return r_vars(); }
  [[nodiscard]] int x_var(int k) const { return r_vars() + 1 + k; }

  /// Σ F^{ij,kl} X_ij Y_kl
  [[nodiscard]] double rr(const Matrix& x, const Matrix& y) const;
  /// Σ F^{ij,u} X_ij
  [[nodiscard]] double ru(const Matrix& x) const;
  /// k ↦ Σ F^{ij,x_k} X_ij
  [[nodiscard]] Vector rx(const Matrix& x) const;
  [[nodiscard]] double uu() const;
  [[nodiscard]] Vector ux() const;
  [[nodiscard]] Matrix xx() const;
  /// F^{ij,kl} with the symmetric-matrix convention (each off-diagonal pair shares weight).
  [[nodiscard]] double hess_r(int i, int j, int k, int l) const;
  /// Largest absolute second derivative; a scale for tolerances.
  [[nodiscard]] double hess_scale() const;
};

/// Index of r_ij (any order) among the z variables.
[[nodiscard]] int sym_index(int i, int j, int n);
/// Coordinates of a symmetric matrix in the upper-triangle parameterization.
[[nodiscard]] Vector sym_coords(const Matrix& x);

class OperatorSpec {
 public:
  using ValueFn = std::function<double(const Point&)>;

  /// Closed-form derivatives by second-order forward differentiation of the expression.
  OperatorSpec(std::string name, int n, expr::Expression e);
  /// Derivatives by central finite differences of `f`.
  OperatorSpec(std::string name, int n, ValueFn f, Dependence deps);

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] int n() const noexcept { return n_; }
  [[nodiscard]] const Dependence& depends() const noexcept { return deps_; }
  [[nodiscard]] bool closed_form() const noexcept { return expression_.has_value(); }
  [[nodiscard]] const std::optional<expr::Expression>& expression() const noexcept { return expression_; }

  [[nodiscard]] double value(const Point& pt) const;
  /// Closed form when available, otherwise finite differences.
  [[nodiscard]] OperatorDerivatives derivatives(const Point& pt) const;
  /// Central differences with step 1e-5·(1+‖r‖) for first and 1e-4·(1+‖r‖) for second derivatives.
  [[nodiscard]] OperatorDerivatives fd_derivatives(const Point& pt) const;
  /// F^{αβ} only.
  [[nodiscard]] Matrix coefficients(const Point& pt) const;

 private:
  void check_point(const Point& pt) const;

  std::string name_;
  int n_ = 0;
  Dependence deps_;
  std::optional<expr::Expression> expression_;
  ValueFn fn_;
};

// ---------------------------------------------------------------------------
// Catalogue

/// Operator from an expression string; n bounds the indices it may use (n ≤ 6).
[[nodiscard]] OperatorSpec from_expression(const std::string& name, int n, const std::string& text);
[[nodiscard]] OperatorSpec sigma_k(int n, int k);
/// σ_l/σ_k.
[[nodiscard]] OperatorSpec sigma_quotient(int n, int l, int k);
/// g(F_1, …, F_m) with g written in terms of f_1 … f_m; g is taken on trust to be convex.
[[nodiscard]] OperatorSpec convex_composition(const std::string& g, std::span<const OperatorSpec> ops);
/// G(r) = F(r + E); throws std::invalid_argument unless E is symmetric PSD.
[[nodiscard]] OperatorSpec shift(const OperatorSpec& op, const Matrix& e);
/// −1/Σ a^{ij} r_ij + 1/f with f an expression in (p, u, x).
[[nodiscard]] OperatorSpec harmonic_reciprocal(const Matrix& a, const std::string& f);

}  // namespace mclab::opcheck
