#pragma once

// Sampling checks of ellipticity and of the inverse-convexity condition: the quadratic
// form at a positive definite A, the degenerate-block form Q*, and its restriction to
// the hyperplane Γ⊥ orthogonal to X*_F = (F^{αβ}, −F^u, −F^x).

#include "mclab/operator.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mclab::opcheck {

/// X̃ = (X, Y, Z).
struct TestDirection {
  Matrix X;
  double Y = 0.0;
  Vector Z;

  [[nodiscard]] double dot(const TestDirection& o) const;
  [[nodiscard]] double norm() const;
  [[nodiscard]] TestDirection scaled(double s) const;
};

/// The point (Q diag(0, B) Qᵀ, p, u, x, t) at which Q* is evaluated.
struct DegeneratePoint {
  Matrix Q;  ///< n×n orthogonal
  Matrix B;  ///< (n−1)×(n−1) positive definite
  Vector p;
  double u = 0.0;
  Vector x;
  double t = 0.0;

  [[nodiscard]] int n() const { return static_cast<int>(Q.rows()); }
  /// Q diag(0, B) Qᵀ
  [[nodiscard]] Matrix r() const;
  /// Q diag(0, B⁻¹) Qᵀ
  [[nodiscard]] Matrix pseudo_inverse() const;
  [[nodiscard]] Point point() const;
};

/// True when Qᵀ X Q has a zero first row and column (to 1e-10 relative).
[[nodiscard]] bool in_degenerate_subspace(const Matrix& q, const Matrix& x);
/// Q P Qᵀ X Q P Qᵀ with P = diag(0, 1, …, 1).
[[nodiscard]] Matrix project_to_degenerate_subspace(const Matrix& q, const Matrix& x);

/// The (X, Y, Z) quadratic form with second derivatives `d` and the matrix `ainv` playing
/// the role of A^{kl}.
[[nodiscard]] double inverse_convexity_form(const OperatorDerivatives& d, const Matrix& ainv,
                                            const TestDirection& dir);

/// Full form at a positive definite A with derivatives taken at (A, p, u, x, t).
/// Throws std::invalid_argument unless A is symmetric positive definite.
[[nodiscard]] double condition_c_form(const OperatorSpec& op, const Matrix& a, const Vector& p, double u,
                                      const Vector& x, const TestDirection& dir, double t = 0.0);

/// Q*(X̃, X̃). Throws std::invalid_argument unless dir.X ∈ S_{n−1}(Q) and B ≻ 0.
[[nodiscard]] double qstar_form(const OperatorSpec& op, const DegeneratePoint& pt, const TestDirection& dir);

/// dir minus its component along X*_F, computed inside S_{n−1}(Q) × R × Rⁿ.
/// Throws DegenerateNormal when the projected X*_F has norm below 1e-12.
[[nodiscard]] TestDirection project_gamma_perp(const OperatorDerivatives& d, const Matrix& q,
                                               const TestDirection& dir);
[[nodiscard]] TestDirection project_gamma_perp(const OperatorSpec& op, const DegeneratePoint& pt,
                                               const TestDirection& dir);

/// Uniform direction on the unit sphere of S_{n−1}(Q) × R × Rⁿ (Frobenius inner product).
[[nodiscard]] TestDirection random_direction(const Matrix& q, Rng& rng);

// ---------------------------------------------------------------------------
// Sampled checks

enum class Verdict { Pass, Fail, Inconclusive };
[[nodiscard]] const char* to_string(Verdict v);

/// Draws A⁻¹ (or the degenerate point) near `center` instead of globally.
struct Neighbourhood {
  Matrix center;
  double radius = 0.1;
};

struct SamplePlan {
  std::size_t samples = 10000;  ///< points; several directions are evaluated per point
  std::uint64_t seed = 0;
  double eig_lo = 1e-3;
  double eig_hi = 1e3;
  double p_sigma = 1.0;
  double u_sigma = 1.0;
  double x_sigma = 1.0;
  double t = 0.0;
  bool structured_directions = true;  ///< add pure X, pure Y and pure Z directions
  std::optional<Neighbourhood> neighbourhood;
  std::vector<Point> points;  ///< explicit points used instead of random ones (ellipticity, condition c)
  unsigned threads = 0;       ///< 0 selects std::thread::hardware_concurrency()
};

struct Tolerances {
  double ellipticity_floor = 1e-8;  ///< δ_0
  double pass = 1e-9;               ///< relative to the sample scale
  double fail = 1e-6;
};

struct Witness {
  std::string kind;     ///< which form produced the value
  Point point;          ///< derivatives were taken here
  Matrix Q;             ///< degenerate frame (Q* samples only)
  Matrix B;
  Matrix ainv;          ///< matrix used for A^{kl}
  TestDirection direction;
  std::size_t sample = 0;
};

struct ConditionReport {
  std::string condition;
  std::string op;
  std::size_t samples = 0;       ///< evaluated form values
  std::size_t inconclusive = 0;  ///< samples whose evaluation failed or was not finite
  double worst = 0.0;            ///< minimum raw value
  double worst_scaled = 0.0;     ///< minimum of value / sample scale
  double scale = 1.0;            ///< scale at the worst sample
  Witness witness;
  Verdict verdict = Verdict::Inconclusive;
  std::string note;
};

/// min λ_min(F^{αβ}) over random PSD r with log-uniform eigenvalues (or plan.points).
[[nodiscard]] ConditionReport check_ellipticity(const OperatorSpec& op, const SamplePlan& plan,
                                                const Tolerances& tol = {});

/// The form at random positive definite A and unit directions (X, Y, Z).
[[nodiscard]] ConditionReport check_condition_c(const OperatorSpec& op, const SamplePlan& plan,
                                                const Tolerances& tol = {});

/// Q* on Γ⊥ at random degenerate points, plus convexity of (u, x) ↦ F(0, p, u, x) for
/// operators that read u or x.
[[nodiscard]] ConditionReport check_wwcond(const OperatorSpec& op, const SamplePlan& plan,
                                           const Tolerances& tol = {});

/// n = 2, F symmetric and homogeneous of degree k: samples F^{λ₂λ₂} at λ₁ = 0 and checks
/// Σ F^{λ_i} λ_i = kF along the way.
[[nodiscard]] ConditionReport homog2_check(const OperatorSpec& op, double degree, const SamplePlan& plan,
                                           const Tolerances& tol = {});

/// Recomputes the witness value of a report.
[[nodiscard]] double reevaluate(const OperatorSpec& op, const ConditionReport& report);

}  // namespace mclab::opcheck
