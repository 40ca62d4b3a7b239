#pragma once

// Elementary symmetric functions of symmetric matrices, the rank quotient
// q = σ_{l+2}/σ_{l+1}, the test function φ = σ_{l+1} + q and their derivatives.
//
// Index conventions: all indices are 0-based. Second derivatives with respect to
// matrix entries treat the n² entries as independent variables and are only
// provided in a frame where W is diagonal; callers holding a general symmetric
// matrix rotate into its eigenbasis first (see SpectralMatrix).

#include "mclab/linalg.hpp"

#include <span>
#include <vector>

namespace mclab::symcalc {

/// Eigenvalues in ascending order.
class Spectrum {
 public:
  Spectrum() = default;
  /// Sorts the supplied values ascending.
  explicit Spectrum(std::vector<double> values);

  [[nodiscard]] int n() const noexcept { return static_cast<int>(values_.size()); }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] double min() const { return values_.front(); }
  [[nodiscard]] double max() const { return values_.back(); }

  /// Spectrum of W + εI.
  [[nodiscard]] Spectrum shifted(double epsilon) const;
  /// True when every eigenvalue is ≥ −tol.
  [[nodiscard]] bool is_psd(double tol = 1e-12) const;

 private:
  std::vector<double> values_;
};

/// Symmetric matrix together with its eigen-decomposition W = Q diag(λ) Qᵀ.
/// Eigenvalues ascend; each eigenvector's first non-negligible component is positive.
class SpectralMatrix {
 public:
  /// Throws std::invalid_argument if `w` is not square or not symmetric to 1e-10 relative.
  explicit SpectralMatrix(const Matrix& w);
  static SpectralMatrix diagonal(std::span<const double> values);

  [[nodiscard]] int n() const noexcept { return static_cast<int>(entries_.rows()); }
  [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
  [[nodiscard]] const Spectrum& spectrum() const noexcept { return spectrum_; }
  [[nodiscard]] const Matrix& eigenvectors() const noexcept { return eigenvectors_; }

  /// Q diag(d) Qᵀ.
  [[nodiscard]] Matrix from_eigenbasis(const Vector& d) const;

 private:
  Matrix entries_;
  Spectrum spectrum_;
  Matrix eigenvectors_;
};

/// Second derivative of a function of W at a diagonal W. Only two patterns can be
/// non-zero: (ii,kk) pairs and, for i≠j, (ij,ji) pairs.
class PairHessian {
 public:
  explicit PairHessian(int n);

  [[nodiscard]] int n() const noexcept { return static_cast<int>(diagonal_pairs_.rows()); }
  /// ∂²f/∂W_ij ∂W_km.
  [[nodiscard]] double operator()(int i, int j, int k, int m) const;
  /// Σ f^{ij,km} a_ij b_km.
  [[nodiscard]] double contract(const Matrix& a, const Matrix& b) const;

  /// (i,k) ↦ f^{ii,kk}
  Matrix& diagonal_pairs() noexcept { return diagonal_pairs_; }
  [[nodiscard]] const Matrix& diagonal_pairs() const noexcept { return diagonal_pairs_; }
  /// (i,j) ↦ f^{ij,ji} for i≠j; the diagonal is unused and kept at zero.
  Matrix& swap_pairs() noexcept { return swap_pairs_; }
  [[nodiscard]] const Matrix& swap_pairs() const noexcept { return swap_pairs_; }

 private:
  Matrix diagonal_pairs_;
  Matrix swap_pairs_;
};

struct GoodBadSplit {
  std::vector<int> good;
  std::vector<int> bad;
  double threshold = 0.0;
  int l = 0;  ///< |good|
};

/// q_ε evaluated together with its first and second derivatives in a diagonal frame.
struct QuotientEval {
  int l = 0;
  double epsilon = 0.0;
  double value = 0.0;
  Matrix grad;  ///< q^{ij}
  PairHessian hess{0};
};

// ---------------------------------------------------------------------------
// Elementary symmetric functions

/// σ_0..σ_n of `values` via the product recurrence Π(1 + λ_i t).
[[nodiscard]] std::vector<double> elementary_symmetric_all(std::span<const double> values);

/// σ_k(λ); 1 for k = 0 and 0 for k < 0 or k > n.
[[nodiscard]] double elem_sym(int k, std::span<const double> values);
[[nodiscard]] double elem_sym(int k, const Spectrum& spec);

/// σ_k of λ with one or two indices removed (the minors (W|i), (W|ij) of a diagonal W).
/// Throws std::invalid_argument unless `excluded` holds one or two distinct valid indices.
[[nodiscard]] double elem_sym_minor(int k, std::span<const double> values,
                                    std::span<const int> excluded);
[[nodiscard]] double elem_sym_minor(int k, std::span<const double> values, int i);
[[nodiscard]] double elem_sym_minor(int k, std::span<const double> values, int i, int j);

/// ∂σ_k/∂W_ij for a general symmetric W.
[[nodiscard]] Matrix sigma_grad(int k, const SpectralMatrix& w);

/// ∂²σ_k/∂W_ij∂W_km for a diagonal W; throws std::invalid_argument otherwise.
[[nodiscard]] PairHessian sigma_hess(int k, const Matrix& diagonal_w);

// ---------------------------------------------------------------------------
// The quotient q and the test function φ

/// Tolerance below which σ_{l+1} counts as zero: 1e-13·(1 + ‖W‖ⁿ⁺¹).
[[nodiscard]] double degeneracy_tolerance(std::span<const double> values);

/// q_ε(W) = σ_{l+2}(W_ε)/σ_{l+1}(W_ε), extended by zero where σ_{l+1} vanishes.
[[nodiscard]] double q_value(std::span<const double> eigenvalues, int l, double epsilon);
[[nodiscard]] double q_value(const SpectralMatrix& w, int l, double epsilon);

/// q^{ij} of a general symmetric W (rotated back from the eigenbasis).
[[nodiscard]] Matrix q_grad(const SpectralMatrix& w, int l, double epsilon);

/// q^{ij,km} at a diagonal W, indexed in the order of its diagonal.
[[nodiscard]] PairHessian q_hess(const Matrix& diagonal_w, int l, double epsilon);

/// Value, gradient and Hessian of q_ε in the frame where W = diag(values).
[[nodiscard]] QuotientEval evaluate_quotient(std::span<const double> values, int l,
                                             double epsilon);

/// φ_ε = σ_{l+1}(W_ε) + q_ε(W).
[[nodiscard]] double phi_value(std::span<const double> eigenvalues, int l, double epsilon);
[[nodiscard]] double phi_value(const SpectralMatrix& w, int l, double epsilon);

// ---------------------------------------------------------------------------
// Good/bad eigenvalue split and asymptotic forms

[[nodiscard]] GoodBadSplit split_good_bad(const Spectrum& spec, double threshold);

/// 0.1 × the smallest eigenvalue that would be "good" for minimal rank l.
[[nodiscard]] double default_split_threshold(const Spectrum& spec, int l);

/// Σ_k σ_k(G) σ_{γ−k}(B). Equals σ_γ(λ) for every partition.
[[nodiscard]] double split_sigma(int gamma, const GoodBadSplit& split,
                                 std::span<const double> values);

/// Order of the remainder between the exact derivative and its leading form.
enum class RemainderOrder { Zero, Phi, One };

/// Leading-order expressions of q^{ij} and q^{ij,km} near a minimal-rank point, in the
/// frame where W = diag(values).
struct LeadingForms {
  Vector grad;       ///< leading q^{ii}
  PairHessian hess{0};
  std::vector<RemainderOrder> grad_order;
  Eigen::Matrix<RemainderOrder, Eigen::Dynamic, Eigen::Dynamic> diagonal_order;
  Eigen::Matrix<RemainderOrder, Eigen::Dynamic, Eigen::Dynamic> swap_order;
};

/// Throws std::invalid_argument if split.l != l, DegenerateQuotient if σ_{l+1} ≤ 0
/// or if the bad set is empty.
[[nodiscard]] LeadingForms leading_forms(std::span<const double> values, const GoodBadSplit& split,
                                         int l);

// ---------------------------------------------------------------------------
// Algebraic identities and inequalities

struct IdentityTerm {
  double v;       ///< v_ii
  double alpha;   ///< v_iiα
  double beta;    ///< v_iiβ
};

struct IdentitySides {
  double lhs = 0.0;
  double rhs = 0.0;
  double scale = 0.0;  ///< Σ of absolute values of the summands; sets the rounding floor
};

/// Both sides of the regrouping identity for Σ_{i≠j}[2σ_2 − σ_1² + (v_ii+v_jj)σ_1] v_iiα v_jjβ.
[[nodiscard]] IdentitySides identity_id1(std::span<const IdentityTerm> terms);

/// (σ_k/C(n,k))² − (σ_{k−1}/C(n,k−1))(σ_{k+1}/C(n,k+1)); non-negative for PSD input.
[[nodiscard]] double newton_maclaurin_gap(std::span<const double> values, int k);

/// |v_ijα| / (√v_ii + √v_jj + 1e-14), negative diagonal entries clamped to 0.
[[nodiscard]] double third_deriv_ratio(double v_ij_alpha, double v_ii, double v_jj);

/// ε values used for limit studies: 1e-2, 1e-3, …, 1e-8.
[[nodiscard]] std::vector<double> epsilon_schedule();

}  // namespace mclab::symcalc
