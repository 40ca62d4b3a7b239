#pragma once

// Rank structure of discretized Hessian fields, the test function φ, and numerical
// checks of the maximum-principle inequality and its structural consequences.

#include "mclab/gridfield.hpp"
#include "mclab/linalg.hpp"
#include "mclab/operator.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mclab::rankmon {

/// Points closer than this many cells to a non-periodic boundary carry no verdicts.
inline constexpr int kDefaultMargin = 3;

/// τ = max(relative·λ_max(point), global_floor·global_scale).
struct ThresholdPolicy {
  double relative = 1e-8;
  double global_floor = 1e-12;
  /// 0 selects the largest |λ| over the interior.
  double global_scale = 0.0;
};

struct RankReport {
  int n = 0;
  std::vector<int> rank;            ///< every grid point
  std::vector<bool> interior;       ///< outside the margin
  int min_rank = 0;                 ///< over interior points
  int max_rank = 0;
  std::vector<std::size_t> attainment;  ///< interior points with rank == min_rank
  std::vector<Matrix> null_directions;  ///< n × (n − min_rank) orthonormal, one per attainment point
  std::vector<std::size_t> histogram;   ///< interior counts of rank 0 … n
  double global_scale = 0.0;
  double global_threshold = 0.0;
  int margin = kDefaultMargin;

  [[nodiscard]] bool constant_rank() const { return min_rank == max_rank; }
};

[[nodiscard]] RankReport rank_field(const grid::JetField& jets, const ThresholdPolicy& policy = {},
                                    int margin = kDefaultMargin);

struct PhiOptions {
  double epsilon = 0.0;
  /// Eigenvalues in [−psd_tolerance·(1 + scale), 0) count as zero.
  double psd_tolerance = 1e-10;
};

/// φ_ε = σ_{l+1}(∇²u + εI) + q_ε per point; identically 0 for l ≥ n. Throws DegenerateQuotient
/// when ε = 0 and a Hessian is indefinite beyond tolerance.
[[nodiscard]] grid::ScalarField phi_field(const grid::JetField& jets, int l, const PhiOptions& options = {});

struct Parallelism {
  double angle = 0.0;          ///< radians
  std::size_t points = 0;      ///< attainment points compared
  std::size_t reference = 0;   ///< grid index of the reference point
  bool rank_constant = true;
  std::string obstruction;     ///< why the conclusion cannot hold, if it cannot
};

/// Largest principal angle between the near-null subspace at a reference attainment point
/// (the one nearest the attainment centroid) and those at every attainment point within
/// `radius` of it. Throws EmptyRegion when there is nothing to compare.
[[nodiscard]] Parallelism null_parallelism(const RankReport& report, const grid::Grid& grid, double radius);

/// Largest principal angle between the column spaces of two orthonormal bases.
[[nodiscard]] double principal_angle(const Matrix& a, const Matrix& b);

struct InequalityFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double residual = 0.0;
  std::size_t tested = 0;
  std::size_t exact_null = 0;  ///< φ below the floor: counted as satisfying the conclusion
  int margin = kDefaultMargin;
  double max_lhs = 0.0;
  std::size_t binding_point = 0;  ///< grid index of the largest LHS/(φ+|∇φ|)
  std::vector<double> lhs;        ///< per grid point, 0 outside the tested set
  std::vector<double> phi;
  std::vector<double> grad_phi;
  std::vector<bool> tested_mask;
};

struct FitOptions {
  int l = 0;
  double epsilon = 0.0;
  double phi_floor = 1e-13;
  int margin = kDefaultMargin;
  double t = 0.0;
  /// φ_t on the same grid (parabolic mode); LHS becomes Σ F^{αβ}φ_αβ − φ_t.
  std::optional<std::vector<double>> phi_t;
};

/// Smallest C1 + C2 ≥ 0 with LHS ≤ C1 φ + C2 |∇φ| over the tested points. The field must be
/// given together with its jets (order ≥ 2). Throws NoTestablePoints when φ vanishes
/// everywhere on the interior.
[[nodiscard]] InequalityFit diffineq_fit(const opcheck::OperatorSpec& op, const grid::ScalarField& field,
                                         const grid::JetField& jets, const FitOptions& options);

/// max_i (lhs_i − c1 φ_i − c2 g_i)₊ over the tested points of `fit`.
[[nodiscard]] double fit_residual(const InequalityFit& fit, double c1, double c2);

/// Minimizes c1 + c2 subject to lhs_i ≤ c1 φ_i + c2 g_i, c1, c2 ≥ 0, for φ_i > 0, g_i ≥ 0.
struct LpSolution {
  double c1 = 0.0;
  double c2 = 0.0;
};
[[nodiscard]] LpSolution fit_constants(std::span<const double> lhs, std::span<const double> phi,
                                       std::span<const double> g);

/// φ_t by central differences over three snapshots at t−dt_prev, t, t+dt_next (second
/// order on non-uniform steps).
[[nodiscard]] std::vector<double> phi_time_derivative(const std::vector<double>& previous,
                                                      const std::vector<double>& next, double dt_prev,
                                                      double dt_next, const std::vector<double>& current);

struct ThirdBound {
  double value = 0.0;
  std::size_t point = 0;
  int i = 0, j = 0, alpha = 0;
  std::size_t skipped = 0;  ///< triples whose v_ii and v_jj are both below 1e-10 of the largest diagonal entry
};

/// sup of |v_ijα| / (√v_ii + √v_jj + η) over interior points and index triples. Needs order-3 jets.
[[nodiscard]] ThirdBound third_bound_fit(const grid::JetField& jets, int margin = kDefaultMargin);

struct MonotonicityVerdict {
  bool pass = true;
  std::size_t violation = 0;  ///< index where the minimum rank dropped
};

/// Passes iff the minimum rank never decreases after the first recorded step.
[[nodiscard]] MonotonicityVerdict rank_monotonicity(std::span<const double> times, std::span<const int> min_rank);

/// Smallest Hessian eigenvalue over interior points.
[[nodiscard]] double min_interior_eigenvalue(const grid::JetField& jets, int margin = kDefaultMargin);

}  // namespace mclab::rankmon
