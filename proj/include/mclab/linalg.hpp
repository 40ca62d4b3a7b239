#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace mclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Deterministic generator used for every sampled quantity in the project.
using Rng = std::mt19937_64;

/// Largest absolute entry.
[[nodiscard]] inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

[[nodiscard]] inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Haar-ish orthogonal matrix: QR of a standard Gaussian matrix with the sign of R's diagonal
/// folded into Q.
[[nodiscard]] Matrix random_orthogonal(int n, Rng& rng);

/// Symmetric matrix with standard Gaussian entries, normalized to unit Frobenius norm.
[[nodiscard]] Matrix random_unit_symmetric(int n, Rng& rng);

[[nodiscard]] Vector random_gaussian(int n, Rng& rng);

/// Value drawn log-uniformly from [lo, hi].
[[nodiscard]] double log_uniform(double lo, double hi, Rng& rng);

/// Positive definite matrix Q diag(λ) Qᵀ with eigenvalues log-uniform in [lo, hi].
[[nodiscard]] Matrix random_spd(int n, double lo, double hi, Rng& rng);

/// Derives an independent stream for sample `index` from a base seed (SplitMix64 mixing),
/// so that sample i is identical regardless of how many samples precede it.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace mclab
