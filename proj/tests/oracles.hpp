#pragma once

// Independent reference computations used only by the test suites. Nothing here
// calls into the recurrence-based routines it is used to check.

#include "mclab/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace mclab::oracle {

/// σ_k by explicit enumeration of all k-subsets (2ⁿ work).
inline double subset_sigma(int k, std::span<const double> values) {
  const int n = static_cast<int>(values.size());
  if (k < 0 || k > n) return 0.0;
  double sum = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    double prod = 1.0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) prod *= values[static_cast<std::size_t>(i)];
    sum += prod;
  }
  return sum;
}

/// Σ over k-subsets of |Π λ|; the natural scale for judging relative rounding error.
inline double subset_sigma_abs(int k, std::span<const double> values) {
  std::vector<double> a(values.begin(), values.end());
  for (double& v : a) v = std::abs(v);
  return subset_sigma(k, a);
}

inline double subset_sigma_minor(int k, std::span<const double> values, std::vector<int> excluded) {
  std::vector<double> rest;
  for (int i = 0; i < static_cast<int>(values.size()); ++i)
    if (std::find(excluded.begin(), excluded.end(), i) == excluded.end())
      rest.push_back(values[static_cast<std::size_t>(i)]);
  return subset_sigma(k, rest);
}

/// σ_k of a symmetric matrix through its eigenvalues computed by Eigen directly.
inline double matrix_sigma(int k, const Matrix& w) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(w), Eigen::EigenvaluesOnly);
  const Vector& lam = solver.eigenvalues();
  return subset_sigma(k, std::span<const double>(lam.data(), static_cast<std::size_t>(lam.size())));
}

/// Central first difference of t ↦ f(t) at 0.
inline double central_first(const std::function<double(double)>& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

/// Fourth-order central second difference of t ↦ f(t) at 0.
inline double central_second(const std::function<double(double)>& f, double h) {
  return (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12.0 * h * h);
}

/// Fourth-order central first difference.
inline double central_first4(const std::function<double(double)>& f, double h) {
  return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12.0 * h);
}

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace mclab::oracle
