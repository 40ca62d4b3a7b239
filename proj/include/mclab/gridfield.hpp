#pragma once

// Scalar fields on rectangular grids and their derivatives up to third order by
// finite-difference stencils (five-point central in the interior).

#include "mclab/linalg.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

namespace mclab::grid {

/// Row-major rectangular grid; the last axis varies fastest. Non-periodic axes carry nodes
/// at origin + i·h for i = 0 … N−1 (both ends included); periodic axes omit the right end.
struct Grid {
  std::vector<int> dims;
  std::vector<double> spacing;
  std::vector<double> origin;
  std::vector<bool> periodic;

  /// Node grid on [lo, hi]^rank with n nodes per axis.
  static Grid box(int rank, int n, double lo, double hi);
  /// Periodic grid on [lo, hi)^rank with n nodes per axis.
  static Grid periodic_box(int rank, int n, double lo, double hi);

  [[nodiscard]] int rank() const { return static_cast<int>(dims.size()); }
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t stride(int axis) const;
  [[nodiscard]] int index_along(std::size_t flat, int axis) const;
  [[nodiscard]] double coordinate(int axis, int i) const { return origin[axis] + i * spacing[axis]; }
  [[nodiscard]] Vector point(std::size_t flat) const;
  /// Distance in cells from the nearest non-periodic boundary (large on fully periodic grids).
  [[nodiscard]] int boundary_distance(std::size_t flat) const;
  /// Throws GridTooSmall or std::invalid_argument.
  void validate() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

class ScalarField {
 public:
  ScalarField() = default;
  /// Throws std::invalid_argument if sizes disagree or values are not finite.
  ScalarField(Grid grid, std::vector<double> values);
  static ScalarField sample(const Grid& grid, const std::function<double(const Vector&)>& f);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Derivative fields stored flat per point.
class JetField {
 public:
  JetField(Grid grid, int order);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] int order() const noexcept { return order_; }
  [[nodiscard]] std::size_t size() const { return grid_.size(); }

  [[nodiscard]] Vector gradient(std::size_t p) const;
  [[nodiscard]] Matrix hessian(std::size_t p) const;
  [[nodiscard]] double grad(std::size_t p, int a) const { return gradient_[p * d_ + a]; }
  [[nodiscard]] double hess(std::size_t p, int a, int b) const { return hessian_[(p * d_ + a) * d_ + b]; }
  [[nodiscard]] double third(std::size_t p, int a, int b, int c) const {
    return third_[((p * d_ + a) * d_ + b) * d_ + c];
  }

  std::vector<double>& gradient_data() { return gradient_; }
  std::vector<double>& hessian_data() { return hessian_; }
  std::vector<double>& third_data() { return third_; }

 private:
  Grid grid_;
  int order_;
  std::size_t d_;
  std::vector<double> gradient_;
  std::vector<double> hessian_;
  std::vector<double> third_;
};

/// Derivatives up to `order` (1, 2 or 3). Throws GridTooSmall, std::invalid_argument.
[[nodiscard]] JetField jet(const ScalarField& field, int order);

/// ∂^m u/∂x_axis^m (m = 1, 2, 3) applied along one axis.
[[nodiscard]] std::vector<double> differentiate(const Grid& grid, const std::vector<double>& values, int axis,
                                                int m);

/// Stencil weights for the m-th derivative at `at` from samples at `nodes` (Fornberg).
[[nodiscard]] std::vector<double> fd_weights(double at, const std::vector<double>& nodes, int m);

/// u + (ε/2)‖x‖².
[[nodiscard]] ScalarField add_epsilon_quadratic(const ScalarField& field, double epsilon);

// ---------------------------------------------------------------------------
// I/O

/// Header "x1,…,xd,value" then one row per grid point.
void write_csv(std::ostream& out, const ScalarField& field);
void write_csv(const std::filesystem::path& path, const ScalarField& field);
/// Reconstructs the grid from the coordinates; axes come back non-periodic.
[[nodiscard]] ScalarField read_csv(std::istream& in);
[[nodiscard]] ScalarField read_csv(const std::filesystem::path& path);

/// Little-endian: "MCLB", u32 rank, u64 dims[rank], f64 spacing[rank], f64 origin[rank],
/// f64 values in row-major order.
void write_binary(std::ostream& out, const ScalarField& field);
void write_binary(const std::filesystem::path& path, const ScalarField& field);
/// Axes come back non-periodic unless `periodic` is given.
[[nodiscard]] ScalarField read_binary(std::istream& in, const std::vector<bool>& periodic = {});
[[nodiscard]] ScalarField read_binary(const std::filesystem::path& path, const std::vector<bool>& periodic = {});

}  // namespace mclab::grid
