#include "mclab/linalg.hpp"

#include <cmath>

namespace mclab {

Vector random_gaussian(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Matrix random_orthogonal(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

Matrix random_unit_symmetric(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) s(i, j) = s(j, i) = normal(rng);
  const double norm = s.norm();
  return norm > 0.0 ? Matrix(s / norm) : s;
}

double log_uniform(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> uni(std::log(lo), std::log(hi));
  return std::exp(uni(rng));
}

Matrix random_spd(int n, double lo, double hi, Rng& rng) {
  const Matrix q = random_orthogonal(n, rng);
  Vector lambda(n);
  for (int i = 0; i < n; ++i) lambda(i) = log_uniform(lo, hi, rng);
  return symmetrize(q * lambda.asDiagonal() * q.transpose());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mclab
