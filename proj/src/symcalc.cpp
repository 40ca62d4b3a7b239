#include "mclab/symcalc.hpp"

#include "mclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mclab::symcalc {
namespace {

std::vector<double> without(std::span<const double> values, int i, int j = -1) {
  std::vector<double> out;
  out.reserve(values.size());
  for (int idx = 0; idx < static_cast<int>(values.size()); ++idx)
    if (idx != i && idx != j) out.push_back(values[static_cast<std::size_t>(idx)]);
  return out;
}

void require_diagonal(const Matrix& w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("matrix is not square");
  const Matrix off = w - Matrix(w.diagonal().asDiagonal());
  if (off.norm() > 1e-10 * (1.0 + w.norm()))
    throw std::invalid_argument("second derivatives are only defined in a diagonal frame");
}

std::vector<double> diagonal_values(const Matrix& w) {
  std::vector<double> d(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) d[static_cast<std::size_t>(i)] = w(i, i);
  return d;
}

void require_rank_parameter(int l, int n, double epsilon) {
  if (l < 0 || l > n - 1)
    throw std::invalid_argument("rank parameter l=" + std::to_string(l) + " outside [0, n-1]");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
}

std::vector<double> shift(std::span<const double> values, double epsilon) {
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) v += epsilon;
  return out;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

Spectrum::Spectrum(std::vector<double> values) : values_(std::move(values)) {
  std::sort(values_.begin(), values_.end());
}

Spectrum Spectrum::shifted(double epsilon) const {
  std::vector<double> v = values_;
  for (double& x : v) x += epsilon;
  return Spectrum(std::move(v));
}

bool Spectrum::is_psd(double tol) const {
  return std::all_of(values_.begin(), values_.end(), [tol](double v) { return v >= -tol; });
}

SpectralMatrix::SpectralMatrix(const Matrix& w) : entries_(w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("SpectralMatrix: matrix is not square");
  if (max_abs(w - w.transpose()) > 1e-10 * (1.0 + max_abs(w)))
    throw std::invalid_argument("SpectralMatrix: matrix is not symmetric");
  entries_ = symmetrize(w);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(entries_);
  eigenvectors_ = solver.eigenvectors();
  const Vector& lambda = solver.eigenvalues();
  for (Eigen::Index j = 0; j < eigenvectors_.cols(); ++j) {
    for (Eigen::Index i = 0; i < eigenvectors_.rows(); ++i) {
      const double c = eigenvectors_(i, j);
      if (std::abs(c) > 1e-12) {
        if (c < 0.0) eigenvectors_.col(j) = -eigenvectors_.col(j);
        break;
      }
    }
  }
  spectrum_ = Spectrum(std::vector<double>(lambda.data(), lambda.data() + lambda.size()));
}

SpectralMatrix SpectralMatrix::diagonal(std::span<const double> values) {
  Vector d(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) d(static_cast<Eigen::Index>(i)) = values[i];
  return SpectralMatrix(Matrix(d.asDiagonal()));
}

Matrix SpectralMatrix::from_eigenbasis(const Vector& d) const {
  return symmetrize(eigenvectors_ * d.asDiagonal() * eigenvectors_.transpose());
}

// ---------------------------------------------------------------------------

PairHessian::PairHessian(int n) : diagonal_pairs_(Matrix::Zero(n, n)), swap_pairs_(Matrix::Zero(n, n)) {}

double PairHessian::operator()(int i, int j, int k, int m) const {
  if (i == j && k == m) return diagonal_pairs_(i, k);
  if (i == m && j == k && i != j) return swap_pairs_(i, j);
  return 0.0;
}

double PairHessian::contract(const Matrix& a, const Matrix& b) const {
  const int dim = n();
  double sum = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < dim; ++k) {
      sum += diagonal_pairs_(i, k) * a(i, i) * b(k, k);
      if (i != k) sum += swap_pairs_(i, k) * a(i, k) * b(k, i);
    }
  return sum;
}

// ---------------------------------------------------------------------------

std::vector<double> elementary_symmetric_all(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> e(n + 1, 0.0);
  e[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j >= 1; --j) e[j] += values[i] * e[j - 1];
  return e;
}

double elem_sym(int k, std::span<const double> values) {
  const int n = static_cast<int>(values.size());
  if (k < 0 || k > n) return 0.0;
  if (k == 0) return 1.0;
  return elementary_symmetric_all(values)[static_cast<std::size_t>(k)];
}

double elem_sym(int k, const Spectrum& spec) { return elem_sym(k, spec.values()); }

double elem_sym_minor(int k, std::span<const double> values, std::span<const int> excluded) {
  const int n = static_cast<int>(values.size());
  if (excluded.empty() || excluded.size() > 2)
    throw std::invalid_argument("elem_sym_minor: exactly one or two indices may be removed");
  for (int idx : excluded)
    if (idx < 0 || idx >= n) throw std::invalid_argument("elem_sym_minor: index out of range");
  if (excluded.size() == 2 && excluded[0] == excluded[1])
    throw std::invalid_argument("elem_sym_minor: repeated index");
  const int j = excluded.size() == 2 ? excluded[1] : -1;
  return elem_sym(k, without(values, excluded[0], j));
}

double elem_sym_minor(int k, std::span<const double> values, int i) {
  const int ex[] = {i};
  return elem_sym_minor(k, values, ex);
}

double elem_sym_minor(int k, std::span<const double> values, int i, int j) {
  const int ex[] = {i, j};
  return elem_sym_minor(k, values, ex);
}

Matrix sigma_grad(int k, const SpectralMatrix& w) {
  const int n = w.n();
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = elem_sym_minor(k - 1, w.spectrum().values(), i);
  return w.from_eigenbasis(d);
}

PairHessian sigma_hess(int k, const Matrix& diagonal_w) {
  require_diagonal(diagonal_w);
  const std::vector<double> lambda = diagonal_values(diagonal_w);
  const int n = static_cast<int>(lambda.size());
  PairHessian h(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double m = elem_sym_minor(k - 2, lambda, i, j);
      h.diagonal_pairs()(i, j) = m;
      h.swap_pairs()(i, j) = -m;
    }
  return h;
}

// ---------------------------------------------------------------------------

double degeneracy_tolerance(std::span<const double> values) {
  double norm = 0.0;
  for (double v : values) norm = std::max(norm, std::abs(v));
  return 1e-13 * (1.0 + std::pow(norm, static_cast<double>(values.size() + 1)));
}

double q_value(std::span<const double> eigenvalues, int l, double epsilon) {
  const int n = static_cast<int>(eigenvalues.size());
  require_rank_parameter(l, n, epsilon);
  const std::vector<double> shifted = shift(eigenvalues, epsilon);
  const std::vector<double> e = elementary_symmetric_all(shifted);
  const double s1 = e[static_cast<std::size_t>(l + 1)];
  const double s2 = l + 2 <= n ? e[static_cast<std::size_t>(l + 2)] : 0.0;
  const double tol = degeneracy_tolerance(shifted);
  if (s1 > tol) return s2 / s1;
  if (s1 < -tol)
    throw DegenerateQuotient("q: sigma_" + std::to_string(l + 1) +
                             " is negative; input is not positive semidefinite");
  if (std::abs(s2) > tol)
    throw DegenerateQuotient("q: sigma_" + std::to_string(l + 1) + " vanishes but sigma_" +
                             std::to_string(l + 2) + " does not");
  return 0.0;
}

double q_value(const SpectralMatrix& w, int l, double epsilon) {
  return q_value(w.spectrum().values(), l, epsilon);
}

QuotientEval evaluate_quotient(std::span<const double> values, int l, double epsilon) {
  const int n = static_cast<int>(values.size());
  require_rank_parameter(l, n, epsilon);
  const std::vector<double> lambda = shift(values, epsilon);
  const std::vector<double> e = elementary_symmetric_all(lambda);
  const double s1 = e[static_cast<std::size_t>(l + 1)];
  const double s2 = l + 2 <= n ? e[static_cast<std::size_t>(l + 2)] : 0.0;
  if (!(s1 > degeneracy_tolerance(lambda)))
    throw DegenerateQuotient("q derivatives need sigma_" + std::to_string(l + 1) + " > 0");

  QuotientEval out;
  out.l = l;
  out.epsilon = epsilon;
  out.value = s2 / s1;
  out.grad = Matrix::Zero(n, n);
  out.hess = PairHessian(n);

  // Derivatives of the numerator σ_{l+2} and denominator σ_{l+1}.
  std::vector<double> num_grad(static_cast<std::size_t>(n)), den_grad(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    num_grad[static_cast<std::size_t>(i)] = elem_sym_minor(l + 1, lambda, i);
    den_grad[static_cast<std::size_t>(i)] = elem_sym_minor(l, lambda, i);
    out.grad(i, i) = (s1 * num_grad[static_cast<std::size_t>(i)] -
                      s2 * den_grad[static_cast<std::size_t>(i)]) /
                     (s1 * s1);
  }

  // Quotient rule at second order:
  // q'' = N''/D − (N'⊗D' + D'⊗N')/D² − N D''/D² + 2 N D'⊗D'/D³.
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const double ni = num_grad[static_cast<std::size_t>(i)];
      const double nk = num_grad[static_cast<std::size_t>(k)];
      const double di = den_grad[static_cast<std::size_t>(i)];
      const double dk = den_grad[static_cast<std::size_t>(k)];
      const double num_hess = i == k ? 0.0 : elem_sym_minor(l, lambda, i, k);
      const double den_hess = i == k ? 0.0 : elem_sym_minor(l - 1, lambda, i, k);
      out.hess.diagonal_pairs()(i, k) = num_hess / s1 - (ni * dk + nk * di) / (s1 * s1) -
                                        s2 * den_hess / (s1 * s1) +
                                        2.0 * s2 * di * dk / (s1 * s1 * s1);
      if (i != k) {
        // first derivatives vanish off the diagonal, only the σ'' terms survive
        out.hess.swap_pairs()(i, k) = -num_hess / s1 + s2 * den_hess / (s1 * s1);
      }
    }
  }
  return out;
}

Matrix q_grad(const SpectralMatrix& w, int l, double epsilon) {
  const QuotientEval eval = evaluate_quotient(w.spectrum().values(), l, epsilon);
  return w.from_eigenbasis(eval.grad.diagonal());
}

PairHessian q_hess(const Matrix& diagonal_w, int l, double epsilon) {
  require_diagonal(diagonal_w);
  return evaluate_quotient(diagonal_values(diagonal_w), l, epsilon).hess;
}

double phi_value(std::span<const double> eigenvalues, int l, double epsilon) {
  const double q = q_value(eigenvalues, l, epsilon);
  const std::vector<double> shifted = shift(eigenvalues, epsilon);
  return elem_sym(l + 1, shifted) + q;
}

double phi_value(const SpectralMatrix& w, int l, double epsilon) {
  return phi_value(w.spectrum().values(), l, epsilon);
}

// ---------------------------------------------------------------------------

GoodBadSplit split_good_bad(const Spectrum& spec, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("split threshold must be positive");
  GoodBadSplit split;
  split.threshold = threshold;
  for (int i = 0; i < spec.n(); ++i) (spec[i] >= threshold ? split.good : split.bad).push_back(i);
  split.l = static_cast<int>(split.good.size());
  return split;
}

double default_split_threshold(const Spectrum& spec, int l) {
  if (l < 0 || l > spec.n()) throw std::invalid_argument("rank parameter outside [0, n]");
  if (l == 0) return std::numeric_limits<double>::infinity();
  return 0.1 * spec[spec.n() - l];
}

double split_sigma(int gamma, const GoodBadSplit& split, std::span<const double> values) {
  std::vector<double> good, bad;
  for (int i : split.good) good.push_back(values[static_cast<std::size_t>(i)]);
  for (int i : split.bad) bad.push_back(values[static_cast<std::size_t>(i)]);
  const std::vector<double> eg = elementary_symmetric_all(good);
  double sum = 0.0;
  for (int k = 0; k <= static_cast<int>(good.size()); ++k)
    sum += eg[static_cast<std::size_t>(k)] * elem_sym(gamma - k, bad);
  return sum;
}

LeadingForms leading_forms(std::span<const double> values, const GoodBadSplit& split, int l) {
  const int n = static_cast<int>(values.size());
  if (split.l != l) throw std::invalid_argument("leading_forms: split size differs from l");
  if (split.bad.empty()) throw DegenerateQuotient("leading_forms: empty bad set");
  if (!(elem_sym(l + 1, values) > degeneracy_tolerance(values)))
    throw DegenerateQuotient("leading_forms: sigma_{l+1} must be positive");

  std::vector<bool> is_bad(static_cast<std::size_t>(n), false);
  std::vector<double> bad_values;
  for (int i : split.bad) {
    is_bad[static_cast<std::size_t>(i)] = true;
    bad_values.push_back(values[static_cast<std::size_t>(i)]);
  }
  // σ_m(B|i) for i ∈ B, by position inside bad_values.
  auto bad_minor = [&](int m, int i) {
    const auto pos = std::find(split.bad.begin(), split.bad.end(), i) - split.bad.begin();
    return elem_sym_minor(m, bad_values, static_cast<int>(pos));
  };
  const double b1 = elem_sym(1, bad_values);
  const double b2 = elem_sym(2, bad_values);
  if (!(b1 > 0.0)) throw DegenerateQuotient("leading_forms: sigma_1(B) must be positive");

  using Order = RemainderOrder;
  LeadingForms out;
  out.grad = Vector::Zero(n);
  out.hess = PairHessian(n);
  out.grad_order.assign(static_cast<std::size_t>(n), Order::Phi);
  out.diagonal_order.setConstant(n, n, Order::One);
  out.swap_order.setConstant(n, n, Order::Zero);

  auto bad_weight = [&](int i) {
    const double m1 = bad_minor(1, i);
    return (m1 * m1 - bad_minor(2, i)) / (b1 * b1);
  };

  for (int i = 0; i < n; ++i) {
    if (is_bad[static_cast<std::size_t>(i)]) out.grad(i) = bad_weight(i);
  }

  for (int i = 0; i < n; ++i) {
    const bool bi = is_bad[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      const bool bk = is_bad[static_cast<std::size_t>(k)];
      double& diag = out.hess.diagonal_pairs()(i, k);
      if (!bi && !bk) {
        out.diagonal_order(i, k) = Order::Phi;
      } else if (bi && bk && i == k) {
        diag = -2.0 / (b1 * b1 * b1) * (b1 * bad_minor(1, i) - bad_minor(2, i));
      } else if (bi && bk) {
        diag = (2.0 * b2 - b1 * b1 +
                (values[static_cast<std::size_t>(i)] + values[static_cast<std::size_t>(k)]) * b1) /
               (b1 * b1 * b1);
      }
      if (i == k) continue;
      double& swap = out.hess.swap_pairs()(i, k);
      if (!bi && !bk) {
        out.swap_order(i, k) = Order::Phi;
      } else if (bi && bk) {
        swap = -1.0 / b1;
        out.swap_order(i, k) = Order::One;
      } else {
        const int bad_index = bi ? i : k;
        const int good_index = bi ? k : i;
        swap = -bad_weight(bad_index) / values[static_cast<std::size_t>(good_index)];
        out.swap_order(i, k) = Order::Phi;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

IdentitySides identity_id1(std::span<const IdentityTerm> terms) {
  const int m = static_cast<int>(terms.size());
  std::vector<double> v(static_cast<std::size_t>(m));
  double sum_alpha = 0.0, sum_beta = 0.0;
  for (int i = 0; i < m; ++i) {
    v[static_cast<std::size_t>(i)] = terms[static_cast<std::size_t>(i)].v;
    sum_alpha += terms[static_cast<std::size_t>(i)].alpha;
    sum_beta += terms[static_cast<std::size_t>(i)].beta;
  }
  const double s1 = elem_sym(1, v);
  const double s2 = elem_sym(2, v);

  IdentitySides out;
  for (int i = 0; i < m; ++i) {
    const IdentityTerm& ti = terms[static_cast<std::size_t>(i)];
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const IdentityTerm& tj = terms[static_cast<std::size_t>(j)];
      const double t = (2.0 * s2 - s1 * s1 + (ti.v + tj.v) * s1) * ti.alpha * tj.beta;
      out.lhs += t;
      out.scale += std::abs(t);
    }
    const double minor1 = m > 1 ? elem_sym_minor(1, v, i) : 0.0;
    const double minor2 = m > 1 ? elem_sym_minor(2, v, i) : 0.0;
    const double diag = -2.0 * (s1 * minor1 - minor2) * ti.alpha * ti.beta;
    out.lhs += diag;
    out.scale += std::abs(diag);

    const double ra = s1 * ti.alpha - ti.v * sum_alpha;
    const double rb = s1 * ti.beta - ti.v * sum_beta;
    const double r1 = -ra * rb;
    const double r2 = -2.0 * ti.v * minor1 * ti.alpha * ti.beta;
    out.rhs += r1 + r2;
    out.scale += std::abs(r1) + std::abs(r2);
  }
  return out;
}

double newton_maclaurin_gap(std::span<const double> values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k > n - 1) throw std::invalid_argument("newton_maclaurin_gap: k outside [1, n-1]");
  const std::vector<double> e = elementary_symmetric_all(values);
  const double mid = e[static_cast<std::size_t>(k)] / binomial(n, k);
  const double lo = e[static_cast<std::size_t>(k - 1)] / binomial(n, k - 1);
  const double hi = e[static_cast<std::size_t>(k + 1)] / binomial(n, k + 1);
  return mid * mid - lo * hi;
}

double third_deriv_ratio(double v_ij_alpha, double v_ii, double v_jj) {
  constexpr double floor = 1e-14;
  return std::abs(v_ij_alpha) /
         (std::sqrt(std::max(v_ii, 0.0)) + std::sqrt(std::max(v_jj, 0.0)) + floor);
}

std::vector<double> epsilon_schedule() {
  return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
}

}  // namespace mclab::symcalc
