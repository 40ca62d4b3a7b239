#include "mclab/lemmas.hpp"

#include "mclab/gridfield.hpp"
#include "mclab/linalg.hpp"
#include "mclab/rankmon.hpp"
#include "mclab/symcalc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

namespace mclab::lemmas {

namespace {

using namespace symcalc;

std::size_t scaled(std::size_t count, const Options& o) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(count) * o.sample_scale)));
}

// All σ_k by enumerating subsets; `abs` receives Σ|Π| per k.
void enumerate_sigma(std::span<const double> v, std::vector<double>& sigma, std::vector<double>& abs) {
  const int n = static_cast<int>(v.size());
  sigma.assign(static_cast<std::size_t>(n + 1), 0.0);
  abs.assign(static_cast<std::size_t>(n + 1), 0.0);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double prod = 1.0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) prod *= v[static_cast<std::size_t>(i)];
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    sigma[k] += prod;
    abs[k] += std::abs(prod);
  }
}

double slope(std::span<const double> x, std::span<const double> y) {
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

Result elem_sym_check(const Options& o) {
  Result r{.name = "elem_sym"};
  const double tol = 1e-12;
  Rng rng(o.seed);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  const std::size_t count = scaled(10000, o);
  double worst = 0.0;
  std::vector<double> sig, abs, rest;
  for (std::size_t trial = 0; trial < count; ++trial) {
    const int n = 1 + static_cast<int>(trial % 8);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = uni(rng);
    enumerate_sigma(v, sig, abs);
    const std::vector<double> all = elementary_symmetric_all(v);
    for (int k = 0; k <= n; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      worst = std::max(worst, std::abs(all[kk] - sig[kk]) / std::max(abs[kk], 1e-300));
      worst = std::max(worst, std::abs(elem_sym(k, v) - sig[kk]) / std::max(abs[kk], 1e-300));
    }
    // minors with one and with two eigenvalues removed
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        rest.clear();
        for (int m = 0; m < n; ++m)
          if (m != i && m != j) rest.push_back(v[static_cast<std::size_t>(m)]);
        std::vector<double> msig, mabs;
        enumerate_sigma(rest, msig, mabs);
        for (int k = 0; k <= static_cast<int>(rest.size()); ++k) {
          const double got = i == j ? elem_sym_minor(k, v, i) : elem_sym_minor(k, v, i, j);
          const auto kk = static_cast<std::size_t>(k);
          worst = std::max(worst, std::abs(got - msig[kk]) / std::max(mabs[kk], 1e-300));
        }
      }
    }
  }
  r.samples = count;
  r.metrics = {{"max_relative_error", worst}};
  r.tolerances = {{"relative", tol}};
  r.pass = worst <= tol;
  return r;
}

Result q_derivative_check(const Options& o) {
  Result r{.name = "q_derivatives"};
  const double tol = 1e-6;
  const double h1 = 1e-5;
  const double h2 = 1e-4;
  Rng rng(o.seed + 1);
  const std::size_t count = scaled(1000, o);
  double worst_grad = 0.0, worst_hess = 0.0;
  for (std::size_t trial = 0; trial < count; ++trial) {
    const int n = 2 + static_cast<int>(trial % 5);
    const int l = static_cast<int>((trial / 5) % static_cast<std::size_t>(n));
    const Matrix w = random_spd(n, 0.5, 2.0, rng);
    const Matrix dir = random_unit_symmetric(n, rng);
    const SpectralMatrix sw(w);
    auto along = [&](double t) { return q_value(SpectralMatrix(w + t * dir), l, 0.0); };
    const double q0 = along(0.0);

    const double grad = (q_grad(sw, l, 0.0).array() * dir.array()).sum();
    const double fd1 = (along(h1) - along(-h1)) / (2 * h1);

    const Matrix& basis = sw.eigenvectors();
    const Matrix rotated = basis.transpose() * dir * basis;
    Vector lam(n);
    for (int i = 0; i < n; ++i) lam(i) = sw.spectrum()[i];
    PairHessian hq = q_hess(lam.asDiagonal(), l, 0.0);
    if (o.mutation == Mutation::QHessDiagonalSign)
      for (int i = 0; i < n; ++i) hq.diagonal_pairs()(i, i) = -hq.diagonal_pairs()(i, i);
    const double hess = hq.contract(rotated, rotated);
    const double fd2 = (along(h2) - 2 * q0 + along(-h2)) / (h2 * h2);

    // relative to the size of q itself, which sets the rounding floor of the differences
    worst_grad = std::max(worst_grad, std::abs(grad - fd1) / std::max({std::abs(fd1), std::abs(q0), 1e-300}));
    worst_hess = std::max(worst_hess, std::abs(hess - fd2) / std::max({std::abs(fd2), std::abs(q0), 1e-300}));
  }
  r.samples = count;
  r.metrics = {{"grad_max_relative_error", worst_grad}, {"hess_max_relative_error", worst_hess}};
  r.tolerances = {{"relative", tol}, {"grad_step", h1}, {"hess_step", h2}};
  r.pass = worst_grad <= tol && worst_hess <= tol;
  if (o.mutation != Mutation::None) r.note = "mutation active";
  return r;
}

Result identity_check(const Options& o) {
  Result r{.name = "identity_id1"};
  const double tol = 1e-12;
  Rng rng(o.seed + 2);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 2.0);
  const std::size_t count = scaled(10000, o);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < count; ++trial) {
    std::vector<IdentityTerm> terms(2 + trial % 6);
    for (IdentityTerm& t : terms) t = {uni(rng), normal(rng), normal(rng)};
    const IdentitySides s = identity_id1(terms);
    worst = std::max(worst, std::abs(s.lhs - s.rhs) / std::max(s.scale, 1e-300));
  }
  r.samples = count;
  r.metrics = {{"max_relative_error", worst}};
  r.tolerances = {{"relative", tol}};
  r.pass = worst <= tol;
  return r;
}

// W(s) = diag(s·μ_B, λ_G) with two bad and two good eigenvalues.
const std::vector<double> kMuBad{1.0, 2.0};
const std::vector<double> kGood{5.0, 7.0};
constexpr int kSweepRank = 2;

std::vector<double> sweep_values(double s) { return {s * kMuBad[0], s * kMuBad[1], kGood[0], kGood[1]}; }

std::vector<double> sweep_points() {
  std::vector<double> s;
  for (int j = 0; j <= 12; ++j) s.push_back(std::pow(10.0, -0.5 * j));
  return s;
}

Result asymptotics_check(const Options&) {
  Result r{.name = "asymptotics"};
  const double min_slope = 0.9;
  std::vector<double> logs, grad_rem, cross_rem, phis;
  for (double s : sweep_points()) {
    const std::vector<double> lam = sweep_values(s);
    const GoodBadSplit split = split_good_bad(Spectrum(lam), 0.5 * kGood[0]);
    const LeadingForms lead = leading_forms(lam, split, kSweepRank);
    const QuotientEval ex = evaluate_quotient(lam, kSweepRank, 0.0);
    logs.push_back(std::log(s));
    grad_rem.push_back(std::log(std::abs(ex.grad(0, 0) - lead.grad(0))));
    cross_rem.push_back(std::log(std::abs(ex.hess(0, 2, 2, 0) - lead.hess(0, 2, 2, 0))));
    phis.push_back(std::log(phi_value(lam, kSweepRank, 0.0)));
  }
  const double sg = slope(logs, grad_rem);
  const double sc = slope(logs, cross_rem);
  r.samples = logs.size();
  r.metrics = {{"grad_bad_slope", sg}, {"cross_bad_good_slope", sc}, {"phi_slope", slope(logs, phis)}};
  r.tolerances = {{"min_slope", min_slope}, {"s_min", 1e-6}, {"s_max", 1.0}};
  r.pass = sg >= min_slope && sc >= min_slope;
  return r;
}

Result c11_check(const Options&) {
  Result r{.name = "c11_probe"};
  const double band = 0.05;
  std::vector<double> logs, logd;
  double largest = 0.0;
  for (double s : sweep_points()) {
    auto q = [](double t) { return q_value(sweep_values(t), kSweepRank, 0.0); };
    const double d2 = (q(1.5 * s) - 2 * q(s) + q(0.5 * s)) / (0.25 * s * s);
    largest = std::max(largest, std::abs(d2));
    logs.push_back(std::log(s));
    logd.push_back(std::log(std::abs(d2)));
  }
  const double sl = slope(logs, logd);
  r.samples = logs.size();
  r.metrics = {{"log_slope", sl}, {"max_second_difference", largest}};
  r.tolerances = {{"slope_band", band}};
  r.pass = std::abs(sl) <= band && std::isfinite(largest);
  return r;
}

Result newton_maclaurin_check(const Options& o) {
  Result r{.name = "newton_maclaurin"};
  const double tol = 1e-12;
  Rng rng(o.seed + 3);
  std::uniform_real_distribution<double> uni(0.0, 3.0);
  const std::size_t count = scaled(10000, o);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < count; ++trial) {
    const int n = 2 + static_cast<int>(trial % 7);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = uni(rng);
    // some exact zeros to probe the degenerate cases
    if (trial % 3 == 0) v[0] = 0.0;
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, x);
    for (int k = 1; k < n; ++k) {
      const double gap = newton_maclaurin_gap(v, k);
      worst = std::min(worst, gap / std::max(std::pow(scale, 2 * k), 1e-300));
    }
  }
  r.samples = count;
  r.metrics = {{"min_scaled_gap", worst}};
  r.tolerances = {{"floor", -tol}};
  r.pass = worst >= -tol;
  return r;
}

Result third_bound_check(const Options&) {
  Result r{.name = "third_bound"};
  const double expected = 2.0 * std::sqrt(3.0);
  auto fit = [](int n) {
    const grid::Grid g = grid::Grid::box(2, n, -1.0, 1.0);
    const auto u = grid::ScalarField::sample(g, [](const Vector& x) { return std::pow(x(0), 4) + std::pow(x(1), 4); });
    return rankmon::third_bound_fit(grid::jet(u, 3)).value;
  };
  const double coarse = fit(101);
  const double fine = fit(201);
  const double rel = std::abs(fine - coarse) / fine;
  r.samples = 2;
  r.metrics = {{"bound_h", coarse}, {"bound_h_half", fine}, {"refinement_change", rel}, {"expected", expected}};
  r.tolerances = {{"expected_relative", 0.02}, {"refinement_relative", 0.05}};
  r.pass = std::abs(coarse - expected) <= 0.02 * expected && rel <= 0.05;
  r.note = "u = x^4 + y^4 on [-1,1]^2, h = 0.02 and 0.01";
  return r;
}

}  // namespace

double Result::metric(std::string_view key) const {
  for (const auto& [k, v] : metrics)
    if (k == key) return v;
  return std::numeric_limits<double>::quiet_NaN();
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> all{"elem_sym",   "q_derivatives",    "identity_id1", "asymptotics",
                                            "c11_probe",  "newton_maclaurin", "third_bound"};
  return all;
}

Result run(std::string_view name, const Options& options) {
  if (name == "elem_sym") return elem_sym_check(options);
  if (name == "q_derivatives") return q_derivative_check(options);
  if (name == "identity_id1") return identity_check(options);
  if (name == "asymptotics") return asymptotics_check(options);
  if (name == "c11_probe") return c11_check(options);
  if (name == "newton_maclaurin") return newton_maclaurin_check(options);
  if (name == "third_bound") return third_bound_check(options);
  throw std::invalid_argument("unknown lemma check '" + std::string(name) + "'");
}

Mutation parse_mutation(std::string_view text) {
  if (text.empty() || text == "none") return Mutation::None;
  if (text == "q_hess_diagonal_sign") return Mutation::QHessDiagonalSign;
  throw std::invalid_argument("unknown mutation '" + std::string(text) + "'");
}

}  // namespace mclab::lemmas
