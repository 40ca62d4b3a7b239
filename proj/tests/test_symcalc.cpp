#include <doctest.h>

#include "mclab/error.hpp"
#include "mclab/symcalc.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace mclab;
using namespace mclab::symcalc;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Eigen::Index>(d.size()));
  int i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

std::vector<double> random_values(Rng& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("elem_sym matches subset enumeration on the documented examples") {
  const std::vector<double> lam{1, 2, 3};
  CHECK(oracle::subset_sigma(2, lam) == doctest::Approx(11.0));
  CHECK(elem_sym(2, lam) == doctest::Approx(11.0).epsilon(1e-15));
  CHECK(elem_sym(0, lam) == 1.0);
  CHECK(elem_sym(0, std::vector<double>{}) == 1.0);
  CHECK(elem_sym(5, lam) == 0.0);
  CHECK(elem_sym(-1, lam) == 0.0);
}

TEST_CASE("elem_sym agrees with enumeration on random spectra") {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 8;
    const auto lam = random_values(rng, n, -3.0, 3.0);
    for (int k = 0; k <= n; ++k) {
      const double scale = oracle::subset_sigma_abs(k, lam);
      CHECK(std::abs(elem_sym(k, lam) - oracle::subset_sigma(k, lam)) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("elem_sym_minor removes one or two eigenvalues") {
  const std::vector<double> lam{4, 3, 2, 1};
  CHECK(oracle::subset_sigma_minor(1, lam, {0}) == doctest::Approx(6.0));
  CHECK(oracle::subset_sigma_minor(2, lam, {0}) == doctest::Approx(11.0));
  CHECK(elem_sym_minor(1, lam, 0) == doctest::Approx(6.0));
  CHECK(elem_sym_minor(2, lam, 0) == doctest::Approx(11.0));
  CHECK(elem_sym_minor(0, lam, 2) == 1.0);
  CHECK(elem_sym_minor(0, lam, 1, 3) == 1.0);
  CHECK(elem_sym_minor(1, lam, 0, 1) == doctest::Approx(3.0));

  const int three[] = {0, 1, 2};
  CHECK_THROWS_AS((void)elem_sym_minor(1, lam, three), std::invalid_argument);
  CHECK_THROWS_AS((void)elem_sym_minor(1, lam, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)elem_sym_minor(1, lam, 7), std::invalid_argument);
}

TEST_CASE("sigma_grad") {
  SUBCASE("sigma_2 at diag(1,2,3) equals its finite-difference gradient diag(5,4,3)") {
    const Matrix w = diag({1, 2, 3});
    const Matrix g = sigma_grad(2, SpectralMatrix(w));
    for (int i = 0; i < 3; ++i) {
      Matrix e = Matrix::Zero(3, 3);
      e(i, i) = 1.0;
      const double fd = oracle::central_first4(
          [&](double t) { return oracle::matrix_sigma(2, w + t * e); }, 1e-3);
      CHECK(g(i, i) == doctest::Approx(fd).epsilon(1e-9));
    }
    CHECK(g(0, 0) == doctest::Approx(5.0));
    CHECK(g(1, 1) == doctest::Approx(4.0));
    CHECK(g(2, 2) == doctest::Approx(3.0));
    CHECK(std::abs(g(0, 1)) < 1e-14);
  }
  SUBCASE("sigma_1 gradient is the identity for any W") {
    Rng rng(3);
    const Matrix w = random_unit_symmetric(4, rng);
    CHECK(max_abs(sigma_grad(1, SpectralMatrix(w)) - Matrix::Identity(4, 4)) < 1e-12);
  }
  SUBCASE("sigma_n gradient is the cofactor diagonal") {
    const Matrix g = sigma_grad(3, SpectralMatrix(diag({2, 3, 5})));
    CHECK(g(0, 0) == doctest::Approx(15.0));
    CHECK(g(1, 1) == doctest::Approx(10.0));
    CHECK(g(2, 2) == doctest::Approx(6.0));
  }
  SUBCASE("general W matches directional finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + trial % 4;
      const Matrix w = random_spd(n, 0.2, 5.0, rng);
      const Matrix h = random_unit_symmetric(n, rng);
      for (int k = 1; k <= n; ++k) {
        const double exact = (sigma_grad(k, SpectralMatrix(w)).array() * h.array()).sum();
        const double fd = oracle::central_first4(
            [&](double t) { return oracle::matrix_sigma(k, w + t * h); }, 1e-3);
        CHECK(exact == doctest::Approx(fd).epsilon(1e-8).scale(1.0));
      }
    }
  }
}

TEST_CASE("sigma_hess case values") {
  const PairHessian h2 = sigma_hess(2, diag({1, 2, 3}));
  CHECK(h2(0, 0, 1, 1) == doctest::Approx(1.0));
  CHECK(h2(0, 1, 1, 0) == doctest::Approx(-1.0));
  CHECK(h2(0, 0, 0, 1) == 0.0);
  CHECK(h2(0, 1, 0, 1) == 0.0);

  // σ_3 at diag(1,2,3): ∂²/∂W11∂W22 by finite differences of det.
  const Matrix w = diag({1, 2, 3});
  Matrix e11 = Matrix::Zero(3, 3), e22 = Matrix::Zero(3, 3);
  e11(0, 0) = 1.0;
  e22(1, 1) = 1.0;
  const double h = 1e-3;
  auto s3 = [&](double a, double b) { return oracle::matrix_sigma(3, w + a * e11 + b * e22); };
  const double fd = (s3(h, h) - s3(h, -h) - s3(-h, h) + s3(-h, -h)) / (4 * h * h);
  CHECK(fd == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(sigma_hess(3, w)(0, 0, 1, 1) == doctest::Approx(3.0));
  CHECK(sigma_hess(3, w)(0, 0, 0, 1) == 0.0);

  Matrix off = diag({1, 2, 3});
  off(0, 1) = off(1, 0) = 0.1;
  CHECK_THROWS_AS((void)sigma_hess(2, off), std::invalid_argument);
}

TEST_CASE("q_value examples") {
  CHECK(oracle::subset_sigma(3, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(50.0));
  CHECK(oracle::subset_sigma(2, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(35.0));
  CHECK(q_value(SpectralMatrix(diag({4, 3, 2, 1})), 1, 0.0) == doctest::Approx(10.0 / 7.0));
  CHECK(q_value(SpectralMatrix(diag({3, 2, 0, 0})), 2, 0.0) == 0.0);
  CHECK(q_value(SpectralMatrix(diag({1, 1, 1})), 0, 0.0) == doctest::Approx(1.0));
  // q_ε uses W + εI.
  const std::vector<double> lam{3, 2, 0, 0};
  const std::vector<double> shifted{3.5, 2.5, 0.5, 0.5};
  CHECK(q_value(lam, 2, 0.5) ==
        doctest::Approx(oracle::subset_sigma(4, shifted) / oracle::subset_sigma(3, shifted)));
}

TEST_CASE("q_value rejects inconsistent or non-PSD input") {
  CHECK_THROWS_AS((void)q_value(std::vector<double>{1, -1, 0}, 1, 0.0), DegenerateQuotient);
  CHECK_THROWS_AS((void)q_value(std::vector<double>{1, 2, 3}, 3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)q_value(std::vector<double>{1, 2, 3}, 0, -1.0), std::invalid_argument);
  // σ_2 = 0 but σ_3 ≠ 0 cannot happen for PSD input.
  CHECK_THROWS_AS((void)q_value(std::vector<double>{-1, 1, 1}, 1, 0.0), DegenerateQuotient);
}

TEST_CASE("q_grad") {
  const SpectralMatrix w(diag({4, 3, 2, 1}));
  const Matrix g = q_grad(w, 1, 0.0);
  CHECK(g(0, 0) == doctest::Approx(17.0 / 245.0).epsilon(1e-13));
  Matrix e = Matrix::Zero(4, 4);
  e(0, 0) = 1.0;
  const double fd = oracle::central_first4(
      [&](double t) { return q_value(SpectralMatrix(w.entries() + t * e), 1, 0.0); }, 1e-3);
  CHECK(fd == doctest::Approx(17.0 / 245.0).epsilon(1e-9));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) CHECK(std::abs(g(i, j)) < 1e-15);

  const Matrix gi = q_grad(SpectralMatrix(diag({2.5, 2.5, 2.5})), 0, 0.0);
  CHECK(max_abs(gi - gi(0, 0) * Matrix::Identity(3, 3)) < 1e-14);

  CHECK_THROWS_AS((void)q_grad(SpectralMatrix(diag({0, 0, 2})), 1, 0.0), DegenerateQuotient);
}

TEST_CASE("q_hess") {
  const Matrix w = diag({4, 3, 2, 1});
  const PairHessian h = q_hess(w, 1, 0.0);
  SUBCASE("(11,11) against the second finite difference of q") {
    Matrix e = Matrix::Zero(4, 4);
    e(0, 0) = 1.0;
    const double fd = oracle::central_second(
        [&](double t) { return q_value(SpectralMatrix(w + t * e), 1, 0.0); }, 1e-2);
    CHECK(h(0, 0, 0, 0) == doctest::Approx(fd).epsilon(1e-6));
  }
  SUBCASE("(11,12) vanishes") { CHECK(h(0, 0, 0, 1) == 0.0); }
  SUBCASE("(12,21) is -σ_1(W|12)/σ_2 + σ_3 σ_0(W|12)/σ_2²") {
    // Along E12+E21 the second derivative of q equals 2 q^{12,21}.
    Matrix e = Matrix::Zero(4, 4);
    e(0, 1) = e(1, 0) = 1.0;
    const double fd = oracle::central_second(
        [&](double t) { return q_value(SpectralMatrix(w + t * e), 1, 0.0); }, 1e-2);
    CHECK(fd / 2.0 == doctest::Approx(-3.0 / 35.0 + 50.0 / 1225.0).epsilon(1e-8));
    CHECK(h(0, 1, 1, 0) == doctest::Approx(-3.0 / 35.0 + 50.0 / 1225.0).epsilon(1e-13));
    CHECK(h(1, 0, 0, 1) == doctest::Approx(h(0, 1, 1, 0)));
  }
  SUBCASE("symmetric under pair swap") {
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) {
        CHECK(h(i, i, k, k) == doctest::Approx(h(k, k, i, i)).epsilon(1e-14));
        CHECK(h(i, k, k, i) == doctest::Approx(h(k, i, i, k)).epsilon(1e-14));
      }
  }
}

TEST_CASE("q derivatives match finite differences on rotated full-rank PSD matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 5;
    const int l = trial % n;
    const Matrix w = random_spd(n, 0.3, 3.0, rng);
    const SpectralMatrix sw(w);
    const Matrix hdir = random_unit_symmetric(n, rng);
    auto along = [&](double t) { return q_value(SpectralMatrix(w + t * hdir), l, 0.0); };

    const double grad_exact = (q_grad(sw, l, 0.0).array() * hdir.array()).sum();
    CHECK(grad_exact == doctest::Approx(oracle::central_first4(along, 1e-3)).epsilon(1e-7).scale(1));

    const Matrix q = sw.eigenvectors();
    const Matrix rotated = q.transpose() * hdir * q;
    Vector lam(n);
    for (int i = 0; i < n; ++i) lam(i) = sw.spectrum()[i];
    const double hess_exact = q_hess(lam.asDiagonal(), l, 0.0).contract(rotated, rotated);
    CHECK(hess_exact == doctest::Approx(oracle::central_second(along, 1e-2)).epsilon(1e-5).scale(1));
  }
}

TEST_CASE("q is homogeneous of degree one and rotation invariant") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 6;
    const int l = trial % n;
    const Matrix w = random_spd(n, 0.1, 10.0, rng);
    const double t = log_uniform(0.1, 10.0, rng);
    const double q = q_value(SpectralMatrix(w), l, 0.0);
    CHECK(q_value(SpectralMatrix(t * w), l, 0.0) == doctest::Approx(t * q).epsilon(1e-12));
    const Matrix o = random_orthogonal(n, rng);
    const Matrix rotated = o * w * o.transpose();
    for (int k = 0; k <= n; ++k) {
      const double a = elem_sym(k, SpectralMatrix(w).spectrum());
      const double b = elem_sym(k, SpectralMatrix(rotated).spectrum());
      CHECK(b == doctest::Approx(a).epsilon(1e-10));
    }
  }
}

TEST_CASE("split_good_bad") {
  const Spectrum spec({1e-9, 1e-8, 2.0, 3.0});
  const GoodBadSplit s = split_good_bad(spec, 0.1);
  CHECK(s.bad == std::vector<int>{0, 1});
  CHECK(s.good == std::vector<int>{2, 3});
  CHECK(s.l == 2);
  CHECK(split_good_bad(Spectrum({1, 2, 3}), 0.1).bad.empty());
  CHECK(split_good_bad(Spectrum({1, 2, 3}), 0.1).l == 3);
  CHECK(split_good_bad(Spectrum({0.01, 0.02}), 0.1).l == 0);
  CHECK_THROWS_AS((void)split_good_bad(spec, 0.0), std::invalid_argument);
  CHECK(default_split_threshold(spec, 2) == doctest::Approx(0.2));
}

TEST_CASE("split_sigma reproduces sigma_gamma") {
  const std::vector<double> lam{0.1, 2, 3};
  const GoodBadSplit s = split_good_bad(Spectrum(lam), 1.0);
  CHECK(s.good == std::vector<int>{1, 2});
  CHECK(split_sigma(2, s, lam) == doctest::Approx(6.5));
  CHECK(oracle::subset_sigma(2, lam) == doctest::Approx(6.5));

  const GoodBadSplit none = split_good_bad(Spectrum(lam), 0.05);
  CHECK(none.bad.empty());
  CHECK(split_sigma(2, none, lam) == doctest::Approx(elem_sym(2, lam)));

  Rng rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 7;
    auto v = random_values(rng, n, 0.0, 2.0);
    const Spectrum spec(v);
    const std::vector<double> sorted(spec.values().begin(), spec.values().end());
    const GoodBadSplit sp = split_good_bad(spec, 0.01 + 2.0 * (trial % 5) / 5.0);
    for (int g = 0; g <= n + 1; ++g)
      CHECK(split_sigma(g, sp, sorted) ==
            doctest::Approx(elem_sym(g, sorted)).epsilon(1e-13).scale(1.0));
  }
}

TEST_CASE("leading_forms remainders") {
  const std::vector<double> mu_bad{1.0, 2.0};
  const std::vector<double> good{5.0, 7.0};
  const int l = 2;

  SUBCASE("q^{ii}, i in B: remainder stays O(phi) along the sweep") {
    for (double s = 1.0; s >= 1e-6; s /= 10.0) {
      const std::vector<double> lam{s * mu_bad[0], s * mu_bad[1], good[0], good[1]};
      const GoodBadSplit split = split_good_bad(Spectrum(lam), 3.0);
      const LeadingForms lead = leading_forms(lam, split, l);
      const QuotientEval ex = evaluate_quotient(lam, l, 0.0);
      const double phi = phi_value(lam, l, 0.0);
      const double ratio = std::abs(ex.grad(0, 0) - lead.grad(0)) / phi;
      CHECK(ratio < 1e-2);
      CHECK(lead.grad_order[0] == RemainderOrder::Phi);
    }
  }
  SUBCASE("q^{ij,ji}, i != j in B: exact + 1/sigma_1(B) stays bounded") {
    for (double s = 1.0; s >= 1e-6; s /= 10.0) {
      const std::vector<double> lam{s * mu_bad[0], s * mu_bad[1], good[0], good[1]};
      const QuotientEval ex = evaluate_quotient(lam, l, 0.0);
      const double b1 = lam[0] + lam[1];
      CHECK(std::abs(ex.hess(0, 1, 1, 0) + 1.0 / b1) < 1.0);
    }
  }
  SUBCASE("single bad eigenvalue: sigma_2(B|i) terms vanish") {
    const std::vector<double> lam{1e-4, 3.0, 4.0};
    const GoodBadSplit split = split_good_bad(Spectrum(lam), 0.5);
    const LeadingForms lead = leading_forms(lam, split, 2);
    // σ_1(B|i) = σ_2(B|i) = 0 for a singleton B.
    CHECK(lead.grad(0) == 0.0);
    CHECK(lead.hess(0, 0, 0, 0) == doctest::Approx(0.0));
  }
  SUBCASE("mismatched rank parameter is rejected") {
    const std::vector<double> lam{1e-4, 3.0, 4.0};
    const GoodBadSplit split = split_good_bad(Spectrum(lam), 0.5);
    CHECK_THROWS_AS((void)leading_forms(lam, split, 1), std::invalid_argument);
  }
}

TEST_CASE("identity_id1") {
  Rng rng(31);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<IdentityTerm> terms(4);
    for (auto& t : terms) t = {uni(rng), normal(rng), normal(rng)};
    const IdentitySides s = identity_id1(terms);
    CHECK(std::abs(s.lhs - s.rhs) <= 1e-12 * s.scale);
  }
  std::vector<IdentityTerm> zero{{0.3, 0, 0}, {0.5, 0, 0}, {0.9, 0, 0}};
  const IdentitySides z = identity_id1(zero);
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);

  std::vector<IdentityTerm> single{{0.7, 1.3, -0.4}};
  const IdentitySides one = identity_id1(single);
  CHECK(one.lhs == doctest::Approx(0.0));
  CHECK(one.rhs == doctest::Approx(0.0));
}

TEST_CASE("phi_value") {
  CHECK(phi_value(SpectralMatrix(diag({0, 0, 2, 3})), 2, 0.0) == 0.0);
  CHECK(phi_value(SpectralMatrix(diag({4, 3, 2, 1})), 1, 0.0) ==
        doctest::Approx(35.0 + 10.0 / 7.0));
  Rng rng(37);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + trial % 5;
    const Matrix w = random_spd(n, 1e-4, 10.0, rng);
    CHECK(phi_value(SpectralMatrix(w), trial % n, 0.0) >= 0.0);
  }
}

TEST_CASE("newton_maclaurin_gap") {
  CHECK(newton_maclaurin_gap(std::vector<double>{1, 1, 1, 1}, 2) == doctest::Approx(0.0));
  CHECK(newton_maclaurin_gap(std::vector<double>{1, 2, 3}, 1) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS((void)newton_maclaurin_gap(std::vector<double>{1, 2, 3}, 3),
                  std::invalid_argument);
  Rng rng(41);
  for (int trial = 0; trial < 20000; ++trial) {
    const int n = 2 + trial % 7;
    const auto v = random_values(rng, n, 0.0, 5.0);
    const int k = 1 + trial % (n - 1);
    CHECK(newton_maclaurin_gap(v, k) >= -1e-12);
  }
}

TEST_CASE("third_deriv_ratio") {
  CHECK(third_deriv_ratio(0.0, 1.0, 2.0) == 0.0);
  for (double x : {0.1, 0.5, 2.0}) {
    const double r = third_deriv_ratio(24.0 * x, 12.0 * x * x, 12.0 * x * x);
    CHECK(r == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-12));
  }
  CHECK(third_deriv_ratio(1.0, -1e-15, 0.0) == doctest::Approx(1e14));
}

TEST_CASE("epsilon limit: q_eps derivatives stabilise at a minimal-rank point") {
  const std::vector<double> lam{0, 0, 2, 3};
  std::vector<double> entries;
  for (double eps : epsilon_schedule()) entries.push_back(evaluate_quotient(lam, 2, eps).grad(0, 0));
  const std::size_t m = entries.size();
  CHECK(entries[m - 1] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(entries[m - 2] == doctest::Approx(entries[m - 1]).epsilon(1e-5));
  CHECK(entries[m - 3] == doctest::Approx(entries[m - 1]).epsilon(1e-5));
}
