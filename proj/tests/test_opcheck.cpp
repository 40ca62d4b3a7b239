#include <doctest.h>

#include "mclab/error.hpp"
#include "mclab/opcheck.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace mclab;
using namespace mclab::opcheck;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Eigen::Index>(d.size()));
  int i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

TestDirection zero_direction(int n) { return {Matrix::Zero(n, n), 0.0, Vector::Zero(n)}; }

SamplePlan small_plan(std::size_t samples, std::uint64_t seed = 1) {
  SamplePlan plan;
  plan.samples = samples;
  plan.seed = seed;
  return plan;
}

/// d²/dt² F((A⁻¹ + t A⁻¹ X A⁻¹)⁻¹, u + tY, x + tZ) at t = 0.
double inverse_path_second(const OperatorSpec& op, const Matrix& a, const Vector& p, double u, const Vector& x,
                           const TestDirection& dir) {
  const Matrix b = a.inverse();
  const auto along = [&](double t) {
    Point pt{symmetrize((b + t * b * dir.X * b).inverse()), p, u + t * dir.Y, x + t * dir.Z, 0.0};
    return op.value(pt);
  };
  return oracle::central_second(along, 1e-3);
}

}  // namespace

TEST_CASE("operator derivatives: closed form against finite differences") {
  Rng rng(3);
  const std::vector<OperatorSpec> ops{
      sigma_k(3, 2), sigma_quotient(3, 2, 1), sigma_k(3, 3),
      from_expression("mixed", 3, "sigma(2) + u*r_11 + x_1*r_22 + u^2 - x_1*u + exp(x_3)*r_13")};
  for (const OperatorSpec& op : ops) {
    CAPTURE(op.name());
    for (int trial = 0; trial < 20; ++trial) {
      Point pt{random_spd(3, 0.5, 3.0, rng), random_gaussian(3, rng), 0.3, random_gaussian(3, rng) * 0.5, 0.0};
      const OperatorDerivatives a = op.derivatives(pt);
      const OperatorSpec numeric(op.name(), 3, [&op](const Point& q) { return op.value(q); }, op.depends());
      const OperatorDerivatives b = numeric.derivatives(pt);
      CHECK_FALSE(numeric.closed_form());
      const double gscale = 1.0 + max_abs(a.grad_r);
      CHECK(max_abs(a.grad_r - b.grad_r) <= 1e-4 * gscale);
      CHECK(std::abs(a.grad_u - b.grad_u) <= 1e-4 * (1.0 + std::abs(a.grad_u)));
      CHECK(max_abs(a.hess - b.hess) <= 1e-4 * (1.0 + a.hess_scale()));
      CHECK(max_abs(a.grad_r - a.grad_r.transpose()) == 0.0);
    }
  }
}

TEST_CASE("sigma derivatives use the symmetric-matrix convention") {
  const OperatorSpec s2 = sigma_k(3, 2);
  Point pt = Point::zero(3);
  pt.r = diag({1, 2, 3});
  const OperatorDerivatives d = s2.derivatives(pt);
  CHECK(max_abs(d.grad_r - diag({5, 4, 3})) < 1e-14);
  CHECK(d.hess_r(0, 0, 1, 1) == doctest::Approx(1.0));
  CHECK(d.hess_r(0, 1, 1, 0) == doctest::Approx(-0.5));
  // Σ F^{ij,kl} X_ij X_kl along E12 + E21 equals the second derivative of σ_2 along it: -2.
  Matrix e = Matrix::Zero(3, 3);
  e(0, 1) = e(1, 0) = 1.0;
  CHECK(d.rr(e, e) == doctest::Approx(-2.0));
}

TEST_CASE("catalogue construction") {
  CHECK(sigma_k(3, 1).name() == "sigma_1");
  CHECK_THROWS_AS((void)sigma_k(3, 4), std::invalid_argument);
  CHECK_THROWS_AS((void)sigma_k(7, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)from_expression("bad", 2, "r_13"), std::invalid_argument);
  CHECK_THROWS_AS((void)from_expression("slot", 2, "f_1"), std::invalid_argument);
  CHECK_THROWS_AS((void)shift(sigma_k(2, 1), diag({1, -1})), std::invalid_argument);
  CHECK_NOTHROW((void)shift(sigma_k(2, 1), diag({1, 0})));

  const OperatorSpec h = harmonic_reciprocal(Matrix::Identity(2, 2), "1 + u^2");
  Point pt = Point::zero(2);
  pt.r = diag({1, 3});
  pt.u = 2.0;
  CHECK(h.value(pt) == doctest::Approx(-0.25 + 0.2));
  CHECK(h.depends().u);
  CHECK_FALSE(h.depends().x);

  const std::vector<OperatorSpec> parts{sigma_k(3, 1), sigma_k(3, 2)};
  const OperatorSpec c = convex_composition("f_1^2 + f_2", parts);
  Point q = Point::zero(3);
  q.r = diag({1, 2, 3});
  CHECK(c.value(q) == doctest::Approx(36.0 + 11.0));
}

TEST_CASE("check_ellipticity") {
  SUBCASE("sigma_1 has unit coefficients everywhere") {
    const ConditionReport r = check_ellipticity(sigma_k(3, 1), small_plan(500));
    CHECK(r.verdict == Verdict::Pass);
    CHECK(r.worst == doctest::Approx(1.0));
  }
  SUBCASE("sigma_2 at diag(1,2,3) has smallest coefficient 3") {
    SamplePlan plan;
    Point pt = Point::zero(3);
    pt.r = diag({1, 2, 3});
    plan.points = {pt};
    const ConditionReport r = check_ellipticity(sigma_k(3, 2), plan);
    CHECK(r.samples == 1);
    CHECK(r.worst == doctest::Approx(3.0));
    CHECK(r.verdict == Verdict::Pass);
  }
  SUBCASE("-sigma_1 fails with a negative witness") {
    const OperatorSpec neg = from_expression("-sigma_1", 3, "-sigma(1)");
    const ConditionReport r = check_ellipticity(neg, small_plan(50));
    CHECK(r.verdict == Verdict::Fail);
    CHECK(r.worst == doctest::Approx(-1.0));
    CHECK(reevaluate(neg, r) == doctest::Approx(r.worst).epsilon(1e-10));
  }
  SUBCASE("sigma_2/sigma_1 is elliptic on PSD samples") {
    SamplePlan plan = small_plan(2000);
    plan.eig_lo = 0.1;
    plan.eig_hi = 10.0;
    CHECK(check_ellipticity(sigma_quotient(3, 2, 1), plan).verdict == Verdict::Pass);
    // Over six decades of eigenvalues the smallest coefficient drops below the floor but
    // stays positive, so the verdict is never a failure.
    const ConditionReport wide = check_ellipticity(sigma_quotient(3, 2, 1), small_plan(2000));
    CHECK(wide.verdict != Verdict::Fail);
    CHECK(wide.worst > 0.0);
  }
}

TEST_CASE("condition_c_form") {
  Rng rng(7);
  const Vector p = Vector::Zero(3), x = Vector::Zero(3);
  SUBCASE("sigma_1 with Y = Z = 0 reduces to 2 tr(X A^-1 X)") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = random_spd(3, 0.1, 10.0, rng);
      const TestDirection dir{random_unit_symmetric(3, rng), 0.0, Vector::Zero(3)};
      const double v = condition_c_form(sigma_k(3, 1), a, p, 0.0, x, dir);
      CHECK(v == doctest::Approx(2.0 * (dir.X * a.inverse() * dir.X).trace()).epsilon(1e-12));
      CHECK(v >= 0.0);
    }
  }
  SUBCASE("operator independent of (u,x) with X = 0 gives 0") {
    const TestDirection dir{Matrix::Zero(3, 3), 0.7, Vector::Constant(3, 0.4)};
    CHECK(condition_c_form(sigma_k(3, 2), diag({1, 2, 3}), p, 0.0, x, dir) == 0.0);
  }
  SUBCASE("sigma_1 - 12|x|^2 along Z = e_1 is -24") {
    const OperatorSpec op = from_expression("counterexample", 3, "sigma(1) - 12*(x_1^2 + x_2^2 + x_3^2)");
    const TestDirection dir{Matrix::Zero(3, 3), 0.0, Vector::Unit(3, 0)};
    CHECK(condition_c_form(op, diag({1, 2, 3}), p, 0.0, random_gaussian(3, rng), dir) == doctest::Approx(-24.0));
  }
  SUBCASE("rejects indefinite A") {
    CHECK_THROWS_AS((void)condition_c_form(sigma_k(3, 1), diag({1, -1, 1}), p, 0.0, x, zero_direction(3)),
                    std::invalid_argument);
  }
}

TEST_CASE("the form is the second derivative of F along the inverse path") {
  Rng rng(11);
  const std::vector<OperatorSpec> ops{
      sigma_k(3, 2), sigma_k(3, 3), sigma_quotient(3, 3, 2), sigma_quotient(3, 2, 1),
      from_expression("mixed", 3, "sigma(2) + u*r_11 + x_1*r_22 + u^2 - x_1*u + x_2^2*r_12")};
  for (const OperatorSpec& op : ops) {
    CAPTURE(op.name());
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = random_spd(3, 0.5, 2.0, rng);
      const Vector p = random_gaussian(3, rng);
      const Vector x = random_gaussian(3, rng);
      TestDirection dir{random_unit_symmetric(3, rng), 0.5 * random_gaussian(1, rng)(0), 0.5 * random_gaussian(3, rng)};
      const double exact = condition_c_form(op, a, p, 0.2, x, dir);
      const double fd = inverse_path_second(op, a, p, 0.2, x, dir);
      CHECK(exact == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("qstar_form") {
  Rng rng(13);
  DegeneratePoint pt;
  pt.Q = random_orthogonal(3, rng);
  pt.B = diag({2, 3});
  pt.p = Vector::Zero(3);
  pt.x = Vector::Zero(3);

  SUBCASE("sigma_1 gives 2 tr(X Atilde X)") {
    for (int trial = 0; trial < 20; ++trial) {
      TestDirection dir = random_direction(pt.Q, rng);
      const double v = qstar_form(sigma_k(3, 1), pt, dir);
      CHECK(v == doctest::Approx(2.0 * (dir.X * pt.pseudo_inverse() * dir.X).trace()).epsilon(1e-12));
      CHECK(v >= 0.0);
    }
  }
  SUBCASE("zero direction gives 0") { CHECK(qstar_form(sigma_k(3, 2), pt, zero_direction(3)) == 0.0); }
  SUBCASE("rejects X outside the degenerate subspace") {
    TestDirection dir{Matrix::Identity(3, 3), 0.0, Vector::Zero(3)};
    CHECK_THROWS_AS((void)qstar_form(sigma_k(3, 1), pt, dir), std::invalid_argument);
  }
  SUBCASE("sigma_2 matches the limit of the full form at A = diag(1/s, 2, 3)") {
    DegeneratePoint id = pt;
    id.Q = Matrix::Identity(3, 3);
    for (int trial = 0; trial < 10; ++trial) {
      const TestDirection dir = random_direction(id.Q, rng);
      const double q = qstar_form(sigma_k(3, 2), id, dir);
      std::vector<double> v;
      for (double s : {1e2, 1e3, 1e4})
        v.push_back(condition_c_form(sigma_k(3, 2), diag({1.0 / s, 2, 3}), id.p, 0.0, id.x, dir));
      const double extrapolated = v[2] + (v[2] - v[1]) / 9.0;
      CHECK(extrapolated == doctest::Approx(q).epsilon(1e-8).scale(1.0));
      CHECK(std::abs(v[2] - q) < std::abs(v[0] - q) + 1e-12);
    }
  }
  SUBCASE("scaling: Q*(tX, tX) = t^2 Q*(X, X)") {
    const OperatorSpec op = sigma_quotient(3, 2, 1);
    for (int trial = 0; trial < 20; ++trial) {
      const TestDirection dir = random_direction(pt.Q, rng);
      const double t = log_uniform(0.1, 10.0, rng);
      CHECK(qstar_form(op, pt, dir.scaled(t)) == doctest::Approx(t * t * qstar_form(op, pt, dir)).epsilon(1e-12));
    }
  }
}

TEST_CASE("project_gamma_perp") {
  Rng rng(17);
  const OperatorSpec op = from_expression("mixed", 3, "sigma(2) + u*x_1 - x_2^2");
  DegeneratePoint pt;
  pt.Q = random_orthogonal(3, rng);
  pt.B = random_spd(2, 0.5, 2.0, rng);
  pt.p = Vector::Zero(3);
  pt.u = 0.4;
  pt.x = random_gaussian(3, rng);
  const OperatorDerivatives d = op.derivatives(pt.point());
  const TestDirection normal{d.grad_r, -d.grad_u, -d.grad_x};

  for (int trial = 0; trial < 50; ++trial) {
    const TestDirection dir = random_direction(pt.Q, rng);
    const TestDirection once = project_gamma_perp(op, pt, dir);
    CHECK(std::abs(once.dot(normal)) <= 1e-12 * normal.norm());
    CHECK(in_degenerate_subspace(pt.Q, once.X));
    CHECK(once.norm() <= dir.norm() + 1e-15);
    const TestDirection twice = project_gamma_perp(op, pt, once);
    CHECK(max_abs(twice.X - once.X) <= 1e-12);
    CHECK(std::abs(twice.Y - once.Y) <= 1e-12);
    CHECK((twice.Z - once.Z).norm() <= 1e-12);
  }
  const TestDirection self{project_to_degenerate_subspace(pt.Q, normal.X), normal.Y, normal.Z};
  CHECK(project_gamma_perp(op, pt, self).norm() <= 1e-12 * self.norm());

  const OperatorSpec flat = from_expression("flat", 3, "u^2");
  DegeneratePoint at_zero = pt;
  at_zero.u = 0.0;
  CHECK_THROWS_AS((void)project_gamma_perp(flat, at_zero, random_direction(pt.Q, rng)), DegenerateNormal);
}

TEST_CASE("check_wwcond positive controls") {
  const std::vector<OperatorSpec> parts{sigma_k(3, 1), sigma_k(3, 2)};
  const std::vector<OperatorSpec> ops{sigma_k(3, 1), sigma_k(3, 2), sigma_k(3, 3), sigma_quotient(3, 2, 1),
                                      sigma_quotient(3, 3, 2), shift(sigma_k(3, 1), Matrix::Identity(3, 3)),
                                      convex_composition("f_1^2 + f_2", parts)};
  for (const OperatorSpec& op : ops) {
    CAPTURE(op.name());
    const ConditionReport r = check_wwcond(op, small_plan(1500, 21));
    CHECK(r.verdict == Verdict::Pass);
    CHECK(r.worst_scaled >= -1e-9);
    // σ_3 terms reach 10⁶ in magnitude here, so only the relative floor is meaningful for them.
    if (op.name().find("sigma_3") == std::string::npos) CHECK(r.worst >= -1e-9);
    CHECK(r.inconclusive == 0);
    CHECK(r.samples >= 1500);
  }
}

TEST_CASE("check_wwcond negative control") {
  const OperatorSpec op = from_expression("counterexample", 3, "sigma(1) - 12*(x_1^2 + x_2^2 + x_3^2)");
  const ConditionReport r = check_wwcond(op, small_plan(200, 5));
  CHECK(r.verdict == Verdict::Fail);
  CHECK(r.witness.direction.Z.norm() > 0.5);
  CHECK(r.worst <= -20.0);
  CHECK(reevaluate(op, r) == doctest::Approx(r.worst).epsilon(1e-10));

  const ConditionReport c = check_condition_c(op, small_plan(200, 5));
  CHECK(c.verdict == Verdict::Fail);
  CHECK(c.worst <= -20.0);
  CHECK(reevaluate(op, c) == doctest::Approx(c.worst).epsilon(1e-10));
}

TEST_CASE("sigma_1 in dimensions up to 6") {
  for (int n = 1; n <= 6; ++n) {
    CAPTURE(n);
    const ConditionReport r = check_wwcond(sigma_k(n, 1), small_plan(1000, 100 + n));
    CHECK(r.worst >= -1e-10);
    CHECK(r.verdict == Verdict::Pass);
  }
}

TEST_CASE("closure under sums on a shared sample set") {
  const SamplePlan plan = small_plan(800, 9);
  const OperatorSpec a = sigma_k(3, 2);
  const OperatorSpec b = sigma_quotient(3, 3, 2);
  REQUIRE(check_wwcond(a, plan).verdict == Verdict::Pass);
  REQUIRE(check_wwcond(b, plan).verdict == Verdict::Pass);
  const std::vector<OperatorSpec> parts{a, b};
  CHECK(check_wwcond(convex_composition("f_1 + f_2", parts), plan).verdict == Verdict::Pass);
}

TEST_CASE("reports are deterministic and independent of the thread count") {
  SamplePlan plan = small_plan(600, 77);
  const OperatorSpec op = sigma_quotient(3, 2, 1);
  plan.threads = 1;
  const ConditionReport one = check_wwcond(op, plan);
  plan.threads = 3;
  const ConditionReport three = check_wwcond(op, plan);
  CHECK(one.worst == three.worst);
  CHECK(one.worst_scaled == three.worst_scaled);
  CHECK(one.witness.sample == three.witness.sample);
  CHECK(one.samples == three.samples);
  CHECK(reevaluate(op, one) == doctest::Approx(one.worst).epsilon(1e-10).scale(1e-10));
}

TEST_CASE("neighbourhood sampling stays near the centre") {
  SamplePlan plan = small_plan(300, 4);
  plan.neighbourhood = Neighbourhood{diag({1, 2, 3}), 0.05};
  const ConditionReport r = check_ellipticity(sigma_k(3, 2), plan);
  CHECK(r.verdict == Verdict::Pass);
  CHECK(r.worst == doctest::Approx(3.0).epsilon(0.1));
  CHECK(check_wwcond(sigma_k(3, 2), plan).verdict == Verdict::Pass);
}

TEST_CASE("homog2_check") {
  const SamplePlan plan = small_plan(500, 3);
  SUBCASE("linear") {
    const ConditionReport r = homog2_check(sigma_k(2, 1), 1.0, plan);
    CHECK(r.verdict == Verdict::Pass);
    CHECK(r.worst == 0.0);
  }
  SUBCASE("product of eigenvalues, degree 2") {
    const ConditionReport r = homog2_check(sigma_k(2, 2), 2.0, plan);
    CHECK(r.verdict == Verdict::Pass);
    CHECK(r.worst == 0.0);
  }
  SUBCASE("square root of the trace, degree 1/2") {
    const OperatorSpec op = from_expression("sqrt", 2, "sqrt(r_11 + r_22)");
    const ConditionReport r = homog2_check(op, 0.5, plan);
    CHECK(r.verdict == Verdict::Fail);
    const double l2 = r.witness.point.r(1, 1);
    CHECK(r.worst == doctest::Approx(-0.25 * std::pow(l2, -1.5)).epsilon(1e-10));
  }
  SUBCASE("wrong degree is reported") {
    const ConditionReport r = homog2_check(sigma_k(2, 1), 2.0, plan);
    CHECK(r.verdict == Verdict::Inconclusive);
    CHECK(r.note.find("Euler") != std::string::npos);
  }
  SUBCASE("rejects n != 2") { CHECK_THROWS_AS((void)homog2_check(sigma_k(3, 1), 1.0, plan), std::invalid_argument); }
}
