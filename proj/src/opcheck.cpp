#include "mclab/opcheck.hpp"

#include "mclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace mclab::opcheck {

namespace {

constexpr const char* kEllipticity = "ellipticity";
constexpr const char* kConditionC = "inverse-convexity form";
constexpr const char* kQStar = "Q* on Gamma-perp";
constexpr const char* kZeroConvexity = "convexity of F(0,p,u,x)";
constexpr const char* kHomog = "F^{l2,l2} at l1=0";

/// Running minimum with lowest-index tie-breaking so that the fold is independent of
/// how samples are split between threads.
struct Accumulator {
  std::size_t samples = 0;
  std::size_t inconclusive = 0;
  double worst = std::numeric_limits<double>::infinity();
  double worst_scaled = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  Witness witness;
  std::string note;

  template <class MakeWitness>
  void offer(double value, double scale_here, MakeWitness&& make) {
    if (!std::isfinite(value) || !std::isfinite(scale_here)) {
      ++inconclusive;
      return;
    }
    ++samples;
    worst_scaled = std::min(worst_scaled, value / scale_here);
    if (value < worst) {
      worst = value;
      scale = scale_here;
      witness = make();
    }
  }

  void merge(const Accumulator& later) {
    samples += later.samples;
    inconclusive += later.inconclusive;
    worst_scaled = std::min(worst_scaled, later.worst_scaled);
    if (later.worst < worst) {
      worst = later.worst;
      scale = later.scale;
      witness = later.witness;
    }
    if (note.empty()) note = later.note;
  }
};

/// Evaluates body(index, acc) for every index in [0, count) on `threads` workers and
/// folds the per-chunk accumulators in index order.
template <class Body>
Accumulator parallel_fold(std::size_t count, unsigned threads, Body body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::vector<Accumulator> parts(threads);
  const auto run = [&](unsigned part) {
    const std::size_t begin = count * part / threads;
    const std::size_t end = count * (part + 1) / threads;
    for (std::size_t i = begin; i < end; ++i) body(i, parts[part]);
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned part = 0; part < threads; ++part) pool.emplace_back(run, part);
  }
  Accumulator total = std::move(parts[0]);
  for (unsigned part = 1; part < threads; ++part) total.merge(parts[part]);
  return total;
}

ConditionReport finish(const std::string& condition, const OperatorSpec& op, Accumulator acc,
                       const Tolerances& tol) {
  ConditionReport rep;
  rep.condition = condition;
  rep.op = op.name();
  rep.samples = acc.samples;
  rep.inconclusive = acc.inconclusive;
  rep.worst = acc.worst;
  rep.worst_scaled = acc.worst_scaled;
  rep.scale = acc.scale;
  rep.witness = std::move(acc.witness);
  rep.note = std::move(acc.note);
  if (acc.samples == 0) {
    rep.verdict = Verdict::Inconclusive;
    if (rep.note.empty()) rep.note = "no sample could be evaluated";
  } else if (acc.worst_scaled < -tol.fail) {
    rep.verdict = Verdict::Fail;
  } else if (acc.worst_scaled >= -tol.pass && acc.inconclusive == 0 && rep.note.empty()) {
    rep.verdict = Verdict::Pass;
  } else {
    rep.verdict = Verdict::Inconclusive;
    if (rep.note.empty())
      rep.note = acc.inconclusive > 0 ? "some samples could not be evaluated"
                                      : "worst value lies between the pass and fail thresholds; refine sampling";
  }
  return rep;
}

Vector gaussian(int n, double sigma, Rng& rng) { return sigma * random_gaussian(n, rng); }

double form_scale(const OperatorDerivatives& d, const Matrix& ainv) {
  return 1.0 + std::abs(d.value) + d.hess_scale() + 2.0 * max_abs(d.grad_r) * max_abs(ainv);
}

Matrix degenerate_projector(const Matrix& q) {
  const int n = static_cast<int>(q.rows());
  Vector p = Vector::Ones(n);
  p(0) = 0.0;
  return q * p.asDiagonal() * q.transpose();
}

/// Unit direction over all of Sⁿ × R × Rⁿ.
TestDirection random_full_direction(int n, Rng& rng) {
  TestDirection d;
  d.X = random_unit_symmetric(n, rng) * std::abs(random_gaussian(1, rng)(0));
  d.Y = random_gaussian(1, rng)(0);
  d.Z = random_gaussian(n, rng);
  return d.scaled(1.0 / d.norm());
}

std::vector<TestDirection> structured(const TestDirection& random, int n, Rng& rng, bool with_x) {
  std::vector<TestDirection> out;
  if (with_x && random.X.norm() > 0) {
    TestDirection x{random.X, 0.0, Vector::Zero(n)};
    out.push_back(x.scaled(1.0 / x.norm()));
  }
  out.push_back({Matrix::Zero(n, n), 1.0, Vector::Zero(n)});
  Vector z = random_gaussian(n, rng);
  if (z.norm() == 0) z = Vector::Unit(n, 0);
  out.push_back({Matrix::Zero(n, n), 0.0, z / z.norm()});
  return out;
}

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  if (!m.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

Matrix inverse_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) throw std::invalid_argument("matrix is not positive definite");
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

Matrix ux_block(const OperatorDerivatives& d) {
  const int n = d.n;
  return d.hess.block(d.u_var(), d.u_var(), n + 1, n + 1);
}

}  // namespace

// ---------------------------------------------------------------------------

double TestDirection::dot(const TestDirection& o) const {
  return (X.array() * o.X.array()).sum() + Y * o.Y + Z.dot(o.Z);
}

double TestDirection::norm() const { return std::sqrt(dot(*this)); }

TestDirection TestDirection::scaled(double s) const { return {s * X, s * Y, s * Z}; }

Matrix DegeneratePoint::r() const {
  const int n = this->n();
  Matrix inner = Matrix::Zero(n, n);
  inner.bottomRightCorner(n - 1, n - 1) = B;
  return Q * inner * Q.transpose();
}

Matrix DegeneratePoint::pseudo_inverse() const {
  const int n = this->n();
  Matrix inner = Matrix::Zero(n, n);
  if (n > 1) inner.bottomRightCorner(n - 1, n - 1) = inverse_spd(B);
  return Q * inner * Q.transpose();
}

Point DegeneratePoint::point() const { return {symmetrize(r()), p, u, x, t}; }

bool in_degenerate_subspace(const Matrix& q, const Matrix& x) {
  const Matrix local = q.transpose() * x * q;
  const double tol = 1e-10 * (1.0 + max_abs(x));
  return local.row(0).cwiseAbs().maxCoeff() <= tol && local.col(0).cwiseAbs().maxCoeff() <= tol;
}

Matrix project_to_degenerate_subspace(const Matrix& q, const Matrix& x) {
  const Matrix p = degenerate_projector(q);
  return symmetrize(p * x * p);
}

double inverse_convexity_form(const OperatorDerivatives& d, const Matrix& ainv, const TestDirection& dir) {
  const Matrix& x = dir.X;
  const double y = dir.Y;
  const Vector& z = dir.Z;
  const Matrix xax = x * ainv * x;
  return d.rr(x, x) + 2.0 * (d.grad_r.array() * xax.array()).sum() + d.uu() * y * y - 2.0 * d.ru(x) * y -
         2.0 * d.rx(x).dot(z) + 2.0 * y * d.ux().dot(z) + z.dot(d.xx() * z);
}

double condition_c_form(const OperatorSpec& op, const Matrix& a, const Vector& p, double u, const Vector& x,
                        const TestDirection& dir, double t) {
  if (max_abs(a - a.transpose()) > 1e-10 * (1.0 + max_abs(a)))
    throw std::invalid_argument("condition_c_form: A must be symmetric");
  const Matrix ainv = inverse_spd(a);
  const OperatorDerivatives d = op.derivatives({symmetrize(a), p, u, x, t});
  return inverse_convexity_form(d, ainv, dir);
}

double qstar_form(const OperatorSpec& op, const DegeneratePoint& pt, const TestDirection& dir) {
  if (!in_degenerate_subspace(pt.Q, dir.X))
    throw std::invalid_argument("qstar_form: X must have zero first row and column in the Q frame");
  const Matrix ainv = pt.pseudo_inverse();
  return inverse_convexity_form(op.derivatives(pt.point()), ainv, dir);
}

TestDirection project_gamma_perp(const OperatorDerivatives& d, const Matrix& q, const TestDirection& dir) {
  const TestDirection normal{project_to_degenerate_subspace(q, d.grad_r), -d.grad_u, -d.grad_x};
  const double nn = normal.dot(normal);
  if (!(std::sqrt(nn) >= 1e-12)) throw DegenerateNormal("X*_F vanishes on the degenerate subspace");
  TestDirection in{project_to_degenerate_subspace(q, dir.X), dir.Y, dir.Z};
  const double c = in.dot(normal) / nn;
  return {in.X - c * normal.X, in.Y - c * normal.Y, in.Z - c * normal.Z};
}

TestDirection project_gamma_perp(const OperatorSpec& op, const DegeneratePoint& pt, const TestDirection& dir) {
  return project_gamma_perp(op.derivatives(pt.point()), pt.Q, dir);
}

TestDirection random_direction(const Matrix& q, Rng& rng) {
  const int n = static_cast<int>(q.rows());
  Matrix inner = Matrix::Zero(n, n);
  std::normal_distribution<double> normal;
  for (int i = 1; i < n; ++i) {
    inner(i, i) = normal(rng);
    for (int j = i + 1; j < n; ++j) inner(i, j) = inner(j, i) = normal(rng) / std::sqrt(2.0);
  }
  TestDirection d{q * inner * q.transpose(), normal(rng), random_gaussian(n, rng)};
  d.X = symmetrize(d.X);
  return d.scaled(1.0 / d.norm());
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

// ---------------------------------------------------------------------------

namespace {

Point random_point(int n, const SamplePlan& plan, Rng& rng) {
  Point pt;
  if (plan.neighbourhood) {
    pt.r = symmetrize(plan.neighbourhood->center + plan.neighbourhood->radius * random_unit_symmetric(n, rng));
  } else {
    pt.r = random_spd(n, plan.eig_lo, plan.eig_hi, rng);
  }
  pt.p = gaussian(n, plan.p_sigma, rng);
  pt.u = plan.u_sigma * random_gaussian(1, rng)(0);
  pt.x = gaussian(n, plan.x_sigma, rng);
  pt.t = plan.t;
  return pt;
}

DegeneratePoint random_degenerate_point(int n, const SamplePlan& plan, Rng& rng) {
  DegeneratePoint pt;
  if (plan.neighbourhood) {
    const Matrix m =
        symmetrize(plan.neighbourhood->center + plan.neighbourhood->radius * random_unit_symmetric(n, rng));
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
    pt.Q = solver.eigenvectors();
    Vector mu = solver.eigenvalues().tail(n - 1).cwiseMax(plan.eig_lo);
    pt.B = mu.asDiagonal();
  } else {
    pt.Q = random_orthogonal(n, rng);
    pt.B = n > 1 ? random_spd(n - 1, plan.eig_lo, plan.eig_hi, rng) : Matrix(0, 0);
  }
  pt.p = gaussian(n, plan.p_sigma, rng);
  pt.u = plan.u_sigma * random_gaussian(1, rng)(0);
  pt.x = gaussian(n, plan.x_sigma, rng);
  pt.t = plan.t;
  return pt;
}

std::size_t point_count(const SamplePlan& plan) { return plan.points.empty() ? plan.samples : plan.points.size(); }

Point plan_point(int n, const SamplePlan& plan, std::size_t i, Rng& rng) {
  if (!plan.points.empty()) return plan.points[i];
  return random_point(n, plan, rng);
}

}  // namespace

ConditionReport check_ellipticity(const OperatorSpec& op, const SamplePlan& plan, const Tolerances& tol) {
  const int n = op.n();
  Accumulator acc = parallel_fold(point_count(plan), plan.threads, [&](std::size_t i, Accumulator& local) {
    Rng rng(derive_seed(plan.seed, i));
    const Point pt = plan_point(n, plan, i, rng);
    double value = std::numeric_limits<double>::quiet_NaN();
    double scale = 1.0;
    try {
      const Matrix c = op.coefficients(pt);
      value = min_eigenvalue(c);
      scale = 1.0 + max_abs(c);
    } catch (const std::exception&) {
    }
    local.offer(value, scale, [&] {
      Witness w;
      w.kind = kEllipticity;
      w.point = pt;
      w.sample = i;
      return w;
    });
  });
  ConditionReport rep = finish(kEllipticity, op, std::move(acc), tol);
  if (rep.samples > 0) {
    if (rep.worst >= tol.ellipticity_floor)
      rep.verdict = rep.inconclusive == 0 ? Verdict::Pass : Verdict::Inconclusive;
    else if (rep.worst_scaled < -tol.fail || rep.worst < 0.0)
      rep.verdict = Verdict::Fail;
    else
      rep.verdict = Verdict::Inconclusive;
    if (rep.verdict == Verdict::Inconclusive && rep.note.empty())
      rep.note = rep.inconclusive > 0 ? "some samples could not be evaluated"
                                      : "smallest coefficient eigenvalue is below the ellipticity floor";
    if (rep.verdict != Verdict::Inconclusive) rep.note.clear();
  }
  return rep;
}

ConditionReport check_condition_c(const OperatorSpec& op, const SamplePlan& plan, const Tolerances& tol) {
  const int n = op.n();
  Accumulator acc = parallel_fold(point_count(plan), plan.threads, [&](std::size_t i, Accumulator& local) {
    Rng rng(derive_seed(plan.seed, i));
    const Point pt = plan_point(n, plan, i, rng);
    Matrix ainv;
    OperatorDerivatives d;
    try {
      ainv = inverse_spd(pt.r);
      d = op.derivatives(pt);
    } catch (const std::exception&) {
      ++local.inconclusive;
      return;
    }
    const double scale = form_scale(d, ainv);
    const TestDirection random = random_full_direction(n, rng);
    std::vector<TestDirection> dirs{random};
    if (plan.structured_directions) {
      auto more = structured(random, n, rng, true);
      dirs.insert(dirs.end(), more.begin(), more.end());
    }
    for (const TestDirection& dir : dirs) {
      local.offer(inverse_convexity_form(d, ainv, dir), scale, [&] {
        Witness w;
        w.kind = kConditionC;
        w.point = pt;
        w.ainv = ainv;
        w.direction = dir;
        w.sample = i;
        return w;
      });
    }
  });
  return finish(kConditionC, op, std::move(acc), tol);
}

ConditionReport check_wwcond(const OperatorSpec& op, const SamplePlan& plan, const Tolerances& tol) {
  const int n = op.n();
  const bool reads_ux = op.depends().u || op.depends().x;
  Accumulator acc = parallel_fold(plan.samples, plan.threads, [&](std::size_t i, Accumulator& local) {
    Rng rng(derive_seed(plan.seed, i));
    const DegeneratePoint pt = random_degenerate_point(n, plan, rng);
    const TestDirection random = random_direction(pt.Q, rng);
    std::vector<TestDirection> dirs{random};
    if (plan.structured_directions) {
      auto more = structured(random, n, rng, n > 1);
      dirs.insert(dirs.end(), more.begin(), more.end());
    }

    OperatorDerivatives d;
    Matrix ainv;
    try {
      d = op.derivatives(pt.point());
      ainv = pt.pseudo_inverse();
    } catch (const std::exception&) {
      local.inconclusive += dirs.size();
      return;
    }
    const double scale = form_scale(d, ainv);
    for (const TestDirection& raw : dirs) {
      // A vanishing normal leaves the whole subspace admissible.
      TestDirection dir = raw;
      try {
        dir = project_gamma_perp(d, pt.Q, raw);
      } catch (const DegenerateNormal&) {
      }
      const double len = dir.norm();
      if (!(len > 1e-12)) continue;
      dir = dir.scaled(1.0 / len);
      local.offer(inverse_convexity_form(d, ainv, dir), scale, [&] {
        Witness w;
        w.kind = kQStar;
        w.point = pt.point();
        w.Q = pt.Q;
        w.B = pt.B;
        w.ainv = ainv;
        w.direction = dir;
        w.sample = i;
        return w;
      });
    }

    if (reads_ux) {
      Point zero = pt.point();
      zero.r.setZero();
      double value = std::numeric_limits<double>::quiet_NaN();
      double zscale = 1.0;
      Vector dir_ux;
      try {
        const OperatorDerivatives d0 = op.derivatives(zero);
        const Matrix block = ux_block(d0);
        if (block.allFinite()) {
          Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(block));
          value = solver.eigenvalues()(0);
          dir_ux = solver.eigenvectors().col(0);
          zscale = 1.0 + std::abs(d0.value) + max_abs(block);
        }
      } catch (const std::exception&) {
      }
      local.offer(value, zscale, [&] {
        Witness w;
        w.kind = kZeroConvexity;
        w.point = zero;
        w.ainv = Matrix::Zero(n, n);
        w.direction = {Matrix::Zero(n, n), dir_ux(0), dir_ux.tail(n)};
        w.sample = i;
        return w;
      });
    }
  });
  return finish("Q* >= 0 on Gamma-perp", op, std::move(acc), tol);
}

ConditionReport homog2_check(const OperatorSpec& op, double degree, const SamplePlan& plan, const Tolerances& tol) {
  if (op.n() != 2) throw std::invalid_argument("homog2_check: requires n = 2");
  Accumulator acc = parallel_fold(plan.samples, plan.threads, [&](std::size_t i, Accumulator& local) {
    Rng rng(derive_seed(plan.seed, i));
    const double l2 = log_uniform(plan.eig_lo, plan.eig_hi, rng);
    const double l1 = log_uniform(plan.eig_lo, plan.eig_hi, rng);
    Point at_zero = Point::zero(2);
    at_zero.r(1, 1) = l2;
    at_zero.t = plan.t;
    Point generic = at_zero;
    generic.r(0, 0) = l1;
    try {
      const OperatorDerivatives d = op.derivatives(at_zero);
      const OperatorDerivatives g = op.derivatives(generic);
      for (const auto* e : {&d, &g}) {
        const double lam1 = (e == &d) ? 0.0 : l1;
        const double euler = e->grad_r(0, 0) * lam1 + e->grad_r(1, 1) * l2;
        const double slack = 1e-8 * (1.0 + std::abs(degree * e->value) + std::abs(euler));
        if (std::abs(euler - degree * e->value) > slack && local.note.empty())
          local.note = "Euler relation fails: operator is not homogeneous of the stated degree";
        if (e->value < -1e-12 * (1.0 + std::abs(e->value)) && local.note.empty())
          local.note = "operator is negative at a sample";
      }
      const double value = d.hess_r(1, 1, 1, 1);
      local.offer(value, 1.0 + std::abs(d.value) + d.hess_scale(), [&] {
        Witness w;
        w.kind = kHomog;
        w.point = at_zero;
        w.sample = i;
        return w;
      });
    } catch (const std::exception&) {
      ++local.inconclusive;
    }
  });
  return finish(kHomog, op, std::move(acc), tol);
}

double reevaluate(const OperatorSpec& op, const ConditionReport& report) {
  const Witness& w = report.witness;
  if (w.kind == kEllipticity) return min_eigenvalue(op.coefficients(w.point));
  if (w.kind == kConditionC || w.kind == kQStar)
    return inverse_convexity_form(op.derivatives(w.point), w.ainv, w.direction);
  if (w.kind == kZeroConvexity) return min_eigenvalue(ux_block(op.derivatives(w.point)));
  if (w.kind == kHomog) return op.derivatives(w.point).hess_r(1, 1, 1, 1);
  throw std::invalid_argument("reevaluate: report has no witness");
}

}  // namespace mclab::opcheck
