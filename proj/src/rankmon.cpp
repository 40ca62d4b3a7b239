#include "mclab/rankmon.hpp"

#include "mclab/error.hpp"
#include "mclab/symcalc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mclab::rankmon {

namespace {

bool is_interior(const grid::Grid& g, std::size_t p, int margin) { return g.boundary_distance(p) >= margin; }

Vector eigenvalues(const Matrix& h) {
  if (h.rows() == 1) return h.diagonal();
  return Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

}  // namespace

RankReport rank_field(const grid::JetField& jets, const ThresholdPolicy& policy, int margin) {
  if (jets.order() < 2) throw std::invalid_argument("rank_field needs Hessians (jet order >= 2)");
  const grid::Grid& g = jets.grid();
  const int n = g.rank();
  const std::size_t count = jets.size();

  RankReport rep;
  rep.n = n;
  rep.margin = margin;
  rep.rank.assign(count, 0);
  rep.interior.assign(count, false);
  rep.histogram.assign(static_cast<std::size_t>(n + 1), 0);

  std::vector<double> lambda(count * static_cast<std::size_t>(n));
  double scale = 0.0;
  bool any_interior = false;
  for (std::size_t p = 0; p < count; ++p) {
    const Vector ev = eigenvalues(jets.hessian(p));
    std::copy(ev.data(), ev.data() + n, lambda.begin() + static_cast<std::ptrdiff_t>(p * static_cast<std::size_t>(n)));
    rep.interior[p] = is_interior(g, p, margin);
    any_interior = any_interior || rep.interior[p];
  }
  for (std::size_t p = 0; p < count; ++p)
    if (rep.interior[p] || !any_interior)
      for (int a = 0; a < n; ++a) scale = std::max(scale, std::abs(lambda[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(a)]));
  rep.global_scale = policy.global_scale > 0.0 ? policy.global_scale : scale;
  rep.global_threshold = policy.global_floor * rep.global_scale;
  if (rep.global_threshold == 0.0) rep.global_threshold = std::numeric_limits<double>::min();

  rep.min_rank = n;
  rep.max_rank = 0;
  for (std::size_t p = 0; p < count; ++p) {
    const double* l = &lambda[p * static_cast<std::size_t>(n)];
    const double tau = std::max(policy.relative * l[n - 1], rep.global_threshold);
    int r = 0;
    for (int a = 0; a < n; ++a) r += l[a] >= tau ? 1 : 0;
    rep.rank[p] = r;
    if (!rep.interior[p]) continue;
    rep.min_rank = std::min(rep.min_rank, r);
    rep.max_rank = std::max(rep.max_rank, r);
    ++rep.histogram[static_cast<std::size_t>(r)];
  }
  if (!any_interior) throw EmptyRegion("rank_field: no grid point lies outside the boundary margin");

  for (std::size_t p = 0; p < count; ++p) {
    if (!rep.interior[p] || rep.rank[p] != rep.min_rank) continue;
    rep.attainment.push_back(p);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(jets.hessian(p));
    // ascending eigenvalues: the first n − rank columns span the near-null space
    rep.null_directions.push_back(es.eigenvectors().leftCols(n - rep.min_rank));
  }
  return rep;
}

grid::ScalarField phi_field(const grid::JetField& jets, int l, const PhiOptions& options) {
  if (jets.order() < 2) throw std::invalid_argument("phi_field needs Hessians (jet order >= 2)");
  if (l < 0) throw std::invalid_argument("phi_field: rank parameter must be non-negative");
  if (!(options.epsilon >= 0.0)) throw std::invalid_argument("phi_field: epsilon must be non-negative");
  const grid::Grid& g = jets.grid();
  const int n = g.rank();
  std::vector<double> out(jets.size(), 0.0);
  if (l >= n) return grid::ScalarField(g, std::move(out));

  std::vector<Vector> spectra(jets.size());
  double scale = 0.0;
  for (std::size_t p = 0; p < jets.size(); ++p) {
    spectra[p] = eigenvalues(jets.hessian(p));
    scale = std::max(scale, spectra[p].cwiseAbs().maxCoeff());
  }
  const double tol = options.psd_tolerance * (1.0 + scale);
  for (std::size_t p = 0; p < jets.size(); ++p) {
    std::vector<double> lam(spectra[p].data(), spectra[p].data() + n);
    for (double& v : lam) {
      if (v < 0.0 && v >= -tol) v = 0.0;
      if (v < -tol && options.epsilon == 0.0)
        throw DegenerateQuotient("phi_field: Hessian is indefinite at grid point " + std::to_string(p));
    }
    out[p] = symcalc::phi_value(lam, l, options.epsilon);
  }
  return grid::ScalarField(g, std::move(out));
}

double principal_angle(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("principal_angle: shape mismatch");
  if (a.cols() == 0) return 0.0;
  const Matrix residual = b - a * (a.transpose() * b);
  const double s = Eigen::JacobiSVD<Matrix>(residual).singularValues()(0);
  return std::asin(std::min(1.0, s));
}

Parallelism null_parallelism(const RankReport& report, const grid::Grid& grid, double radius) {
  if (report.attainment.empty()) throw EmptyRegion("null_parallelism: empty attainment set");
  if (report.min_rank >= report.n) throw EmptyRegion("null_parallelism: full rank, no null directions");
  Vector centroid = Vector::Zero(report.n);
  for (std::size_t p : report.attainment) centroid += grid.point(p);
  centroid /= static_cast<double>(report.attainment.size());
  std::size_t ref = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < report.attainment.size(); ++k) {
    const double d = (grid.point(report.attainment[k]) - centroid).norm();
    if (d < best) {
      best = d;
      ref = k;
    }
  }
  Parallelism out;
  out.reference = report.attainment[ref];
  out.rank_constant = report.constant_rank();
  if (!out.rank_constant)
    out.obstruction = "rank is not constant: interior ranks range over [" + std::to_string(report.min_rank) + ", " +
                      std::to_string(report.max_rank) + "]";
  const Vector x0 = grid.point(out.reference);
  for (std::size_t k = 0; k < report.attainment.size(); ++k) {
    if ((grid.point(report.attainment[k]) - x0).norm() > radius) continue;
    ++out.points;
    out.angle = std::max(out.angle, principal_angle(report.null_directions[ref], report.null_directions[k]));
  }
  if (out.points < 2) throw EmptyRegion("null_parallelism: fewer than two attainment points within the radius");
  return out;
}

// ---------------------------------------------------------------------------

LpSolution fit_constants(std::span<const double> lhs, std::span<const double> phi, std::span<const double> g) {
  if (lhs.size() != phi.size() || lhs.size() != g.size()) throw std::invalid_argument("fit_constants: size mismatch");
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!(phi[i] > 0.0) || g[i] < 0.0) throw std::invalid_argument("fit_constants: need phi > 0 and g >= 0");
    if (lhs[i] <= 0.0) continue;
    const double ratio = lhs[i] / phi[i];
    upper = std::max(upper, ratio);
    if (g[i] == 0.0)
      lower = std::max(lower, ratio);
    else
      active.push_back(i);
  }
  const auto c2_for = [&](double c1) {
    double c2 = 0.0;
    for (std::size_t i : active) c2 = std::max(c2, (lhs[i] - c1 * phi[i]) / g[i]);
    return c2;
  };
  // c1 + c2(c1) is convex and piecewise linear on [lower, upper]
  double a = lower;
  double b = std::max(upper, lower);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = x1 + c2_for(x1);
  double f2 = x2 + c2_for(x2);
  for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(b)); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = x1 + c2_for(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = x2 + c2_for(x2);
    }
  }
  LpSolution best{lower, c2_for(lower)};
  for (double c : {a, b, 0.5 * (a + b), upper}) {
    const LpSolution s{c, c2_for(c)};
    if (s.c1 + s.c2 < best.c1 + best.c2) best = s;
  }
  // absorb rounding so the fitted constants satisfy every constraint exactly
  best.c1 *= 1.0 + 1e-12;
  best.c2 *= 1.0 + 1e-12;
  return best;
}

double fit_residual(const InequalityFit& fit, double c1, double c2) {
  double worst = 0.0;
  for (std::size_t p = 0; p < fit.lhs.size(); ++p)
    if (fit.tested_mask[p]) worst = std::max(worst, fit.lhs[p] - c1 * fit.phi[p] - c2 * fit.grad_phi[p]);
  return worst;
}

InequalityFit diffineq_fit(const opcheck::OperatorSpec& op, const grid::ScalarField& field,
                           const grid::JetField& jets, const FitOptions& options) {
  const grid::Grid& g = field.grid();
  if (!(jets.grid() == g)) throw std::invalid_argument("diffineq_fit: jets and field live on different grids");
  if (op.n() != g.rank()) throw std::invalid_argument("diffineq_fit: operator dimension differs from grid rank");
  if (options.phi_t && options.phi_t->size() != g.size())
    throw std::invalid_argument("diffineq_fit: phi_t has the wrong size");

  const grid::ScalarField phi = phi_field(jets, options.l, PhiOptions{options.epsilon});
  const grid::JetField pj = grid::jet(phi, 2);
  const int n = g.rank();

  InequalityFit fit;
  fit.margin = options.margin;
  fit.lhs.assign(g.size(), 0.0);
  fit.phi = phi.values();
  fit.grad_phi.assign(g.size(), 0.0);
  fit.tested_mask.assign(g.size(), false);
  std::vector<double> lhs, ph, gr;
  std::vector<std::size_t> where;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!is_interior(g, p, options.margin)) continue;
    if (phi[p] < options.phi_floor) {
      ++fit.exact_null;
      continue;
    }
    opcheck::Point pt;
    pt.r = jets.hessian(p);
    pt.p = jets.gradient(p);
    pt.u = field[p];
    pt.x = g.point(p);
    pt.t = options.t;
    const Matrix coeff = op.coefficients(pt);
    double value = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) value += coeff(a, b) * pj.hess(p, a, b);
    if (options.phi_t) value -= (*options.phi_t)[p];
    fit.lhs[p] = value;
    fit.grad_phi[p] = pj.gradient(p).norm();
    fit.tested_mask[p] = true;
    lhs.push_back(value);
    ph.push_back(phi[p]);
    gr.push_back(fit.grad_phi[p]);
    where.push_back(p);
  }
  fit.tested = lhs.size();
  if (fit.tested == 0)
    throw NoTestablePoints("phi vanishes on the whole interior; the constant-rank conclusion already holds");

  const LpSolution s = fit_constants(lhs, ph, gr);
  fit.c1 = s.c1;
  fit.c2 = s.c2;
  fit.residual = fit_residual(fit, fit.c1, fit.c2);
  double worst_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lhs.size(); ++k) {
    fit.max_lhs = std::max(fit.max_lhs, lhs[k]);
    const double ratio = lhs[k] / (ph[k] + gr[k]);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      fit.binding_point = where[k];
    }
  }
  return fit;
}

std::vector<double> phi_time_derivative(const std::vector<double>& previous, const std::vector<double>& next,
                                        double dt_prev, double dt_next, const std::vector<double>& current) {
  if (previous.size() != next.size() || current.size() != next.size())
    throw std::invalid_argument("phi_time_derivative: size mismatch");
  if (!(dt_prev > 0.0) || !(dt_next > 0.0)) throw std::invalid_argument("phi_time_derivative: steps must be positive");
  const double a = -dt_next / (dt_prev * (dt_prev + dt_next));
  const double b = (dt_next - dt_prev) / (dt_prev * dt_next);
  const double c = dt_prev / (dt_next * (dt_prev + dt_next));
  std::vector<double> out(next.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * previous[i] + b * current[i] + c * next[i];
  return out;
}

ThirdBound third_bound_fit(const grid::JetField& jets, int margin) {
  if (jets.order() < 3) throw std::invalid_argument("third_bound_fit needs third derivatives (jet order 3)");
  const grid::Grid& g = jets.grid();
  const int n = g.rank();
  // pairs whose diagonal entries are both at rounding level give 0/0 and are skipped
  double diag_scale = 0.0;
  for (std::size_t p = 0; p < jets.size(); ++p)
    if (is_interior(g, p, margin))
      for (int i = 0; i < n; ++i) diag_scale = std::max(diag_scale, std::abs(jets.hess(p, i, i)));
  const double floor = 1e-10 * diag_scale;
  ThirdBound best;
  for (std::size_t p = 0; p < jets.size(); ++p) {
    if (!is_interior(g, p, margin)) continue;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        if (std::max(jets.hess(p, i, i), jets.hess(p, j, j)) < floor) {
          best.skipped += static_cast<std::size_t>(n);
          continue;
        }
        for (int a = 0; a < n; ++a) {
          const double r = symcalc::third_deriv_ratio(jets.third(p, i, j, a), jets.hess(p, i, i), jets.hess(p, j, j));
          if (r > best.value) {
            best.value = r;
            best.point = p;
            best.i = i;
            best.j = j;
            best.alpha = a;
          }
        }
      }
  }
  return best;
}

MonotonicityVerdict rank_monotonicity(std::span<const double> times, std::span<const int> min_rank) {
  if (times.size() != min_rank.size()) throw std::invalid_argument("rank_monotonicity: size mismatch");
  std::size_t first = 0;
  while (first < times.size() && !(times[first] > 0.0)) ++first;
  for (std::size_t k = first + 1; k < times.size(); ++k)
    if (min_rank[k] < min_rank[k - 1]) return {false, k};
  return {};
}

double min_interior_eigenvalue(const grid::JetField& jets, int margin) {
  if (jets.order() < 2) throw std::invalid_argument("min_interior_eigenvalue needs Hessians");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < jets.size(); ++p)
    if (is_interior(jets.grid(), p, margin)) best = std::min(best, eigenvalues(jets.hessian(p)).minCoeff());
  return best;
}

}  // namespace mclab::rankmon
