#include "mclab/flows.hpp"

#include "mclab/error.hpp"
#include "mclab/parallel.hpp"
#include "mclab/rankmon.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mclab::flows {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_boundary_kind(const GraphFlowProblem& problem) {
  const grid::Grid& g = problem.initial.grid();
  if (problem.boundary == Boundary::Periodic &&
      std::any_of(g.periodic.begin(), g.periodic.end(), [](bool p) { return !p; }))
    throw std::invalid_argument("periodic flow on a grid with non-periodic axes");
  if (problem.op.n() != g.rank()) throw std::invalid_argument("operator dimension differs from grid rank");
}

bool held(const grid::Grid& g, std::size_t p) { return g.boundary_distance(p) == 0; }

double h_min(const grid::Grid& g) { return *std::min_element(g.spacing.begin(), g.spacing.end()); }

grid::JetField jets_of(const grid::Grid& g, const std::vector<double>& u, double t) {
  for (double v : u)
    if (!std::isfinite(v)) throw BlowUp("non-finite value in the flow state", t);
  return grid::jet(grid::ScalarField(g, u), 2);
}

void fill_point(opcheck::Point& pt, const grid::JetField& j, const grid::Grid& g, const std::vector<double>& u,
                std::size_t p, double t) {
  const int n = g.rank();
  for (int a = 0; a < n; ++a) {
    pt.p(a) = j.grad(p, a);
    for (int b = 0; b < n; ++b) pt.r(a, b) = j.hess(p, a, b);
  }
  pt.x = g.point(p);
  pt.u = u[p];
  pt.t = t;
}

void apply_dirichlet(const GraphFlowProblem& problem, std::vector<double>& u, double t) {
  if (problem.boundary != Boundary::Dirichlet || !problem.dirichlet) return;
  const grid::Grid& g = problem.initial.grid();
  for (std::size_t p = 0; p < u.size(); ++p)
    if (held(g, p)) u[p] = problem.dirichlet(g.point(p), t);
}

void check_bound(const std::vector<double>& u, double bound, double t) {
  for (double v : u)
    if (!std::isfinite(v) || std::abs(v) > bound) throw BlowUp("max |u| exceeded " + std::to_string(bound), t);
}

/// Largest eigenvalue of F^{αβ} over the evolving nodes.
double max_coefficient(const GraphFlowProblem& problem, const std::vector<double>& u, double t) {
  const grid::Grid& g = problem.initial.grid();
  const grid::JetField j = jets_of(g, u, t);
  const int n = g.rank();
  std::vector<double> top(u.size(), 0.0);
  parallel_for(u.size(), problem.threads, [&](std::size_t begin, std::size_t end) {
    opcheck::Point pt = opcheck::Point::zero(n);
    for (std::size_t p = begin; p < end; ++p) {
      if (problem.boundary == Boundary::Dirichlet && held(g, p)) continue;
      fill_point(pt, j, g, u, p, t);
      const Matrix c = problem.op.coefficients(pt);
      top[p] = n == 1 ? c(0, 0) : Eigen::SelfAdjointEigenSolver<Matrix>(c, Eigen::EigenvaluesOnly).eigenvalues()(n - 1);
    }
  });
  return top.empty() ? 0.0 : std::max(0.0, *std::max_element(top.begin(), top.end()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph flows

std::vector<double> graph_rhs(const GraphFlowProblem& problem, const std::vector<double>& u, double t) {
  const grid::Grid& g = problem.initial.grid();
  const grid::JetField j = jets_of(g, u, t);
  const int n = g.rank();
  std::vector<double> out(u.size(), 0.0);
  parallel_for(u.size(), problem.threads, [&](std::size_t begin, std::size_t end) {
    opcheck::Point pt = opcheck::Point::zero(n);
    for (std::size_t p = begin; p < end; ++p) {
      if (problem.boundary == Boundary::Dirichlet && held(g, p)) continue;
      fill_point(pt, j, g, u, p, t);
      out[p] = problem.op.value(pt);
    }
  });
  return out;
}

double stability_number(const GraphFlowProblem& problem, const std::vector<double>& u, double t, double dt) {
  const double h = h_min(problem.initial.grid());
  return dt * max_coefficient(problem, u, t) / (h * h);
}

double cfl_step(const GraphFlowProblem& problem, const std::vector<double>& u, double t, double factor) {
  const double lam = max_coefficient(problem, u, t);
  if (!(lam > 0.0)) return kInf;
  const double h = h_min(problem.initial.grid());
  return factor * h * h / lam;
}

std::vector<double> step_graph(const GraphFlowProblem& problem, const std::vector<double>& u, double t, double dt,
                               bool check_stability) {
  check_boundary_kind(problem);
  if (!(dt >= 0.0)) throw std::invalid_argument("step_graph: dt must be non-negative");
  if (dt == 0.0) return u;
  if (check_stability) {
    const double number = stability_number(problem, u, t, dt);
    if (number > problem.stability_c)
      throw StabilityViolation("dt*max(lambda)/h^2 = " + std::to_string(number) + " exceeds " +
                                   std::to_string(problem.stability_c),
                               t);
  }
  const std::vector<double> k1 = graph_rhs(problem, u, t);
  std::vector<double> stage(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) stage[p] = u[p] + dt * k1[p];
  apply_dirichlet(problem, stage, t + dt);
  check_bound(stage, problem.blowup_bound, t + dt);
  const std::vector<double> k2 = graph_rhs(problem, stage, t + dt);
  std::vector<double> out(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) out[p] = u[p] + 0.5 * dt * (k1[p] + k2[p]);
  apply_dirichlet(problem, out, t + dt);
  check_bound(out, problem.blowup_bound, t + dt);
  return out;
}

MonitorRecord graph_monitor(const grid::ScalarField& field, double t) {
  MonitorRecord rec;
  rec.time = t;
  const std::vector<double>& v = field.values();
  rec.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double x : v) rec.max_abs = std::max(rec.max_abs, std::abs(x));
  const grid::JetField j = grid::jet(field, 2);
  const rankmon::RankReport rank = rankmon::rank_field(j);
  rec.min_rank = rank.min_rank;
  rec.lambda_min = rankmon::min_interior_eigenvalue(j);
  rec.phi_min = rec.phi_max = 0.0;
  if (rank.min_rank < field.grid().rank()) {
    try {
      const grid::ScalarField phi = rankmon::phi_field(j, rank.min_rank);
      rec.phi_min = kInf;
      rec.phi_max = -kInf;
      for (std::size_t p = 0; p < phi.size(); ++p) {
        if (!rank.interior[p]) continue;
        rec.phi_min = std::min(rec.phi_min, phi[p]);
        rec.phi_max = std::max(rec.phi_max, phi[p]);
      }
    } catch (const DegenerateQuotient&) {
      rec.phi_min = rec.phi_max = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rec;
}

FlowTrace run_graph(const GraphFlowProblem& problem) {
  check_boundary_kind(problem);
  if (!(problem.t_end >= 0.0)) throw std::invalid_argument("run_graph: t_end must be non-negative");
  if (problem.dt.kind == DtPolicy::Kind::Fixed && !(problem.dt.dt > 0.0))
    throw std::invalid_argument("run_graph: fixed dt must be positive");
  std::vector<double> marks;
  for (double s : problem.snapshot_times)
    if (s > 0.0 && s < problem.t_end) marks.push_back(s);
  marks.push_back(problem.t_end);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  FlowTrace trace;
  const grid::Grid& g = problem.initial.grid();
  std::vector<double> u = problem.initial.values();
  apply_dirichlet(problem, u, 0.0);
  const auto record = [&](double t) {
    grid::ScalarField f(g, u);
    if (problem.monitor) trace.monitors.push_back(graph_monitor(f, t));
    trace.times.push_back(t);
    trace.fields.push_back(std::move(f));
  };
  record(0.0);

  double t = 0.0;
  double dt = problem.dt.kind == DtPolicy::Kind::Fixed ? problem.dt.dt : 0.0;
  for (double mark : marks) {
    if (problem.t_end == 0.0) break;
    while (t < mark) {
      const bool guard = trace.steps % static_cast<std::size_t>(std::max(1, problem.guard_interval)) == 0;
      if (problem.dt.kind == DtPolicy::Kind::Cfl && guard) {
        dt = cfl_step(problem, u, t, problem.dt.factor);
        if (!std::isfinite(dt)) dt = problem.t_end;
      }
      double step = std::min(dt, mark - t);
      if (mark - (t + step) < 1e-12 * std::max(1.0, problem.t_end)) step = mark - t;
      u = step_graph(problem, u, t, step, guard);
      t = (step == mark - t) ? mark : t + step;
      ++trace.steps;
    }
    record(mark);
  }
  return trace;
}

grid::ScalarField steady_solve(const opcheck::OperatorSpec& op, const grid::ScalarField& initial, double tol,
                               const SteadyOptions& options) {
  GraphFlowProblem problem{.op = op, .initial = initial};
  problem.boundary = options.boundary;
  problem.threads = options.threads;
  problem.monitor = false;
  check_boundary_kind(problem);
  std::vector<double> u = initial.values();
  double t = 0.0;
  double dt = 0.0;
  for (std::size_t step = 0;; ++step) {
    const std::vector<double> f = graph_rhs(problem, u, t);
    double residual = 0.0;
    for (double v : f) residual = std::max(residual, std::abs(v));
    if (residual <= tol) return grid::ScalarField(initial.grid(), std::move(u));
    if (step >= options.max_steps)
      throw NonConvergence("residual " + std::to_string(residual) + " after " + std::to_string(step) + " steps", t);
    if (step % 25 == 0) {
      dt = cfl_step(problem, u, t, options.factor);
      if (!std::isfinite(dt)) throw NonConvergence("operator does not depend on the Hessian", t);
    }
    u = step_graph(problem, u, t, dt, false);
    t += dt;
  }
}

// ---------------------------------------------------------------------------
// Plane curves

namespace {

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

int orientation(const Point2& a, const Point2& b, const Point2& c) {
  const double v = cross(b - a, c - a);
  const double scale = (b - a).norm() * (c - a).norm();
  if (std::abs(v) <= 1e-14 * scale) return 0;
  return v > 0 ? 1 : -1;
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
         p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const int o1 = orientation(a, b, c), o2 = orientation(a, b, d), o3 = orientation(c, d, a), o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(a, b, c)) || (o2 == 0 && on_segment(a, b, d)) || (o3 == 0 && on_segment(c, d, a)) ||
         (o4 == 0 && on_segment(c, d, b));
}

}  // namespace

PlaneCurve PlaneCurve::ellipse(double a, double b, int m, Point2 center) {
  if (!(a > 0.0) || !(b > 0.0) || m < 3) throw std::invalid_argument("ellipse: bad axes or vertex count");
  PlaneCurve c;
  for (int k = 0; k < m; ++k) {
    const double th = 2.0 * std::numbers::pi * k / m;
    c.vertices.push_back(center + Point2(a * std::cos(th), b * std::sin(th)));
  }
  return c;
}

double PlaneCurve::area() const {
  double s = 0.0;
  const int m = size();
  for (int i = 0; i < m; ++i) s += cross(vertices[static_cast<std::size_t>(i)], vertices[static_cast<std::size_t>((i + 1) % m)]);
  return 0.5 * s;
}

double PlaneCurve::length() const {
  double s = 0.0;
  const int m = size();
  for (int i = 0; i < m; ++i)
    s += (vertices[static_cast<std::size_t>((i + 1) % m)] - vertices[static_cast<std::size_t>(i)]).norm();
  return s;
}

double PlaneCurve::min_edge() const {
  double s = kInf;
  const int m = size();
  for (int i = 0; i < m; ++i)
    s = std::min(s, (vertices[static_cast<std::size_t>((i + 1) % m)] - vertices[static_cast<std::size_t>(i)]).norm());
  return s;
}

std::vector<double> PlaneCurve::curvature() const {
  const int m = size();
  std::vector<double> k(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Point2& a = vertices[static_cast<std::size_t>((i + m - 1) % m)];
    const Point2& b = vertices[static_cast<std::size_t>(i)];
    const Point2& c = vertices[static_cast<std::size_t>((i + 1) % m)];
    k[static_cast<std::size_t>(i)] = 2.0 * cross(b - a, c - b) / ((b - a).norm() * (c - b).norm() * (c - a).norm());
  }
  return k;
}

std::vector<Point2> PlaneCurve::tangents() const {
  const int m = size();
  std::vector<Point2> t(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    t[static_cast<std::size_t>(i)] =
        (vertices[static_cast<std::size_t>((i + 1) % m)] - vertices[static_cast<std::size_t>((i + m - 1) % m)]).normalized();
  return t;
}

std::vector<Point2> PlaneCurve::normals() const {
  std::vector<Point2> n = tangents();
  for (Point2& v : n) v = Point2(v.y(), -v.x());
  return n;
}

bool PlaneCurve::is_simple() const {
  const int m = size();
  struct Seg {
    double lo, hi;
    int i;
  };
  std::vector<Seg> segs;
  for (int i = 0; i < m; ++i) {
    const Point2& a = vertices[static_cast<std::size_t>(i)];
    const Point2& b = vertices[static_cast<std::size_t>((i + 1) % m)];
    segs.push_back({std::min(a.x(), b.x()), std::max(a.x(), b.x()), i});
  }
  std::sort(segs.begin(), segs.end(), [](const Seg& l, const Seg& r) { return l.lo < r.lo || (l.lo == r.lo && l.i < r.i); });
  for (std::size_t s = 0; s < segs.size(); ++s) {
    for (std::size_t q = s + 1; q < segs.size() && segs[q].lo <= segs[s].hi; ++q) {
      const int i = segs[s].i, j = segs[q].i;
      if ((i + 1) % m == j || (j + 1) % m == i) continue;  // neighbours share a vertex
      if (segments_intersect(vertices[static_cast<std::size_t>(i)], vertices[static_cast<std::size_t>((i + 1) % m)],
                             vertices[static_cast<std::size_t>(j)], vertices[static_cast<std::size_t>((j + 1) % m)]))
        return false;
    }
  }
  return true;
}

void PlaneCurve::validate() const {
  if (size() < 16) throw std::invalid_argument("plane curve needs at least 16 vertices");
  for (const Point2& v : vertices)
    if (!v.allFinite()) throw std::invalid_argument("plane curve has non-finite vertices");
  if (!(area() > 0.0)) throw std::invalid_argument("plane curve must be counterclockwise");
  if (!is_simple()) throw std::invalid_argument("plane curve is self-intersecting");
}

double curve_step_limit(const PlaneCurve& curve, const CurveSpeed& speed, double c, double t) {
  const std::vector<double> k = curve.curvature();
  const std::vector<Point2> n = curve.normals();
  const double e = curve.min_edge();
  double slope = 0.0, top = 0.0;
  for (int i = 0; i < curve.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Point2& x = curve.vertices[ui];
    const double dk = 1e-6 * (1.0 + std::abs(k[ui]));
    slope = std::max(slope, std::abs(speed(k[ui] + dk, x, n[ui], t) - speed(k[ui] - dk, x, n[ui], t)) / (2 * dk));
    top = std::max(top, std::abs(speed(k[ui], x, n[ui], t)));
  }
  const double denom = std::max(slope, e * top);
  return denom > 0.0 ? c * e * e / denom : kInf;
}

PlaneCurve step_curve(const PlaneCurve& curve, const CurveSpeed& speed, double dt, double t, double area_floor,
                      double redistribution, double stability_c) {
  if (!(dt >= 0.0)) throw std::invalid_argument("step_curve: dt must be non-negative");
  if (dt == 0.0) return curve;
  const double limit = curve_step_limit(curve, speed, stability_c, t);
  if (dt > limit * (1.0 + 1e-12))
    throw StabilityViolation("curve step " + std::to_string(dt) + " exceeds limit " + std::to_string(limit), t);
  const int m = curve.size();
  const std::vector<double> k = curve.curvature();
  const std::vector<Point2> n = curve.normals();
  const std::vector<Point2> tan = curve.tangents();
  PlaneCurve out = curve;
  for (int i = 0; i < m; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Point2& prev = curve.vertices[static_cast<std::size_t>((i + m - 1) % m)];
    const Point2& next = curve.vertices[static_cast<std::size_t>((i + 1) % m)];
    const Point2& x = curve.vertices[ui];
    // drift towards the arclength midpoint of the neighbours
    const double imbalance = 0.5 * ((next - x).norm() - (x - prev).norm());
    out.vertices[ui] = x - speed(k[ui], x, n[ui], t) * dt * n[ui] + redistribution * imbalance * tan[ui];
  }
  for (const Point2& v : out.vertices)
    if (!v.allFinite()) throw BlowUp("non-finite curve vertex", t + dt);
  const double a = out.area();
  if (a < area_floor) throw CollapseDetected("enclosed area " + std::to_string(a) + " below floor", t + dt);
  if (!(a > 0.0) || !out.is_simple()) throw SelfIntersection("curve is no longer simple", t + dt);
  return out;
}

MonitorRecord curve_monitor(const PlaneCurve& curve, double t) {
  MonitorRecord rec;
  rec.time = t;
  const std::vector<double> k = curve.curvature();
  rec.min_kappa = *std::min_element(k.begin(), k.end());
  rec.max_kappa = *std::max_element(k.begin(), k.end());
  rec.area = curve.area();
  rec.length = curve.length();
  rec.vertices = curve.size();
  return rec;
}

FlowTrace run_curve(const CurveFlowProblem& problem) {
  problem.initial.validate();
  if (!problem.speed) throw std::invalid_argument("run_curve: no speed function");
  if (!(problem.t_end >= 0.0)) throw std::invalid_argument("run_curve: t_end must be non-negative");
  std::vector<double> marks;
  for (double s : problem.snapshot_times)
    if (s > 0.0 && s < problem.t_end) marks.push_back(s);
  marks.push_back(problem.t_end);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  FlowTrace trace;
  PlaneCurve c = problem.initial;
  const double floor = problem.collapse_fraction * c.area();
  const auto record = [&](double t) {
    trace.times.push_back(t);
    trace.monitors.push_back(curve_monitor(c, t));
    trace.curves.push_back(c);
  };
  record(0.0);
  trace.min_kappa_over_steps = trace.monitors.front().min_kappa;
  double t = 0.0;
  for (double mark : marks) {
    if (problem.t_end == 0.0) break;
    while (t < mark) {
      const double dt =
          problem.fixed_dt > 0.0 ? problem.fixed_dt : curve_step_limit(c, problem.speed, problem.factor, t);
      double step = std::min(dt, mark - t);
      if (mark - (t + step) < 1e-12 * std::max(1.0, problem.t_end)) step = mark - t;
      try {
        c = step_curve(c, problem.speed, step, t, floor, problem.redistribution, problem.stability_c);
      } catch (const CollapseDetected& e) {
        trace.stopped = "collapse";
        trace.stopped_at = t;
        if (trace.times.back() < t) record(t);
        return trace;
      }
      t = (step == mark - t) ? mark : t + step;
      ++trace.steps;
      const std::vector<double> k = c.curvature();
      trace.min_kappa_over_steps = std::min(trace.min_kappa_over_steps, *std::min_element(k.begin(), k.end()));
      if (problem.record_every > 0 && trace.steps % static_cast<std::size_t>(problem.record_every) == 0 && t < mark)
        record(t);
    }
    record(mark);
  }
  return trace;
}

CurveSpeed curve_speed(const std::string& expression) {
  const expr::Expression e = expr::Expression::parse(expression);
  const expr::Usage use = e.usage();
  if (use.max_r > 1 || use.max_x > 2 || use.max_p > 2 || use.max_f > 0)
    throw std::invalid_argument("curve speed may use r_11 (curvature), x_1, x_2, p_1, p_2, u and t only");
  return [e](double kappa, const Point2& x, const Point2& normal, double t) {
    const double r[1] = {kappa};
    expr::Env<double> env;
    env.n = 1;
    env.r = r;
    env.x = std::span<const double>(x.data(), 2);
    env.p = std::span<const double>(normal.data(), 2);
    env.u = 0.0;
    env.t = t;
    return e.evaluate(env);
  };
}

}  // namespace mclab::flows
