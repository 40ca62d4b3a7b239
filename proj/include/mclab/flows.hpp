#pragma once

// Explicit evolution engines: parabolic graph flows u_t = F(∇²u, ∇u, u, x, t) on grids
// and closed plane-curve flows X_t = −F(κ, X, n) n.

#include "mclab/gridfield.hpp"
#include "mclab/operator.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mclab::flows {

enum class Boundary { Periodic, Dirichlet };

struct DtPolicy {
  enum class Kind { Fixed, Cfl };
  Kind kind = Kind::Cfl;
  double dt = 0.0;      ///< Fixed
  double factor = 0.1;  ///< Cfl: dt = factor·h²/max λ(F^{αβ})
};

struct MonitorRecord {
  double time = 0.0;
  // graph flows
  int min_rank = -1;
  double lambda_min = 0.0;
  double phi_min = 0.0;
  double phi_max = 0.0;
  double max_abs = 0.0;
  double mean = 0.0;
  // curve flows
  double min_kappa = 0.0;
  double max_kappa = 0.0;
  double area = 0.0;
  double length = 0.0;
  int vertices = 0;
};

// ---------------------------------------------------------------------------
// Plane curves

using Point2 = Eigen::Vector2d;

/// Closed polygon, counterclockwise.
struct PlaneCurve {
  std::vector<Point2> vertices;

  static PlaneCurve ellipse(double a, double b, int m, Point2 center = Point2::Zero());
  static PlaneCurve circle(double r, int m, Point2 center = Point2::Zero()) { return ellipse(r, r, m, center); }

  [[nodiscard]] int size() const { return static_cast<int>(vertices.size()); }
  [[nodiscard]] double area() const;
  [[nodiscard]] double length() const;
  [[nodiscard]] double min_edge() const;
  /// Circumscribed-circle curvature through vertices i−1, i, i+1; positive where the curve turns left.
  [[nodiscard]] std::vector<double> curvature() const;
  /// Outward unit normals from the chord through the neighbours.
  [[nodiscard]] std::vector<Point2> normals() const;
  /// Unit tangents from the chord through the neighbours.
  [[nodiscard]] std::vector<Point2> tangents() const;
  [[nodiscard]] bool is_simple() const;
  /// Throws std::invalid_argument unless m ≥ 16, counterclockwise and simple.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Graph flows

struct GraphFlowProblem {
  opcheck::OperatorSpec op;
  grid::ScalarField initial;
  double t_end = 0.0;
  DtPolicy dt{};
  Boundary boundary = Boundary::Dirichlet;
  /// Dirichlet data g(x, t); unset holds the initial boundary values.
  std::function<double(const Vector&, double)> dirichlet{};
  /// Snapshot times in (0, t_end]; t = 0 and t_end are always recorded.
  std::vector<double> snapshot_times{};
  double blowup_bound = 1e12;
  double stability_c = 0.2;
  /// Steps between stability checks.
  int guard_interval = 25;
  unsigned threads = 0;
  bool monitor = true;
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<grid::ScalarField> fields;
  std::vector<PlaneCurve> curves;
  std::vector<MonitorRecord> monitors;
  std::size_t steps = 0;
  double min_kappa_over_steps = 0.0;  ///< curve flows: smallest curvature seen at any step
  std::string stopped;  ///< empty when t_end was reached, otherwise why integration ended early
  double stopped_at = 0.0;
};

/// u_t = F evaluated on the field (zero on held Dirichlet nodes).
[[nodiscard]] std::vector<double> graph_rhs(const GraphFlowProblem& problem, const std::vector<double>& u, double t);

/// dt·max over the interior of the largest eigenvalue of F^{αβ} divided by h_min²; the
/// scheme requires this to stay below stability_c.
[[nodiscard]] double stability_number(const GraphFlowProblem& problem, const std::vector<double>& u, double t,
                                      double dt);
/// Largest admissible dt under the policy factor (∞ when F does not depend on ∇²u).
[[nodiscard]] double cfl_step(const GraphFlowProblem& problem, const std::vector<double>& u, double t,
                              double factor);

/// One Heun (RK2) step from time t. Throws BlowUp, StabilityViolation (when check_stability).
[[nodiscard]] std::vector<double> step_graph(const GraphFlowProblem& problem, const std::vector<double>& u, double t,
                                             double dt, bool check_stability = true);

/// Integrates to t_end recording snapshots and monitor records. Step errors propagate with
/// the failing time.
[[nodiscard]] FlowTrace run_graph(const GraphFlowProblem& problem);

[[nodiscard]] MonitorRecord graph_monitor(const grid::ScalarField& field, double t);

struct SteadyOptions {
  Boundary boundary = Boundary::Dirichlet;
  std::size_t max_steps = 200000;
  double factor = 0.1;
  unsigned threads = 0;
};

/// Relaxes u_t = F until ‖F‖_∞ ≤ tol over the non-boundary nodes. Throws NonConvergence.
[[nodiscard]] grid::ScalarField steady_solve(const opcheck::OperatorSpec& op, const grid::ScalarField& initial,
                                             double tol, const SteadyOptions& options = {});

// ---------------------------------------------------------------------------
// Curve flows

using CurveSpeed = std::function<double(double kappa, const Point2& x, const Point2& normal, double t)>;

struct CurveFlowProblem {
  PlaneCurve initial;
  CurveSpeed speed;
  double t_end = 0.0;
  /// dt = factor·e_min²/max(|∂F/∂κ|, e_min·|F|) unless fixed_dt > 0.
  double factor = 0.25;
  double fixed_dt = 0.0;
  double stability_c = 0.25;
  /// Stop when the area falls below this fraction of the initial area.
  double collapse_fraction = 0.01;
  /// Fraction of the edge-length imbalance removed per step by tangential motion.
  double redistribution = 0.1;
  std::vector<double> snapshot_times{};
  /// Record every this many steps in addition to the snapshot times (0 = off).
  int record_every = 0;
};

/// Largest admissible step for the curve at the given factor.
[[nodiscard]] double curve_step_limit(const PlaneCurve& curve, const CurveSpeed& speed, double c, double t = 0.0);

/// Moves each vertex by −F n dt plus tangential redistribution. Throws SelfIntersection,
/// CollapseDetected (area below `area_floor`), StabilityViolation.
[[nodiscard]] PlaneCurve step_curve(const PlaneCurve& curve, const CurveSpeed& speed, double dt, double t,
                                    double area_floor = 0.0, double redistribution = 0.1,
                                    double stability_c = 0.25);

/// Integrates until t_end or the collapse floor (recorded in `stopped`).
[[nodiscard]] FlowTrace run_curve(const CurveFlowProblem& problem);

[[nodiscard]] MonitorRecord curve_monitor(const PlaneCurve& curve, double t);

/// Curve speed from an expression: r_11 is κ, x_1, x_2 the position, p_1, p_2 the normal, t time.
[[nodiscard]] CurveSpeed curve_speed(const std::string& expression);

}  // namespace mclab::flows
