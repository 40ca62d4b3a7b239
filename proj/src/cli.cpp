#include "mclab/cli.hpp"

#include "mclab/error.hpp"
#include "mclab/expr.hpp"
#include "mclab/lemmas.hpp"
#include "mclab/opcheck.hpp"
#include "mclab/rankmon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace mclab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Configuration problems; reported with exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Worst outcome wins: runtime > finding > inconclusive > pass.
int combine(int a, int b) {
  auto rank = [](int c) {
    switch (c) {
      case kRuntime: return 3;
      case kFinding: return 2;
      case kInconclusive: return 1;
      default: return 0;
    }
  };
  return rank(b) > rank(a) ? b : a;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty matrix (array of rows)");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) throw ConfigError("matrix must be square");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << text;
  if (!out) throw std::ios_base::failure("error writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string numbered(const std::string& stem, std::size_t k, const std::string& ext) {
  std::ostringstream s;
  s << stem << '_' << std::setw(4) << std::setfill('0') << k << ext;
  return s.str();
}

/// Expression in x (and optionally t) evaluated per point.
class PointExpression {
 public:
  PointExpression(const std::string& text, int dim, bool allow_t) : e_(expr::Expression::parse(text)), dim_(dim) {
    const expr::Usage use = e_.usage();
    if (use.r || use.p || use.u || use.max_f > 0 || (use.t && !allow_t) || use.max_x > dim)
      throw ConfigError("expression '" + text + "' may only use x_1.." + std::to_string(dim) +
                        (allow_t ? " and t" : ""));
  }
  double operator()(const Vector& x, double t = 0.0) const {
    expr::Env<double> env;
    env.n = dim_;
    env.x = std::span<const double>(x.data(), static_cast<std::size_t>(x.size()));
    env.t = t;
    return e_.evaluate(env);
  }

 private:
  expr::Expression e_;
  int dim_;
};

struct Context {
  const RunConfig& config;
  json scenario;
  fs::path base;
  std::uint64_t seed = 0;
  std::map<std::string, double> tol;
  std::ostream& log;
  std::ostream& err;

  json header() const {
    json h;
    h["tool"] = "mclab";
    h["version"] = MCLAB_VERSION;
    h["command"] = config.subcommand;
    h["config_hash"] = config_hash(scenario);
    h["seed"] = seed;
    h["tolerances"] = tol;
    return h;
  }
};

/// Starts from `defaults`, applies the scenario's "tolerances" then the command line.
std::map<std::string, double> merge_tolerances(std::map<std::string, double> defaults, const json& scenario,
                                               const std::map<std::string, double>& overrides) {
  auto apply = [&](const std::string& key, double value) {
    if (!defaults.contains(key)) throw ConfigError("unknown tolerance '" + key + "'");
    if (!std::isfinite(value) || value < 0.0) throw ConfigError("tolerance '" + key + "' must be a finite non-negative number");
    defaults[key] = value;
  };
  if (scenario.contains("tolerances"))
    for (const auto& [k, v] : scenario.at("tolerances").items()) apply(k, v.get<double>());
  for (const auto& [k, v] : overrides) apply(k, v);
  return defaults;
}

std::vector<std::string> string_list(const json& scenario, const std::string& key, std::vector<std::string> fallback,
                                     const std::vector<std::string>& allowed) {
  std::vector<std::string> out = std::move(fallback);
  if (scenario.contains(key)) out = scenario.at(key).get<std::vector<std::string>>();
  for (const std::string& s : out)
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end())
      throw ConfigError("unknown entry '" + s + "' in \"" + key + "\"");
  return out;
}

bool wants(const std::vector<std::string>& list, const std::string& s) {
  return std::find(list.begin(), list.end(), s) != list.end();
}

// ---------------------------------------------------------------------------
// check-operator

json witness_json(const opcheck::OperatorSpec& op, const opcheck::ConditionReport& r) {
  const opcheck::Witness& w = r.witness;
  json j;
  j["kind"] = w.kind;
  j["sample"] = w.sample;
  j["point"] = {{"r", to_json(w.point.r)}, {"p", to_json(w.point.p)}, {"u", w.point.u},
                {"x", to_json(w.point.x)}, {"t", w.point.t}};
  j["Q"] = to_json(w.Q);
  j["B"] = to_json(w.B);
  j["A_inverse"] = to_json(w.ainv);
  j["direction"] = {{"X", to_json(w.direction.X)}, {"Y", w.direction.Y}, {"Z", to_json(w.direction.Z)}};
  if (!w.kind.empty()) {
    try {
      j["value"] = opcheck::reevaluate(op, r);
    } catch (const std::exception& e) {
      j["value"] = nullptr;
      j["reevaluation_error"] = e.what();
    }
  }
  return j;
}

int verdict_code(opcheck::Verdict v) {
  switch (v) {
    case opcheck::Verdict::Pass: return kPass;
    case opcheck::Verdict::Fail: return kFinding;
    default: return kInconclusive;
  }
}

int cmd_check_operator(Context& cx) {
  const json& s = cx.scenario;
  if (!s.contains("operator")) throw ConfigError("check-operator needs \"operator\"");
  const opcheck::OperatorSpec op = make_operator(s.at("operator"), s.value("n", 0));
  cx.tol = merge_tolerances({{"pass", 1e-9}, {"fail", 1e-6}, {"ellipticity_floor", 1e-8}}, s, cx.config.tolerances);
  const auto checks = string_list(s, "checks", {"ellipticity", "wwcond"}, {"ellipticity", "condition_c", "wwcond"});
  if (checks.empty()) throw ConfigError("\"checks\" is empty");

  opcheck::SamplePlan plan;
  plan.samples = s.value("samples", plan.samples);
  plan.seed = cx.seed;
  plan.threads = s.value("threads", 0u);
  if (s.contains("sampling")) {
    const json& p = s.at("sampling");
    plan.eig_lo = p.value("eig_lo", plan.eig_lo);
    plan.eig_hi = p.value("eig_hi", plan.eig_hi);
    plan.p_sigma = p.value("p_sigma", plan.p_sigma);
    plan.u_sigma = p.value("u_sigma", plan.u_sigma);
    plan.x_sigma = p.value("x_sigma", plan.x_sigma);
    plan.t = p.value("t", plan.t);
  }
  const opcheck::Tolerances tol{cx.tol.at("ellipticity_floor"), cx.tol.at("pass"), cx.tol.at("fail")};

  json report = cx.header();
  report["operator"] = {{"name", op.name()}, {"n", op.n()}};
  report["checks"] = json::array();
  int code = kPass;
  for (const std::string& c : checks) {
    opcheck::ConditionReport r = c == "ellipticity"   ? opcheck::check_ellipticity(op, plan, tol)
                                 : c == "condition_c" ? opcheck::check_condition_c(op, plan, tol)
                                                      : opcheck::check_wwcond(op, plan, tol);
    json j;
    j["check"] = c;
    j["condition"] = r.condition;
    j["verdict"] = opcheck::to_string(r.verdict);
    j["samples"] = r.samples;
    j["inconclusive_samples"] = r.inconclusive;
    j["worst"] = r.worst;
    j["worst_scaled"] = r.worst_scaled;
    j["scale"] = r.scale;
    j["note"] = r.note;
    j["witness"] = witness_json(op, r);
    report["checks"].push_back(j);
    code = combine(code, verdict_code(r.verdict));
    cx.log << c << ": " << opcheck::to_string(r.verdict) << " (worst " << fmt(r.worst_scaled) << ")\n";
  }
  report["exit_code"] = code;
  write_json(cx.config.out / "report.json", report);
  return code;
}

// ---------------------------------------------------------------------------
// analyze-field

int cmd_analyze_field(Context& cx) {
  const json& s = cx.scenario;
  cx.tol = merge_tolerances({{"phi", 1e-10}, {"angle", 1e-6}, {"convexity", 1e-6}, {"residual", 0.0}}, s,
                            cx.config.tolerances);
  if (!s.contains("field")) throw ConfigError("analyze-field needs \"field\"");
  std::optional<grid::Grid> g;
  if (s.contains("grid")) g = make_grid(s.at("grid"));
  const grid::ScalarField u = make_field(s.at("field"), g, cx.base);
  const grid::Grid& gr = u.grid();
  const int n = gr.rank();
  const int margin = s.value("margin", rankmon::kDefaultMargin);
  const auto monitors = string_list(s, "monitors", {"rank", "phi", "parallelism", "convexity"},
                                    {"rank", "phi", "parallelism", "diffineq", "convexity", "third_bound"});
  if (monitors.empty()) throw ConfigError("\"monitors\" is empty");
  const bool third = wants(monitors, "third_bound");
  const grid::JetField jets = grid::jet(u, third ? 3 : 2);
  const rankmon::RankReport rank = rankmon::rank_field(jets, {}, margin);
  const int l = s.value("l", rank.min_rank);
  const double eps = s.value("epsilon", 0.0);
  const double scale = std::max(1.0, rank.global_scale);

  json report = cx.header();
  report["grid"] = {{"dims", gr.dims}, {"spacing", gr.spacing}, {"origin", gr.origin}, {"periodic", gr.periodic}};
  report["monitors"] = json::object();
  int code = kPass;
  auto verdict = [&](const std::string& name, json& j, int c) {
    j["verdict"] = c == kPass ? "pass" : c == kFinding ? "finding" : "inconclusive";
    report["monitors"][name] = j;
    code = combine(code, c);
    cx.log << name << ": " << j["verdict"].get<std::string>() << "\n";
  };

  std::vector<double> rank_values(rank.rank.begin(), rank.rank.end());
  grid::write_binary(cx.config.out / "rank.mclb", grid::ScalarField(gr, rank_values));

  if (wants(monitors, "rank")) {
    json j{{"min_rank", rank.min_rank},
           {"max_rank", rank.max_rank},
           {"constant_rank", rank.constant_rank()},
           {"histogram", rank.histogram},
           {"attainment_points", rank.attainment.size()},
           {"global_threshold", rank.global_threshold},
           {"margin", margin}};
    if (!rank.attainment.empty()) j["first_attainment"] = to_json(gr.point(rank.attainment.front()));
    verdict("rank", j, rank.constant_rank() ? kPass : kFinding);
  }

  if (wants(monitors, "phi")) {
    json j{{"l", l}, {"epsilon", eps}};
    try {
      const grid::ScalarField phi = rankmon::phi_field(jets, l, {eps});
      grid::write_binary(cx.config.out / "phi.mclb", phi);
      double lo = kInf, hi = -kInf;
      for (std::size_t p = 0; p < phi.size(); ++p) {
        if (!rank.interior[p]) continue;
        lo = std::min(lo, phi[p]);
        hi = std::max(hi, phi[p]);
      }
      j["min"] = lo;
      j["max"] = hi;
      j["vacuous"] = l >= n;
      verdict("phi", j, hi <= cx.tol.at("phi") * scale ? kPass : kFinding);
    } catch (const DegenerateQuotient& e) {
      j["error"] = e.what();
      verdict("phi", j, kInconclusive);
    }
  }

  if (wants(monitors, "parallelism")) {
    json j{{"radius", s.value("radius", 0.25)}};
    try {
      const rankmon::Parallelism par = rankmon::null_parallelism(rank, gr, j["radius"].get<double>());
      j["angle"] = par.angle;
      j["points"] = par.points;
      j["reference"] = to_json(gr.point(par.reference));
      j["rank_constant"] = par.rank_constant;
      j["obstruction"] = par.obstruction;
      const int c = !par.rank_constant ? kFinding : par.angle <= cx.tol.at("angle") ? kPass : kFinding;
      verdict("parallelism", j, c);
    } catch (const EmptyRegion& e) {
      // full rank leaves no null directions to compare
      j["note"] = e.what();
      verdict("parallelism", j, rank.min_rank == n ? kPass : kInconclusive);
    }
  }

  if (wants(monitors, "diffineq")) {
    if (!s.contains("operator")) throw ConfigError("the diffineq monitor needs \"operator\"");
    const opcheck::OperatorSpec op = make_operator(s.at("operator"), n);
    json j{{"l", l}, {"epsilon", eps}, {"operator", op.name()}};
    try {
      rankmon::FitOptions fo;
      fo.l = l;
      fo.epsilon = eps;
      fo.margin = margin;
      const rankmon::InequalityFit fit = rankmon::diffineq_fit(op, u, jets, fo);
      j["c1"] = fit.c1;
      j["c2"] = fit.c2;
      j["residual"] = fit.residual;
      j["tested"] = fit.tested;
      j["exact_null"] = fit.exact_null;
      j["max_lhs"] = fit.max_lhs;
      j["binding_point"] = to_json(gr.point(fit.binding_point));
      const bool ok = std::isfinite(fit.c1) && std::isfinite(fit.c2) && fit.residual <= cx.tol.at("residual");
      verdict("diffineq", j, ok ? kPass : kFinding);
    } catch (const NoTestablePoints& e) {
      j["note"] = e.what();
      j["vacuous"] = true;
      verdict("diffineq", j, kPass);
    } catch (const DegenerateQuotient& e) {
      j["error"] = e.what();
      verdict("diffineq", j, kInconclusive);
    }
  }

  if (wants(monitors, "convexity")) {
    const double lmin = rankmon::min_interior_eigenvalue(jets, margin);
    json j{{"lambda_min", lmin}, {"scale", scale}};
    verdict("convexity", j, lmin >= -cx.tol.at("convexity") * scale ? kPass : kFinding);
  }

  if (third) {
    const rankmon::ThirdBound tb = rankmon::third_bound_fit(jets, margin);
    json j{{"value", tb.value},
           {"point", to_json(gr.point(tb.point))},
           {"indices", {tb.i + 1, tb.j + 1, tb.alpha + 1}},
           {"skipped", tb.skipped}};
    verdict("third_bound", j, std::isfinite(tb.value) ? kPass : kFinding);
  }

  report["exit_code"] = code;
  write_json(cx.config.out / "report.json", report);
  return code;
}

// ---------------------------------------------------------------------------
// flow

std::vector<double> time_list(const json& s, const std::string& key) {
  return s.contains(key) ? s.at(key).get<std::vector<double>>() : std::vector<double>{};
}

json flow_error_json(const FlowError& e) {
  std::string type = "FlowError";
  if (dynamic_cast<const BlowUp*>(&e)) type = "BlowUp";
  else if (dynamic_cast<const StabilityViolation*>(&e)) type = "StabilityViolation";
  else if (dynamic_cast<const NonConvergence*>(&e)) type = "NonConvergence";
  else if (dynamic_cast<const SelfIntersection*>(&e)) type = "SelfIntersection";
  else if (dynamic_cast<const CollapseDetected*>(&e)) type = "CollapseDetected";
  return {{"type", type}, {"message", e.what()}, {"time", e.time()}};
}

int graph_flow(Context& cx, json& report) {
  const json& s = cx.scenario;
  cx.tol = merge_tolerances({{"convexity", 1e-6}}, s, cx.config.tolerances);
  for (const char* key : {"operator", "grid", "initial", "t_end"})
    if (!s.contains(key)) throw ConfigError(std::string("graph flow needs \"") + key + "\"");
  const grid::Grid g = make_grid(s.at("grid"));
  flows::GraphFlowProblem pb{.op = make_operator(s.at("operator"), g.rank()),
                             .initial = make_field(s.at("initial"), g, cx.base)};
  pb.t_end = s.at("t_end").get<double>();
  pb.snapshot_times = time_list(s, "snapshots");
  pb.threads = s.value("threads", 0u);
  const std::string boundary = s.value("boundary", std::string("dirichlet"));
  if (boundary == "periodic") {
    pb.boundary = flows::Boundary::Periodic;
  } else if (boundary != "dirichlet") {
    throw ConfigError("boundary must be \"dirichlet\" or \"periodic\"");
  }
  if (s.contains("boundary_data")) {
    const PointExpression bd(s.at("boundary_data").get<std::string>(), g.rank(), true);
    pb.dirichlet = [bd](const Vector& x, double t) { return bd(x, t); };
  }
  if (s.contains("dt")) {
    const json& d = s.at("dt");
    const std::string policy = d.value("policy", std::string("cfl"));
    if (policy == "fixed") {
      pb.dt = {flows::DtPolicy::Kind::Fixed, d.at("value").get<double>()};
    } else if (policy == "cfl") {
      pb.dt.factor = d.value("factor", pb.dt.factor);
    } else {
      throw ConfigError("dt policy must be \"cfl\" or \"fixed\"");
    }
  }
  const auto monitors = string_list(s, "monitors", {"convexity", "rank_monotonicity"}, {"convexity", "rank_monotonicity"});
  const rankmon::RankReport initial_rank = rankmon::rank_field(grid::jet(pb.initial, 2));
  const double scale = std::max(1.0, initial_rank.global_scale);

  flows::FlowTrace tr;
  try {
    tr = flows::run_graph(pb);
  } catch (const FlowError& e) {
    report["error"] = flow_error_json(e);
    cx.err << "mclab: " << e.what() << "\n";
    return kRuntime;
  }

  std::ostringstream csv;
  csv << "time,min_rank,lambda_min,phi_min,phi_max,max_abs,mean\n";
  for (const flows::MonitorRecord& m : tr.monitors)
    csv << fmt(m.time) << ',' << m.min_rank << ',' << fmt(m.lambda_min) << ',' << fmt(m.phi_min) << ','
        << fmt(m.phi_max) << ',' << fmt(m.max_abs) << ',' << fmt(m.mean) << '\n';
  write_text(cx.config.out / "monitors.csv", csv.str());
  if (s.value("write_fields", true)) fs::create_directories(cx.config.out / "fields");
  if (s.value("write_fields", true))
    for (std::size_t k = 0; k < tr.fields.size(); ++k)
      grid::write_binary(cx.config.out / "fields" / numbered("field", k, ".mclb"), tr.fields[k]);

  report["steps"] = tr.steps;
  report["times"] = tr.times;
  report["monitors"] = json::object();
  int code = kPass;
  if (wants(monitors, "convexity")) {
    const bool convex_start = tr.monitors.front().lambda_min >= -cx.tol.at("convexity") * scale;
    double worst = kInf;
    for (const flows::MonitorRecord& m : tr.monitors) worst = std::min(worst, m.lambda_min);
    json j{{"initially_convex", convex_start}, {"min_lambda_min", worst}, {"scale", scale}};
    const bool ok = !convex_start || worst >= -cx.tol.at("convexity") * scale;
    j["verdict"] = ok ? "pass" : "finding";
    report["monitors"]["convexity"] = j;
    code = combine(code, ok ? kPass : kFinding);
  }
  if (wants(monitors, "rank_monotonicity")) {
    std::vector<int> ranks;
    for (const flows::MonitorRecord& m : tr.monitors) ranks.push_back(m.min_rank);
    const rankmon::MonotonicityVerdict v = rankmon::rank_monotonicity(tr.times, ranks);
    json j{{"min_rank", ranks}, {"verdict", v.pass ? "pass" : "finding"}};
    if (!v.pass) j["violation_time"] = tr.times[v.violation];
    report["monitors"]["rank_monotonicity"] = j;
    code = combine(code, v.pass ? kPass : kFinding);
  }
  return code;
}

int curve_flow(Context& cx, json& report) {
  const json& s = cx.scenario;
  cx.tol = merge_tolerances({{"area_rate", 0.02}}, s, cx.config.tolerances);
  for (const char* key : {"curve", "speed", "t_end"})
    if (!s.contains(key)) throw ConfigError(std::string("curve flow needs \"") + key + "\"");
  flows::CurveFlowProblem pb;
  pb.initial = make_curve(s.at("curve"));
  pb.speed = flows::curve_speed(s.at("speed").get<std::string>());
  pb.t_end = s.at("t_end").get<double>();
  pb.snapshot_times = time_list(s, "snapshots");
  pb.record_every = s.value("record_every", 0);
  pb.factor = s.value("factor", pb.factor);
  pb.fixed_dt = s.value("fixed_dt", 0.0);
  pb.collapse_fraction = s.value("collapse_fraction", pb.collapse_fraction);
  pb.redistribution = s.value("redistribution", pb.redistribution);
  const auto monitors = string_list(s, "monitors", {"convexity"}, {"convexity", "area_rate"});

  flows::FlowTrace tr;
  try {
    tr = flows::run_curve(pb);
  } catch (const FlowError& e) {
    report["error"] = flow_error_json(e);
    cx.err << "mclab: " << e.what() << "\n";
    return kRuntime;
  }

  std::ostringstream csv;
  csv << "time,min_kappa,max_kappa,area,length,vertices\n";
  for (const flows::MonitorRecord& m : tr.monitors)
    csv << fmt(m.time) << ',' << fmt(m.min_kappa) << ',' << fmt(m.max_kappa) << ',' << fmt(m.area) << ','
        << fmt(m.length) << ',' << m.vertices << '\n';
  write_text(cx.config.out / "monitors.csv", csv.str());
  if (s.value("write_curves", true)) {
    for (std::size_t k = 0; k < tr.curves.size(); ++k) {
      std::ostringstream c;
      c << "x,y\n";
      for (const flows::Point2& v : tr.curves[k].vertices) c << fmt(v.x()) << ',' << fmt(v.y()) << '\n';
      write_text(cx.config.out / "curves" / numbered("curve", k, ".csv"), c.str());
    }
  }

  report["steps"] = tr.steps;
  report["times"] = tr.times;
  report["stopped"] = tr.stopped;
  if (!tr.stopped.empty()) report["stopped_at"] = tr.stopped_at;
  report["monitors"] = json::object();
  int code = kPass;
  if (wants(monitors, "convexity")) {
    const double k0 = tr.monitors.front().min_kappa;
    json j{{"initially_convex", k0 > 0.0}, {"min_kappa_over_steps", tr.min_kappa_over_steps}};
    const bool ok = !(k0 > 0.0) || tr.min_kappa_over_steps > 0.0;
    j["verdict"] = ok ? "pass" : "finding";
    report["monitors"]["convexity"] = j;
    code = combine(code, ok ? kPass : kFinding);
  }
  if (wants(monitors, "area_rate")) {
    const double expected = s.value("area_rate", 2 * std::numbers::pi);
    const double a0 = tr.monitors.front().area;
    double lo = kInf, hi = -kInf;
    for (std::size_t k = 1; k < tr.monitors.size(); ++k) {
      // only while the curve is resolved
      if (tr.monitors[k].area < 0.05 * a0) break;
      const double rate = (tr.monitors[k - 1].area - tr.monitors[k].area) / (tr.times[k] - tr.times[k - 1]);
      lo = std::min(lo, rate);
      hi = std::max(hi, rate);
    }
    const double band = cx.tol.at("area_rate") * std::abs(expected);
    json j{{"expected", expected}, {"min_rate", lo}, {"max_rate", hi}};
    int c = kPass;
    if (lo > hi) c = kInconclusive;
    else if (lo < expected - band || hi > expected + band) c = kFinding;
    j["verdict"] = c == kPass ? "pass" : c == kFinding ? "finding" : "inconclusive";
    report["monitors"]["area_rate"] = j;
    code = combine(code, c);
  }
  return code;
}

int cmd_flow(Context& cx) {
  const std::string kind = cx.scenario.value("kind", std::string("graph"));
  json report = cx.header();
  report["kind"] = kind;
  int code = kPass;
  if (kind == "graph") code = graph_flow(cx, report);
  else if (kind == "curve") code = curve_flow(cx, report);
  else throw ConfigError("flow kind must be \"graph\" or \"curve\"");
  report["tolerances"] = cx.tol;
  report["exit_code"] = code;
  write_json(cx.config.out / "report.json", report);
  cx.log << "flow (" << kind << "): exit " << code << "\n";
  return code;
}

// ---------------------------------------------------------------------------
// verify-lemmas

int cmd_verify_lemmas(Context& cx) {
  const json& s = cx.scenario;
  const std::vector<std::string> suite =
      s.contains("suite") ? s.at("suite").get<std::vector<std::string>>() : lemmas::names();
  if (suite.empty()) throw ConfigError("empty suite selection");
  for (const std::string& name : suite)
    if (!wants(lemmas::names(), name)) throw ConfigError("unknown lemma check '" + name + "'");
  lemmas::Options opts;
  opts.seed = cx.seed;
  opts.sample_scale = s.value("sample_scale", 1.0);
  if (!(opts.sample_scale > 0.0)) throw ConfigError("sample_scale must be positive");
  opts.mutation = lemmas::parse_mutation(s.value("mutation", std::string()));

  json report = cx.header();
  report["mutation"] = s.value("mutation", std::string("none"));
  report["results"] = json::object();
  int code = kPass;
  for (const std::string& name : suite) {
    const lemmas::Result r = lemmas::run(name, opts);
    json j = cx.header();
    j["lemma"] = r.name;
    j["pass"] = r.pass;
    j["samples"] = r.samples;
    j["metrics"] = json::object();
    for (const auto& [k, v] : r.metrics) j["metrics"][k] = v;
    j["tolerances"] = json::object();
    for (const auto& [k, v] : r.tolerances) j["tolerances"][k] = v;
    if (!r.note.empty()) j["note"] = r.note;
    write_json(cx.config.out / ("lemma_" + r.name + ".json"), j);
    report["results"][r.name] = r.pass;
    code = combine(code, r.pass ? kPass : kFinding);
    cx.log << r.name << ": " << (r.pass ? "pass" : "FAIL") << "\n";
  }
  report["exit_code"] = code;
  write_json(cx.config.out / "report.json", report);
  return code;
}

}  // namespace

// ---------------------------------------------------------------------------

opcheck::OperatorSpec make_operator(const json& spec, int n) {
  if (spec.is_string()) {
    const std::string text = spec.get<std::string>();
    if (n <= 0) throw ConfigError("operator '" + text + "' needs a dimension \"n\"");
    std::smatch m;
    static const std::regex single(R"(sigma_(\d))");
    static const std::regex quotient(R"(sigma_(\d)/sigma_(\d))");
    if (std::regex_match(text, m, single)) return opcheck::sigma_k(n, std::stoi(m[1]));
    if (std::regex_match(text, m, quotient)) return opcheck::sigma_quotient(n, std::stoi(m[1]), std::stoi(m[2]));
    throw ConfigError("unknown operator shorthand '" + text + "'");
  }
  if (!spec.is_object()) throw ConfigError("operator must be a string or an object");
  n = spec.value("n", n);
  if (spec.contains("expression")) {
    if (n <= 0) throw ConfigError("expression operators need \"n\"");
    return opcheck::from_expression(spec.value("name", spec.at("expression").get<std::string>()), n,
                                    spec.at("expression").get<std::string>());
  }
  const std::string name = spec.at("name").get<std::string>();
  if (name == "sigma_k") return opcheck::sigma_k(n, spec.at("k").get<int>());
  if (name == "sigma_quotient") return opcheck::sigma_quotient(n, spec.at("l").get<int>(), spec.at("k").get<int>());
  if (name == "shift") {
    const opcheck::OperatorSpec inner = make_operator(spec.at("of"), n);
    const Matrix e = spec.contains("by") ? matrix_from(spec.at("by"))
                                         : Matrix(spec.at("identity").get<double>() * Matrix::Identity(inner.n(), inner.n()));
    return opcheck::shift(inner, e);
  }
  if (name == "composition") {
    std::vector<opcheck::OperatorSpec> parts;
    for (const json& p : spec.at("of")) parts.push_back(make_operator(p, n));
    return opcheck::convex_composition(spec.at("g").get<std::string>(), parts);
  }
  if (name == "harmonic_reciprocal")
    return opcheck::harmonic_reciprocal(matrix_from(spec.at("a")), spec.at("f").get<std::string>());
  throw ConfigError("unknown operator '" + name + "'");
}

grid::Grid make_grid(const json& spec) {
  grid::Grid g;
  if (spec.contains("dims")) {
    g.dims = spec.at("dims").get<std::vector<int>>();
    const auto lo = spec.at("lo").get<std::vector<double>>();
    const auto hi = spec.at("hi").get<std::vector<double>>();
    g.periodic = spec.value("periodic", std::vector<bool>(g.dims.size(), false));
    if (lo.size() != g.dims.size() || hi.size() != g.dims.size() || g.periodic.size() != g.dims.size())
      throw ConfigError("grid arrays must have one entry per axis");
    for (std::size_t a = 0; a < g.dims.size(); ++a) {
      const int intervals = g.periodic[a] ? g.dims[a] : g.dims[a] - 1;
      g.origin.push_back(lo[a]);
      g.spacing.push_back((hi[a] - lo[a]) / intervals);
    }
    g.validate();
    return g;
  }
  const int rank = spec.at("rank").get<int>();
  const int n = spec.at("n").get<int>();
  const double lo = spec.at("lo").get<double>();
  const double hi = spec.at("hi").get<double>();
  return spec.value("periodic", false) ? grid::Grid::periodic_box(rank, n, lo, hi) : grid::Grid::box(rank, n, lo, hi);
}

grid::ScalarField make_field(const json& spec, const std::optional<grid::Grid>& g, const fs::path& base) {
  if (spec.is_string() || spec.contains("expression")) {
    if (!g) throw ConfigError("an analytic field needs \"grid\"");
    const PointExpression e(spec.is_string() ? spec.get<std::string>() : spec.at("expression").get<std::string>(),
                            g->rank(), false);
    return grid::ScalarField::sample(*g, [&](const Vector& x) { return e(x); });
  }
  if (!spec.contains("file")) throw ConfigError("field needs \"expression\" or \"file\"");
  const fs::path path = base / spec.at("file").get<std::string>();
  if (!fs::exists(path)) throw std::ios_base::failure("no such field file: " + path.string());
  if (path.extension() == ".csv") return grid::read_csv(path);
  return grid::read_binary(path, spec.value("periodic", std::vector<bool>{}));
}

flows::PlaneCurve make_curve(const json& spec) {
  flows::PlaneCurve c;
  if (spec.contains("points")) {
    for (const json& p : spec.at("points")) c.vertices.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  } else {
    const std::string shape = spec.value("shape", std::string("ellipse"));
    const int m = spec.value("vertices", 256);
    flows::Point2 center = flows::Point2::Zero();
    if (spec.contains("center")) center = {spec.at("center").at(0).get<double>(), spec.at("center").at(1).get<double>()};
    if (shape == "circle") c = flows::PlaneCurve::circle(spec.at("r").get<double>(), m, center);
    else if (shape == "ellipse")
      c = flows::PlaneCurve::ellipse(spec.at("a").get<double>(), spec.at("b").get<double>(), m, center);
    else throw ConfigError("unknown curve shape '" + shape + "'");
  }
  c.validate();
  return c;
}

std::string config_hash(const json& scenario) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : scenario.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

int run(const RunConfig& config, std::ostream& log, std::ostream& err) {
  static const std::vector<std::string> commands{"check-operator", "analyze-field", "flow", "verify-lemmas"};
  if (!wants(commands, config.subcommand)) {
    err << "mclab: unknown subcommand '" << config.subcommand << "'\n";
    return kUsage;
  }
  try {
    std::ifstream in(config.scenario);
    if (!in) {
      err << "mclab: cannot open config " << config.scenario << "\n";
      return kUsage;
    }
    Context cx{config, json::parse(in, nullptr, true, true), config.scenario.parent_path(), 0, {}, log, err};
    if (!cx.scenario.is_object()) throw ConfigError("config must be a JSON object");
    cx.seed = config.seed.value_or(cx.scenario.value("seed", std::uint64_t{0}));
    fs::create_directories(config.out);
    if (config.subcommand == "check-operator") return cmd_check_operator(cx);
    if (config.subcommand == "analyze-field") return cmd_analyze_field(cx);
    if (config.subcommand == "flow") return cmd_flow(cx);
    return cmd_verify_lemmas(cx);
  } catch (const json::exception& e) {
    err << "mclab: malformed config: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "mclab: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "mclab: " << e.what() << "\n";
    return kUsage;
  } catch (const GridTooSmall& e) {
    err << "mclab: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "mclab: invalid config: " << e.what() << "\n";
    return kUsage;
  } catch (const std::ios_base::failure& e) {
    err << "mclab: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "mclab: " << e.what() << "\n";
    return kUsage;
  } catch (const FlowError& e) {
    err << "mclab: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "mclab: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace mclab::cli
