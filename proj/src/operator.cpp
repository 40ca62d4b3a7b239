#include "mclab/operator.hpp"

#include "mclab/error.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace mclab::opcheck {

namespace {

constexpr int kMaxDimension = 6;

void check_dimension(int n) {
  if (n < 1 || n > kMaxDimension)
    throw std::invalid_argument("operator dimension must be in [1, 6], got " + std::to_string(n));
}

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Point Point::zero(int n) {
  Point pt;
  pt.r = Matrix::Zero(n, n);
  pt.p = Vector::Zero(n);
  pt.x = Vector::Zero(n);
  return pt;
}

int sym_index(int i, int j, int n) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

Vector sym_coords(const Matrix& x) {
  const int n = static_cast<int>(x.rows());
  Vector c(n * (n + 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) c(sym_index(i, j, n)) = x(i, j);
  return c;
}

// ---------------------------------------------------------------------------

double OperatorDerivatives::rr(const Matrix& x, const Matrix& y) const {
  const int m = r_vars();
  return sym_coords(x).dot(hess.topLeftCorner(m, m) * sym_coords(y));
}

double OperatorDerivatives::ru(const Matrix& x) const {
  const int m = r_vars();
  return sym_coords(x).dot(hess.col(u_var()).head(m));
}

Vector OperatorDerivatives::rx(const Matrix& x) const {
  const int m = r_vars();
  return hess.block(0, x_var(0), m, n).transpose() * sym_coords(x);
}

double OperatorDerivatives::uu() const { return hess(u_var(), u_var()); }

Vector OperatorDerivatives::ux() const { return hess.row(u_var()).segment(x_var(0), n).transpose(); }

Matrix OperatorDerivatives::xx() const { return hess.block(x_var(0), x_var(0), n, n); }

double OperatorDerivatives::hess_r(int i, int j, int k, int l) const {
  const double wa = (i == j) ? 1.0 : 0.5;
  const double wb = (k == l) ? 1.0 : 0.5;
  return wa * wb * hess(sym_index(i, j, n), sym_index(k, l, n));
}

double OperatorDerivatives::hess_scale() const { return max_abs(hess); }

// ---------------------------------------------------------------------------

OperatorSpec::OperatorSpec(std::string name, int n, expr::Expression e)
    : name_(std::move(name)), n_(n) {
  check_dimension(n);
  const expr::Usage use = e.usage();
  if (use.max_r > n || use.max_p > n || use.max_x > n)
    throw std::invalid_argument("operator '" + name_ + "': expression indexes beyond n = " + std::to_string(n));
  if (use.max_f > 0)
    throw std::invalid_argument("operator '" + name_ + "': unresolved composition slot f_" +
                                std::to_string(use.max_f));
  deps_ = {use.p, use.u, use.x, use.t};
  expression_ = std::move(e);
}

OperatorSpec::OperatorSpec(std::string name, int n, ValueFn f, Dependence deps)
    : name_(std::move(name)), n_(n), deps_(deps), fn_(std::move(f)) {
  check_dimension(n);
  if (!fn_) throw std::invalid_argument("operator '" + name_ + "': empty value function");
}

void OperatorSpec::check_point(const Point& pt) const {
  if (pt.r.rows() != n_ || pt.r.cols() != n_ || pt.p.size() != n_ || pt.x.size() != n_)
    throw std::invalid_argument("operator '" + name_ + "': point has wrong dimensions");
}

double OperatorSpec::value(const Point& pt) const {
  check_point(pt);
  if (!expression_) return fn_(pt);
  const int n = n_;
  std::vector<double> r(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r[static_cast<std::size_t>(i * n + j)] = 0.5 * (pt.r(i, j) + pt.r(j, i));
  expr::Env<double> env;
  env.n = n;
  env.r = r;
  env.p = std::span<const double>(pt.p.data(), static_cast<std::size_t>(n));
  env.u = pt.u;
  env.x = std::span<const double>(pt.x.data(), static_cast<std::size_t>(n));
  env.t = pt.t;
  return expression_->evaluate(env);
}

OperatorDerivatives OperatorSpec::derivatives(const Point& pt) const {
  check_point(pt);
  if (!expression_) return fd_derivatives(pt);

  const int n = n_;
  const int m = n * (n + 1) / 2;
  const int dim = m + 1 + n;
  std::vector<Jet2> r(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      r[static_cast<std::size_t>(i * n + j)] =
          Jet2::variable(0.5 * (pt.r(i, j) + pt.r(j, i)), sym_index(i, j, n), dim);
  std::vector<Jet2> p, x;
  for (int i = 0; i < n; ++i) {
    p.emplace_back(pt.p(i), dim);
    x.push_back(Jet2::variable(pt.x(i), m + 1 + i, dim));
  }
  expr::Env<Jet2> env;
  env.n = n;
  env.r = r;
  env.p = p;
  env.u = Jet2::variable(pt.u, m, dim);
  env.x = x;
  env.t = Jet2(pt.t, dim);
  const Jet2 f = expression_->evaluate(env);

  OperatorDerivatives d;
  d.n = n;
  d.value = f.v;
  d.grad_r.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d.grad_r(i, j) = f.g(sym_index(i, j, n)) * (i == j ? 1.0 : 0.5);
  d.grad_u = f.g(m);
  d.grad_x = f.g.segment(m + 1, n);
  d.hess = f.h;
  return d;
}

OperatorDerivatives OperatorSpec::fd_derivatives(const Point& pt) const {
  check_point(pt);
  const int n = n_;
  const int m = n * (n + 1) / 2;
  const int dim = m + 1 + n;
  const double rscale = 1.0 + max_abs(pt.r);

  Vector z(dim);
  z.head(m) = sym_coords(symmetrize(pt.r));
  z(m) = pt.u;
  z.tail(n) = pt.x;
  Vector step1(dim), step2(dim);
  for (int a = 0; a < dim; ++a) {
    const double s = (a < m) ? rscale : 1.0 + std::abs(z(a));
    step1(a) = 1e-5 * s;
    step2(a) = 1e-4 * s;
  }

  const auto eval = [&](const Vector& zz) {
    Point q = pt;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) q.r(i, j) = q.r(j, i) = zz(sym_index(i, j, n));
    q.u = zz(m);
    q.x = zz.tail(n);
    return value(q);
  };

  OperatorDerivatives d;
  d.n = n;
  d.value = eval(z);
  Vector g(dim);
  for (int a = 0; a < dim; ++a) {
    Vector zp = z, zm = z;
    zp(a) += step1(a);
    zm(a) -= step1(a);
    g(a) = (eval(zp) - eval(zm)) / (2.0 * step1(a));
  }
  d.hess.resize(dim, dim);
  for (int a = 0; a < dim; ++a) {
    Vector zp = z, zm = z;
    zp(a) += step2(a);
    zm(a) -= step2(a);
    d.hess(a, a) = (eval(zp) - 2.0 * d.value + eval(zm)) / (step2(a) * step2(a));
    for (int b = a + 1; b < dim; ++b) {
      Vector zpp = z, zpm = z, zmp = z, zmm = z;
      zpp(a) += step2(a), zpp(b) += step2(b);
      zpm(a) += step2(a), zpm(b) -= step2(b);
      zmp(a) -= step2(a), zmp(b) += step2(b);
      zmm(a) -= step2(a), zmm(b) -= step2(b);
      d.hess(a, b) = d.hess(b, a) =
          (eval(zpp) - eval(zpm) - eval(zmp) + eval(zmm)) / (4.0 * step2(a) * step2(b));
    }
  }
  d.grad_r.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d.grad_r(i, j) = g(sym_index(i, j, n)) * (i == j ? 1.0 : 0.5);
  d.grad_u = g(m);
  d.grad_x = g.tail(n);
  return d;
}

Matrix OperatorSpec::coefficients(const Point& pt) const { return derivatives(pt).grad_r; }

// ---------------------------------------------------------------------------

OperatorSpec from_expression(const std::string& name, int n, const std::string& text) {
  return OperatorSpec(name, n, expr::Expression::parse(text));
}

OperatorSpec sigma_k(int n, int k) {
  if (k < 1 || k > n) throw std::invalid_argument("sigma_k: need 1 <= k <= n");
  return OperatorSpec("sigma_" + std::to_string(k), n,
                      expr::Expression::parse("sigma(" + std::to_string(k) + ")"));
}

OperatorSpec sigma_quotient(int n, int l, int k) {
  if (k < 1 || l < 1 || k > n || l > n) throw std::invalid_argument("sigma_quotient: orders must lie in [1, n]");
  return OperatorSpec("sigma_" + std::to_string(l) + "/sigma_" + std::to_string(k), n,
                      expr::Expression::parse("sigma(" + std::to_string(l) + ")/sigma(" + std::to_string(k) + ")"));
}

OperatorSpec convex_composition(const std::string& g, std::span<const OperatorSpec> ops) {
  if (ops.empty()) throw std::invalid_argument("convex_composition: no operators");
  const int n = ops.front().n();
  std::vector<expr::Expression> args;
  std::string name = "g(";
  for (const OperatorSpec& op : ops) {
    if (op.n() != n) throw std::invalid_argument("convex_composition: operators differ in dimension");
    if (!op.closed_form())
      throw std::invalid_argument("convex_composition: operator '" + op.name() + "' has no expression form");
    args.push_back(*op.expression());
    name += (args.size() > 1 ? "," : "") + op.name();
  }
  name += ")";
  return OperatorSpec(name, n, expr::Expression::parse(g).compose(args));
}

OperatorSpec shift(const OperatorSpec& op, const Matrix& e) {
  const int n = op.n();
  if (e.rows() != n || e.cols() != n) throw std::invalid_argument("shift: E has wrong size");
  if (max_abs(e - e.transpose()) > 1e-12 * (1.0 + max_abs(e)))
    throw std::invalid_argument("shift: E must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(e, Eigen::EigenvaluesOnly);
  if (solver.eigenvalues().minCoeff() < -1e-12 * (1.0 + max_abs(e)))
    throw std::invalid_argument("shift: E must be nonnegative definite");
  if (!op.closed_form()) throw std::invalid_argument("shift: operator has no expression form");
  return OperatorSpec(op.name() + "(r+E)", n, op.expression()->shifted(e));
}

OperatorSpec harmonic_reciprocal(const Matrix& a, const std::string& f) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n) throw std::invalid_argument("harmonic_reciprocal: a must be square");
  std::ostringstream text;
  text << "-1/(";
  bool first = true;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      text << (first ? "" : " + ") << "(" << format_number(a(i, j)) << ")*r_" << i + 1 << j + 1;
      first = false;
    }
  if (first) throw std::invalid_argument("harmonic_reciprocal: a is zero");
  text << ") + 1/(" << f << ")";
  return OperatorSpec("harmonic_reciprocal", n, expr::Expression::parse(text.str()));
}

}  // namespace mclab::opcheck
