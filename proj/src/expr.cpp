#include "mclab/expr.hpp"

#include "mclab/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

namespace mclab::expr {

namespace {

template <class T>
T lift(double c, const T& like) {
  if constexpr (std::is_same_v<T, double>) {
    (void)like;
    return c;
  } else {
    return T(c, like.dim());
  }
}

using std::cos;
using std::exp;
using std::log;
using std::pow;
using std::sin;
using std::sqrt;

}  // namespace

template <class T>
T sigma_of_entries(int k, int n, std::span<const T> r) {
  const T& like = r[0];
  if (k < 0 || k > n) return lift(0.0, like);
  if (k == 0) return lift(1.0, like);
  if (k == 1) {
    T s = r[0];
    for (int i = 1; i < n; ++i) s = s + r[static_cast<std::size_t>(i * n + i)];
    return s;
  }
  const auto at = [n](int i, int j) { return static_cast<std::size_t>(i * n + j); };
  // M_m = A M_{m-1} + c_{m-1} I,  c_m = -tr(A M_m)/m,  σ_m = (-1)^m c_m.
  std::vector<T> m(static_cast<std::size_t>(n * n), lift(0.0, like));
  std::vector<T> next(m.size(), lift(0.0, like));
  T c = lift(1.0, like);
  for (int step = 1; step <= k; ++step) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        T s = lift(0.0, like);
        if (step > 1)
          for (int l = 0; l < n; ++l) s = s + r[at(i, l)] * m[at(l, j)];
        if (i == j) s = s + c;
        next[at(i, j)] = s;
      }
    std::swap(m, next);
    T tr = lift(0.0, like);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) tr = tr + r[at(i, l)] * m[at(l, i)];
    c = (-1.0 / step) * tr;
  }
  return (k % 2 == 0) ? c : -c;
}

template double sigma_of_entries<double>(int, int, std::span<const double>);
template Jet2 sigma_of_entries<Jet2>(int, int, std::span<const Jet2>);

// ---------------------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expression run() {
    out_.source_ = std::string(text_);
    out_.root_ = expression();
    skip();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return std::move(out_);
  }

 private:
  using Kind = Expression::Kind;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression: " + what + " at column " + std::to_string(pos_ + 1) + " in '" +
                     std::string(text_) + "'");
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  int add(Expression::Node node) {
    out_.nodes_.push_back(node);
    return static_cast<int>(out_.nodes_.size()) - 1;
  }

  int binary(Kind k, int a, int b) { return add({k, 0.0, a, b, 0, 0}); }

  int expression() {
    int lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = binary(Kind::Add, lhs, term());
      else if (accept('-'))
        lhs = binary(Kind::Sub, lhs, term());
      else
        return lhs;
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = binary(Kind::Mul, lhs, unary());
      else if (accept('/'))
        lhs = binary(Kind::Div, lhs, unary());
      else
        return lhs;
    }
  }

  int unary() {
    if (accept('-')) return add({Kind::Neg, 0.0, unary(), -1, 0, 0});
    if (accept('+')) return unary();
    return power();
  }

  int power() {
    const int base = primary();
    if (accept('^')) return binary(Kind::Pow, base, unary());
    return base;
  }

  double number() {
    skip();
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  std::string identifier() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  static bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
  }

  int indexed(std::string_view digits) {
    if (!all_digits(digits)) fail("bad index '" + std::string(digits) + "'");
    const int v = std::stoi(std::string(digits));
    if (v < 1) fail("indices start at 1");
    return v - 1;
  }

  int primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = expression();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return add({Kind::Number, number(), -1, -1, 0, 0});
    if (!std::isalpha(static_cast<unsigned char>(c))) fail(std::string("unexpected character '") + c + "'");

    const std::size_t id_start = pos_;
    const std::string id = identifier();
    skip();
    if (pos_ < text_.size() && text_[pos_] == '(') return call(id, id_start);

    if (id == "u") return add({Kind::U, 0.0, -1, -1, 0, 0});
    if (id == "t") return add({Kind::T, 0.0, -1, -1, 0, 0});
    if (id == "x") return add({Kind::X, 0.0, -1, -1, 0, 0});
    if (id == "y") return add({Kind::X, 0.0, -1, -1, 1, 0});
    if (id == "z") return add({Kind::X, 0.0, -1, -1, 2, 0});
    if (id == "pi") return add({Kind::Number, std::numbers::pi, -1, -1, 0, 0});
    if (id.size() > 2 && id[1] == '_') {
      const std::string_view rest = std::string_view(id).substr(2);
      switch (id[0]) {
        case 'r':
          if (rest.size() != 2) fail("r takes two single-digit indices, e.g. r_12");
          return add({Kind::R, 0.0, -1, -1, indexed(rest.substr(0, 1)), indexed(rest.substr(1, 1))});
        case 'p': return add({Kind::P, 0.0, -1, -1, indexed(rest), 0});
        case 'x': return add({Kind::X, 0.0, -1, -1, indexed(rest), 0});
        case 'f': return add({Kind::Slot, 0.0, -1, -1, indexed(rest), 0});
        default: break;
      }
    }
    pos_ = id_start;
    fail("unknown identifier '" + id + "'");
  }

  int call(const std::string& name, std::size_t name_pos) {
    expect('(');
    if (name == "sigma") {
      skip();
      const std::size_t at = pos_;
      const double k = number();
      if (k != std::floor(k) || k < 0 || k > 9) {
        pos_ = at;
        fail("sigma takes a non-negative integer order");
      }
      expect(')');
      return add({Kind::Sigma, 0.0, -1, -1, static_cast<int>(k), 0});
    }
    const int a = expression();
    if (name == "pow") {
      expect(',');
      const int b = expression();
      expect(')');
      return binary(Kind::Pow, a, b);
    }
    expect(')');
    Kind k;
    if (name == "exp")
      k = Kind::Exp;
    else if (name == "log")
      k = Kind::Log;
    else if (name == "sqrt")
      k = Kind::Sqrt;
    else if (name == "sin")
      k = Kind::Sin;
    else if (name == "cos")
      k = Kind::Cos;
    else {
      pos_ = name_pos;
      fail("unknown function '" + name + "'");
    }
    return add({k, 0.0, a, -1, 0, 0});
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  Expression out_;
};

Expression Expression::parse(std::string_view text) { return Parser(text).run(); }

Expression Expression::constant(double c) {
  Expression e;
  e.nodes_.push_back({Kind::Number, c, -1, -1, 0, 0});
  e.root_ = 0;
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, c);
  (void)ec;
  e.source_.assign(buf, ptr);
  return e;
}

Usage Expression::usage() const {
  Usage use;
  std::vector<int> stack;
  if (root_ >= 0) stack.push_back(root_);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.a >= 0) stack.push_back(node.a);
    if (node.b >= 0) stack.push_back(node.b);
    switch (node.kind) {
      case Kind::R:
        use.r = true;
        use.max_r = std::max({use.max_r, node.i + 1, node.j + 1});
        break;
      case Kind::Sigma:
      case Kind::Shift: use.r = true; break;
      case Kind::P:
        use.p = true;
        use.max_p = std::max(use.max_p, node.i + 1);
        break;
      case Kind::X:
        use.x = true;
        use.max_x = std::max(use.max_x, node.i + 1);
        break;
      case Kind::U: use.u = true; break;
      case Kind::T: use.t = true; break;
      case Kind::Slot: use.max_f = std::max(use.max_f, node.i + 1); break;
      default: break;
    }
  }
  return use;
}

int Expression::append(const Expression& other, std::span<const int> slot_roots) {
  const int offset = static_cast<int>(nodes_.size());
  const int shift_offset = static_cast<int>(shifts_.size());
  shifts_.insert(shifts_.end(), other.shifts_.begin(), other.shifts_.end());
  for (Node node : other.nodes_) {
    if (node.a >= 0) node.a += offset;
    if (node.b >= 0) node.b += offset;
    if (node.kind == Kind::Shift) node.i += shift_offset;
    nodes_.push_back(node);
  }
  // Parents of a slot node are pointed at the substituted root.
  if (!slot_roots.empty()) {
    for (int idx = offset; idx < static_cast<int>(nodes_.size()); ++idx) {
      Node& node = nodes_[static_cast<std::size_t>(idx)];
      for (int* child : {&node.a, &node.b}) {
        if (*child < 0) continue;
        const Node& c = nodes_[static_cast<std::size_t>(*child)];
        if (c.kind == Kind::Slot) *child = slot_roots[static_cast<std::size_t>(c.i)];
      }
    }
  }
  return other.root_ + offset;
}

Expression Expression::compose(std::span<const Expression> args) const {
  const Usage use = usage();
  if (use.max_f > static_cast<int>(args.size()))
    throw std::invalid_argument("compose: expression uses f_" + std::to_string(use.max_f) + " but only " +
                                std::to_string(args.size()) + " operators were supplied");
  Expression out;
  std::vector<int> roots;
  for (const Expression& a : args) roots.push_back(out.append(a, {}));
  out.root_ = out.append(*this, roots);
  const Node& top = out.nodes_[static_cast<std::size_t>(out.root_)];
  if (top.kind == Kind::Slot) out.root_ = roots[static_cast<std::size_t>(top.i)];
  out.source_ = source_;
  for (std::size_t i = 0; i < args.size(); ++i)
    out.source_ += (i == 0 ? " with f_" : ", f_") + std::to_string(i + 1) + " = " + args[i].source_;
  return out;
}

Expression Expression::shifted(const Matrix& e) const {
  Expression out = *this;
  out.shifts_.push_back(e);
  out.nodes_.push_back({Kind::Shift, 0.0, root_, -1, static_cast<int>(out.shifts_.size()) - 1, 0});
  out.root_ = static_cast<int>(out.nodes_.size()) - 1;
  return out;
}

template <class T>
T Expression::eval_node(int idx, const Env<T>& env) const {
  const Node& node = nodes_[static_cast<std::size_t>(idx)];
  const auto child = [&](int c) { return eval_node(c, env); };
  const auto arg = [](std::span<const T> s, int i, const char* what) -> const T& {
    if (i >= static_cast<int>(s.size()))
      throw std::out_of_range(std::string("expression: ") + what + " index " + std::to_string(i + 1) +
                              " out of range");
    return s[static_cast<std::size_t>(i)];
  };
  switch (node.kind) {
    case Kind::Number: return lift(node.value, env.u);
    case Kind::R:
      if (node.i >= env.n || node.j >= env.n) throw std::out_of_range("expression: r index out of range");
      return env.r[static_cast<std::size_t>(node.i * env.n + node.j)];
    case Kind::P: return arg(env.p, node.i, "p");
    case Kind::U: return env.u;
    case Kind::X: return arg(env.x, node.i, "x");
    case Kind::T: return env.t;
    case Kind::Slot: return arg(env.f, node.i, "f");
    case Kind::Neg: return -child(node.a);
    case Kind::Add: return child(node.a) + child(node.b);
    case Kind::Sub: return child(node.a) - child(node.b);
    case Kind::Mul: return child(node.a) * child(node.b);
    case Kind::Div: return child(node.a) / child(node.b);
    case Kind::Pow: {
      const T base = child(node.a);
      const Node& ex = nodes_[static_cast<std::size_t>(node.b)];
      if (ex.kind == Kind::Number) return pow(base, ex.value);
      return pow(base, child(node.b));
    }
    case Kind::Exp: return exp(child(node.a));
    case Kind::Log: return log(child(node.a));
    case Kind::Sqrt: return sqrt(child(node.a));
    case Kind::Sin: return sin(child(node.a));
    case Kind::Cos: return cos(child(node.a));
    case Kind::Sigma: return sigma_of_entries<T>(node.i, env.n, env.r);
    case Kind::Shift: {
      const Matrix& e = shifts_[static_cast<std::size_t>(node.i)];
      if (e.rows() != env.n) throw std::invalid_argument("expression: shift matrix has wrong size");
      std::vector<T> r(env.r.begin(), env.r.end());
      for (int i = 0; i < env.n; ++i)
        for (int j = 0; j < env.n; ++j) {
          T& entry = r[static_cast<std::size_t>(i * env.n + j)];
          entry = entry + e(i, j);
        }
      Env<T> inner = env;
      inner.r = r;
      return eval_node(node.a, inner);
    }
  }
  throw std::logic_error("expression: unknown node kind");
}

template <class T>
T Expression::evaluate(const Env<T>& env) const {
  if (root_ < 0) throw std::logic_error("expression: empty");
  return eval_node(root_, env);
}

template double Expression::evaluate<double>(const Env<double>&) const;
template Jet2 Expression::evaluate<Jet2>(const Env<Jet2>&) const;

}  // namespace mclab::expr
