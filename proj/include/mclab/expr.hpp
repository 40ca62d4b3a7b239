#pragma once

// Arithmetic expressions over the operator arguments (r_ij, p_i, u, x_i, t) and
// over composition slots f_i. The grammar is documented in docs/expression_grammar.md.

#include "mclab/jet.hpp"
#include "mclab/linalg.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mclab::expr {

/// Values an expression is evaluated against. `r` is row-major n×n.
template <class T>
struct Env {
  int n = 0;
  std::span<const T> r;
  std::span<const T> p;
  T u{};
  std::span<const T> x;
  T t{};
  std::span<const T> f;
};

/// Which arguments an expression reads.
struct Usage {
  int max_r = 0;  ///< largest r index, 1-based; 0 when r is unused
  int max_p = 0;
  int max_x = 0;
  int max_f = 0;
  bool r = false;
  bool p = false;
  bool u = false;
  bool x = false;
  bool t = false;
};

class Expression {
 public:
  enum class Kind {
    Number, R, P, U, X, T, Slot,
    Neg, Add, Sub, Mul, Div, Pow,
    Exp, Log, Sqrt, Sin, Cos,
    Sigma, Shift,
  };

  struct Node {
    Kind kind = Kind::Number;
    double value = 0.0;
    int a = -1;  ///< first child
    int b = -1;  ///< second child
    int i = 0;   ///< 0-based argument index, σ order, or shift slot
    int j = 0;
  };

  /// Throws ParseError with the offending column.
  static Expression parse(std::string_view text);
  static Expression constant(double c);

  template <class T>
  [[nodiscard]] T evaluate(const Env<T>& env) const;

  [[nodiscard]] Usage usage() const;
  [[nodiscard]] const std::string& source() const noexcept { return source_; }

  /// Replaces every f_i by args[i-1].
  [[nodiscard]] Expression compose(std::span<const Expression> args) const;
  /// The same expression with r replaced by r + E.
  [[nodiscard]] Expression shifted(const Matrix& e) const;

 private:
  int append(const Expression& other, std::span<const int> slot_roots);

  template <class T>
  T eval_node(int idx, const Env<T>& env) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> shifts_;
  int root_ = -1;
  std::string source_;

  friend class Parser;
};

extern template double Expression::evaluate<double>(const Env<double>&) const;
extern template Jet2 Expression::evaluate<Jet2>(const Env<Jet2>&) const;

/// σ_k of a row-major n×n matrix by the Faddeev–LeVerrier recurrence. Polynomial in the
/// entries, so it stays exact for singular arguments and carries jets without pivoting.
template <class T>
T sigma_of_entries(int k, int n, std::span<const T> r);

extern template double sigma_of_entries<double>(int, int, std::span<const double>);
extern template Jet2 sigma_of_entries<Jet2>(int, int, std::span<const Jet2>);

}  // namespace mclab::expr
