#include "mclab/gridfield.hpp"

#include "mclab/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace mclab::grid {

namespace {

constexpr int kCentralWidth = 5;
constexpr int kBoundaryWidth = 6;

struct Stencil {
  int start = 0;  // offset of the first node relative to the evaluation index
  std::vector<double> w;
};

/// Stencils for every position along one axis.
std::vector<Stencil> axis_stencils(const Grid& g, int axis, int m) {
  const int n = g.dims[axis];
  const double h = g.spacing[axis];
  const double scale = std::pow(h, -m);
  std::vector<Stencil> out(static_cast<std::size_t>(n));
  const auto build = [&](int start, int width) {
    std::vector<double> nodes(static_cast<std::size_t>(width));
    for (int k = 0; k < width; ++k) nodes[static_cast<std::size_t>(k)] = start + k;
    Stencil s;
    s.start = start;
    s.w = fd_weights(0.0, nodes, m);
    for (double& w : s.w) w *= scale;
    return s;
  };
  if (g.periodic[axis]) {
    const Stencil c = build(-2, kCentralWidth);
    std::fill(out.begin(), out.end(), c);
    return out;
  }
  const Stencil central = build(-2, kCentralWidth);
  const int width = std::min(n, kBoundaryWidth);
  for (int i = 0; i < n; ++i) {
    if (i >= 2 && i + 2 <= n - 1) {
      out[static_cast<std::size_t>(i)] = central;
    } else {
      const int first = std::clamp(i - width / 2, 0, n - width);
      out[static_cast<std::size_t>(i)] = build(first - i, width);
    }
  }
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t get_bytes(std::istream& in, int count) {
  unsigned char b[8] = {};
  if (!in.read(reinterpret_cast<char*>(b), count)) throw std::runtime_error("truncated MCLB stream");
  std::uint64_t v = 0;
  for (int i = count - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_bytes(in, 8)); }

}  // namespace

// ---------------------------------------------------------------------------
// Grid

Grid Grid::box(int rank, int n, double lo, double hi) {
  if (rank < 1 || n < 2 || !(hi > lo)) throw std::invalid_argument("Grid::box: bad extent");
  Grid g;
  g.dims.assign(static_cast<std::size_t>(rank), n);
  g.spacing.assign(static_cast<std::size_t>(rank), (hi - lo) / (n - 1));
  g.origin.assign(static_cast<std::size_t>(rank), lo);
  g.periodic.assign(static_cast<std::size_t>(rank), false);
  return g;
}

Grid Grid::periodic_box(int rank, int n, double lo, double hi) {
  if (rank < 1 || n < 1 || !(hi > lo)) throw std::invalid_argument("Grid::periodic_box: bad extent");
  Grid g;
  g.dims.assign(static_cast<std::size_t>(rank), n);
  g.spacing.assign(static_cast<std::size_t>(rank), (hi - lo) / n);
  g.origin.assign(static_cast<std::size_t>(rank), lo);
  g.periodic.assign(static_cast<std::size_t>(rank), true);
  return g;
}

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (int d : dims) s *= static_cast<std::size_t>(d);
  return s;
}

std::size_t Grid::stride(int axis) const {
  std::size_t s = 1;
  for (int a = rank() - 1; a > axis; --a) s *= static_cast<std::size_t>(dims[a]);
  return s;
}

int Grid::index_along(std::size_t flat, int axis) const {
  return static_cast<int>((flat / stride(axis)) % static_cast<std::size_t>(dims[axis]));
}

Vector Grid::point(std::size_t flat) const {
  Vector x(rank());
  for (int a = rank() - 1; a >= 0; --a) {
    const auto n = static_cast<std::size_t>(dims[a]);
    x(a) = coordinate(a, static_cast<int>(flat % n));
    flat /= n;
  }
  return x;
}

int Grid::boundary_distance(std::size_t flat) const {
  int best = std::numeric_limits<int>::max();
  for (int a = rank() - 1; a >= 0; --a) {
    const auto n = static_cast<std::size_t>(dims[a]);
    const int i = static_cast<int>(flat % n);
    flat /= n;
    if (!periodic[a]) best = std::min({best, i, dims[a] - 1 - i});
  }
  return best;
}

void Grid::validate() const {
  const auto r = dims.size();
  if (r == 0) throw std::invalid_argument("grid has rank 0");
  if (spacing.size() != r || origin.size() != r || periodic.size() != r)
    throw std::invalid_argument("grid axis arrays have inconsistent lengths");
  for (std::size_t a = 0; a < r; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw std::invalid_argument("grid spacing must be positive");
    if (!std::isfinite(origin[a])) throw std::invalid_argument("grid origin must be finite");
    if (dims[a] < kCentralWidth)
      throw GridTooSmall("axis " + std::to_string(a) + " has " + std::to_string(dims[a]) +
                         " nodes; at least 5 are needed");
  }
}

// ---------------------------------------------------------------------------
// Fields

ScalarField::ScalarField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw std::invalid_argument("field size does not match grid");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("field values must be finite");
}

ScalarField ScalarField::sample(const Grid& grid, const std::function<double(const Vector&)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.point(i));
  return ScalarField(grid, std::move(v));
}

JetField::JetField(Grid grid, int order)
    : grid_(std::move(grid)), order_(order), d_(static_cast<std::size_t>(grid_.rank())) {
  const std::size_t n = grid_.size();
  gradient_.assign(n * d_, 0.0);
  if (order_ >= 2) hessian_.assign(n * d_ * d_, 0.0);
  if (order_ >= 3) third_.assign(n * d_ * d_ * d_, 0.0);
}

Vector JetField::gradient(std::size_t p) const {
  Vector g(static_cast<Eigen::Index>(d_));
  for (std::size_t a = 0; a < d_; ++a) g(static_cast<Eigen::Index>(a)) = gradient_[p * d_ + a];
  return g;
}

Matrix JetField::hessian(std::size_t p) const {
  const auto d = static_cast<Eigen::Index>(d_);
  Matrix h(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) h(a, b) = hess(p, static_cast<int>(a), static_cast<int>(b));
  return h;
}

// ---------------------------------------------------------------------------
// Stencils

std::vector<double> fd_weights(double at, const std::vector<double>& nodes, int m) {
  const int n = static_cast<int>(nodes.size());
  if (m < 0 || n <= m) throw std::invalid_argument("fd_weights: too few nodes for the derivative order");
  // c[k][j]: weight of node j for derivative k
  std::vector<std::vector<double>> c(static_cast<std::size_t>(m + 1), std::vector<double>(nodes.size(), 0.0));
  c[0][0] = 1.0;
  double c1 = 1.0;
  double c4 = nodes[0] - at;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[static_cast<std::size_t>(i)] - at;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[static_cast<std::size_t>(i)] - nodes[static_cast<std::size_t>(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c[static_cast<std::size_t>(m)];
}

std::vector<double> differentiate(const Grid& grid, const std::vector<double>& values, int axis, int m) {
  if (axis < 0 || axis >= grid.rank()) throw std::invalid_argument("differentiate: bad axis");
  if (m < 1 || m > 3) throw std::invalid_argument("differentiate: order must be 1, 2 or 3");
  if (values.size() != grid.size()) throw std::invalid_argument("differentiate: size mismatch");
  const std::vector<Stencil> st = axis_stencils(grid, axis, m);
  const std::size_t stride = grid.stride(axis);
  const int n = grid.dims[axis];
  const bool wrap = grid.periodic[axis];
  std::vector<double> out(values.size());
  for (std::size_t p = 0; p < values.size(); ++p) {
    const int i = static_cast<int>((p / stride) % static_cast<std::size_t>(n));
    const std::size_t base = p - static_cast<std::size_t>(i) * stride;
    const Stencil& s = st[static_cast<std::size_t>(i)];
    // differences against the centre value: constants differentiate to exactly zero
    const double centre = values[p];
    double acc = 0.0;
    for (std::size_t k = 0; k < s.w.size(); ++k) {
      int j = i + s.start + static_cast<int>(k);
      if (wrap) j = ((j % n) + n) % n;
      acc += s.w[k] * (values[base + static_cast<std::size_t>(j) * stride] - centre);
    }
    out[p] = acc;
  }
  return out;
}

JetField jet(const ScalarField& field, int order) {
  if (order < 1 || order > 3) throw std::invalid_argument("jet: order must be 1, 2 or 3");
  const Grid& g = field.grid();
  g.validate();
  const int d = g.rank();
  const std::size_t n = g.size();
  const auto ud = static_cast<std::size_t>(d);
  JetField out(g, order);
  const std::vector<double>& u = field.values();

  std::vector<std::vector<double>> first(ud);
  for (int a = 0; a < d; ++a) {
    first[static_cast<std::size_t>(a)] = differentiate(g, u, a, 1);
    auto& gd = out.gradient_data();
    for (std::size_t p = 0; p < n; ++p) gd[p * ud + static_cast<std::size_t>(a)] = first[static_cast<std::size_t>(a)][p];
  }
  if (order < 2) return out;

  std::vector<std::vector<double>> pure2(ud);
  auto& hd = out.hessian_data();
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      std::vector<double> v = a == b ? differentiate(g, u, a, 2) : differentiate(g, first[static_cast<std::size_t>(b)], a, 1);
      for (std::size_t p = 0; p < n; ++p) {
        hd[(p * ud + static_cast<std::size_t>(a)) * ud + static_cast<std::size_t>(b)] = v[p];
        hd[(p * ud + static_cast<std::size_t>(b)) * ud + static_cast<std::size_t>(a)] = v[p];
      }
      if (a == b) pure2[static_cast<std::size_t>(a)] = std::move(v);
    }
  }
  if (order < 3) return out;

  auto& td = out.third_data();
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      for (int c = b; c < d; ++c) {
        std::vector<double> v;
        if (a == b && b == c) {
          v = differentiate(g, u, a, 3);
        } else if (a == b) {
          v = differentiate(g, pure2[static_cast<std::size_t>(a)], c, 1);
        } else if (b == c) {
          v = differentiate(g, pure2[static_cast<std::size_t>(b)], a, 1);
        } else {
          v = differentiate(g, differentiate(g, first[static_cast<std::size_t>(c)], b, 1), a, 1);
        }
        const int perm[6][3] = {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
        for (std::size_t p = 0; p < n; ++p)
          for (const auto& q : perm)
            td[((p * ud + static_cast<std::size_t>(q[0])) * ud + static_cast<std::size_t>(q[1])) * ud +
               static_cast<std::size_t>(q[2])] = v[p];
      }
    }
  }
  return out;
}

ScalarField add_epsilon_quadratic(const ScalarField& field, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("add_epsilon_quadratic: epsilon must be non-negative");
  if (epsilon == 0.0) return field;
  const Grid& g = field.grid();
  std::vector<double> v = field.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.5 * epsilon * g.point(i).squaredNorm();
  return ScalarField(g, std::move(v));
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(std::ostream& out, const ScalarField& field) {
  const Grid& g = field.grid();
  for (int a = 0; a < g.rank(); ++a) out << 'x' << (a + 1) << ',';
  out << "value\n";
  out.precision(17);
  for (std::size_t p = 0; p < field.size(); ++p) {
    const Vector x = g.point(p);
    for (int a = 0; a < g.rank(); ++a) out << x(a) << ',';
    out << field[p] << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const ScalarField& field) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  write_csv(out, field);
}

ScalarField read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV field");
  const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int rank = columns - 1;
  if (rank < 1) throw std::runtime_error("CSV field needs coordinate columns and a value column");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      row.push_back(std::stod(cell, &used));
    }
    if (static_cast<int>(row.size()) != columns) throw std::runtime_error("CSV row has the wrong number of columns");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("CSV field has no rows");

  Grid g;
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(rank));
  for (int a = 0; a < rank; ++a) {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r[static_cast<std::size_t>(a)]);
    std::sort(c.begin(), c.end());
    const double span = std::max(1.0, c.back() - c.front());
    std::vector<double> uniq{c.front()};
    for (double v : c)
      if (v - uniq.back() > 1e-9 * span) uniq.push_back(v);
    g.dims.push_back(static_cast<int>(uniq.size()));
    g.origin.push_back(uniq.front());
    g.spacing.push_back(uniq.size() > 1 ? (uniq.back() - uniq.front()) / static_cast<double>(uniq.size() - 1) : 1.0);
    g.periodic.push_back(false);
    axes[static_cast<std::size_t>(a)] = std::move(uniq);
  }
  if (g.size() != rows.size()) throw std::runtime_error("CSV rows do not form a rectangular grid");
  std::vector<double> values(rows.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) {
    std::size_t flat = 0;
    for (int a = 0; a < rank; ++a) {
      const auto idx = static_cast<std::size_t>(
          std::llround((r[static_cast<std::size_t>(a)] - g.origin[static_cast<std::size_t>(a)]) /
                       g.spacing[static_cast<std::size_t>(a)]));
      flat = flat * static_cast<std::size_t>(g.dims[static_cast<std::size_t>(a)]) + idx;
    }
    if (flat >= values.size()) throw std::runtime_error("CSV coordinate off the grid");
    values[flat] = r.back();
  }
  return ScalarField(std::move(g), std::move(values));
}

ScalarField read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  return read_csv(in);
}

// ---------------------------------------------------------------------------
// Binary

void write_binary(std::ostream& out, const ScalarField& field) {
  const Grid& g = field.grid();
  out.write("MCLB", 4);
  put_u32(out, static_cast<std::uint32_t>(g.rank()));
  for (int d : g.dims) put_u64(out, static_cast<std::uint64_t>(d));
  for (double h : g.spacing) put_f64(out, h);
  for (double o : g.origin) put_f64(out, o);
  for (double v : field.values()) put_f64(out, v);
}

void write_binary(const std::filesystem::path& path, const ScalarField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  write_binary(out, field);
}

ScalarField read_binary(std::istream& in, const std::vector<bool>& periodic) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MCLB", 4) != 0) throw std::runtime_error("not an MCLB stream");
  const auto rank = static_cast<std::size_t>(get_bytes(in, 4));
  if (rank == 0 || rank > 16) throw std::runtime_error("MCLB rank out of range");
  Grid g;
  for (std::size_t a = 0; a < rank; ++a) {
    const std::uint64_t d = get_bytes(in, 8);
    if (d == 0 || d > (1u << 30)) throw std::runtime_error("MCLB dimension out of range");
    g.dims.push_back(static_cast<int>(d));
  }
  for (std::size_t a = 0; a < rank; ++a) g.spacing.push_back(get_f64(in));
  for (std::size_t a = 0; a < rank; ++a) g.origin.push_back(get_f64(in));
  g.periodic = periodic.empty() ? std::vector<bool>(rank, false) : periodic;
  if (g.periodic.size() != rank) throw std::invalid_argument("periodic flags do not match MCLB rank");
  std::vector<double> values(g.size());
  for (double& v : values) v = get_f64(in);
  return ScalarField(std::move(g), std::move(values));
}

ScalarField read_binary(const std::filesystem::path& path, const std::vector<bool>& periodic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  return read_binary(in, periodic);
}

}  // namespace mclab::grid
