#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ecocontrol {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Rectangle {
  Point lo{-1.0, -1.0};
  Point hi{1.0, 1.0};

  [[nodiscard]] double width() const { return hi.x - lo.x; }
  [[nodiscard]] double height() const { return hi.y - lo.y; }
  [[nodiscard]] double area() const { return width() * height(); }
};

/// Uniform Q1 mesh of a rectangle.
///
/// Nodes are numbered row-major: node (i, j), 0 <= i <= nx along x and
/// 0 <= j <= ny along y, has index j * (nx + 1) + i. Node 0 is the
/// lower-left corner. Element (i, j) has local nodes ordered
/// (i,j), (i+1,j), (i,j+1), (i+1,j+1).
class Grid {
 public:
  Grid(int nx, int ny, Rectangle bounds = {}) : nx_(nx), ny_(ny), bounds_(bounds) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("grid: element counts must be >= 1");
    if (!(bounds.width() > 0) || !(bounds.height() > 0))
      throw std::invalid_argument("grid: degenerate bounds");
    hx_ = bounds.width() / nx;
    hy_ = bounds.height() / ny;
  }

  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] double hx() const { return hx_; }
  [[nodiscard]] double hy() const { return hy_; }
  [[nodiscard]] const Rectangle& bounds() const { return bounds_; }
  [[nodiscard]] std::size_t node_count() const {
    return static_cast<std::size_t>(nx_ + 1) * static_cast<std::size_t>(ny_ + 1);
  }
  [[nodiscard]] std::size_t element_count() const {
    return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
  }

  [[nodiscard]] std::size_t node_index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_ + 1) +
           static_cast<std::size_t>(i);
  }

  [[nodiscard]] Point node(std::size_t idx) const {
    const auto row = static_cast<int>(idx / static_cast<std::size_t>(nx_ + 1));
    const auto col = static_cast<int>(idx % static_cast<std::size_t>(nx_ + 1));
    // Endpoints are hit exactly so symmetric grids stay symmetric.
    const double x = col == nx_ ? bounds_.hi.x : bounds_.lo.x + col * hx_;
    const double y = row == ny_ ? bounds_.hi.y : bounds_.lo.y + row * hy_;
    return {x, y};
  }

  [[nodiscard]] std::array<std::size_t, 4> element_nodes(std::size_t e) const {
    const auto i = static_cast<int>(e % static_cast<std::size_t>(nx_));
    const auto j = static_cast<int>(e / static_cast<std::size_t>(nx_));
    return {node_index(i, j), node_index(i + 1, j), node_index(i, j + 1),
            node_index(i + 1, j + 1)};
  }


  friend bool operator==(const Grid& a, const Grid& b) {
    return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.bounds_.lo.x == b.bounds_.lo.x &&
           a.bounds_.lo.y == b.bounds_.lo.y && a.bounds_.hi.x == b.bounds_.hi.x &&
           a.bounds_.hi.y == b.bounds_.hi.y;
  }

 private:
  int nx_;
  int ny_;
  Rectangle bounds_;
  double hx_ = 0.0;
  double hy_ = 0.0;
};

inline Grid build_grid(int nx, int ny, Rectangle bounds = {}) { return Grid(nx, ny, bounds); }

/// Nodal scalar field.
class Field {
 public:
  Field() = default;
  explicit Field(std::size_t n, double value = 0.0) : values_(n, value) {}
  explicit Field(std::vector<double> values) : values_(std::move(values)) {}
  Field(std::initializer_list<double> values) : values_(values) {}

  static Field constant(const Grid& grid, double value) { return Field(grid.node_count(), value); }

  template <class Fn>
  static Field interpolate(const Grid& grid, Fn&& fn) {
    Field f(grid.node_count());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const Point p = grid.node(i);
      f[i] = fn(p.x, p.y);
    }
    return f;
  }

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] std::span<double> span() { return values_; }
  [[nodiscard]] std::span<const double> span() const { return values_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  [[nodiscard]] auto begin() const { return values_.begin(); }
  [[nodiscard]] auto end() const { return values_.end(); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }
  [[nodiscard]] double min() const { return *std::min_element(values_.begin(), values_.end()); }
  [[nodiscard]] double max() const { return *std::max_element(values_.begin(), values_.end()); }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::vector<double> values_;
};

inline void require_on_grid(const Grid& grid, const Field& f, const char* what) {
  if (f.size() != grid.node_count())
    throw std::invalid_argument(std::string(what) + ": field does not match grid node count");
}

/// Compressed sparse row matrix; assembled once, read-only afterwards.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols,
               std::vector<double> vals)
      : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(std::move(vals)) {}

  [[nodiscard]] std::size_t rows() const { return n_; }
  [[nodiscard]] std::size_t nonzeros() const { return vals_.size(); }

  [[nodiscard]] double at(std::size_t i, std::size_t j) const {
    const auto first = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto last = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return vals_[static_cast<std::size_t>(it - cols_.begin())];
  }

  template <class Fn>
  void for_each_in_row(std::size_t i, Fn&& fn) const {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) fn(cols_[k], vals_[k]);
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += vals_[k] * x[cols_[k]];
      y[i] = acc;
    }
  }

  [[nodiscard]] Field operator*(const Field& x) const {
    Field y(n_);
    multiply(x.span(), y.span());
    return y;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

namespace detail {

/// Exact Q1 stiffness on an hx-by-hy rectangle, d = 1, as a tensor product of
/// 1-D stiffness and mass matrices.
inline std::array<std::array<double, 4>, 4> q1_element_stiffness(double hx, double hy) {
  const double sx[2][2] = {{1.0 / hx, -1.0 / hx}, {-1.0 / hx, 1.0 / hx}};
  const double sy[2][2] = {{1.0 / hy, -1.0 / hy}, {-1.0 / hy, 1.0 / hy}};
  const double mx[2][2] = {{hx / 3.0, hx / 6.0}, {hx / 6.0, hx / 3.0}};
  const double my[2][2] = {{hy / 3.0, hy / 6.0}, {hy / 6.0, hy / 3.0}};
  std::array<std::array<double, 4>, 4> k{};
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const int ia = a % 2, ja = a / 2, ib = b % 2, jb = b / 2;
      k[a][b] = sx[ia][ib] * my[ja][jb] + mx[ia][ib] * sy[ja][jb];
    }
  }
  return k;
}

}  // namespace detail

/// Diffusion stiffness d * (grad u, grad v) with natural (Neumann) boundary.
inline SparseMatrix assemble_stiffness(const Grid& grid, double d) {
  if (!(d >= 0)) throw std::invalid_argument("assemble_stiffness: diffusivity must be >= 0");
  const std::size_t n = grid.node_count();
  const std::size_t row_len = static_cast<std::size_t>(grid.nx() + 1);
  const auto ke = detail::q1_element_stiffness(grid.hx(), grid.hy());

  // Each node couples to at most its 3x3 neighbourhood; columns ascend.
  std::vector<std::size_t> row_ptr(n + 1, 0);
  std::vector<std::size_t> cols;
  cols.reserve(9 * n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<long>(r % row_len);
    const auto j = static_cast<long>(r / row_len);
    for (long dj = -1; dj <= 1; ++dj) {
      for (long di = -1; di <= 1; ++di) {
        const long ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii > grid.nx() || jj > grid.ny()) continue;
        cols.push_back(grid.node_index(static_cast<int>(ii), static_cast<int>(jj)));
      }
    }
    row_ptr[r + 1] = cols.size();
  }
  std::vector<double> vals(cols.size(), 0.0);
  auto slot = [&](std::size_t r, std::size_t c) -> double& {
    const auto first = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
    const auto last = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
    return vals[static_cast<std::size_t>(std::lower_bound(first, last, c) - cols.begin())];
  };
  for (std::size_t e = 0; e < grid.element_count(); ++e) {
    const auto nodes = grid.element_nodes(e);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) slot(nodes[a], nodes[b]) += d * ke[a][b];
  }
  return SparseMatrix(n, std::move(row_ptr), std::move(cols), std::move(vals));
}

/// Row sums of the consistent Q1 mass matrix.
inline std::vector<double> assemble_lumped_mass(const Grid& grid) {
  std::vector<double> m(grid.node_count(), 0.0);
  const double quarter = 0.25 * grid.hx() * grid.hy();
  for (std::size_t e = 0; e < grid.element_count(); ++e)
    for (const auto node : grid.element_nodes(e)) m[node] += quarter;
  return m;
}

/// Stiffness scaled by a diffusivity together with the lumped mass.
struct DiffusionOperator {
  SparseMatrix stiffness;
  std::vector<double> lumped_mass;
};

inline DiffusionOperator assemble_diffusion(const Grid& grid, double d) {
  return {assemble_stiffness(grid, d), assemble_lumped_mass(grid)};
}

/// Lumped quadrature of a nodal field.
inline double integrate(std::span<const double> lumped_mass, const Field& f) {
  if (f.size() != lumped_mass.size())
    throw std::invalid_argument("integrate: field does not match grid node count");
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += lumped_mass[i] * f[i];
  return acc;
}

inline double integrate(const Grid& grid, const Field& f) {
  require_on_grid(grid, f, "integrate");
  return integrate(assemble_lumped_mass(grid), f);
}

/// Bounded nonnegative kernel phi(source_point, target_point).
///
/// A constant kernel makes the nonlocal operator rank one, so it is kept as a
/// separate fast path.
class NonlocalKernel {
 public:
  using Function = std::function<double(Point, Point)>;

  static NonlocalKernel constant(double value) {
    if (!(value >= 0)) throw std::invalid_argument("kernel: constant must be >= 0");
    NonlocalKernel k;
    k.constant_ = value;
    return k;
  }
  static NonlocalKernel general(Function fn) {
    NonlocalKernel k;
    k.fn_ = std::move(fn);
    return k;
  }

  [[nodiscard]] bool is_constant() const { return !fn_; }
  [[nodiscard]] double constant_value() const { return constant_; }
  [[nodiscard]] double operator()(Point source, Point target) const {
    return fn_ ? fn_(source, target) : constant_;
  }

 private:
  double constant_ = 0.0;
  Function fn_;
};

/// w(x) = \int source(x') phi(x', x) dx'. With transpose=true the kernel
/// arguments are swapped, giving the adjoint operator.
inline Field nonlocal_apply(const Grid& grid, std::span<const double> lumped_mass,
                            const Field& source, const NonlocalKernel& kernel,
                            bool transpose = false) {
  require_on_grid(grid, source, "nonlocal_apply");
  const std::size_t n = grid.node_count();
  if (kernel.is_constant()) return Field(n, kernel.constant_value() * integrate(lumped_mass, source));
  Field w(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Point xt = grid.node(t);
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const Point xs = grid.node(s);
      acc += lumped_mass[s] * source[s] * (transpose ? kernel(xt, xs) : kernel(xs, xt));
    }
    w[t] = acc;
  }
  return w;
}

inline Field nonlocal_apply(const Grid& grid, const Field& source, const NonlocalKernel& kernel) {
  return nonlocal_apply(grid, assemble_lumped_mass(grid), source, kernel);
}

}  // namespace ecocontrol
