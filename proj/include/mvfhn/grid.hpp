#pragma once

// Truncated uniform grids on [-L, L]^n, grid fields and their discrete
// differential operators and quadrature norms.

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <string>

namespace mvfhn {

template <typename Scalar>
using Field = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using GridField = Field<double>;
using Point = Eigen::Vector2d;

class SpatialGrid {
 public:
  /// dimension in {1, 2}; points_per_axis >= 8 (<= 128 per axis when n = 2).
  SpatialGrid(int dimension, double half_width, int points_per_axis);

  int dimension() const { return dimension_; }
  double half_width() const { return half_width_; }
  int points_per_axis() const { return points_per_axis_; }
  double spacing() const { return spacing_; }
  Eigen::Index size() const { return weights_.size(); }

  /// Trapezoidal quadrature weights; they sum to (2L)^n.
  const GridField& weights() const { return weights_; }
  /// Euclidean distance |x| of every node from the origin.
  const GridField& radius() const { return radius_; }
  Point point(Eigen::Index i) const;
  /// First coordinate of node i.
  double x(Eigen::Index i) const { return point(i)[0]; }

  std::string id() const;
  bool operator==(const SpatialGrid& other) const;
  bool operator!=(const SpatialGrid& other) const { return !(*this == other); }

 private:
  int dimension_;
  double half_width_;
  int points_per_axis_;
  double spacing_;
  GridField weights_;
  GridField radius_;
};

using GridPtr = std::shared_ptr<const SpatialGrid>;

inline GridPtr make_grid(int dimension, double half_width, int points_per_axis) {
  return std::make_shared<const SpatialGrid>(dimension, half_width, points_per_axis);
}

/// State k = (u, v) of one ensemble member.
struct FieldPair {
  GridField u;
  GridField v;

  static FieldPair zeros(const SpatialGrid& grid) {
    return {GridField::Zero(grid.size()), GridField::Zero(grid.size())};
  }
  bool operator==(const FieldPair& other) const { return u == other.u && v == other.v; }
};

class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Samples `fn(point)` on every node.
template <typename Fn>
GridField sample(const SpatialGrid& grid, Fn&& fn) {
  GridField out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) out[i] = fn(grid.point(i));
  return out;
}

// ---------------------------------------------------------------------------
// Discrete Laplacian: second-order central differences; nodes outside the
// truncated box carry homogeneous Dirichlet values.

template <typename Derived>
Field<typename Derived::Scalar> laplacian(const SpatialGrid& grid,
                                          const Eigen::MatrixBase<Derived>& field) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = grid.points_per_axis();
  const Scalar inv_h2 = Scalar(1) / (grid.spacing() * grid.spacing());
  Field<Scalar> out(field.size());
  if (grid.dimension() == 1) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar left = i > 0 ? field[i - 1] : Scalar(0);
      const Scalar right = i + 1 < n ? field[i + 1] : Scalar(0);
      out[i] = (left - Scalar(2) * field[i] + right) * inv_h2;
    }
    return out;
  }
  for (Eigen::Index iy = 0; iy < n; ++iy) {
    for (Eigen::Index ix = 0; ix < n; ++ix) {
      const Eigen::Index i = iy * n + ix;
      const Scalar west = ix > 0 ? field[i - 1] : Scalar(0);
      const Scalar east = ix + 1 < n ? field[i + 1] : Scalar(0);
      const Scalar south = iy > 0 ? field[i - n] : Scalar(0);
      const Scalar north = iy + 1 < n ? field[i + n] : Scalar(0);
      out[i] = (west + east + south + north - Scalar(4) * field[i]) * inv_h2;
    }
  }
  return out;
}

/// Inner product h^n * sum(a .* b) in which the Laplacian stencil is symmetric.
template <typename A, typename B>
typename A::Scalar stencil_inner(const SpatialGrid& grid, const Eigen::MatrixBase<A>& a,
                                 const Eigen::MatrixBase<B>& b) {
  const double cell = grid.dimension() == 1 ? grid.spacing() : grid.spacing() * grid.spacing();
  return cell * a.dot(b);
}

/// Trapezoidal inner product.
template <typename A, typename B>
typename A::Scalar inner(const SpatialGrid& grid, const Eigen::MatrixBase<A>& a,
                         const Eigen::MatrixBase<B>& b) {
  return (grid.weights().array() * a.array() * b.array()).sum();
}

template <typename Derived>
typename Derived::Scalar l2_norm_sq(const SpatialGrid& grid, const Eigen::MatrixBase<Derived>& f) {
  return (grid.weights().array() * f.array().square()).sum();
}

template <typename Derived>
typename Derived::Scalar l2_norm(const SpatialGrid& grid, const Eigen::MatrixBase<Derived>& f) {
  using std::sqrt;
  return sqrt(l2_norm_sq(grid, f));
}

template <typename Derived>
typename Derived::Scalar lp_norm(const SpatialGrid& grid, const Eigen::MatrixBase<Derived>& f,
                                 double p) {
  using std::pow;
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  return pow((grid.weights().array() * f.array().abs().pow(p)).sum(), 1.0 / p);
}

template <typename Derived>
typename Derived::Scalar linf_norm(const Eigen::MatrixBase<Derived>& f) {
  return f.size() == 0 ? typename Derived::Scalar(0) : f.cwiseAbs().maxCoeff();
}

/// Squared L2 norm of the forward-difference gradient.
template <typename Derived>
typename Derived::Scalar gradient_norm_sq(const SpatialGrid& grid,
                                          const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = grid.points_per_axis();
  const double h = grid.spacing();
  Scalar acc(0);
  if (grid.dimension() == 1) {
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      const Scalar d = (f[i + 1] - f[i]) / h;
      acc += h * d * d;
    }
    return acc;
  }
  // Each difference is weighted by h along its own axis and by the
  // trapezoidal weight along the other.
  auto trap = [&](Eigen::Index j) { return (j == 0 || j + 1 == n) ? 0.5 * h : h; };
  for (Eigen::Index iy = 0; iy < n; ++iy) {
    for (Eigen::Index ix = 0; ix + 1 < n; ++ix) {
      const Scalar d = (f[iy * n + ix + 1] - f[iy * n + ix]) / h;
      acc += h * trap(iy) * d * d;
    }
  }
  for (Eigen::Index iy = 0; iy + 1 < n; ++iy) {
    for (Eigen::Index ix = 0; ix < n; ++ix) {
      const Scalar d = (f[(iy + 1) * n + ix] - f[iy * n + ix]) / h;
      acc += h * trap(ix) * d * d;
    }
  }
  return acc;
}

template <typename Derived>
typename Derived::Scalar h1_norm(const SpatialGrid& grid, const Eigen::MatrixBase<Derived>& f) {
  using std::sqrt;
  return sqrt(l2_norm_sq(grid, f) + gradient_norm_sq(grid, f));
}

/// ||u||^2 + ||v||^2 in the trapezoidal product norm.
inline double pair_norm_sq(const SpatialGrid& grid, const FieldPair& k) {
  return l2_norm_sq(grid, k.u) + l2_norm_sq(grid, k.v);
}

/// Squared product-norm distance between two pairs.
inline double pair_distance_sq(const SpatialGrid& grid, const FieldPair& a, const FieldPair& b) {
  return (grid.weights().array() *
          ((a.u - b.u).array().square() + (a.v - b.v).array().square()))
      .sum();
}

struct TailMassResult {
  double mass = 0.0;
  /// Set when the radius leaves no part of the truncated domain to integrate.
  bool outside_domain = false;
};

/// Quadrature of |u|^2 + |v|^2 over the nodes with |x| >= radius.
TailMassResult tail_mass(const SpatialGrid& grid, const FieldPair& k, double radius);

/// Solves (diag(d) - c * Laplacian) x = rhs. One-dimensional grids use a
/// tridiagonal direct solve; two-dimensional grids use conjugate gradients
/// with relative tolerance 1e-10.
GridField solve_shifted_laplacian(const SpatialGrid& grid, const GridField& diagonal,
                                  double laplacian_coeff, const GridField& rhs);

}  // namespace mvfhn
