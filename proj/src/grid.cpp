#include "mvfhn/grid.hpp"

#include <cmath>
#include <sstream>

namespace mvfhn {

SpatialGrid::SpatialGrid(int dimension, double half_width, int points_per_axis)
    : dimension_(dimension), half_width_(half_width), points_per_axis_(points_per_axis) {
  if (dimension != 1 && dimension != 2)
    throw std::invalid_argument("SpatialGrid: dimension must be 1 or 2");
  if (points_per_axis < 8) throw std::invalid_argument("SpatialGrid: need at least 8 points per axis");
  if (dimension == 2 && points_per_axis > 128)
    throw std::invalid_argument("SpatialGrid: at most 128 points per axis in two dimensions");
  if (!(half_width > 0.0)) throw std::invalid_argument("SpatialGrid: half width must be positive");

  spacing_ = 2.0 * half_width / (points_per_axis - 1);
  const Eigen::Index n = points_per_axis;
  GridField axis_weights = GridField::Constant(n, spacing_);
  axis_weights[0] = axis_weights[n - 1] = 0.5 * spacing_;

  if (dimension == 1) {
    weights_ = axis_weights;
    radius_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) radius_[i] = std::abs(-half_width + i * spacing_);
  } else {
    weights_.resize(n * n);
    radius_.resize(n * n);
    for (Eigen::Index iy = 0; iy < n; ++iy) {
      for (Eigen::Index ix = 0; ix < n; ++ix) {
        weights_[iy * n + ix] = axis_weights[ix] * axis_weights[iy];
        const double x = -half_width + ix * spacing_;
        const double y = -half_width + iy * spacing_;
        radius_[iy * n + ix] = std::hypot(x, y);
      }
    }
  }
}

Point SpatialGrid::point(Eigen::Index i) const {
  if (dimension_ == 1) return {-half_width_ + i * spacing_, 0.0};
  const Eigen::Index n = points_per_axis_;
  return {-half_width_ + (i % n) * spacing_, -half_width_ + (i / n) * spacing_};
}

std::string SpatialGrid::id() const {
  std::ostringstream os;
  os.precision(17);
  os << "n" << dimension_ << "_L" << half_width_ << "_N" << points_per_axis_;
  return os.str();
}

bool SpatialGrid::operator==(const SpatialGrid& other) const {
  return dimension_ == other.dimension_ && half_width_ == other.half_width_ &&
         points_per_axis_ == other.points_per_axis_;
}

TailMassResult tail_mass(const SpatialGrid& grid, const FieldPair& k, double radius) {
  TailMassResult result;
  result.outside_domain = radius >= grid.half_width();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    if (grid.radius()[i] >= radius)
      result.mass += grid.weights()[i] * (k.u[i] * k.u[i] + k.v[i] * k.v[i]);
  }
  return result;
}

namespace {

GridField solve_tridiagonal(const GridField& diagonal, double off, const GridField& rhs) {
  // Thomas algorithm for a symmetric tridiagonal system with constant
  // off-diagonal entries.
  const Eigen::Index n = rhs.size();
  GridField c(n), d(n), x(n);
  double denom = diagonal[0];
  c[0] = off / denom;
  d[0] = rhs[0] / denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    denom = diagonal[i] - off * c[i - 1];
    c[i] = off / denom;
    d[i] = (rhs[i] - off * d[i - 1]) / denom;
  }
  x[n - 1] = d[n - 1];
  for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

GridField solve_cg(const SpatialGrid& grid, const GridField& diagonal, double coeff,
                   const GridField& rhs) {
  auto apply = [&](const GridField& x) -> GridField {
    return diagonal.cwiseProduct(x) - coeff * laplacian(grid, x);
  };
  const double rhs_norm = rhs.norm();
  GridField x = rhs.cwiseQuotient(diagonal);
  if (rhs_norm == 0.0) return GridField::Zero(rhs.size());
  GridField r = rhs - apply(x);
  GridField p = r;
  double rr = r.squaredNorm();
  const int max_iter = static_cast<int>(10 * rhs.size());
  for (int it = 0; it < max_iter && std::sqrt(rr) > 1e-10 * rhs_norm; ++it) {
    const GridField ap = apply(p);
    const double alpha = rr / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  if (std::sqrt(rr) > 1e-10 * rhs_norm) throw std::runtime_error("conjugate gradient did not converge");
  return x;
}

}  // namespace

GridField solve_shifted_laplacian(const SpatialGrid& grid, const GridField& diagonal,
                                  double laplacian_coeff, const GridField& rhs) {
  if (laplacian_coeff == 0.0) return rhs.cwiseQuotient(diagonal);
  const double h2 = grid.spacing() * grid.spacing();
  if (grid.dimension() == 1) {
    const GridField diag = diagonal.array() + 2.0 * laplacian_coeff / h2;
    return solve_tridiagonal(diag, -laplacian_coeff / h2, rhs);
  }
  return solve_cg(grid, diagonal, laplacian_coeff, rhs);
}

}  // namespace mvfhn
