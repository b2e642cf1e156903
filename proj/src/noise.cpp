#include "mvfhn/noise.hpp"

#include "mvfhn/rng.hpp"

#include <stdexcept>

namespace mvfhn {

WienerIncrement sample_increments(std::size_t K, double dt, std::uint64_t stream_id,
                                  std::int64_t step_index, std::uint64_t master_seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_increments: dt must be positive");
  WienerIncrement inc;
  inc.dt = dt;
  inc.dW.resize(K);
  const CounterStream stream(master_seed, stream_id);
  const double sd = std::sqrt(dt);
  for (std::size_t k = 0; k < K; k += 2) {
    const auto z = stream.normals(step_index, static_cast<std::uint32_t>(k / 2));
    inc.dW[k] = sd * z[0];
    if (k + 1 < K) inc.dW[k + 1] = sd * z[1];
  }
  return inc;
}

namespace {

void require_modes(const WienerIncrement& inc, const CoefficientSet& c) {
  if (inc.dW.size() != c.modes())
    throw std::invalid_argument("noise: increment length differs from the number of modes");
}

}  // namespace

GridField evaluate_w(const CoefficientSet& c, const SpatialGrid& grid) {
  if (!c.w) return GridField::Zero(grid.size());
  return sample(grid, [&](const Point& x) { return c.w(x); });
}

NoiseTables NoiseTables::build(double t, const CoefficientSet& c, const SpatialGrid& grid,
                               const GridField& w) {
  const std::size_t K = c.modes();
  NoiseTables tab;
  tab.theta1.resize(grid.size(), static_cast<Eigen::Index>(K));
  tab.theta2.resize(grid.size(), static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const auto& a = k < c.theta1.size() ? c.theta1[k] : SpaceTimeFn{};
    const auto& b = k < c.theta2.size() ? c.theta2[k] : SpaceTimeFn{};
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const Point x = grid.point(i);
      tab.theta1(i, k) = a ? a(t, x) : 0.0;
      tab.theta2(i, k) = b ? b(t, x) : 0.0;
    }
  }
  tab.w = w;
  tab.delta = Eigen::Map<const Eigen::VectorXd>(c.delta.data(), static_cast<Eigen::Index>(K));
  return tab;
}

GridField sigma_noise(const NoiseTables& tab, double t, const GridField& u, double m2,
                      const Eigen::VectorXd& dW, const CoefficientSet& c) {
  GridField out = tab.theta1 * dW;
  const bool separable = c.sigma_separable && (c.sigma.empty() || c.sigma_separable->shape_field);
  if (separable) {
    const auto& sep = *c.sigma_separable;
    double scaled = 0.0;
    for (Eigen::Index k = 0; k < dW.size(); ++k) scaled += sep.scale[k] * dW[k];
    GridField shape(u.size());
    if (sep.shape_field) {
      sep.shape_field(t, m2, u, shape);
    } else {
      for (Eigen::Index i = 0; i < u.size(); ++i) shape[i] = sep.shape(t, u[i], m2);
    }
    out.array() += scaled * tab.w.array() * shape.array();
    return out;
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < dW.size(); ++k) acc += c.sigma_value(k, t, u[i], m2) * dW[k];
    out[i] += tab.w[i] * acc;
  }
  return out;
}

GridField apply_sigma(double t, const GridField& u, double m2, const WienerIncrement& inc,
                      const CoefficientSet& c, const SpatialGrid& grid) {
  require_modes(inc, c);
  GridField out = GridField::Zero(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Point x = grid.point(i);
    const double w = c.w ? c.w(x) : 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < inc.dW.size(); ++k) {
      const double th = c.theta1[k] ? c.theta1[k](t, x) : 0.0;
      acc += (th + w * c.sigma_value(k, t, u[i], m2)) * inc.dW[k];
    }
    out[i] = acc;
  }
  return out;
}

GridField apply_delta_noise(double t, const GridField& v, const WienerIncrement& inc,
                            const CoefficientSet& c, const SpatialGrid& grid) {
  require_modes(inc, c);
  GridField out = GridField::Zero(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Point x = grid.point(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < inc.dW.size(); ++k) {
      const double th = c.theta2[k] ? c.theta2[k](t, x) : 0.0;
      acc += (th + c.delta[k] * v[i]) * inc.dW[k];
    }
    out[i] = acc;
  }
  return out;
}

double sigma_hs_norm_sq(double t, const GridField& u, double m2, const CoefficientSet& c,
                        const SpatialGrid& grid) {
  double total = 0.0;
  for (std::size_t k = 0; k < c.modes(); ++k) {
    GridField col(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const Point x = grid.point(i);
      const double th = c.theta1[k] ? c.theta1[k](t, x) : 0.0;
      const double w = c.w ? c.w(x) : 0.0;
      col[i] = th + w * c.sigma_value(k, t, u[i], m2);
    }
    total += l2_norm_sq(grid, col);
  }
  return total;
}

double delta_hs_norm_sq(double t, const GridField& v, const CoefficientSet& c, const SpatialGrid& grid) {
  double total = 0.0;
  for (std::size_t k = 0; k < c.modes(); ++k) {
    GridField col(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const double th = c.theta2[k] ? c.theta2[k](t, grid.point(i)) : 0.0;
      col[i] = th + c.delta[k] * v[i];
    }
    total += l2_norm_sq(grid, col);
  }
  return total;
}

}  // namespace mvfhn
