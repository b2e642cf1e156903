#pragma once

// Truncated Wiener increments and the noise operators sigma(t, u, mu) and
// delta(t, v) applied to an increment vector.

#include "mvfhn/grid.hpp"
#include "mvfhn/model.hpp"

#include <cstdint>
#include <vector>

namespace mvfhn {

struct WienerIncrement {
  std::vector<double> dW;
  double dt = 0.0;
};

/// K independent N(0, dt) draws keyed by (master_seed, stream_id, step_index, mode).
WienerIncrement sample_increments(std::size_t K, double dt, std::uint64_t stream_id,
                                  std::int64_t step_index, std::uint64_t master_seed);

/// sum_k (theta_{1,k}(t,x) + w(x) sigma_k(t, u(x), m2)) dW_k.
GridField apply_sigma(double t, const GridField& u, double m2, const WienerIncrement& inc,
                      const CoefficientSet& coeffs, const SpatialGrid& grid);

/// sum_k (theta_{2,k}(t,x) + delta_k v(x)) dW_k.
GridField apply_delta_noise(double t, const GridField& v, const WienerIncrement& inc,
                            const CoefficientSet& coeffs, const SpatialGrid& grid);

/// Hilbert-Schmidt norms sum_k ||theta_{1,k} + w sigma_k(u)||^2 and
/// sum_k ||theta_{2,k} + delta_k v||^2.
double sigma_hs_norm_sq(double t, const GridField& u, double m2, const CoefficientSet& coeffs,
                        const SpatialGrid& grid);
double delta_hs_norm_sq(double t, const GridField& v, const CoefficientSet& coeffs,
                        const SpatialGrid& grid);

/// Tables evaluated once per time step and shared by all members.
struct NoiseTables {
  Eigen::MatrixXd theta1;  // nodes x K
  Eigen::MatrixXd theta2;
  GridField w;
  Eigen::VectorXd delta;

  static NoiseTables build(double t, const CoefficientSet& coeffs, const SpatialGrid& grid,
                           const GridField& w);
};

GridField evaluate_w(const CoefficientSet& coeffs, const SpatialGrid& grid);

/// sigma-noise using precomputed tables; the separable fast path is used when available.
GridField sigma_noise(const NoiseTables& tables, double t, const GridField& u, double m2,
                      const Eigen::VectorXd& dW, const CoefficientSet& coeffs);

}  // namespace mvfhn
