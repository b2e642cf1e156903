#pragma once

// The v = v1 + v2 decomposition and monitors fitting bound constants to the
// energy, fourth-moment, tail and H1 series of a run.

#include "mvfhn/integrator.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mvfhn {

struct V1Result {
  std::vector<GridField> members;
  std::vector<double> times;
  std::vector<double> mean_sq;    // E||v1||^2
  std::vector<double> std_error;  // its Monte-Carlo standard error
};

/// dv1 = -gamma v1 dt + sum_k delta_k v1 dW_k from xi2, with the increments
/// of a coupled run on the same (seed, stream) keys. Member j uses stream j.
V1Result simulate_v1(GridPtr grid, const std::vector<GridField>& xi2, double gamma,
                     const std::vector<double>& delta, double T, double dt, std::uint64_t master_seed,
                     int record_stride = 1, double t0 = 0.0, int threads = 1);

struct V2Result {
  std::vector<GridField> members;
  std::vector<double> times;
  std::vector<double> mean_grad_sq;  // E||grad v2||^2
};

/// dv2 = (-gamma v2 + beta u + G2) dt + delta(t, v2) dW from v2 = 0.
/// u_paths[n][j] is member j's u at step n (n = 0 .. steps - 1).
V2Result simulate_v2(GridPtr grid, const std::vector<std::vector<GridField>>& u_paths,
                     const CoefficientSet& coeffs, double t0, double dt, std::uint64_t master_seed);

struct SplitState {
  std::vector<GridField> v1, v2;
  /// max_j ||v1 + v2 - v|| / ||v||.
  double consistency_residual = 0.0;
};

SplitState split_state(const EnsembleState& state);

struct MonitorOptions {
  /// Trailing moving average over this duration before fitting (0 = none).
  double smoothing_window = 0.0;
  /// Duration of the sliding linear fit.
  double fit_window = 5.0;
  double slope_tol = 1e-3;
  /// Relative width (max - min over the mean) of a fit window whose slope may
  /// be written off as Monte-Carlo wander when within two standard errors.
  double noise_band = 0.5;
  int consecutive = 20;
  double safety = 1.1;
  double floor = 1e-12;
};

struct EstimateReport {
  std::string name;
  std::vector<double> times;
  std::vector<double> values;
  /// Upper level of the smoothed series over the first half of the steady
  /// segment; extras "mean_level" holds the mean over the whole segment.
  double fitted_level = 0.0;
  double fitted_rate = 0.0;
  /// Fitted bound C = level * safety, checked on the second half.
  double gate = 0.0;
  bool steady = false;
  double steady_time = 0.0;
  bool pass = false;
  bool dissipativity_failure = false;
  std::string note;
  std::map<std::string, double> extras;
};

/// Shared fit: steady-state detection, level, rate and pass against the band.
EstimateReport fit_estimate(std::string name, const std::vector<double>& times,
                            const std::vector<double>& values, const MonitorOptions& opts = {});

/// E(beta||u||^2 + alpha||v||^2); with I2 given, also the weighted H1 integral
/// relative to 1 + I2 (extras "weighted_h1_max", "weighted_h1_ratio").
EstimateReport energy_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts = {},
                              double eta = 0.1, double I2 = -1.0);

/// E(beta||u||^4 + alpha||v||^4).
EstimateReport fourth_moment_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts = {});

/// Post-transient E tail_mass < gate.
EstimateReport tail_monitor(const std::vector<SeriesRow>& series, double gate, const MonitorOptions& opts = {});

/// E||u||_{H1}^2, plus the unit-window average of E(||u||_{H1}^2 + ||v||^2)
/// (extras "window_average_level").
EstimateReport h1_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts = {});

/// E tail_mass(k, R) for each R: the decay profile eps(R).
std::vector<double> tail_profile(const EnsembleState& state, const std::vector<double>& radii);

}  // namespace mvfhn
