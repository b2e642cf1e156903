#pragma once

// The process S(t, tau) on laws, absorbing-ball detection, pullback Cauchy
// diagnostics, weak-continuity probing and tightness certificates.

#include "mvfhn/integrator.hpp"
#include "mvfhn/splitting.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mvfhn {

/// S(t, tau) mu: runs the ensemble built from mu (atoms used directly when the
/// weights are uniform, systematic resampling to cfg.M otherwise) from tau to
/// tau + t. Increments are keyed by absolute step index and atom index.
EmpiricalLaw process_map(const EmpiricalLaw& mu, double tau, double t, const CoefficientSet& coeffs,
                         const SchemeConfig& cfg, std::uint64_t master_seed);

class CalibrationRequired : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// C_hat from a fourth-moment fit on a calibration run, converted to a bound
/// on E||k||^4 = E(||u||^2 + ||v||^2)^2 via 2 / min(alpha, beta).
double calibrate_absorbing_constant(const CoefficientSet& coeffs, const SchemeConfig& cfg, GridPtr grid,
                                    std::uint64_t master_seed, double t_end = 20.0,
                                    const MonitorOptions& opts = {});

/// R_hat(tau) = C_hat (1 + I4(tau)). Throws CalibrationRequired without C_hat.
double absorbing_radius(const CoefficientSet& coeffs, double tau, double eta, const SpatialGrid& grid,
                        std::optional<double> calibration);

enum class InitialClass { bounded, growing, violating };

struct PullbackSchedule {
  double tau = 0.0;
  std::vector<double> depths{5, 10, 20, 40};
  InitialClass family = InitialClass::bounded;
  /// Optional custom factory (depth, start time) -> law; overrides `family`.
  std::function<EmpiricalLaw(double depth, double start)> factory;
  std::size_t members = 64;
  double base_scale = 1.0;
  std::uint64_t family_seed = 7;
  /// Same-law different-seed replicates per depth for the noise floor.
  int replicates = 8;

  void validate() const;
};

/// Field scale of the named family at a given depth (eta from dissipativity).
double family_scale(InitialClass family, double depth, double eta);

struct PullbackRecord {
  double depth = 0;
  double m2 = 0;
  double m4 = 0;
  double tail = 0;
  bool in_ball = false;
  double w2_prev = std::numeric_limits<double>::quiet_NaN();
  double dP_prev = std::numeric_limits<double>::quiet_NaN();
  double floor = std::numeric_limits<double>::quiet_NaN();
  double initial_m4 = 0;
};

struct PullbackReport {
  std::vector<PullbackRecord> records;
  std::vector<EmpiricalLaw> laws;
  double radius = 0;
  double entry_depth = std::numeric_limits<double>::quiet_NaN();
  bool absorbing_entry = false;
  bool absorbing_monotone = true;
  bool cauchy_ok = false;
  /// Fitted factor of w2_prev per depth doubling.
  double cauchy_factor = std::numeric_limits<double>::quiet_NaN();
  bool class_violation = false;
  bool failed = false;
  std::string failure;
};

/// Runs every depth; a failing depth ends the run with `failed` set.
PullbackReport pullback_run(const PullbackSchedule& schedule, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                            GridPtr grid, double radius, double eta, std::uint64_t master_seed);

struct ProbeRow {
  double input_w2 = 0;
  double output_w2 = 0;
  double output_dP = 0;
};

/// Maps mu and every perturbed law through process_map with the same streams.
/// Every perturbed law must satisfy E||k||^4 <= moment_bound.
std::vector<ProbeRow> weak_continuity_probe(const EmpiricalLaw& mu, const std::vector<EmpiricalLaw>& perturbed,
                                            double tau, double t, const CoefficientSet& coeffs,
                                            const SchemeConfig& cfg, std::uint64_t master_seed, double moment_bound);

struct TightnessReport {
  std::vector<double> radii;                  // L/4, L/2, 3L/4
  std::vector<std::vector<double>> tails;     // [law][radius]
  std::vector<double> m4;
  std::vector<double> h1_u;                   // E||u||_{H1}^2
  std::vector<double> certificate_terms;      // tail(L/2) + m4 / threshold
  double certificate = 0;
};

TightnessReport tightness_diagnostic(const std::vector<EmpiricalLaw>& laws, double threshold = 1e6);

}  // namespace mvfhn
