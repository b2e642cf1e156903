#pragma once

// Coefficient data of the distribution-dependent FitzHugh-Nagumo system,
// executable checks of the structural assumptions on those coefficients, the
// dissipativity margin and the forcing integrals.

#include "mvfhn/grid.hpp"
#include "mvfhn/measure.hpp"

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvfhn {

/// Nonlinearities f, G1: (t, x, u, m2) -> real, m2 standing for the law's
/// second moment.
using ReactionFn = std::function<double(double t, const Point& x, double u, double m2)>;
using SpaceTimeFn = std::function<double(double t, const Point& x)>;
using SpaceFn = std::function<double(const Point& x)>;
/// Mode-wise diffusion sigma_k: (t, u, m2) -> real.
using ModeFn = std::function<double(double t, double u, double m2)>;
using LawFunctional = std::function<double(const EmpiricalLaw&)>;
/// Node-wise evaluation for fixed (t, m2): writes f(u_i) and G1(u_i) on every node.
using NodeReaction = std::function<void(const GridField& u, GridField& f_out, GridField& g1_out)>;
using ReactionFactory = std::function<NodeReaction(double t, double m2, const SpatialGrid& grid)>;
using ShapeFieldFn = std::function<void(double t, double m2, const GridField& u, GridField& out)>;

/// sigma_k(t, u, m2) = scale[k] * shape(t, u, m2); enables a single shape
/// evaluation per node when assembling the noise.
struct SeparableModes {
  std::vector<double> scale;
  ModeFn shape;
  /// Optional vectorized shape over a whole field.
  ShapeFieldFn shape_field;
};

/// Bound functions and constants of the structural assumptions.
struct AssumptionBounds {
  double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0;
  SpaceTimeFn phi1, phi2, phi3, phi4, phi5, phi6, phi7, phi8, phi_g;
  SpaceFn psi1, psi_g;
  std::vector<double> beta1, gamma1, lip_sigma;
  /// Analytically known norms overriding grid-computed ones. Keys:
  /// w_l2sq, w_linf_sq, phi1_linf, psi1_l1, phi7_l1_linf, psi_g_l1_linf.
  std::map<std::string, double> declared_norms;
};

struct CoefficientSet {
  double lambda = 0.0, alpha = 0.0, beta = 0.0, gamma = 0.0;
  /// Coefficient in front of the Laplacian (one for the model itself).
  double diffusivity = 1.0;
  double p = 4.0;
  ReactionFn f, G1;
  /// Optional fast path agreeing with f and G1.
  ReactionFactory node_reaction;
  SpaceTimeFn G2;
  std::vector<ModeFn> sigma;
  std::optional<SeparableModes> sigma_separable;
  std::vector<SpaceTimeFn> theta1, theta2;
  std::vector<double> delta;
  SpaceFn w;
  AssumptionBounds bounds;
  /// Scalar through which the coefficients see the law; E||u||^2 when unset.
  LawFunctional law_summary;
  std::string description;

  std::size_t modes() const { return delta.size(); }
  double sigma_value(std::size_t k, double t, double u, double m2) const;
  double delta_l2_sq() const;
  /// Sizes of all mode lists agree and every callable is present.
  void validate() const;
  /// Human-readable list of violated invariants (gamma > lambda,
  /// 2 sum delta_k^2 < gamma, K >= 1); empty when all hold.
  std::vector<std::string> invariant_violations() const;
};

/// All-zero coefficients with K modes; the diffusivity is zero as well.
CoefficientSet zero_coefficients(std::size_t K);

struct CanonicalParams {
  double eps_couple = 0.1;
  int K = 16;
  double omega = 1.0;
  double lambda = 1.0;
  std::optional<double> gamma;
  double alpha = 1.0;
  double beta = 1.0;
  double forcing_u = 1.0;  // amplitude A of G1
  double forcing_v = 1.0;  // amplitude B of G2
  double eta = 0.1;        // dissipativity parameter
  bool auto_scale = true;
  double target_margin = 0.5;
};

struct CanonicalInstance {
  CoefficientSet coeffs;
  bool lambda_scaled = false;
  double lambda_requested = 0.0;
  double margin = 0.0;
};

/// The shipped instance: f = u^3 + eps b sqrt(m2), b = exp(-|x|^2);
/// G1 = A exp(-|x|^2)(1 + sin wt) + eps exp(-|x|^2) sqrt(m2);
/// G2 = B exp(-|x|^2)(1 + cos wt); sigma_k = k^-2 (sin u + eps sqrt(m2));
/// theta_{i,k} = k^-2 exp(-|x|^2) cos(wt + k); delta_k = delta0 k^-2 with
/// 2 sum delta_k^2 = gamma / 2; w = exp(-|x|^2 / 2).
/// With auto_scale, lambda is raised until the dissipativity margin equals
/// target_margin and gamma is reset to lambda + 1.
CanonicalInstance canonical_instance(const CanonicalParams& params, const SpatialGrid& norm_grid);
CoefficientSet canonical_instance(double eps_couple, int K, double omega);

/// Grid and time window on which L^inf / L^1 norms of bound functions are taken.
struct NormOptions {
  GridPtr grid = make_grid(1, 8.0, 129);
  double t_min = 0.0;
  double t_max = 6.283185307179586;
  int t_samples = 65;
};

struct MarginTerms {
  double w_l2sq = 0, w_linf_sq = 0, beta1_sq = 0, gamma1_sq = 0, phi1_linf = 0, psi1_l1 = 0,
         phi7_l1_linf = 0, psi_g_l1_linf = 0, delta_sq = 0;
  /// Everything subtracted from 2 lambda - 5 eta.
  double penalty() const;
};

MarginTerms margin_terms(const CoefficientSet& coeffs, const NormOptions& opts = {});

/// (2 lambda - 5 eta) minus the noise/forcing penalty; positive certifies dissipativity.
double dissipativity_margin(const CoefficientSet& coeffs, double eta, const NormOptions& opts = {});

// ---------------------------------------------------------------------------
// Assumption checks.

struct AssumptionSampler {
  double t_min = 0.0, t_max = 10.0;
  double x_min = -8.0, x_max = 8.0;
  double u_min = -5.0, u_max = 5.0;
  double m2_min = 0.0, m2_max = 25.0;
  long n_samples = 100000;
  int dimension = 1;
};

struct Witness {
  double t = 0, x = 0, y = 0, u = 0, u2 = 0, m2 = 0, m2b = 0;
};

struct AssumptionRecord {
  std::string name;
  double worst_violation = -std::numeric_limits<double>::infinity();
  long sample_count = 0;
  Witness witness;
};

struct AssumptionReport {
  std::vector<AssumptionRecord> records;
  bool passed(double tolerance = 1e-6) const;
  const AssumptionRecord& record(const std::string& name) const;
};

class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, Witness w) : std::runtime_error(what), witness(w) {}
  Witness witness;
};

/// Monte-Carlo check of every pointwise inequality; derivatives by central
/// differences with step 1e-5. Records the worst signed violation
/// (lhs - rhs of "lhs <= rhs").
AssumptionReport check_assumptions(const CoefficientSet& coeffs, const AssumptionSampler& sampler,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forcing integrals.

struct ForcingIntegrals {
  double I2 = 0.0;
  double I4 = 0.0;
  double window = 0.0;
  double tail_bound2 = 0.0;
  double tail_bound4 = 0.0;
};

class IntegrabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Squared forcing norm ||phi_g(s)||^2 + ||theta1(s)||^2 + ||theta2(s)||^2
/// and its fourth-power analogue at time s.
std::pair<double, double> forcing_levels(const CoefficientSet& coeffs, double s, const SpatialGrid& grid);

/// I2 = int_{-inf}^{tau} e^{eta (s - tau)} (...)^2 ds and
/// I4 = int_{-inf}^{tau} e^{2 eta (s - tau)} (...)^4 ds over the window
/// [tau - 40/eta, tau] plus a geometric tail bound.
ForcingIntegrals forcing_integrals(const CoefficientSet& coeffs, double tau, double eta,
                                   const SpatialGrid& grid);

}  // namespace mvfhn
