#pragma once

// Ensemble Euler-Maruyama integration of the McKean-Vlasov system, with the
// law closed by the empirical measure of the ensemble, and the Picard
// iteration on law paths.

#include "mvfhn/measure.hpp"
#include "mvfhn/model.hpp"
#include "mvfhn/noise.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvfhn {

enum class SchemeKind { semi_implicit, explicit_euler };

struct SchemeConfig {
  double dt = 0.01;
  std::size_t M = 128;
  SchemeKind scheme = SchemeKind::semi_implicit;
  int checkpoint_stride = 10;
  bool noise = true;
  /// Treats the monotone part of f implicitly through q = max(0, (f(u) - f(0)) / u).
  bool implicit_dissipative_nonlinearity = false;
  /// Carry v = v1 + v2 alongside the coupled run.
  bool track_split = false;
  /// Keep the full ensemble law at every checkpoint.
  bool keep_laws = false;
  /// Radius for the tail_mass_R column; NaN means half the domain width.
  double tail_radius = std::numeric_limits<double>::quiet_NaN();
  /// Members used for the checkpoint-to-checkpoint W2 column.
  std::size_t w2_members = 64;
  int threads = 1;

  void validate(const CoefficientSet& coeffs) const;
};

struct EnsembleState {
  GridPtr grid;
  std::vector<FieldPair> members;
  /// Noise stream of every member.
  std::vector<std::uint64_t> stream_ids;
  /// Time is always step_index * dt.
  std::int64_t step_index = 0;
  double time = 0.0;
  /// Split parts v1 and v2 (empty unless tracked).
  std::vector<GridField> v1, v2;

  std::size_t size() const { return members.size(); }
  EmpiricalLaw law() const { return EmpiricalLaw::uniform(grid, members); }
};

/// Builds an ensemble from uniform-weight atoms; stream ids 0..M-1.
EnsembleState ensemble_from_members(GridPtr grid, std::vector<FieldPair> members, double t0, double dt);

enum class InitialFamily { gaussian, white_noise };

/// M members drawn from a named family, scaled by `scale`.
EnsembleState make_initial_ensemble(GridPtr grid, std::size_t M, InitialFamily family, double scale,
                                    std::uint64_t seed, double t0, double dt);

/// Increment for (stream, step index, dt).
using IncrementSource = std::function<WienerIncrement(std::uint64_t stream_id, std::int64_t step_index, double dt)>;

IncrementSource default_increments(std::size_t K, std::uint64_t master_seed);

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, std::int64_t step) : std::runtime_error(what), step_index(step) {}
  std::int64_t step_index;
};

/// m2 as seen by the coefficients: law_summary when set, else E||u||^2.
double law_scalar(const EnsembleState& state, const CoefficientSet& coeffs);

/// One step of the scheme. The law enters at the start of the step; `m2`
/// overrides the live ensemble value.
EnsembleState em_step(const EnsembleState& state, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                      std::uint64_t master_seed);
EnsembleState em_step(const EnsembleState& state, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                      const IncrementSource& increments, std::optional<double> m2 = std::nullopt);

/// v1 update shared by the split run and simulate_v1.
void advance_v1(GridField& v1, double delta_dw, double dt, double gamma);

struct LawPath {
  std::vector<double> times;
  std::vector<double> m2_values;
  /// Checkpoint laws when requested.
  std::vector<EmpiricalLaw> laws;

  /// Linear interpolation; throws std::out_of_range outside [front, back].
  double m2_at(double t) const;
};

struct SeriesRow {
  double t = 0;
  double mean_u_l2sq = 0;
  double mean_v_l2sq = 0;
  double energy = 0;   // E(beta ||u||^2 + alpha ||v||^2)
  double m4 = 0;       // E(||u||^2 + ||v||^2)^2
  double tail_mass = 0;
  double h1_u = 0;     // E ||u||_{H1}^2
  double h1_v2 = std::numeric_limits<double>::quiet_NaN();  // E ||grad v2||^2
  double w2_prev = std::numeric_limits<double>::quiet_NaN();
  double energy4 = 0;  // E(beta ||u||^4 + alpha ||v||^4)
};

SeriesRow checkpoint_row(const EnsembleState& state, const CoefficientSet& coeffs, double tail_radius);

struct SimulationResult {
  EnsembleState final;
  std::vector<SeriesRow> series;
  LawPath law_path;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, SimulationResult partial_result)
      : std::runtime_error(what), partial(std::move(partial_result)) {}
  SimulationResult partial;
};

struct SimulateOptions {
  std::optional<IncrementSource> increments;
  /// Frozen law path; m2 is read from it instead of the live ensemble.
  const LawPath* frozen = nullptr;
};

/// Steps until t_end (rounded to the step grid). Throws SimulationError
/// carrying the partial series when a step fails.
SimulationResult simulate(const EnsembleState& initial, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                          double t_end, std::uint64_t master_seed, const SimulateOptions& opts = {});

/// Runs the frozen-law system along `path`; returns the realized law path.
LawPath picard_solve_frozen(const EnsembleState& xi0, const LawPath& path, const CoefficientSet& coeffs,
                            const SchemeConfig& cfg, double T, std::uint64_t master_seed);

/// sup_t e^{-eta (t - t0)} |m2_a(t) - m2_b(t)|^{1/2} on the times of `a`.
double picard_distance(const LawPath& a, const LawPath& b, double eta);

struct PicardResult {
  LawPath law_path;
  std::vector<double> distances;  // d(mu_{m+1}, mu_m)
  std::vector<double> ratios;
  bool converged = false;
  int converged_at = -1;
  bool non_contraction = false;
};

PicardResult picard_fixed_point(const EnsembleState& xi0, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                                double T, double tol, int max_iters, double eta_picard,
                                std::uint64_t master_seed);

}  // namespace mvfhn
