#include "mvfhn/pullback.hpp"

#include "mvfhn/parallel.hpp"
#include "mvfhn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvfhn {

namespace {

std::vector<FieldPair> materialize(const EmpiricalLaw& mu, std::size_t M, std::uint64_t seed) {
  if (mu.has_uniform_weights()) return mu.atoms();
  // Systematic resampling.
  const double offset = CounterStream(seed, 0x5A3B1EULL).uniforms(0, 0)[0];
  std::vector<FieldPair> out;
  out.reserve(M);
  double cumulative = mu.weight(0);
  std::size_t atom = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const double position = (offset + static_cast<double>(i)) / static_cast<double>(M);
    while (position > cumulative && atom + 1 < mu.size()) cumulative += mu.weight(++atom);
    out.push_back(mu.atom(atom));
  }
  return out;
}

double weighted_mean(const EmpiricalLaw& law, const std::function<double(const FieldPair&)>& fn) {
  std::vector<double> terms(law.size());
  for (std::size_t j = 0; j < law.size(); ++j) terms[j] = law.weight(j) * fn(law.atom(j));
  std::sort(terms.begin(), terms.end());
  return pairwise_sum(terms);
}

}  // namespace

EmpiricalLaw process_map(const EmpiricalLaw& mu, double tau, double t, const CoefficientSet& coeffs,
                         const SchemeConfig& cfg, std::uint64_t master_seed) {
  if (!(t >= 0.0)) throw std::invalid_argument("process_map: t must be nonnegative");
  if (t == 0.0) return mu;
  EnsembleState state = ensemble_from_members(mu.grid_ptr(), materialize(mu, cfg.M, master_seed), tau, cfg.dt);
  SchemeConfig run = cfg;
  run.w2_members = 0;
  run.keep_laws = false;
  run.track_split = false;
  run.checkpoint_stride = std::numeric_limits<int>::max();
  return simulate(state, coeffs, run, tau + t, master_seed).final.law();
}

double calibrate_absorbing_constant(const CoefficientSet& coeffs, const SchemeConfig& cfg, GridPtr grid,
                                    std::uint64_t master_seed, double t_end, const MonitorOptions& opts) {
  const EnsembleState init =
      make_initial_ensemble(grid, cfg.M, InitialFamily::gaussian, 1.0, master_seed, 0.0, cfg.dt);
  SchemeConfig run = cfg;
  run.w2_members = 0;
  const SimulationResult res = simulate(init, coeffs, run, t_end, master_seed);
  const EstimateReport rep = fourth_moment_monitor(res.series, opts);
  double late = 0.0;
  for (std::size_t i = rep.values.size() / 2; i < rep.values.size(); ++i) late = std::max(late, rep.values[i]);
  const double level = std::max(rep.gate, late * opts.safety);
  return level * 2.0 / std::min(coeffs.alpha, coeffs.beta);
}

double absorbing_radius(const CoefficientSet& coeffs, double tau, double eta, const SpatialGrid& grid,
                        std::optional<double> calibration) {
  if (!calibration) throw CalibrationRequired("absorbing_radius: a fitted fourth-moment constant is required");
  return *calibration * (1.0 + forcing_integrals(coeffs, tau, eta, grid).I4);
}

void PullbackSchedule::validate() const {
  if (depths.empty()) throw std::invalid_argument("pullback: no depths");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!(depths[i] > 0.0)) throw std::invalid_argument("pullback: depths must be positive");
    if (i > 0 && !(depths[i] > depths[i - 1])) throw std::invalid_argument("pullback: depths must increase");
  }
  if (members < 2 || members > kExactTransportCap)
    throw std::invalid_argument("pullback: members must lie in [2, 64]");
  if (replicates < 1) throw std::invalid_argument("pullback: at least one replicate is needed");
}

double family_scale(InitialClass family, double depth, double eta) {
  switch (family) {
    case InitialClass::bounded:
      return 1.0;
    case InitialClass::growing:
      return std::exp(0.25 * eta * depth);
    case InitialClass::violating:
      return std::exp(eta * depth);
  }
  return 1.0;
}

PullbackReport pullback_run(const PullbackSchedule& sch, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                            GridPtr grid, double radius, double eta, std::uint64_t master_seed) {
  sch.validate();
  PullbackReport rep;
  rep.radius = radius;
  const SpatialGrid& g = *grid;
  const TestFunctionFamily tests = TestFunctionFamily::make_default(g, master_seed);
  const double tail_r = 0.5 * g.half_width();
  SchemeConfig run = cfg;
  run.M = sch.members;

  for (double depth : sch.depths) {
    const double start = sch.tau - depth;
    try {
      const double scale = sch.base_scale * family_scale(sch.family, depth, eta);
      const EmpiricalLaw mu0 =
          sch.factory ? sch.factory(depth, start)
                      : make_initial_ensemble(grid, sch.members, InitialFamily::gaussian, scale, sch.family_seed,
                                              start, cfg.dt)
                            .law();
      const EmpiricalLaw image = process_map(mu0, start, depth, coeffs, run, master_seed);
      PullbackRecord rec;
      rec.depth = depth;
      rec.m2 = second_moment(image, 2);
      rec.m4 = second_moment(image, 4);
      rec.tail = weighted_mean(image, [&](const FieldPair& k) { return tail_mass(g, k, tail_r).mass; });
      rec.in_ball = moment_ball_contains(image, std::pow(radius, 0.25), 4);
      rec.initial_m4 = second_moment(mu0, 4);
      double floor = 0.0;
      for (int r = 0; r < sch.replicates; ++r) {
        const std::uint64_t seed_r = splitmix64(master_seed + 0x9E37ULL * static_cast<std::uint64_t>(r + 1));
        floor += wasserstein2_exact(image, process_map(mu0, start, depth, coeffs, run, seed_r));
      }
      rec.floor = floor / sch.replicates;
      if (!rep.laws.empty()) {
        rec.w2_prev = wasserstein2_exact(rep.laws.back(), image);
        rec.dP_prev = bounded_lipschitz_distance(rep.laws.back(), image, tests);
      }
      rep.records.push_back(rec);
      rep.laws.push_back(image);
    } catch (const std::exception& e) {
      rep.failed = true;
      rep.failure = "depth " + std::to_string(depth) + ": " + e.what();
      break;
    }
  }

  const std::size_t n = rep.records.size();
  // Absorbing entry and monotonicity after entry.
  bool seen = false;
  for (const auto& r : rep.records) {
    if (r.in_ball) seen = true;
    else if (seen) rep.absorbing_monotone = false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    bool all = true;
    for (std::size_t j = i; j < n; ++j) all = all && rep.records[j].in_ball;
    if (all) {
      rep.entry_depth = rep.records[i].depth;
      rep.absorbing_entry = true;
      break;
    }
  }

  // Class test: e^{-2 eta t} E||xi||^4 must decay along the depths.
  if (n >= 2) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& r : rep.records) {
      const double y = std::log(std::max(r.initial_m4, 1e-300)) - 2.0 * eta * r.depth;
      st += r.depth;
      sy += y;
      stt += r.depth * r.depth;
      sty += r.depth * y;
    }
    const double slope = (n * sty - st * sy) / (n * stt - st * st);
    rep.class_violation = slope >= 0.0;
    if (rep.class_violation) rep.absorbing_entry = false;
  }

  // Cauchy trend on consecutive distances.
  if (n >= 2 && !rep.failed) {
    bool ok = true;
    for (std::size_t i = 2; i < n; ++i) {
      const auto& a = rep.records[i - 1];
      const auto& b = rep.records[i];
      ok = ok && (b.w2_prev <= a.w2_prev || b.w2_prev <= 2.0 * b.floor);
    }
    ok = ok && rep.records.back().w2_prev <= 2.0 * rep.records.back().floor;
    rep.cauchy_ok = ok;
    if (n >= 3) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      const double m = static_cast<double>(n - 1);
      for (std::size_t i = 1; i < n; ++i) {
        const double x = std::log2(rep.records[i].depth);
        const double y = std::log(std::max(rep.records[i].w2_prev, 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
      }
      rep.cauchy_factor = std::exp((m * sxy - sx * sy) / (m * sxx - sx * sx));
    }
  }
  return rep;
}

std::vector<ProbeRow> weak_continuity_probe(const EmpiricalLaw& mu, const std::vector<EmpiricalLaw>& perturbed,
                                            double tau, double t, const CoefficientSet& coeffs,
                                            const SchemeConfig& cfg, std::uint64_t master_seed,
                                            double moment_bound) {
  for (const auto& p : perturbed)
    if (second_moment(p, 4) > moment_bound)
      throw std::invalid_argument("weak_continuity_probe: perturbed law outside the fourth-moment ball");
  const EmpiricalLaw base = process_map(mu, tau, t, coeffs, cfg, master_seed);
  const TestFunctionFamily tests = TestFunctionFamily::make_default(mu.grid(), master_seed);
  std::vector<ProbeRow> rows;
  for (const auto& p : perturbed) {
    const EmpiricalLaw image = process_map(p, tau, t, coeffs, cfg, master_seed);
    rows.push_back({wasserstein2_exact(mu, p), wasserstein2_exact(base, image),
                    bounded_lipschitz_distance(base, image, tests)});
  }
  return rows;
}

TightnessReport tightness_diagnostic(const std::vector<EmpiricalLaw>& laws, double threshold) {
  if (laws.size() < 2) throw std::invalid_argument("tightness_diagnostic: needs at least two laws");
  const SpatialGrid& g = laws.front().grid();
  const double L = g.half_width();
  TightnessReport rep;
  rep.radii = {0.25 * L, 0.5 * L, 0.75 * L};
  for (const auto& law : laws) {
    std::vector<double> row;
    for (double R : rep.radii)
      row.push_back(weighted_mean(law, [&](const FieldPair& k) { return tail_mass(law.grid(), k, R).mass; }));
    const double m4 = second_moment(law, 4);
    rep.tails.push_back(row);
    rep.m4.push_back(m4);
    rep.h1_u.push_back(weighted_mean(law, [&](const FieldPair& k) {
      return l2_norm_sq(law.grid(), k.u) + gradient_norm_sq(law.grid(), k.u);
    }));
    rep.certificate_terms.push_back(row[1] + m4 / threshold);
    rep.certificate = std::max(rep.certificate, rep.certificate_terms.back());
  }
  return rep;
}

}  // namespace mvfhn
