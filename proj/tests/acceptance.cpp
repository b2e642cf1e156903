// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "oracles.hpp"

#include "mvfhn/cli.hpp"
#include "mvfhn/pullback.hpp"
#include "mvfhn/splitting.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

using namespace mvfhn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const GridPtr& canonical_grid() {
  static const GridPtr g = make_grid(1, 8.0, 129);
  return g;
}

const CoefficientSet& canonical_coeffs() {
  static const CoefficientSet c = canonical_instance(CanonicalParams{}, *canonical_grid()).coeffs;
  return c;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome v1_decay() {
  const GridPtr g = make_grid(1, 8.0, 256);
  const GridField xi = sample(*g, [](const Point& x) { return std::exp(-x.squaredNorm()); });
  const double gamma = 2.0;
  const std::vector<double> delta(4, std::sqrt(0.125));
  const V1Result r = simulate_v1(g, std::vector<GridField>(4096, xi), gamma, delta, 2.0, 1e-3, 2718, 500);
  const double xi_sq = l2_norm_sq(*g, xi);
  Outcome o{true, ""};
  int checked = 0;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const double t = r.times[i];
    if (std::abs(t - 0.5) > 1e-9 && std::abs(t - 1.0) > 1e-9 && std::abs(t - 2.0) > 1e-9) continue;
    const double z = std::abs(r.mean_sq[i] - oracle::v1_second_moment(xi_sq, gamma, 0.5, t)) / r.std_error[i];
    o.pass = o.pass && z <= 3.0;
    o.detail += fmt("t=%g ", t) + fmt("z=%.2f  ", z);
    ++checked;
  }
  o.pass = o.pass && checked == 3;
  return o;
}

Outcome transport_oracle() {
  std::mt19937_64 rng(20240501);
  const GridPtr g = make_grid(1, 8.0, 17);
  const std::vector<double> w = oracle::trapezoid_weights(17, 8.0);
  std::uniform_int_distribution<int> size(1, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    const auto a = oracle::random_atoms(*g, rng, n);
    const auto b = oracle::random_atoms(*g, rng, n);
    const double exact = wasserstein2_exact(EmpiricalLaw::uniform(g, a), EmpiricalLaw::uniform(g, b));
    worst = std::max(worst, std::abs(exact - oracle::brute_force_w2(w, a, b)));
  }
  return {worst <= 1e-10, fmt("max |exact - oracle| = %.3g over 200 pairs", worst)};
}

Outcome picard() {
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.M = 2048;
  const EnsembleState xi0 = make_initial_ensemble(canonical_grid(), cfg.M, InitialFamily::gaussian, 1.0, 1, 0.0, cfg.dt);
  const PicardResult r = picard_fixed_point(xi0, canonical_coeffs(), cfg, 1.0, 1e-4, 8, 10.0, 1);
  double worst = 0.0;
  for (double q : r.ratios) worst = std::max(worst, q);
  const bool ok = r.converged && r.converged_at <= 8 && !r.ratios.empty() && worst <= 0.9;
  return {ok, fmt("converged at %g", r.converged_at) + fmt(", max ratio %.4f", worst) +
                  fmt(", final distance %.3g", r.distances.empty() ? NAN : r.distances.back())};
}

struct LongRuns {
  SimulationResult x1, x4;
};

const LongRuns& long_runs() {
  static const LongRuns runs = [] {
    SchemeConfig cfg;
    cfg.dt = 0.01;
    cfg.M = 512;
    cfg.checkpoint_stride = 10;
    cfg.implicit_dissipative_nonlinearity = true;
    cfg.w2_members = 0;
    // Independent seeds, so agreement is not forced by shared noise paths.
    auto run = [&](double scale, std::uint64_t init_seed, std::uint64_t noise_seed) {
      const EnsembleState s0 =
          make_initial_ensemble(canonical_grid(), cfg.M, InitialFamily::gaussian, scale, init_seed, 0.0, cfg.dt);
      return simulate(s0, canonical_coeffs(), cfg, 50.0, noise_seed);
    };
    return LongRuns{run(1.0, 2024, 99), run(4.0, 4048, 198)};
  }();
  return runs;
}

Outcome dissipativity() {
  const LongRuns& r = long_runs();
  const MonitorOptions opts = monitor_options(1.0);
  const EstimateReport e1 = energy_monitor(r.x1.series, opts), e4 = energy_monitor(r.x4.series, opts);
  const EstimateReport q1 = fourth_moment_monitor(r.x1.series, opts), q4 = fourth_moment_monitor(r.x4.series, opts);
  const double de = rel_diff(e1.extras.at("mean_level"), e4.extras.at("mean_level"));
  const double dq = rel_diff(q1.extras.at("mean_level"), q4.extras.at("mean_level"));
  const bool bands = e1.pass && e4.pass && q1.pass && q4.pass;
  return {bands && de <= 0.2 && dq <= 0.2,
          std::string("bands ") + (bands ? "entered" : "missed") + fmt(", energy level gap %.4f", de) +
              fmt(", fourth-moment level gap %.4f", dq)};
}

Outcome tail() {
  const LongRuns& r = long_runs();
  const EstimateReport t = tail_monitor(r.x1.series, 1e-4, monitor_options(1.0));
  const double L = canonical_grid()->half_width();
  const std::vector<double> profile = tail_profile(r.x1.final, {0.0, 0.25 * L, 0.5 * L, 0.75 * L, L});
  bool monotone = true;
  for (std::size_t i = 1; i < profile.size(); ++i) monotone = monotone && profile[i] <= profile[i - 1];
  const double post = t.extras.at("post_transient_max");
  return {t.pass && post < 1e-4 && monotone,
          fmt("post-transient max %.3g", post) + (monotone ? ", profile non-increasing" : ", profile not monotone")};
}

Outcome process_axioms() {
  const GridPtr g = canonical_grid();
  SchemeConfig cfg;
  cfg.dt = 0.01;
  cfg.M = 64;
  cfg.implicit_dissipative_nonlinearity = true;
  const EmpiricalLaw mu = make_initial_ensemble(g, 64, InitialFamily::gaussian, 1.0, 5, 0.0, cfg.dt).law();
  const EmpiricalLaw same = process_map(mu, 3.0, 0.0, canonical_coeffs(), cfg, 7);
  bool identity = same.size() == mu.size();
  for (std::size_t j = 0; identity && j < mu.size(); ++j)
    identity = same.weight(j) == mu.weight(j) && same.atom(j).u == mu.atom(j).u && same.atom(j).v == mu.atom(j).v;
  double worst = 0.0;
  for (double tau : {0.0, 1.3, 7.0}) {
    const double s = 0.5, t = 1.0;
    const EmpiricalLaw direct = process_map(mu, tau, s + t, canonical_coeffs(), cfg, 7);
    const EmpiricalLaw staged =
        process_map(process_map(mu, tau, s, canonical_coeffs(), cfg, 7), tau + s, t, canonical_coeffs(), cfg, 7);
    worst = std::max(worst, wasserstein2_exact(direct, staged));
  }
  return {identity && worst <= 1e-8,
          std::string(identity ? "identity exact" : "identity broken") + fmt(", cocycle discrepancy %.3g", worst)};
}

Outcome pullback() {
  const GridPtr g = canonical_grid();
  SchemeConfig cfg;
  cfg.dt = 0.01;
  cfg.M = 64;
  cfg.implicit_dissipative_nonlinearity = true;
  const double eta = CanonicalParams{}.eta;
  const double C = calibrate_absorbing_constant(canonical_coeffs(), cfg, g, 11, 20.0, monitor_options(1.0));
  const double radius = absorbing_radius(canonical_coeffs(), 0.0, eta, *g, C);
  PullbackSchedule s;
  s.tau = 0.0;
  s.depths = {5, 10, 20, 40};
  const PullbackReport rep = pullback_run(s, canonical_coeffs(), cfg, g, radius, eta, 5);
  std::string d;
  for (std::size_t i = 1; i < rep.records.size(); ++i)
    d += fmt("w2[%g]=", rep.records[i].depth) + fmt("%.3g ", rep.records[i].w2_prev);
  if (!rep.records.empty()) d += fmt("floor %.3g", rep.records.back().floor);
  d += rep.absorbing_entry ? fmt(", entry at %g", rep.entry_depth) : std::string(", no entry");
  return {!rep.failed && rep.cauchy_ok && rep.absorbing_entry && rep.absorbing_monotone, d};
}

double laplacian_error(int N) {
  const SpatialGrid g(1, 8.0, N);
  const double k = std::numbers::pi / 16.0;
  const GridField f = sample(g, [&](const Point& x) { return std::cos(k * x[0]); });
  const GridField lap = laplacian(g, f);
  double err = 0.0;
  for (Eigen::Index i = 1; i + 1 < g.size(); ++i) err = std::max(err, std::abs(lap[i] + k * k * f[i]));
  return err;
}

Outcome hygiene() {
  const double r1 = laplacian_error(65) / laplacian_error(129);
  const double r2 = laplacian_error(129) / laplacian_error(257);
  const bool order = std::abs(r1 - 4.0) <= 0.3 && std::abs(r2 - 4.0) <= 0.3;

  SchemeConfig cfg;
  cfg.dt = 0.01;
  cfg.M = 32;
  cfg.track_split = true;
  const EnsembleState s0 = make_initial_ensemble(canonical_grid(), cfg.M, InitialFamily::white_noise, 1.0, 3, 0.0, cfg.dt);
  const SimulationResult a = simulate(s0, canonical_coeffs(), cfg, 1.0, 13);
  const SimulationResult b = simulate(s0, canonical_coeffs(), cfg, 1.0, 13);
  cfg.threads = 4;
  const SimulationResult c = simulate(s0, canonical_coeffs(), cfg, 1.0, 13);
  const fs::path dir = fs::temp_directory_path() / "mvfhn_acceptance";
  fs::remove_all(dir);
  for (const auto& [name, res] : {std::pair{"a", &a}, {"b", &b}, {"c", &c}}) {
    write_series(dir / name / "series.csv", res->series);
    write_law(dir / name / "law", res->final.law());
  }
  bool reproducible = a.final.members == b.final.members && a.final.members == c.final.members;
  for (const char* f : {"series.csv", "law/atoms.csv"})
    reproducible = reproducible && slurp(dir / "a" / f) == slurp(dir / "b" / f) &&
                   slurp(dir / "a" / f) == slurp(dir / "c" / f);

  write_law(dir / "again", read_law(dir / "a" / "law", canonical_grid()));
  write_field(dir / "f1.csv", *canonical_grid(), a.final.members.front());
  write_field(dir / "f2.csv", *canonical_grid(), read_field(dir / "f1.csv", *canonical_grid()));
  RunConfig cfg_a = RunConfig::from_text("model.eps_couple = 0.25\ngrid.N = 65\n");
  const bool round_trip = slurp(dir / "again" / "atoms.csv") == slurp(dir / "a" / "law" / "atoms.csv") &&
                          slurp(dir / "again" / "weights.csv") == slurp(dir / "a" / "law" / "weights.csv") &&
                          slurp(dir / "f1.csv") == slurp(dir / "f2.csv") &&
                          RunConfig::from_text(cfg_a.serialize()).serialize() == cfg_a.serialize();
  return {order && reproducible && round_trip,
          fmt("laplacian ratios %.3f", r1) + fmt(" / %.3f", r2) + (reproducible ? ", bit-identical reruns" : ", reruns differ") +
              (round_trip ? ", round trips byte-identical" : ", round trip mismatch")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "v1 exact decay", 30, v1_decay},
      {2, "transport oracle equivalence", 5, transport_oracle},
      {3, "Picard contraction", 120, picard},
      {4, "dissipativity and absorbing levels", 180, dissipativity},
      {5, "tail estimate", 180, tail},
      {6, "process axioms", 60, process_axioms},
      {7, "pullback Cauchy trend", 600, pullback},
      {8, "numerics hygiene", 60, hygiene},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += pass ? 0 : 1;
    std::printf("criterion %d %s: %s (%.1f s of %.0f s) %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs, c.budget_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
