#include "mvfhn/cli.hpp"

#include "mvfhn/pullback.hpp"
#include "mvfhn/splitting.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>

namespace mvfhn {

namespace fs = std::filesystem;

namespace {

constexpr double kTailGate = 1e-4;

struct Session {
  RunConfig cfg;
  std::uint64_t seed = 1;
  int threads = 1;
  fs::path out_dir;
};

// sum_{k > K} k^-4 relative to zeta(4).
double omitted_hs_fraction(int K) {
  const double zeta4 = std::pow(std::numbers::pi, 4) / 90.0;
  double head = 0.0;
  for (int k = K; k >= 1; --k) head += std::pow(static_cast<double>(k), -4.0);
  return std::max(0.0, zeta4 - head) / zeta4;
}

double boundary_ratio(const CoefficientSet& c, const SpatialGrid& grid) {
  if (!c.w) return 0.0;
  const GridField w = sample(grid, c.w);
  const double peak = w.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0.0;
  double edge = 0.0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Point p = grid.point(i);
    for (int d = 0; d < grid.dimension(); ++d)
      if (std::abs(std::abs(p[d]) - grid.half_width()) < 1e-12 * grid.half_width())
        edge = std::max(edge, std::abs(w[i]));
  }
  return edge / peak;
}

RunManifest start_manifest(const Session& s, const std::string& command, const SpatialGrid& grid,
                           const CanonicalInstance* inst, std::ostream& err) {
  RunManifest m(s.out_dir / "manifest.txt");
  m.set("status", "running");
  m.set("command", command);
  m.set("config_hash", s.cfg.hash());
  m.set("seed", std::to_string(s.seed));
  m.set("threads", std::to_string(s.threads));
  m.set("git_describe", git_describe());
  m.set("started_utc", utc_timestamp());
  m.set("grid.h", grid.spacing());
  m.set("grid.size", std::to_string(grid.size()));
  if (inst) {
    const double ratio = boundary_ratio(inst->coeffs, grid);
    m.set("w_boundary_ratio", ratio);
    if (ratio > 1e-8) err << "warning: noise profile w is not negligible on the boundary (" << ratio << ")\n";
    m.set("omitted_hs_fraction", omitted_hs_fraction(static_cast<int>(inst->coeffs.modes())));
    m.set("dissipativity_margin", inst->margin);
    m.set("lambda_requested", inst->lambda_requested);
    m.set("lambda_used", inst->coeffs.lambda);
    m.set("gamma_used", inst->coeffs.gamma);
    m.set("lambda_scaled", inst->lambda_scaled ? "true" : "false");
  }
  for (const auto& [k, v] : s.cfg.values()) m.set("config." + k, v);
  m.write();
  return m;
}

int finish(RunManifest& m, int code) {
  m.set("status", code == exit_ok ? "ok" : "failed");
  m.set("exit_code", std::to_string(code));
  m.set("finished_utc", utc_timestamp());
  m.write();
  return code;
}

InitialFamily family_from(const std::string& name) {
  if (name == "gaussian") return InitialFamily::gaussian;
  if (name == "white_noise") return InitialFamily::white_noise;
  throw ConfigError("scheme.initial_family must be gaussian or white_noise, got '" + name + "'",
                    "scheme.initial_family");
}

int cmd_check(const Session& s, std::ostream& out, std::ostream& err) {
  const GridPtr grid = grid_from_config(s.cfg);
  const CanonicalInstance inst = instance_from_config(s.cfg, *grid);
  RunManifest m = start_manifest(s, "check", *grid, &inst, err);

  AssumptionSampler sampler;
  sampler.n_samples = s.cfg.get_int("check.samples");
  sampler.x_min = -grid->half_width();
  sampler.x_max = grid->half_width();
  sampler.dimension = grid->dimension();
  const double tol = s.cfg.get_double("check.tolerance");
  const AssumptionReport report = check_assumptions(inst.coeffs, sampler, s.seed);
  write_assumptions(s.out_dir / "assumptions.csv", report);

  const auto violations = inst.coeffs.invariant_violations();
  const bool ok = report.passed(tol) && inst.margin > 0.0 && violations.empty();
  std::ofstream rep(s.out_dir / "check_report.txt");
  rep << "margin = " << format_double(inst.margin) << '\n';
  rep << "lambda = " << format_double(inst.coeffs.lambda) << '\n';
  rep << "gamma = " << format_double(inst.coeffs.gamma) << '\n';
  rep << "lambda_scaled = " << (inst.lambda_scaled ? "true" : "false") << '\n';
  rep << "assumptions_passed = " << (report.passed(tol) ? "true" : "false") << '\n';
  for (const auto& v : violations) rep << "invariant_violation = " << v << '\n';
  rep << "result = " << (ok ? "pass" : "fail") << '\n';

  out << "margin " << format_double(inst.margin) << (ok ? " pass" : " fail") << '\n';
  for (const auto& r : report.records)
    if (r.worst_violation > tol) err << "assumption " << r.name << " violated by " << r.worst_violation << '\n';
  if (inst.margin <= 0.0) err << "dissipativity margin is not positive: " << inst.margin << '\n';
  for (const auto& v : violations) err << "invariant: " << v << '\n';
  return finish(m, ok ? exit_ok : exit_assumption);
}

int cmd_simulate(const Session& s, std::ostream& out, std::ostream& err) {
  const GridPtr grid = grid_from_config(s.cfg);
  const CanonicalInstance inst = instance_from_config(s.cfg, *grid);
  SchemeConfig sc = scheme_from_config(s.cfg);
  sc.threads = s.threads;
  sc.validate(inst.coeffs);
  RunManifest m = start_manifest(s, "simulate", *grid, &inst, err);
  if (inst.margin <= 0.0) err << "warning: dissipativity margin is not positive: " << inst.margin << '\n';

  const EnsembleState init = make_initial_ensemble(
      grid, sc.M, family_from(s.cfg.get("scheme.initial_family")), s.cfg.get_double("scheme.initial_scale"), s.seed,
      0.0, sc.dt);
  const double t_end = s.cfg.get_double("scheme.t_end");
  SimulationResult res;
  int code = exit_ok;
  try {
    res = simulate(init, inst.coeffs, sc, t_end, s.seed);
  } catch (const SimulationError& e) {
    err << "simulation failed: " << e.what() << '\n';
    write_series(s.out_dir / "series.csv", e.partial.series);
    return finish(m, exit_assumption);
  }
  write_series(s.out_dir / "series.csv", res.series);

  const MonitorOptions opts = monitor_options(s.cfg.get_double("model.omega"));
  double I2 = -1.0;
  if (s.cfg.get("model.kind") == "canonical") {
    try {
      I2 = forcing_integrals(inst.coeffs, t_end, s.cfg.get_double("model.eta"), *grid).I2;
    } catch (const IntegrabilityError& e) {
      err << "warning: " << e.what() << '\n';
    }
  }
  std::vector<EstimateReport> reports;
  if (res.series.size() >= 10) {
    reports.push_back(energy_monitor(res.series, opts, s.cfg.get_double("model.eta"), I2));
    reports.push_back(fourth_moment_monitor(res.series, opts));
    reports.push_back(tail_monitor(res.series, kTailGate, opts));
    reports.push_back(h1_monitor(res.series, opts));
  } else {
    err << "warning: fewer than 10 checkpoints, monitors skipped\n";
  }
  write_estimates(s.out_dir / "estimates.csv", reports);
  for (const auto& r : reports)
    if (r.dissipativity_failure) {
      err << "monitor " << r.name << ": " << r.note << '\n';
      code = exit_assumption;
    }

  write_field(s.out_dir / "final_field.csv", *grid, res.final.members.front());
  write_law(s.out_dir / "final_law", res.final.law());
  const double L = grid->half_width();
  const std::vector<double> radii{0.25 * L, 0.5 * L, 0.75 * L};
  const std::vector<double> profile = tail_profile(res.final, radii);
  {
    std::ofstream tp(s.out_dir / "tail_profile.csv");
    tp << "radius,tail_mass\n";
    for (std::size_t i = 0; i < radii.size(); ++i)
      tp << format_double(radii[i]) << ',' << format_double(profile[i]) << '\n';
  }
  out << "simulated " << res.series.size() << " checkpoints to t = " << format_double(res.final.time) << '\n';
  return finish(m, code);
}

int cmd_picard(const Session& s, std::ostream& out, std::ostream& err) {
  const GridPtr grid = grid_from_config(s.cfg);
  const CanonicalInstance inst = instance_from_config(s.cfg, *grid);
  SchemeConfig sc = scheme_from_config(s.cfg);
  sc.dt = s.cfg.get_double("picard.dt");
  sc.M = static_cast<std::size_t>(s.cfg.get_int("picard.M"));
  sc.threads = s.threads;
  sc.validate(inst.coeffs);
  const long max_iters = s.cfg.get_int("picard.max_iters");
  if (max_iters < 1) throw ConfigError("picard.max_iters must be at least 1", "picard.max_iters");
  RunManifest m = start_manifest(s, "picard", *grid, &inst, err);
  if (max_iters < 2) {
    err << "not converged: a distance needs at least two iterations\n";
    write_picard(s.out_dir / "picard.csv", PicardResult{});
    return finish(m, exit_not_converged);
  }
  const EnsembleState init = make_initial_ensemble(
      grid, sc.M, family_from(s.cfg.get("scheme.initial_family")), s.cfg.get_double("scheme.initial_scale"), s.seed,
      0.0, sc.dt);
  const PicardResult res =
      picard_fixed_point(init, inst.coeffs, sc, s.cfg.get_double("picard.T"), s.cfg.get_double("picard.tol"),
                         static_cast<int>(max_iters), s.cfg.get_double("picard.eta"), s.seed);
  write_picard(s.out_dir / "picard.csv", res);
  if (!res.converged) {
    err << "not converged after " << res.distances.size() << " distances"
        << (res.non_contraction ? " (ratio above 1)" : "") << '\n';
    return finish(m, exit_not_converged);
  }
  out << "converged at iteration " << res.converged_at << '\n';
  return finish(m, exit_ok);
}

InitialClass class_from(const std::string& name) {
  if (name == "bounded") return InitialClass::bounded;
  if (name == "growing") return InitialClass::growing;
  if (name == "violating") return InitialClass::violating;
  throw ConfigError("pullback.family must be bounded, growing or violating, got '" + name + "'", "pullback.family");
}

int cmd_pullback(const Session& s, std::ostream& out, std::ostream& err) {
  const GridPtr grid = grid_from_config(s.cfg);
  const CanonicalInstance inst = instance_from_config(s.cfg, *grid);
  PullbackSchedule sch;
  sch.tau = s.cfg.get_double("pullback.tau");
  sch.depths = s.cfg.get_list("pullback.depths");
  if (sch.depths.size() < 2)
    throw ConfigError("pullback.depths needs at least two depths to form distances", "pullback.depths");
  sch.family = class_from(s.cfg.get("pullback.family"));
  sch.members = static_cast<std::size_t>(s.cfg.get_int("pullback.members"));
  sch.replicates = static_cast<int>(s.cfg.get_int("pullback.replicates"));
  sch.base_scale = s.cfg.get_double("scheme.initial_scale");
  try {
    sch.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), "pullback");
  }
  SchemeConfig sc = scheme_from_config(s.cfg);
  sc.M = sch.members;
  sc.threads = s.threads;
  sc.implicit_dissipative_nonlinearity = true;
  sc.validate(inst.coeffs);
  const double eta = s.cfg.get_double("model.eta");
  RunManifest m = start_manifest(s, "pullback", *grid, &inst, err);

  const double C = calibrate_absorbing_constant(inst.coeffs, sc, grid, s.seed,
                                                s.cfg.get_double("pullback.calibration_time"),
                                                monitor_options(s.cfg.get_double("model.omega")));
  const double radius = absorbing_radius(inst.coeffs, sch.tau, eta, *grid, C);
  m.set("absorbing_constant", C);
  m.set("absorbing_radius", radius);
  const PullbackReport rep = pullback_run(sch, inst.coeffs, sc, grid, radius, eta, s.seed);
  write_pullback(s.out_dir / "pullback.csv", rep);

  if (rep.laws.size() >= 2) {
    const TightnessReport tr = tightness_diagnostic(rep.laws);
    std::ofstream tf(s.out_dir / "tightness.csv");
    tf << "depth,tail_quarter,tail_half,tail_three_quarter,m4,h1_u,certificate_term\n";
    for (std::size_t i = 0; i < rep.laws.size(); ++i)
      tf << format_double(rep.records[i].depth) << ',' << format_double(tr.tails[i][0]) << ','
         << format_double(tr.tails[i][1]) << ',' << format_double(tr.tails[i][2]) << ','
         << format_double(tr.m4[i]) << ',' << format_double(tr.h1_u[i]) << ','
         << format_double(tr.certificate_terms[i]) << '\n';
  }
  {
    std::ofstream rf(s.out_dir / "pullback_report.txt");
    rf << "radius = " << format_double(rep.radius) << '\n';
    rf << "entry_depth = " << format_double(rep.entry_depth) << '\n';
    rf << "absorbing_entry = " << (rep.absorbing_entry ? "true" : "false") << '\n';
    rf << "absorbing_monotone = " << (rep.absorbing_monotone ? "true" : "false") << '\n';
    rf << "cauchy_ok = " << (rep.cauchy_ok ? "true" : "false") << '\n';
    rf << "cauchy_factor = " << format_double(rep.cauchy_factor) << '\n';
    rf << "class_violation = " << (rep.class_violation ? "true" : "false") << '\n';
    if (rep.failed) rf << "failure = " << rep.failure << '\n';
  }

  if (rep.class_violation) {
    err << "class violation: initial laws grow faster than the admissible rate\n";
    return finish(m, exit_class_violation);
  }
  if (rep.failed) {
    err << "pullback failed: " << rep.failure << '\n';
    return finish(m, exit_assumption);
  }
  if (!rep.cauchy_ok || !rep.absorbing_entry || !rep.absorbing_monotone) {
    err << "pullback trend not established (cauchy " << rep.cauchy_ok << ", entry " << rep.absorbing_entry
        << ", monotone " << rep.absorbing_monotone << ")\n";
    return finish(m, exit_not_converged);
  }
  out << "pullback entry at depth " << format_double(rep.entry_depth) << '\n';
  return finish(m, exit_ok);
}

int cmd_w2(const Session& s, const std::string& a, const std::string& b, std::ostream& out) {
  const GridPtr grid = grid_from_config(s.cfg);
  for (const auto& p : {a, b})
    if (!fs::exists(fs::path(p) / "atoms.csv") || !fs::exists(fs::path(p) / "weights.csv"))
      throw FormatError("no law found at " + p);
  const EmpiricalLaw la = read_law(a, grid);
  const EmpiricalLaw lb = read_law(b, grid);
  out << "metric,value,flag\n";
  if (la.size() <= kExactTransportCap && lb.size() <= kExactTransportCap) {
    out << "w2_exact," << format_double(wasserstein2_exact(la, lb)) << ",1\n";
  } else {
    const EntropicResult r = wasserstein2_entropic(la, lb, 0.01);
    out << "w2_entropic," << format_double(r.value) << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return exit_ok;
}

}  // namespace

GridPtr grid_from_config(const RunConfig& cfg) {
  const long n = cfg.get_int("grid.n");
  const long N = cfg.get_int("grid.N");
  const double L = cfg.get_double("grid.L");
  if (n < 1 || n > 3) throw ConfigError("grid.n must be 1, 2 or 3", "grid.n");
  if (N < 3) throw ConfigError("grid.N must be at least 3", "grid.N");
  if (!(L > 0.0)) throw ConfigError("grid.L must be positive", "grid.L");
  return make_grid(static_cast<int>(n), L, static_cast<int>(N));
}

CanonicalInstance instance_from_config(const RunConfig& cfg, const SpatialGrid& grid) {
  if (cfg.get_double("model.p") != 4.0) throw ConfigError("model.p must be 4", "model.p");
  const long K = cfg.get_int("model.K");
  if (K < 1) throw ConfigError("model.K must be at least 1", "model.K");
  const std::string kind = cfg.get("model.kind");
  if (kind == "zero") {
    CanonicalInstance inst;
    inst.coeffs = zero_coefficients(static_cast<std::size_t>(K));
    return inst;
  }
  if (kind != "canonical") throw ConfigError("model.kind must be canonical or zero, got '" + kind + "'", "model.kind");
  CanonicalParams p;
  p.eps_couple = cfg.get_double("model.eps_couple");
  p.K = static_cast<int>(K);
  p.omega = cfg.get_double("model.omega");
  p.lambda = cfg.get_double("model.lambda");
  if (!cfg.is_blank("model.gamma")) p.gamma = cfg.get_double("model.gamma");
  p.alpha = cfg.get_double("model.alpha");
  p.beta = cfg.get_double("model.beta");
  p.forcing_u = cfg.get_double("model.forcing_u");
  p.forcing_v = cfg.get_double("model.forcing_v");
  p.eta = cfg.get_double("model.eta");
  p.auto_scale = cfg.get_bool("model.auto_scale");
  if (!(p.eta > 0.0 && p.eta < 1.0)) throw ConfigError("model.eta must lie in (0, 1)", "model.eta");
  return canonical_instance(p, grid);
}

SchemeConfig scheme_from_config(const RunConfig& cfg) {
  SchemeConfig sc;
  sc.dt = cfg.get_double("scheme.dt");
  const long M = cfg.get_int("scheme.M");
  if (M < 1) throw ConfigError("scheme.M must be at least 1", "scheme.M");
  sc.M = static_cast<std::size_t>(M);
  const std::string kind = cfg.get("scheme.kind");
  if (kind == "semi_implicit") sc.scheme = SchemeKind::semi_implicit;
  else if (kind == "explicit_euler") sc.scheme = SchemeKind::explicit_euler;
  else throw ConfigError("scheme.kind must be semi_implicit or explicit_euler", "scheme.kind");
  sc.checkpoint_stride = static_cast<int>(cfg.get_int("scheme.checkpoint_stride"));
  sc.noise = cfg.get_bool("scheme.noise");
  sc.implicit_dissipative_nonlinearity = cfg.get_bool("scheme.implicit_nonlinearity");
  if (!cfg.is_blank("scheme.tail_radius")) sc.tail_radius = cfg.get_double("scheme.tail_radius");
  return sc;
}

MonitorOptions monitor_options(double omega) {
  MonitorOptions opts;
  if (omega > 0.0) {
    opts.smoothing_window = 2.0 * std::numbers::pi / omega;
    opts.fit_window = 10.0;
  }
  return opts;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::vector<std::string>& env) {
  CLI::App app{"Mean-field stochastic FitzHugh-Nagumo experiments", "mvfhn"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::uint64_t seed = 1;
  int threads = 1;
  app.add_option("--config", config_path, "Flat key = value configuration file");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  app.add_subcommand("check", "Check the structural assumptions and the dissipativity margin");
  app.add_subcommand("simulate", "Run the ensemble and the bound monitors");
  app.add_subcommand("picard", "Picard iteration on law paths");
  app.add_subcommand("pullback", "Pullback Cauchy and absorbing-ball diagnostics");
  auto* w2 = app.add_subcommand("w2", "W2 distance between two serialized laws");
  std::string law_a, law_b;
  w2->add_option("law_a", law_a, "Law directory")->required();
  w2->add_option("law_b", law_b, "Law directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  }

  Session s;
  s.seed = seed;
  s.threads = threads;
  try {
    s.cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    s.cfg.apply_environment(env);
    if (!out_dir.empty()) s.cfg.set("output.dir", out_dir);
    s.out_dir = s.cfg.get("output.dir");
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "w2") return cmd_w2(s, law_a, law_b, out);
    fs::create_directories(s.out_dir);
    if (name == "check") return cmd_check(s, out, err);
    if (name == "simulate") return cmd_simulate(s, out, err);
    if (name == "picard") return cmd_picard(s, out, err);
    return cmd_pullback(s, out, err);
  } catch (const ConfigError& e) {
    err << "config error (" << e.key << "): " << e.what() << '\n';
    return exit_usage;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << '\n';
    return exit_usage;
  } catch (const StructuralError& e) {
    err << "structural error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return exit_assumption;
  }
}

}  // namespace mvfhn
