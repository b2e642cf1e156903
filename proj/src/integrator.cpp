#include "mvfhn/integrator.hpp"

#include "mvfhn/parallel.hpp"
#include "mvfhn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvfhn {

void SchemeConfig::validate(const CoefficientSet& coeffs) const {
  if (!(dt > 0.0)) throw std::invalid_argument("scheme: dt must be positive");
  if (M < 1) throw std::invalid_argument("scheme: M must be at least 1");
  if (checkpoint_stride < 1) throw std::invalid_argument("scheme: checkpoint_stride must be at least 1");
  if (scheme == SchemeKind::explicit_euler && !(dt * coeffs.lambda < 10.0))
    throw std::invalid_argument("scheme: explicit mode needs dt * lambda < 10");
  coeffs.validate();
}

EnsembleState ensemble_from_members(GridPtr grid, std::vector<FieldPair> members, double t0, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("ensemble: dt must be positive");
  const auto step = static_cast<std::int64_t>(std::llround(t0 / dt));
  if (std::abs(static_cast<double>(step) * dt - t0) > 1e-9 * std::max(1.0, std::abs(t0)))
    throw std::invalid_argument("ensemble: start time is not on the step grid");
  for (const auto& m : members)
    if (m.u.size() != grid->size() || m.v.size() != grid->size())
      throw StructuralError("ensemble: member does not match the grid");
  EnsembleState s;
  s.grid = std::move(grid);
  s.members = std::move(members);
  s.stream_ids.resize(s.members.size());
  for (std::size_t j = 0; j < s.stream_ids.size(); ++j) s.stream_ids[j] = j;
  s.step_index = step;
  s.time = static_cast<double>(step) * dt;
  return s;
}

EnsembleState make_initial_ensemble(GridPtr grid, std::size_t M, InitialFamily family, double scale,
                                    std::uint64_t seed, double t0, double dt) {
  const SpatialGrid& g = *grid;
  const std::uint64_t init_seed = splitmix64(seed ^ 0x1A17DA7AULL);
  std::vector<FieldPair> members(M);
  for (std::size_t j = 0; j < M; ++j) {
    const CounterStream stream(init_seed, j);
    const auto a = stream.normals(0, 0);
    FieldPair k = FieldPair::zeros(g);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double r2 = g.point(i).squaredNorm();
      const double bump = std::exp(-0.5 * r2);
      if (family == InitialFamily::gaussian) {
        k.u[i] = scale * (1.0 + 0.2 * a[0]) * bump;
      } else {
        const auto z = stream.normals(1 + i, 0);
        k.u[i] = scale * z[0] * std::exp(-0.125 * r2);
      }
      k.v[i] = scale * (0.5 + 0.1 * a[1]) * bump;
    }
    members[j] = std::move(k);
  }
  return ensemble_from_members(std::move(grid), std::move(members), t0, dt);
}

IncrementSource default_increments(std::size_t K, std::uint64_t master_seed) {
  return [K, master_seed](std::uint64_t stream, std::int64_t step, double dt) {
    return sample_increments(K, dt, stream, step, master_seed);
  };
}

double law_scalar(const EnsembleState& state, const CoefficientSet& coeffs) {
  if (coeffs.law_summary) return coeffs.law_summary(state.law());
  std::vector<double> sq(state.size());
  for (std::size_t j = 0; j < state.size(); ++j) sq[j] = l2_norm_sq(*state.grid, state.members[j].u);
  return symmetric_mean(sq);
}

void advance_v1(GridField& v1, double delta_dw, double dt, double gamma) {
  v1 = (v1 + delta_dw * v1) / (1.0 + dt * gamma);
}

namespace {

NodeReaction make_reaction(const CoefficientSet& c, double t, double m2, const SpatialGrid& g) {
  if (c.node_reaction) return c.node_reaction(t, m2, g);
  std::vector<Point> pts(static_cast<std::size_t>(g.size()));
  for (Eigen::Index i = 0; i < g.size(); ++i) pts[i] = g.point(i);
  return [&c, t, m2, pts = std::move(pts)](const GridField& u, GridField& f, GridField& g1) {
    f.resize(u.size());
    g1.resize(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      f[i] = c.f(t, pts[i], u[i], m2);
      g1[i] = c.G1(t, pts[i], u[i], m2);
    }
  };
}

}  // namespace

EnsembleState em_step(const EnsembleState& state, const CoefficientSet& coeffs, const SchemeConfig& cfg,
                      std::uint64_t master_seed) {
  return em_step(state, coeffs, cfg, default_increments(coeffs.modes(), master_seed));
}

EnsembleState em_step(const EnsembleState& state, const CoefficientSet& c, const SchemeConfig& cfg,
                      const IncrementSource& increments, std::optional<double> m2_override) {
  const SpatialGrid& g = *state.grid;
  const double dt = cfg.dt;
  const double t = state.time;
  const std::int64_t n = state.step_index;
  const double m2 = m2_override ? *m2_override : law_scalar(state, c);
  const std::size_t M = state.size();
  const bool split = cfg.track_split && state.v1.size() == M && state.v2.size() == M;

  const NoiseTables tab = NoiseTables::build(t, c, g, evaluate_w(c, g));
  const NodeReaction reaction = make_reaction(c, t, m2, g);
  const GridField G2 = c.G2 ? sample(g, [&](const Point& x) { return c.G2(t, x); }) : GridField::Zero(g.size());
  GridField f0, g0;
  if (cfg.implicit_dissipative_nonlinearity) reaction(GridField::Zero(g.size()), f0, g0);

  EnsembleState next;
  next.grid = state.grid;
  next.stream_ids = state.stream_ids;
  next.members.resize(M);
  if (split) {
    next.v1.resize(M);
    next.v2.resize(M);
  }
  const double denom_v = 1.0 + dt * c.gamma;

  parallel_for(M, cfg.threads, [&](std::size_t j) {
    const FieldPair& k = state.members[j];
    Eigen::VectorXd dW = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.modes()));
    if (cfg.noise) {
      const WienerIncrement inc = increments(state.stream_ids[j], n, dt);
      if (inc.dW.size() != c.modes()) throw std::invalid_argument("em_step: increment length mismatch");
      for (std::size_t q = 0; q < inc.dW.size(); ++q) dW[q] = inc.dW[q];
    }
    GridField fu, g1;
    reaction(k.u, fu, g1);
    GridField noise_u, theta2_dw;
    double dd = 0.0;
    if (cfg.noise) {
      noise_u = sigma_noise(tab, t, k.u, m2, dW, c);
      theta2_dw = tab.theta2 * dW;
      dd = tab.delta.dot(dW);
    } else {
      noise_u = GridField::Zero(g.size());
      theta2_dw = GridField::Zero(g.size());
    }
    FieldPair out;
    if (cfg.scheme == SchemeKind::semi_implicit) {
      GridField diag = GridField::Constant(g.size(), 1.0 + dt * c.lambda);
      GridField rhs = k.u - dt * (c.alpha * k.v + fu - g1) + noise_u;
      if (cfg.implicit_dissipative_nonlinearity) {
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const double q = k.u[i] != 0.0 ? std::max(0.0, (fu[i] - f0[i]) / k.u[i]) : 0.0;
          diag[i] += dt * q;
          rhs[i] += dt * q * k.u[i];
        }
      }
      out.u = solve_shifted_laplacian(g, diag, dt * c.diffusivity, rhs);
      out.v = (k.v + dt * (c.beta * k.u + G2) + theta2_dw + dd * k.v) / denom_v;
      if (split) {
        next.v1[j] = state.v1[j];
        advance_v1(next.v1[j], dd, dt, c.gamma);
        next.v2[j] = (state.v2[j] + dt * (c.beta * k.u + G2) + theta2_dw + dd * state.v2[j]) / denom_v;
      }
    } else {
      GridField lap = c.diffusivity != 0.0 ? laplacian(g, k.u) : GridField::Zero(g.size());
      out.u = k.u + dt * (c.diffusivity * lap - c.lambda * k.u - c.alpha * k.v - fu + g1) + noise_u;
      out.v = k.v + dt * (-c.gamma * k.v + c.beta * k.u + G2) + theta2_dw + dd * k.v;
      if (split) {
        next.v1[j] = state.v1[j] - dt * c.gamma * state.v1[j] + dd * state.v1[j];
        next.v2[j] = state.v2[j] + dt * (-c.gamma * state.v2[j] + c.beta * k.u + G2) + theta2_dw +
                     dd * state.v2[j];
      }
    }
    if (!out.u.allFinite() || !out.v.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite state at step " << n << " (member " << j << ")";
      throw BlowUpError(msg.str(), n);
    }
    next.members[j] = std::move(out);
  });

  next.step_index = n + 1;
  next.time = static_cast<double>(n + 1) * dt;
  return next;
}

double LawPath::m2_at(double t) const {
  if (times.empty()) throw std::out_of_range("law path is empty");
  const double slack = 1e-9 * std::max(1.0, std::abs(times.back()));
  if (t < times.front() - slack || t > times.back() + slack) {
    std::ostringstream msg;
    msg << "time " << t << " outside the law path [" << times.front() << ", " << times.back() << "]";
    throw std::out_of_range(msg.str());
  }
  if (times.size() == 1) return m2_values.front();
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t hi = std::clamp<std::size_t>(static_cast<std::size_t>(it - times.begin()), 1, times.size() - 1);
  const std::size_t lo = hi - 1;
  const double span = times[hi] - times[lo];
  const double s = span > 0 ? std::clamp((t - times[lo]) / span, 0.0, 1.0) : 0.0;
  if (s == 0.0) return m2_values[lo];
  if (s == 1.0) return m2_values[hi];
  return m2_values[lo] + s * (m2_values[hi] - m2_values[lo]);
}

SeriesRow checkpoint_row(const EnsembleState& state, const CoefficientSet& c, double tail_radius) {
  const SpatialGrid& g = *state.grid;
  const std::size_t M = state.size();
  const double R = std::isnan(tail_radius) ? 0.5 * g.half_width() : tail_radius;
  std::vector<double> uu(M), vv(M), en(M), m4(M), tail(M), h1(M), en4(M), hv2(M);
  for (std::size_t j = 0; j < M; ++j) {
    const FieldPair& k = state.members[j];
    uu[j] = l2_norm_sq(g, k.u);
    vv[j] = l2_norm_sq(g, k.v);
    en[j] = c.beta * uu[j] + c.alpha * vv[j];
    m4[j] = (uu[j] + vv[j]) * (uu[j] + vv[j]);
    en4[j] = c.beta * uu[j] * uu[j] + c.alpha * vv[j] * vv[j];
    tail[j] = tail_mass(g, k, R).mass;
    h1[j] = uu[j] + gradient_norm_sq(g, k.u);
    if (state.v2.size() == M) hv2[j] = gradient_norm_sq(g, state.v2[j]);
  }
  SeriesRow row;
  row.t = state.time;
  row.mean_u_l2sq = symmetric_mean(uu);
  row.mean_v_l2sq = symmetric_mean(vv);
  row.energy = symmetric_mean(en);
  row.m4 = symmetric_mean(m4);
  row.tail_mass = symmetric_mean(tail);
  row.h1_u = symmetric_mean(h1);
  row.energy4 = symmetric_mean(en4);
  if (state.v2.size() == M) row.h1_v2 = symmetric_mean(hv2);
  return row;
}

namespace {

EmpiricalLaw leading_law(const EnsembleState& s, std::size_t count) {
  const std::size_t n = std::min(count, s.size());
  std::vector<FieldPair> atoms(s.members.begin(), s.members.begin() + static_cast<std::ptrdiff_t>(n));
  return EmpiricalLaw::uniform(s.grid, std::move(atoms));
}

}  // namespace

SimulationResult simulate(const EnsembleState& initial, const CoefficientSet& c, const SchemeConfig& cfg,
                          double t_end, std::uint64_t master_seed, const SimulateOptions& opts) {
  cfg.validate(c);
  if (initial.size() == 0) throw std::invalid_argument("simulate: empty ensemble");
  if (t_end < initial.time - 1e-12 * std::max(1.0, std::abs(t_end)))
    throw std::invalid_argument("simulate: t_end precedes the initial time");
  const auto steps = std::max<std::int64_t>(0, std::llround((t_end - initial.time) / cfg.dt));
  const IncrementSource inc = opts.increments ? *opts.increments : default_increments(c.modes(), master_seed);

  SimulationResult res;
  res.final = initial;
  if (cfg.track_split && res.final.v1.size() != initial.size()) {
    res.final.v1.clear();
    res.final.v2.clear();
    for (const auto& k : initial.members) {
      res.final.v1.push_back(k.v);
      res.final.v2.push_back(GridField::Zero(k.v.size()));
    }
  }
  const bool want_w2 = cfg.w2_members > 0;
  std::optional<EmpiricalLaw> prev;
  auto record = [&]() {
    SeriesRow row = checkpoint_row(res.final, c, cfg.tail_radius);
    if (want_w2) {
      EmpiricalLaw cur = leading_law(res.final, std::min(cfg.w2_members, kExactTransportCap));
      if (prev) row.w2_prev = wasserstein2_exact(*prev, cur);
      prev = std::move(cur);
    }
    res.series.push_back(row);
    if (cfg.keep_laws) res.law_path.laws.push_back(res.final.law());
  };

  double m2 = opts.frozen ? opts.frozen->m2_at(res.final.time) : law_scalar(res.final, c);
  res.law_path.times.push_back(res.final.time);
  res.law_path.m2_values.push_back(opts.frozen ? law_scalar(res.final, c) : m2);
  record();
  for (std::int64_t s = 1; s <= steps; ++s) {
    try {
      res.final = em_step(res.final, c, cfg, inc, m2);
      const double realized = law_scalar(res.final, c);
      m2 = opts.frozen ? opts.frozen->m2_at(res.final.time) : realized;
      res.law_path.times.push_back(res.final.time);
      res.law_path.m2_values.push_back(realized);
      if (s % cfg.checkpoint_stride == 0 || s == steps) record();
    } catch (const std::exception& e) {
      throw SimulationError(e.what(), std::move(res));
    }
  }
  return res;
}

LawPath picard_solve_frozen(const EnsembleState& xi0, const LawPath& path, const CoefficientSet& c,
                            const SchemeConfig& cfg, double T, std::uint64_t master_seed) {
  path.m2_at(xi0.time);
  path.m2_at(xi0.time + T);
  SchemeConfig run = cfg;
  run.checkpoint_stride = std::numeric_limits<int>::max();
  run.w2_members = 0;
  run.keep_laws = false;
  run.track_split = false;
  SimulateOptions opts;
  opts.frozen = &path;
  return simulate(xi0, c, run, xi0.time + T, master_seed, opts).law_path;
}

double picard_distance(const LawPath& a, const LawPath& b, double eta) {
  if (a.times.empty()) return 0.0;
  const double t0 = a.times.front();
  double d = 0.0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    const double diff = std::abs(a.m2_values[i] - b.m2_at(a.times[i]));
    d = std::max(d, std::exp(-eta * (a.times[i] - t0)) * std::sqrt(diff));
  }
  return d;
}

PicardResult picard_fixed_point(const EnsembleState& xi0, const CoefficientSet& c, const SchemeConfig& cfg,
                                double T, double tol, int max_iters, double eta_picard,
                                std::uint64_t master_seed) {
  if (max_iters < 2) throw std::invalid_argument("picard: max_iters must be at least 2");
  if (!(T > 0.0)) throw std::invalid_argument("picard: T must be positive");
  PicardResult out;
  LawPath current;
  const double m20 = law_scalar(xi0, c);
  current.times = {xi0.time, xi0.time + T};
  current.m2_values = {m20, m20};
  for (int m = 0; m < max_iters; ++m) {
    LawPath next = picard_solve_frozen(xi0, current, c, cfg, T, master_seed);
    const double d = picard_distance(next, current, eta_picard);
    out.distances.push_back(d);
    if (m >= 1 && out.distances[m - 1] > 0.0) out.ratios.push_back(d / out.distances[m - 1]);
    current = std::move(next);
    if (d < tol) {
      out.converged = true;
      out.converged_at = m;
      break;
    }
  }
  const std::size_t nr = out.ratios.size();
  out.non_contraction = nr >= 2 && out.ratios[nr - 1] >= 1.0 && out.ratios[nr - 2] >= 1.0;
  out.law_path = std::move(current);
  return out;
}

}  // namespace mvfhn
