#include "mvfhn/splitting.hpp"

#include "mvfhn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mvfhn {

V1Result simulate_v1(GridPtr grid, const std::vector<GridField>& xi2, double gamma,
                     const std::vector<double>& delta, double T, double dt, std::uint64_t master_seed,
                     int record_stride, double t0, int threads) {
  double dsq = 0.0;
  for (double d : delta) dsq += d * d;
  if (!(2.0 * gamma > dsq)) throw std::invalid_argument("simulate_v1: needs 2 gamma > ||delta||^2");
  if (!(dt > 0.0) || !(T >= 0.0)) throw std::invalid_argument("simulate_v1: bad time step or horizon");
  if (record_stride < 1) throw std::invalid_argument("simulate_v1: record_stride must be >= 1");
  const SpatialGrid& g = *grid;
  const std::size_t M = xi2.size();
  const std::size_t K = delta.size();
  const auto n0 = static_cast<std::int64_t>(std::llround(t0 / dt));
  const auto steps = static_cast<std::int64_t>(std::llround(T / dt));

  V1Result res;
  res.members = xi2;
  std::vector<double> sq(M);
  auto record = [&](std::int64_t n) {
    for (std::size_t j = 0; j < M; ++j) sq[j] = l2_norm_sq(g, res.members[j]);
    const double mean = symmetric_mean(sq);
    double var = 0.0;
    for (double s : sq) var += (s - mean) * (s - mean);
    var = M > 1 ? var / static_cast<double>(M - 1) : 0.0;
    res.times.push_back(static_cast<double>(n) * dt);
    res.mean_sq.push_back(mean);
    res.std_error.push_back(std::sqrt(var / static_cast<double>(std::max<std::size_t>(M, 1))));
  };
  record(n0);
  for (std::int64_t s = 0; s < steps; ++s) {
    const std::int64_t n = n0 + s;
    parallel_for(M, threads, [&](std::size_t j) {
      const WienerIncrement inc = sample_increments(K, dt, j, n, master_seed);
      double dd = 0.0;
      for (std::size_t k = 0; k < K; ++k) dd += delta[k] * inc.dW[k];
      advance_v1(res.members[j], dd, dt, gamma);
    });
    if ((s + 1) % record_stride == 0 || s + 1 == steps) record(n + 1);
  }
  return res;
}

V2Result simulate_v2(GridPtr grid, const std::vector<std::vector<GridField>>& u_paths, const CoefficientSet& c,
                     double t0, double dt, std::uint64_t master_seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate_v2: dt must be positive");
  const SpatialGrid& g = *grid;
  const std::size_t M = u_paths.empty() ? 0 : u_paths.front().size();
  for (const auto& step : u_paths) {
    if (step.size() != M) throw StructuralError("simulate_v2: ragged u paths");
    for (const auto& u : step)
      if (u.size() != g.size()) throw StructuralError("simulate_v2: u path does not match the grid");
  }
  const auto n0 = static_cast<std::int64_t>(std::llround(t0 / dt));
  const GridField w = evaluate_w(c, g);
  V2Result res;
  res.members.assign(M, GridField::Zero(g.size()));
  auto record = [&](std::int64_t n) {
    std::vector<double> gs(M);
    for (std::size_t j = 0; j < M; ++j) gs[j] = gradient_norm_sq(g, res.members[j]);
    res.times.push_back(static_cast<double>(n) * dt);
    res.mean_grad_sq.push_back(symmetric_mean(gs));
  };
  record(n0);
  const double denom = 1.0 + dt * c.gamma;
  for (std::size_t s = 0; s < u_paths.size(); ++s) {
    const std::int64_t n = n0 + static_cast<std::int64_t>(s);
    const double t = static_cast<double>(n) * dt;
    const NoiseTables tab = NoiseTables::build(t, c, g, w);
    const GridField G2 = c.G2 ? sample(g, [&](const Point& x) { return c.G2(t, x); }) : GridField::Zero(g.size());
    for (std::size_t j = 0; j < M; ++j) {
      const WienerIncrement inc = sample_increments(c.modes(), dt, j, n, master_seed);
      const Eigen::Map<const Eigen::VectorXd> dW(inc.dW.data(), static_cast<Eigen::Index>(inc.dW.size()));
      const GridField theta2_dw = tab.theta2 * dW;
      const double dd = tab.delta.dot(dW);
      GridField& v2 = res.members[j];
      v2 = (v2 + dt * (c.beta * u_paths[s][j] + G2) + theta2_dw + dd * v2) / denom;
    }
    record(n + 1);
  }
  return res;
}

SplitState split_state(const EnsembleState& state) {
  if (state.v1.size() != state.size() || state.v2.size() != state.size())
    throw StructuralError("split_state: the run did not track v1 and v2");
  SplitState out;
  out.v1 = state.v1;
  out.v2 = state.v2;
  const SpatialGrid& g = *state.grid;
  for (std::size_t j = 0; j < state.size(); ++j) {
    const double ref = l2_norm(g, state.members[j].v);
    const double diff = l2_norm(g, GridField(state.v1[j] + state.v2[j] - state.members[j].v));
    out.consistency_residual = std::max(out.consistency_residual, ref > 0 ? diff / ref : diff);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double ls_slope(const std::vector<double>& t, const std::vector<double>& y, std::size_t lo, std::size_t hi) {
  const double n = static_cast<double>(hi - lo);
  double mt = 0, my = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    sxy += (t[i] - mt) * (y[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

// Standard error of the least-squares slope; a trailing average of width
// `smoothing` leaves about one independent value per width.
double slope_std_error(const std::vector<double>& t, const std::vector<double>& y, std::size_t lo, std::size_t hi,
                       double smoothing) {
  const std::size_t n = hi - lo;
  if (n < 3) return 0.0;
  const double b = ls_slope(t, y, lo, hi);
  double mt = 0, my = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double rss = 0, sxx = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double r = y[i] - my - b * (t[i] - mt);
    rss += r * r;
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  if (sxx <= 0) return 0.0;
  const double span = t[hi - 1] - t[lo];
  const double n_eff = smoothing > 0 ? std::clamp(span / smoothing, 2.0, static_cast<double>(n)) : n;
  return std::sqrt(rss / static_cast<double>(n - 2) / sxx * static_cast<double>(n) / n_eff);
}

// Mean of the piecewise-linear interpolant over [t_i - window, t_i].
std::vector<double> trailing_average(const std::vector<double>& t, const std::vector<double>& y, double window) {
  if (window <= 0) return y;
  const std::size_t n = y.size();
  std::vector<double> cum(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) cum[i] = cum[i - 1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  std::vector<double> out(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = t[i] - window;
    if (i == 0) {
      out[i] = y[0];
    } else if (a <= t[0]) {
      out[i] = cum[i] / (t[i] - t[0]);
    } else {
      while (t[k + 1] <= a) ++k;
      const double ya = y[k] + (y[k + 1] - y[k]) * (a - t[k]) / (t[k + 1] - t[k]);
      out[i] = (cum[i] - cum[k + 1] + 0.5 * (t[k + 1] - a) * (ya + y[k + 1])) / window;
    }
  }
  return out;
}

std::vector<double> column(const std::vector<SeriesRow>& s, double SeriesRow::*field) {
  std::vector<double> out;
  out.reserve(s.size());
  for (const auto& r : s) out.push_back(r.*field);
  return out;
}

std::vector<double> times_of(const std::vector<SeriesRow>& s) { return column(s, &SeriesRow::t); }

}  // namespace

EstimateReport fit_estimate(std::string name, const std::vector<double>& times, const std::vector<double>& values,
                            const MonitorOptions& opts) {
  if (times.size() != values.size()) throw std::invalid_argument("fit_estimate: length mismatch");
  if (times.size() < 10) throw std::invalid_argument("fit_estimate: series needs at least 10 rows");
  EstimateReport rep;
  rep.name = std::move(name);
  rep.times = times;
  rep.values = values;
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    rep.dissipativity_failure = true;
    rep.note = "non-finite values: the run blew up";
    return rep;
  }
  const std::size_t n = values.size();
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  const double floor = opts.floor * std::max(peak, 1e-300);
  const std::vector<double> smooth = trailing_average(times, values, opts.smoothing_window);

  // Sliding-window flatness.
  std::vector<char> flat(n, 0);
  std::size_t lo = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (times[lo] < times[i] - opts.fit_window) ++lo;
    if (times[i] - times[0] < opts.fit_window + opts.smoothing_window || i - lo + 1 < 3) continue;
    double mean = 0.0;
    for (std::size_t k = lo; k <= i; ++k) mean += smooth[k];
    mean /= static_cast<double>(i - lo + 1);
    const double slope = ls_slope(times, smooth, lo, i + 1);
    double top = 0.0, hi = -std::numeric_limits<double>::infinity(), low = -hi;
    for (std::size_t k = lo; k <= i; ++k) {
      top = std::max(top, std::abs(smooth[k]));
      hi = std::max(hi, smooth[k]);
      low = std::min(low, smooth[k]);
    }
    // A slope indistinguishable from Monte-Carlo wander also counts as flat,
    // provided the window stays inside a narrow band.
    const double se = slope_std_error(times, smooth, lo, i + 1, opts.smoothing_window);
    const bool wander = hi - low <= opts.noise_band * std::abs(mean) && std::abs(slope) <= 2.0 * se;
    flat[i] = std::abs(slope) < opts.slope_tol * std::max(std::abs(mean), floor) || top <= floor || wander;
  }
  std::size_t run = 0, steady_index = n;
  for (std::size_t i = 0; i < n; ++i) {
    run = flat[i] ? run + 1 : 0;
    if (run >= static_cast<std::size_t>(std::max(opts.consecutive, 1))) {
      steady_index = i + 1 - run;
      break;
    }
  }

  if (steady_index == n) {
    const std::size_t half = n / 2;
    const double slope = ls_slope(times, values, half, n);
    std::size_t ups = 0;
    for (std::size_t i = half + 1; i < n; ++i) ups += values[i] > values[i - 1];
    const bool growing = slope > 0 && values.back() > 2.0 * std::max(values[half], floor) &&
                         ups * 5 >= (n - half - 1) * 4;
    rep.dissipativity_failure = growing;
    rep.note = growing ? "monotone growth: check the dissipativity margin" : "no steady state detected";
    rep.fitted_level = smooth.back();
    rep.gate = rep.fitted_level * opts.safety + floor;
    return rep;
  }

  rep.steady = true;
  rep.steady_time = times[steady_index];
  if (n - steady_index < 4) {
    rep.fitted_level = smooth.back();
    rep.gate = rep.fitted_level * opts.safety + floor;
    rep.note = "steady segment too short to check the band";
    return rep;
  }
  // Band fitted on the first half of the steady segment, checked on the second.
  const std::size_t mid = steady_index + (n - steady_index + 1) / 2;
  double level = 0.0, upper = 0.0;
  for (std::size_t i = steady_index; i < n; ++i) level += smooth[i];
  level /= static_cast<double>(n - steady_index);
  for (std::size_t i = steady_index; i < mid; ++i) upper = std::max(upper, smooth[i]);
  rep.extras["mean_level"] = level;
  rep.fitted_level = upper;
  rep.gate = upper * opts.safety + floor;
  rep.pass = std::all_of(smooth.begin() + static_cast<std::ptrdiff_t>(mid), smooth.end(),
                         [&](double v) { return v <= rep.gate; });
  if (!rep.pass) rep.note = "post-transient values leave the fitted band";

  std::vector<double> lt, ly;
  for (std::size_t i = 0; i < steady_index; ++i) {
    const double excess = std::abs(values[i] - level);
    if (excess > 1e-3 * std::max(std::abs(level), floor)) {
      lt.push_back(times[i]);
      ly.push_back(std::log(excess));
    }
  }
  rep.fitted_rate = lt.size() >= 3 ? -ls_slope(lt, ly, 0, lt.size()) : 0.0;
  return rep;
}

EstimateReport energy_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts, double eta,
                              double I2) {
  EstimateReport rep = fit_estimate("energy", times_of(series), column(series, &SeriesRow::energy), opts);
  const auto t = times_of(series);
  const auto h1 = column(series, &SeriesRow::h1_u);
  double J = 0.0, Jmax = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double decay = std::exp(-eta * (t[i] - t[i - 1]));
    J = decay * J + 0.5 * (t[i] - t[i - 1]) * (h1[i] + decay * h1[i - 1]);
    Jmax = std::max(Jmax, J);
  }
  rep.extras["weighted_h1_max"] = Jmax;
  if (I2 >= 0) rep.extras["weighted_h1_ratio"] = Jmax / (1.0 + I2);
  return rep;
}

EstimateReport fourth_moment_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts) {
  return fit_estimate("fourth_moment", times_of(series), column(series, &SeriesRow::energy4), opts);
}

EstimateReport tail_monitor(const std::vector<SeriesRow>& series, double gate, const MonitorOptions& opts) {
  EstimateReport rep = fit_estimate("tail", times_of(series), column(series, &SeriesRow::tail_mass), opts);
  const std::size_t n = rep.values.size();
  std::size_t start = n / 2;
  if (rep.steady)
    start = static_cast<std::size_t>(std::lower_bound(rep.times.begin(), rep.times.end(), rep.steady_time) -
                                     rep.times.begin());
  const std::vector<double> smooth = trailing_average(rep.times, rep.values, opts.smoothing_window);
  double worst = 0.0, mean = 0.0;
  for (std::size_t i = start; i < n; ++i) {
    worst = std::max(worst, smooth[i]);
    mean += rep.values[i];
  }
  mean /= static_cast<double>(std::max<std::size_t>(n - start, 1));
  rep.fitted_level = mean;
  rep.gate = gate;
  rep.extras["post_transient_max"] = worst;
  rep.pass = std::isfinite(worst) && worst < gate;
  rep.note = rep.pass ? "" : "tail mass above the gate";
  return rep;
}

EstimateReport h1_monitor(const std::vector<SeriesRow>& series, const MonitorOptions& opts) {
  const auto t = times_of(series);
  EstimateReport rep = fit_estimate("h1", t, column(series, &SeriesRow::h1_u), opts);
  std::vector<double> combined(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) combined[i] = series[i].h1_u + series[i].mean_v_l2sq;
  const std::vector<double> avg = trailing_average(t, combined, 1.0);
  const EstimateReport window = fit_estimate("h1_window", t, avg, opts);
  rep.extras["window_average_level"] = window.fitted_level;
  rep.pass = rep.pass && window.pass;
  if (!window.pass && rep.note.empty()) rep.note = "unit-window average not bounded";
  return rep;
}

std::vector<double> tail_profile(const EnsembleState& state, const std::vector<double>& radii) {
  std::vector<double> out;
  for (double R : radii) {
    std::vector<double> tails(state.size());
    for (std::size_t j = 0; j < state.size(); ++j) tails[j] = tail_mass(*state.grid, state.members[j], R).mass;
    out.push_back(symmetric_mean(tails));
  }
  return out;
}

}  // namespace mvfhn
