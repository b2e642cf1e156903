#include "mvfhn/model.hpp"

#include "mvfhn/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mvfhn {

namespace {

double eval_or_zero(const SpaceTimeFn& fn, double t, const Point& x) { return fn ? fn(t, x) : 0.0; }
double eval_or_zero(const SpaceFn& fn, const Point& x) { return fn ? fn(x) : 0.0; }
double entry_or_zero(const std::vector<double>& v, std::size_t k) { return k < v.size() ? v[k] : 0.0; }

double sum_sq(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace

double CoefficientSet::sigma_value(std::size_t k, double t, double u, double m2) const {
  if (k < sigma.size() && sigma[k]) return sigma[k](t, u, m2);
  if (sigma_separable && sigma_separable->shape)
    return entry_or_zero(sigma_separable->scale, k) * sigma_separable->shape(t, u, m2);
  return 0.0;
}

double CoefficientSet::delta_l2_sq() const { return sum_sq(delta); }

void CoefficientSet::validate() const {
  const std::size_t K = modes();
  std::ostringstream err;
  if (K == 0) err << "no noise modes; ";
  if (!f) err << "f missing; ";
  if (!G1) err << "G1 missing; ";
  if (!G2) err << "G2 missing; ";
  if (!w) err << "w missing; ";
  if (sigma.empty()) {
    if (!sigma_separable || !sigma_separable->shape || sigma_separable->scale.size() != K)
      err << "sigma must list K modes; ";
  } else if (sigma.size() != K) {
    err << "sigma has " << sigma.size() << " modes, expected " << K << "; ";
  }
  if (theta1.size() != K) err << "theta1 has " << theta1.size() << " modes, expected " << K << "; ";
  if (theta2.size() != K) err << "theta2 has " << theta2.size() << " modes, expected " << K << "; ";
  for (std::size_t k = 0; k < theta1.size(); ++k)
    if (!theta1[k]) err << "theta1[" << k << "] missing; ";
  for (std::size_t k = 0; k < theta2.size(); ++k)
    if (!theta2[k]) err << "theta2[" << k << "] missing; ";
  for (double d : delta)
    if (!(d >= 0.0)) {
      err << "negative delta; ";
      break;
    }
  if (!(diffusivity >= 0.0)) err << "negative diffusivity; ";
  const std::string msg = err.str();
  if (!msg.empty()) throw StructuralError("CoefficientSet: " + msg);
}

std::vector<std::string> CoefficientSet::invariant_violations() const {
  std::vector<std::string> out;
  if (!(gamma > lambda)) out.push_back("gamma must exceed lambda");
  if (!(2.0 * delta_l2_sq() < gamma)) out.push_back("2 sum delta_k^2 must be below gamma");
  if (modes() < 1) out.push_back("K must be at least 1");
  return out;
}

CoefficientSet zero_coefficients(std::size_t K) {
  CoefficientSet c;
  c.diffusivity = 0.0;
  c.f = [](double, const Point&, double, double) { return 0.0; };
  c.G1 = c.f;
  c.G2 = [](double, const Point&) { return 0.0; };
  c.sigma.assign(K, [](double, double, double) { return 0.0; });
  c.theta1.assign(K, c.G2);
  c.theta2.assign(K, c.G2);
  c.delta.assign(K, 0.0);
  c.w = [](const Point&) { return 0.0; };
  c.bounds.beta1.assign(K, 0.0);
  c.bounds.gamma1.assign(K, 0.0);
  c.bounds.lip_sigma.assign(K, 0.0);
  c.description = "zero";
  return c;
}

namespace {

CoefficientSet build_canonical(const CanonicalParams& prm, double lambda, double gamma) {
  if (prm.K < 1) throw std::invalid_argument("canonical_instance: K must be >= 1");
  const double eps = prm.eps_couple;
  const double omega = prm.omega;
  const double A = prm.forcing_u;
  const double B = prm.forcing_v;
  const auto K = static_cast<std::size_t>(prm.K);
  auto bump = [](const Point& x) { return std::exp(-x.squaredNorm()); };
  auto root = [](double m2) { return std::sqrt(std::max(m2, 0.0)); };

  CoefficientSet c;
  c.lambda = lambda;
  c.gamma = gamma;
  c.alpha = prm.alpha;
  c.beta = prm.beta;
  c.p = 4.0;
  c.f = [=](double, const Point& x, double u, double m2) { return u * u * u + eps * bump(x) * root(m2); };
  c.G1 = [=](double t, const Point& x, double, double m2) {
    const double b = bump(x);
    return A * b * (1.0 + std::sin(omega * t)) + eps * b * root(m2);
  };
  c.G2 = [=](double t, const Point& x) { return B * bump(x) * (1.0 + std::cos(omega * t)); };

  double inv4 = 0.0;
  std::vector<double> scale(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double kk = static_cast<double>(k + 1);
    scale[k] = 1.0 / (kk * kk);
    inv4 += scale[k] * scale[k];
  }
  c.node_reaction = [=](double t, double m2, const SpatialGrid& grid) -> NodeReaction {
    GridField b(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) b[i] = bump(grid.point(i));
    const double fs = eps * root(m2);
    const double gs = A * (1.0 + std::sin(omega * t)) + eps * root(m2);
    return [b = std::move(b), fs, gs](const GridField& u, GridField& f, GridField& g) {
      f = u.array().cube() + fs * b.array();
      g = gs * b;
    };
  };

  ModeFn shape = [=](double, double u, double m2) { return std::sin(u) + eps * root(m2); };
  ShapeFieldFn shape_field = [=](double, double m2, const GridField& u, GridField& out) {
    out = u.array().sin() + eps * root(m2);
  };
  c.sigma_separable = SeparableModes{scale, shape, shape_field};
  for (std::size_t k = 0; k < K; ++k) {
    const double s = scale[k];
    const double phase = static_cast<double>(k + 1);
    c.sigma.push_back([=](double t, double u, double m2) { return s * shape(t, u, m2); });
    SpaceTimeFn th = [=](double t, const Point& x) { return s * bump(x) * std::cos(omega * t + phase); };
    c.theta1.push_back(th);
    c.theta2.push_back(th);
  }
  const double delta0 = std::sqrt(gamma / (4.0 * inv4));
  for (std::size_t k = 0; k < K; ++k) c.delta.push_back(delta0 * scale[k]);
  c.w = [](const Point& x) { return std::exp(-0.5 * x.squaredNorm()); };

  AssumptionBounds& bd = c.bounds;
  bd.alpha1 = 1.0;
  bd.alpha2 = 1.5;
  bd.alpha3 = 1.0;
  bd.phi1 = [=](double, const Point& x) { return 0.5 * eps * bump(x); };
  bd.psi1 = [=](const Point& x) { return 0.5 * eps * bump(x); };
  bd.phi2 = [](double, const Point&) { return 0.0; };
  bd.phi3 = [=](double, const Point& x) { return eps * bump(x); };
  bd.phi4 = [](double, const Point&) { return 0.0; };
  bd.phi5 = [=](double, const Point& x) { return 2.0 * eps * x.norm() * bump(x); };
  bd.phi6 = [=](double, const Point& x) { return eps * bump(x); };
  bd.phi7 = [=](double, const Point& x) { return eps * (1.0 + 2.0 * x.norm()) * bump(x); };
  bd.phi8 = [=](double t, const Point& x) {
    return 2.0 * A * x.norm() * bump(x) * (1.0 + std::sin(omega * t));
  };
  bd.phi_g = [=](double t, const Point& x) { return A * bump(x) * (1.0 + std::sin(omega * t)); };
  bd.psi_g = [=](const Point& x) { return eps * bump(x); };
  for (std::size_t k = 0; k < K; ++k) {
    bd.beta1.push_back(eps * scale[k]);
    bd.gamma1.push_back(scale[k]);
    bd.lip_sigma.push_back(std::max(1.0, eps) * scale[k]);
  }
  std::ostringstream d;
  d << "canonical eps=" << eps << " K=" << K << " omega=" << omega;
  c.description = d.str();
  return c;
}

}  // namespace

CanonicalInstance canonical_instance(const CanonicalParams& params, const SpatialGrid& norm_grid) {
  NormOptions opts;
  opts.grid = std::make_shared<const SpatialGrid>(norm_grid);
  CanonicalInstance out;
  out.lambda_requested = params.lambda;
  const double gamma = params.gamma.value_or(params.lambda + 1.0);
  out.coeffs = build_canonical(params, params.lambda, gamma);
  out.margin = dissipativity_margin(out.coeffs, params.eta, opts);
  if (params.auto_scale && out.margin < params.target_margin) {
    // With gamma = lambda + 1 and 2 sum delta^2 = gamma / 2 the margin is
    // 2 lambda - 5 eta - P0 - 1.5 (lambda + 1).
    MarginTerms terms = margin_terms(out.coeffs, opts);
    terms.delta_sq = 0.0;
    const double p0 = terms.penalty();
    const double lambda =
        std::max(params.lambda, 2.0 * (params.target_margin + 5.0 * params.eta + p0 + 1.5));
    out.coeffs = build_canonical(params, lambda, lambda + 1.0);
    out.margin = dissipativity_margin(out.coeffs, params.eta, opts);
    out.lambda_scaled = true;
  }
  return out;
}

CoefficientSet canonical_instance(double eps_couple, int K, double omega) {
  CanonicalParams prm;
  prm.eps_couple = eps_couple;
  prm.K = K;
  prm.omega = omega;
  return canonical_instance(prm, *NormOptions{}.grid).coeffs;
}

double MarginTerms::penalty() const {
  return 24.0 * w_l2sq * beta1_sq + 12.0 * w_linf_sq * gamma1_sq + 2.0 * phi1_linf + 2.0 * psi1_l1 +
         2.0 * phi7_l1_linf + psi_g_l1_linf + 6.0 * delta_sq;
}

MarginTerms margin_terms(const CoefficientSet& c, const NormOptions& opts) {
  const SpatialGrid& g = *opts.grid;
  const auto& b = c.bounds;
  MarginTerms m;
  GridField w = GridField::Zero(g.size());
  if (c.w) w = sample(g, [&](const Point& x) { return c.w(x); });
  m.w_l2sq = l2_norm_sq(g, w);
  m.w_linf_sq = std::pow(linf_norm(w), 2);
  m.beta1_sq = sum_sq(b.beta1);
  m.gamma1_sq = sum_sq(b.gamma1);
  const GridField psi1 = sample(g, [&](const Point& x) { return eval_or_zero(b.psi1, x); });
  m.psi1_l1 = inner(g, psi1.cwiseAbs(), GridField::Ones(g.size()));
  const GridField psig = sample(g, [&](const Point& x) { return eval_or_zero(b.psi_g, x); });
  m.psi_g_l1_linf = inner(g, psig.cwiseAbs(), GridField::Ones(g.size())) + linf_norm(psig);
  const int nt = std::max(opts.t_samples, 1);
  for (int i = 0; i < nt; ++i) {
    const double t = nt == 1 ? opts.t_min : opts.t_min + (opts.t_max - opts.t_min) * i / (nt - 1);
    const GridField phi1 = sample(g, [&](const Point& x) { return eval_or_zero(b.phi1, t, x); });
    const GridField phi7 = sample(g, [&](const Point& x) { return eval_or_zero(b.phi7, t, x); });
    m.phi1_linf = std::max(m.phi1_linf, linf_norm(phi1));
    m.phi7_l1_linf = std::max(
        m.phi7_l1_linf, inner(g, phi7.cwiseAbs(), GridField::Ones(g.size())) + linf_norm(phi7));
  }
  m.delta_sq = c.delta_l2_sq();
  auto override_with = [&](const char* key, double& slot) {
    if (auto it = b.declared_norms.find(key); it != b.declared_norms.end()) slot = it->second;
  };
  override_with("w_l2sq", m.w_l2sq);
  override_with("w_linf_sq", m.w_linf_sq);
  override_with("phi1_linf", m.phi1_linf);
  override_with("psi1_l1", m.psi1_l1);
  override_with("phi7_l1_linf", m.phi7_l1_linf);
  override_with("psi_g_l1_linf", m.psi_g_l1_linf);
  return m;
}

double dissipativity_margin(const CoefficientSet& coeffs, double eta, const NormOptions& opts) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("dissipativity_margin: eta must lie in (0, 1)");
  return (2.0 * coeffs.lambda - 5.0 * eta) - margin_terms(coeffs, opts).penalty();
}

// ---------------------------------------------------------------------------

bool AssumptionReport::passed(double tolerance) const {
  return std::all_of(records.begin(), records.end(),
                     [&](const AssumptionRecord& r) { return r.worst_violation <= tolerance; });
}

const AssumptionRecord& AssumptionReport::record(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw std::out_of_range("no assumption record named " + name);
}

namespace {

enum RecordId {
  kVanish,
  kCoercive,
  kFLip,
  kFDu,
  kFDx,
  kFGrowth,
  kG1Growth,
  kG1Lip,
  kG1Dx,
  kG1Du,
  kSigmaGrowth,
  kSigmaLip,
  kSigmaDu,
  kRecordCount
};

const char* const kRecordNames[kRecordCount] = {
    "f_vanishes_at_origin", "f_coercivity",  "f_lipschitz",   "f_du_lower_bound", "f_dx_growth",
    "f_growth",             "g1_growth",     "g1_lipschitz",  "g1_dx_growth",     "g1_du_bound",
    "sigma_growth",         "sigma_lipschitz", "sigma_du_bound"};

constexpr double kFdStep = 1e-5;

}  // namespace

AssumptionReport check_assumptions(const CoefficientSet& c, const AssumptionSampler& s,
                                   std::uint64_t seed) {
  if (s.n_samples < 1) throw std::invalid_argument("check_assumptions: n_samples must be >= 1");
  if (!c.f || !c.G1) throw StructuralError("check_assumptions: f and G1 are required");
  const auto& b = c.bounds;
  const double p = c.p;
  const std::size_t K = c.modes();

  AssumptionReport report;
  report.records.resize(kRecordCount);
  for (int r = 0; r < kRecordCount; ++r) report.records[r].name = kRecordNames[r];

  const CounterStream stream(seed, 0xA55E27ULL);
  Witness wit;
  auto note = [&](int id, double lhs, double rhs) {
    if (!std::isfinite(lhs) || !std::isfinite(rhs))
      throw EvaluationError(std::string("non-finite evaluation in ") + kRecordNames[id], wit);
    auto& rec = report.records[id];
    ++rec.sample_count;
    const double v = lhs - rhs;
    if (v > rec.worst_violation) {
      rec.worst_violation = v;
      rec.witness = wit;
    }
  };
  auto lerp = [](double lo, double hi, double u) { return lo + (hi - lo) * u; };

  for (long n = 0; n < s.n_samples; ++n) {
    const auto r0 = stream.uniforms(n, 0);
    const auto r1 = stream.uniforms(n, 1);
    const auto r2 = stream.uniforms(n, 2);
    const auto r3 = stream.uniforms(n, 3);
    wit.t = lerp(s.t_min, s.t_max, r0[0]);
    wit.x = lerp(s.x_min, s.x_max, r0[1]);
    wit.y = s.dimension == 2 ? lerp(s.x_min, s.x_max, r3[0]) : 0.0;
    wit.u = lerp(s.u_min, s.u_max, r1[0]);
    wit.u2 = lerp(s.u_min, s.u_max, r1[1]);
    wit.m2 = lerp(s.m2_min, s.m2_max, r2[0]);
    wit.m2b = lerp(s.m2_min, s.m2_max, r2[1]);
    const double t = wit.t, u = wit.u, u2 = wit.u2, m2 = wit.m2, m2b = wit.m2b;
    const Point x(wit.x, wit.y);
    const double au = std::abs(u);
    const double rm = std::sqrt(std::max(m2, 0.0));
    const double W = std::abs(rm - std::sqrt(std::max(m2b, 0.0)));

    auto dx_norm = [&](const ReactionFn& fn) {
      const Point ex(kFdStep, 0.0);
      double gx = (fn(t, x + ex, u, m2) - fn(t, x - ex, u, m2)) / (2 * kFdStep);
      if (s.dimension != 2) return std::abs(gx);
      const Point ey(0.0, kFdStep);
      double gy = (fn(t, x + ey, u, m2) - fn(t, x - ey, u, m2)) / (2 * kFdStep);
      return std::hypot(gx, gy);
    };
    auto du = [&](const ReactionFn& fn) {
      return (fn(t, x, u + kFdStep, m2) - fn(t, x, u - kFdStep, m2)) / (2 * kFdStep);
    };

    const double phi1 = eval_or_zero(b.phi1, t, x), phi2 = eval_or_zero(b.phi2, t, x);
    const double phi3 = eval_or_zero(b.phi3, t, x), phi4 = eval_or_zero(b.phi4, t, x);
    const double phi5 = eval_or_zero(b.phi5, t, x), phi6 = eval_or_zero(b.phi6, t, x);
    const double phi7 = eval_or_zero(b.phi7, t, x), phi8 = eval_or_zero(b.phi8, t, x);
    const double phig = eval_or_zero(b.phi_g, t, x);
    const double psi1 = eval_or_zero(b.psi1, x), psig = eval_or_zero(b.psi_g, x);

    const double f = c.f(t, x, u, m2);
    note(kVanish, std::abs(c.f(t, x, 0.0, 0.0)), 0.0);
    note(kCoercive, b.alpha1 * std::pow(au, p) - phi1 * (1 + u * u) - psi1 * m2, f * u);
    note(kFLip, std::abs(f - c.f(t, x, u2, m2b)),
         b.alpha2 * (phi2 + std::pow(au, p - 2) + std::pow(std::abs(u2), p - 2)) * std::abs(u - u2) +
             phi3 * W);
    note(kFDu, -phi4, du(c.f));
    note(kFDx, dx_norm(c.f), phi5 * (1 + au + rm));
    note(kFGrowth, std::abs(f), b.alpha3 * std::pow(au, p - 1) + phi6 * (1 + rm));

    const double g = c.G1(t, x, u, m2);
    note(kG1Growth, std::abs(g), phig + phi7 * au + psig * rm);
    note(kG1Lip, std::abs(g - c.G1(t, x, u2, m2b)), phi7 * (std::abs(u - u2) + W));
    note(kG1Dx, dx_norm(c.G1), phi8 + phi7 * (au + rm));
    note(kG1Du, std::abs(du(c.G1)), phi7);

    double grow = -std::numeric_limits<double>::infinity();
    double lip = grow, dsu = grow;
    for (std::size_t k = 0; k < K; ++k) {
      const double sk = c.sigma_value(k, t, u, m2);
      const double lk = entry_or_zero(b.lip_sigma, k);
      grow = std::max(grow, std::abs(sk) - (entry_or_zero(b.beta1, k) * (1 + rm) +
                                            entry_or_zero(b.gamma1, k) * au));
      lip = std::max(lip, std::abs(sk - c.sigma_value(k, t, u2, m2b)) - lk * (std::abs(u - u2) + W));
      const double d = (c.sigma_value(k, t, u + kFdStep, m2) - c.sigma_value(k, t, u - kFdStep, m2)) /
                       (2 * kFdStep);
      dsu = std::max(dsu, std::abs(d) - lk);
    }
    if (K > 0) {
      note(kSigmaGrowth, grow, 0.0);
      note(kSigmaLip, lip, 0.0);
      note(kSigmaDu, dsu, 0.0);
    }
  }

  AssumptionRecord gap{"gamma_exceeds_lambda", c.lambda - c.gamma, 1, {}};
  AssumptionRecord noise{"noise_decay_vs_gamma", 2.0 * c.delta_l2_sq() - c.gamma, 1, {}};
  report.records.push_back(gap);
  report.records.push_back(noise);
  return report;
}

// ---------------------------------------------------------------------------

std::pair<double, double> forcing_levels(const CoefficientSet& c, double s, const SpatialGrid& grid) {
  const GridField phig = sample(grid, [&](const Point& x) { return eval_or_zero(c.bounds.phi_g, s, x); });
  const double g2 = l2_norm_sq(grid, phig);
  double th1 = 0.0, th2 = 0.0;
  for (const auto& th : c.theta1)
    th1 += l2_norm_sq(grid, sample(grid, [&](const Point& x) { return th ? th(s, x) : 0.0; }));
  for (const auto& th : c.theta2)
    th2 += l2_norm_sq(grid, sample(grid, [&](const Point& x) { return th ? th(s, x) : 0.0; }));
  return {g2 + th1 + th2, g2 * g2 + th1 * th1 + th2 * th2};
}

namespace {

double integrate_weighted(const std::function<double(double)>& fn, double a, double b) {
  const int chunks = std::max(1, static_cast<int>(std::ceil(b - a)));
  const double width = (b - a) / chunks;
  double total = 0.0;
  for (int i = 0; i < chunks; ++i) {
    const double lo = a + i * width;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, lo, lo + width, 10, 1e-12);
  }
  return total;
}

}  // namespace

ForcingIntegrals forcing_integrals(const CoefficientSet& c, double tau, double eta, const SpatialGrid& grid) {
  if (!(eta > 0.0)) throw std::invalid_argument("forcing_integrals: eta must be positive");
  const double W = 40.0 / eta;
  auto f2 = [&](double s) { return std::exp(eta * (s - tau)) * forcing_levels(c, s, grid).first; };
  auto f4 = [&](double s) { return std::exp(2.0 * eta * (s - tau)) * forcing_levels(c, s, grid).second; };

  ForcingIntegrals out;
  out.window = W;
  out.I2 = integrate_weighted(f2, tau - W, tau);
  out.I4 = integrate_weighted(f4, tau - W, tau);

  // The integral over the next window back must be negligible.
  const double ext2 = integrate_weighted(f2, tau - 2 * W, tau - W);
  const double ext4 = integrate_weighted(f4, tau - 2 * W, tau - W);
  auto diverges = [](double ext, double value) { return ext > 1e-3 * value && ext > 1e-300; };
  if (!std::isfinite(out.I2) || !std::isfinite(out.I4) || diverges(ext2, out.I2) ||
      diverges(ext4, out.I4))
    throw IntegrabilityError("forcing integral grows with the window; the forcing is not integrable");

  double sup2 = 0.0, sup4 = 0.0;
  for (int i = 0; i <= 256; ++i) {
    const auto [l2, l4] = forcing_levels(c, tau - 2 * W + W * i / 256.0, grid);
    sup2 = std::max(sup2, l2);
    sup4 = std::max(sup4, l4);
  }
  out.tail_bound2 = sup2 * std::exp(-eta * W) / eta;
  out.tail_bound4 = sup4 * std::exp(-2.0 * eta * W) / (2.0 * eta);
  return out;
}

}  // namespace mvfhn
