#include "mvfhn/measure.hpp"

#include "mvfhn/parallel.hpp"
#include "mvfhn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvfhn {

EmpiricalLaw::EmpiricalLaw(GridPtr grid, std::vector<FieldPair> atoms, std::vector<double> weights)
    : grid_(std::move(grid)) {
  if (!grid_) throw StructuralError("EmpiricalLaw: missing grid");
  if (atoms.size() != weights.size()) throw StructuralError("EmpiricalLaw: atom/weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw StructuralError("EmpiricalLaw: weights must be finite and nonnegative");
    total += w;
  }
  // Weights already normalized to rounding are kept bit-for-bit.
  if (std::abs(total - 1.0) <= 1e-12) total = 1.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (weights[i] == 0.0) continue;
    if (atoms[i].u.size() != grid_->size() || atoms[i].v.size() != grid_->size())
      throw StructuralError("EmpiricalLaw: atom does not live on the law's grid");
    atoms_.push_back(std::move(atoms[i]));
    weights_.push_back(weights[i] / total);
  }
  if (atoms_.empty()) throw StructuralError("EmpiricalLaw: needs at least one atom of positive weight");
}

EmpiricalLaw EmpiricalLaw::uniform(GridPtr grid, std::vector<FieldPair> atoms) {
  std::vector<double> w(atoms.size(), 1.0);
  return EmpiricalLaw(std::move(grid), std::move(atoms), std::move(w));
}

EmpiricalLaw EmpiricalLaw::dirac(GridPtr grid, FieldPair atom) {
  std::vector<FieldPair> atoms;
  atoms.push_back(std::move(atom));
  return uniform(std::move(grid), std::move(atoms));
}

bool EmpiricalLaw::has_uniform_weights() const {
  const double target = 1.0 / static_cast<double>(weights_.size());
  return std::all_of(weights_.begin(), weights_.end(),
                     [&](double w) { return std::abs(w - target) <= 1e-14 * target; });
}

namespace {

void require_same_grid(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  if (a.grid() != b.grid())
    throw StructuralError("laws live on different grids: " + a.grid_id() + " vs " + b.grid_id());
}

}  // namespace

double second_moment(const EmpiricalLaw& law, int p) {
  if (p != 1 && p != 2 && p != 4) throw std::invalid_argument("second_moment: p must be 1, 2 or 4");
  std::vector<double> terms(law.size());
  for (std::size_t j = 0; j < law.size(); ++j) {
    const double sq = pair_norm_sq(law.grid(), law.atom(j));
    const double value = p == 1 ? std::sqrt(sq) : (p == 2 ? sq : sq * sq);
    terms[j] = law.weight(j) * value;
  }
  return pairwise_sum(terms);
}

double u_second_moment(const EmpiricalLaw& law) {
  std::vector<double> terms(law.size());
  for (std::size_t j = 0; j < law.size(); ++j)
    terms[j] = law.weight(j) * l2_norm_sq(law.grid(), law.atom(j).u);
  return pairwise_sum(terms);
}

EmpiricalLaw scaled(const EmpiricalLaw& law, double s) {
  std::vector<FieldPair> atoms;
  atoms.reserve(law.size());
  for (const auto& k : law.atoms()) atoms.push_back({s * k.u, s * k.v});
  return EmpiricalLaw(law.grid_ptr(), std::move(atoms), law.weights());
}

Eigen::MatrixXd transport_cost(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  require_same_grid(a, b);
  Eigen::MatrixXd cost(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      cost(i, j) = pair_distance_sq(a.grid(), a.atom(i), b.atom(j));
  return cost;
}

namespace transport {

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  // Shortest augmenting path with dual potentials (Hungarian method), O(n^3).
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - row_pot[i0] - col_pot[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          row_pot[match[j]] += delta;
          col_pot[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

Eigen::MatrixXd solve_transportation(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                                     const Eigen::VectorXd& b) {
  // Successive shortest paths on the bipartite residual graph with Dijkstra
  // over reduced costs. Sources are rows, sinks are columns.
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const Eigen::Index nodes = n + m;
  const double inf = std::numeric_limits<double>::infinity();
  const double tol = 1e-15;
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd supply = a, demand = b;
  Eigen::VectorXd pot = Eigen::VectorXd::Zero(nodes);
  const long max_rounds = 100 * static_cast<long>(nodes) * static_cast<long>(nodes) + 100;

  for (long round = 0; round < max_rounds; ++round) {
    if (supply.sum() <= 1e-13 || demand.sum() <= 1e-13) return flow;
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(nodes, inf);
    std::vector<Eigen::Index> prev(nodes, -1);
    std::vector<char> done(nodes, 0);
    for (Eigen::Index i = 0; i < n; ++i)
      if (supply[i] > tol) dist[i] = 0.0;
    for (Eigen::Index iter = 0; iter < nodes; ++iter) {
      Eigen::Index best = -1;
      for (Eigen::Index k = 0; k < nodes; ++k)
        if (!done[k] && dist[k] < inf && (best < 0 || dist[k] < dist[best])) best = k;
      if (best < 0) break;
      done[best] = 1;
      if (best < n) {
        for (Eigen::Index j = 0; j < m; ++j) {
          const double rc = std::max(0.0, cost(best, j) + pot[best] - pot[n + j]);
          if (dist[best] + rc < dist[n + j]) {
            dist[n + j] = dist[best] + rc;
            prev[n + j] = best;
          }
        }
      } else {
        const Eigen::Index j = best - n;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (flow(i, j) <= tol) continue;
          const double rc = std::max(0.0, -cost(i, j) + pot[best] - pot[i]);
          if (dist[best] + rc < dist[i]) {
            dist[i] = dist[best] + rc;
            prev[i] = best;
          }
        }
      }
    }
    Eigen::Index target = -1;
    for (Eigen::Index j = 0; j < m; ++j)
      if (demand[j] > tol && dist[n + j] < inf && (target < 0 || dist[n + j] < dist[target]))
        target = n + j;
    if (target < 0) throw std::runtime_error("solve_transportation: no augmenting path");
    const double reach = dist[target];
    for (Eigen::Index k = 0; k < nodes; ++k) pot[k] += std::min(dist[k], reach);

    double amount = demand[target - n];
    Eigen::Index node = target;
    while (prev[node] >= 0) {
      const Eigen::Index from = prev[node];
      if (from >= n) amount = std::min(amount, flow(node, from - n));  // backward arc sink->source
      node = from;
    }
    amount = std::min(amount, supply[node]);
    const Eigen::Index source = node;
    node = target;
    while (prev[node] >= 0) {
      const Eigen::Index from = prev[node];
      if (from < n)
        flow(from, node - n) += amount;
      else
        flow(node, from - n) = std::max(0.0, flow(node, from - n) - amount);
      node = from;
    }
    supply[source] = std::max(0.0, supply[source] - amount);
    demand[target - n] = std::max(0.0, demand[target - n] - amount);
  }
  throw std::runtime_error("solve_transportation: iteration limit reached");
}

}  // namespace transport

double wasserstein2_exact(const EmpiricalLaw& a, const EmpiricalLaw& b, std::size_t cap) {
  require_same_grid(a, b);
  if (a.size() > cap || b.size() > cap)
    throw CapacityError("wasserstein2_exact: " + std::to_string(std::max(a.size(), b.size())) +
                        " atoms exceed the exact-solver cap of " + std::to_string(cap) +
                        "; use wasserstein2_entropic");
  const Eigen::MatrixXd cost = transport_cost(a, b);
  if (!cost.allFinite()) return std::numeric_limits<double>::infinity();
  if (a.size() == b.size() && a.has_uniform_weights() && b.has_uniform_weights()) {
    const auto assignment = transport::solve_assignment(cost);
    std::vector<double> terms(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) terms[i] = cost(i, assignment[i]);
    return std::sqrt(std::max(0.0, pairwise_sum(terms) / static_cast<double>(a.size())));
  }
  const Eigen::VectorXd wa = Eigen::Map<const Eigen::VectorXd>(a.weights().data(), a.size());
  const Eigen::VectorXd wb = Eigen::Map<const Eigen::VectorXd>(b.weights().data(), b.size());
  const Eigen::MatrixXd plan = transport::solve_transportation(cost, wa, wb);
  return std::sqrt(std::max(0.0, (plan.array() * cost.array()).sum()));
}

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double c = x.maxCoeff();
  if (!std::isfinite(c)) return c;
  return c + std::log((x.array() - c).exp().sum());
}

struct SinkhornCost {
  double cost = 0.0;
  double dual = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Entropic transport: primal cost <P, C> and dual value <f, a> + <g, b>; log-domain iterations
// with epsilon annealing from the cost scale down to the target.
SinkhornCost sinkhorn_cost(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b, double eps_target, int max_iters) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const Eigen::VectorXd log_a = a.array().log(), log_b = b.array().log();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
  const double scale = std::max(cost.maxCoeff(), eps_target);
  Eigen::VectorXd buf_m(m), buf_n(n);

  auto update = [&](double eps) {
    for (Eigen::Index i = 0; i < n; ++i) {
      buf_m = log_b.array() + (g.array() - cost.row(i).transpose().array()) / eps;
      f[i] = -eps * log_sum_exp(buf_m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      buf_n = log_a.array() + (f.array() - cost.col(j).array()) / eps;
      g[j] = -eps * log_sum_exp(buf_n);
    }
  };
  auto plan = [&](double eps) {
    Eigen::MatrixXd p(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        p(i, j) = std::exp(log_a[i] + log_b[j] + (f[i] + g[j] - cost(i, j)) / eps);
    return p;
  };

  SinkhornCost out;
  for (double eps = scale; eps > eps_target; eps *= 0.5) {
    for (int k = 0; k < 10; ++k) update(eps);
    out.iterations += 10;
  }
  Eigen::MatrixXd p;
  while (out.iterations < max_iters) {
    update(eps_target);
    ++out.iterations;
    if (out.iterations % 10 == 0 || out.iterations >= max_iters) {
      p = plan(eps_target);
      const double violation = (p.rowwise().sum() - a).cwiseAbs().sum();
      if (violation < 1e-8) {
        out.converged = true;
        break;
      }
    }
  }
  if (p.size() == 0) p = plan(eps_target);
  out.cost = (p.array() * cost.array()).sum();
  out.dual = f.dot(a) + g.dot(b);
  return out;
}

}  // namespace

EntropicResult wasserstein2_entropic(const EmpiricalLaw& a, const EmpiricalLaw& b,
                                     double regularization, int max_iters) {
  require_same_grid(a, b);
  if (!(regularization > 0.0)) throw std::invalid_argument("wasserstein2_entropic: regularization must be positive");
  const Eigen::MatrixXd cab = transport_cost(a, b), caa = transport_cost(a, a), cbb = transport_cost(b, b);
  const double scale = std::max({cab.maxCoeff(), caa.maxCoeff(), cbb.maxCoeff()});
  EntropicResult result;
  if (scale == 0.0) {
    result.converged = true;
    return result;
  }
  const double eps = regularization * scale;
  const Eigen::VectorXd wa = Eigen::Map<const Eigen::VectorXd>(a.weights().data(), a.size());
  const Eigen::VectorXd wb = Eigen::Map<const Eigen::VectorXd>(b.weights().data(), b.size());
  const auto ab = sinkhorn_cost(cab, wa, wb, eps, max_iters);
  const auto aa = sinkhorn_cost(caa, wa, wa, eps, max_iters);
  const auto bb = sinkhorn_cost(cbb, wb, wb, eps, max_iters);
  result.value = std::sqrt(std::max(0.0, ab.dual - 0.5 * aa.dual - 0.5 * bb.dual));
  result.converged = ab.converged && aa.converged && bb.converged;
  result.iterations = std::max({ab.iterations, aa.iterations, bb.iterations});
  return result;
}

TestFunctionFamily TestFunctionFamily::make_default(const SpatialGrid& grid, std::uint64_t seed,
                                                    int size) {
  if (size < 1) throw std::invalid_argument("TestFunctionFamily: size must be positive");
  const int radial = std::max(1, size / 4);
  const int probes = size - radial;
  std::vector<Member> members;
  const CounterStream stream(seed, 0xB1u);
  for (int p = 0; p < probes; ++p) {
    FieldPair dir = FieldPair::zeros(grid);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const auto z = stream.normals(p, static_cast<std::uint32_t>(i));
      dir.u[i] = z[0];
      dir.v[i] = z[1];
    }
    const double norm = std::sqrt(pair_norm_sq(grid, dir));
    dir.u /= norm;
    dir.v /= norm;
    members.push_back({Kind::probe, std::move(dir), 0.0});
  }
  for (int r = 0; r < radial; ++r)
    members.push_back({Kind::radial, FieldPair{}, 0.01 * std::pow(2.0, r)});
  return TestFunctionFamily(std::move(members));
}

TestFunctionFamily TestFunctionFamily::constant(double value) {
  return TestFunctionFamily({Member{Kind::constant, FieldPair{}, value}});
}

double TestFunctionFamily::evaluate(std::size_t i, const SpatialGrid& grid, const FieldPair& k) const {
  const Member& m = members_[i];
  double raw = 0.0;
  switch (m.kind) {
    case Kind::probe:
      raw = inner(grid, k.u, m.probe.u) + inner(grid, k.v, m.probe.v) - m.offset;
      break;
    case Kind::radial:
      raw = std::sqrt(pair_norm_sq(grid, k)) - m.offset;
      break;
    case Kind::constant:
      raw = m.offset;
      break;
  }
  return std::clamp(raw, -1.0, 1.0);
}

double bounded_lipschitz_distance(const EmpiricalLaw& a, const EmpiricalLaw& b,
                                  const TestFunctionFamily& family) {
  require_same_grid(a, b);
  if (family.size() == 0) throw std::invalid_argument("bounded_lipschitz_distance: empty family");
  double best = 0.0;
  std::vector<double> ta(a.size()), tb(b.size());
  for (std::size_t f = 0; f < family.size(); ++f) {
    for (std::size_t j = 0; j < a.size(); ++j) ta[j] = a.weight(j) * family.evaluate(f, a.grid(), a.atom(j));
    for (std::size_t j = 0; j < b.size(); ++j) tb[j] = b.weight(j) * family.evaluate(f, b.grid(), b.atom(j));
    best = std::max(best, std::abs(pairwise_sum(ta) - pairwise_sum(tb)));
  }
  return best;
}

bool moment_ball_contains(const EmpiricalLaw& law, double r, int p) {
  if (p != 2 && p != 4) throw std::invalid_argument("moment_ball_contains: p must be 2 or 4");
  if (!(r > 0.0)) throw std::invalid_argument("moment_ball_contains: radius must be positive");
  const double moment = second_moment(law, p);
  // Closed ball; compare moments rather than roots to keep the boundary exact.
  return moment <= std::pow(r, p) * (1.0 + 4.0 * std::numeric_limits<double>::epsilon());
}

}  // namespace mvfhn
