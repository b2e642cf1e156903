#pragma once

// Empirical probability measures over grid field pairs: moments,
// Wasserstein-2 (exact and entropic), a bounded-Lipschitz lower bound and
// moment-ball membership.

#include "mvfhn/grid.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvfhn {

class EmpiricalLaw {
 public:
  /// Weights are renormalized to sum to one; zero-weight atoms are dropped.
  EmpiricalLaw(GridPtr grid, std::vector<FieldPair> atoms, std::vector<double> weights);

  static EmpiricalLaw uniform(GridPtr grid, std::vector<FieldPair> atoms);
  static EmpiricalLaw dirac(GridPtr grid, FieldPair atom);

  std::size_t size() const { return atoms_.size(); }
  const FieldPair& atom(std::size_t i) const { return atoms_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<FieldPair>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  const SpatialGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::string grid_id() const { return grid_->id(); }
  /// True when every weight equals 1/size to rounding.
  bool has_uniform_weights() const;

 private:
  GridPtr grid_;
  std::vector<FieldPair> atoms_;
  std::vector<double> weights_;
};

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// sum_j w_j ||k_j||^p, p in {1, 2, 4}.
double second_moment(const EmpiricalLaw& law, int p);

/// E||u||^2 over the law; the scalar through which the canonical model sees
/// the law.
double u_second_moment(const EmpiricalLaw& law);

/// Pushforward of the law under k -> s k.
EmpiricalLaw scaled(const EmpiricalLaw& law, double s);

/// Squared product-norm cost between every pair of atoms.
Eigen::MatrixXd transport_cost(const EmpiricalLaw& a, const EmpiricalLaw& b);

inline constexpr std::size_t kExactTransportCap = 64;

/// Exact W2 as a finite transportation problem (assignment for equal-size
/// uniform supports). Throws CapacityError when either law exceeds the cap.
double wasserstein2_exact(const EmpiricalLaw& a, const EmpiricalLaw& b,
                          std::size_t cap = kExactTransportCap);

struct EntropicResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Debiased entropic estimate of W2. `regularization` is relative to the
/// largest entry of the cost matrix.
EntropicResult wasserstein2_entropic(const EmpiricalLaw& a, const EmpiricalLaw& b,
                                     double regularization, int max_iters = 20000);

/// Bounded 1-Lipschitz test functions on the product space.
class TestFunctionFamily {
 public:
  enum class Kind { probe, radial, constant };
  struct Member {
    Kind kind;
    FieldPair probe;      // unit-norm direction (probe kind)
    double offset = 0.0;  // shift applied before clamping
  };

  TestFunctionFamily() = default;
  explicit TestFunctionFamily(std::vector<Member> members) : members_(std::move(members)) {}

  /// Random unit probes plus radial clamps: probe_count + radial_count members.
  static TestFunctionFamily make_default(const SpatialGrid& grid, std::uint64_t seed,
                                         int size = 64);
  static TestFunctionFamily constant(double value);

  std::size_t size() const { return members_.size(); }
  const Member& member(std::size_t i) const { return members_[i]; }
  void add(Member m) { members_.push_back(std::move(m)); }

  /// phi_i(k), with |phi| <= 1 and Lip(phi) <= 1.
  double evaluate(std::size_t i, const SpatialGrid& grid, const FieldPair& k) const;

 private:
  std::vector<Member> members_;
};

/// max_i |<phi_i, a> - <phi_i, b>|: a lower bound on the bounded-Lipschitz
/// metric that only grows as members are added.
double bounded_lipschitz_distance(const EmpiricalLaw& a, const EmpiricalLaw& b,
                                  const TestFunctionFamily& family);

/// (int ||k||^p dlaw)^(1/p) <= r, p in {2, 4}. The ball is closed.
bool moment_ball_contains(const EmpiricalLaw& law, double r, int p);

namespace transport {

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to every row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Exact transportation plan between weight vectors a and b.
Eigen::MatrixXd solve_transportation(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                                     const Eigen::VectorXd& b);

}  // namespace transport

}  // namespace mvfhn
