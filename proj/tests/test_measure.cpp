#include "oracles.hpp"

#include "mvfhn/measure.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mvfhn;

namespace {

GridPtr small_grid() { return make_grid(1, 2.0, 9); }

EmpiricalLaw uniform_law(const GridPtr& g, std::vector<FieldPair> atoms) {
  return EmpiricalLaw::uniform(g, std::move(atoms));
}

}  // namespace

TEST_SUITE("measure") {

TEST_CASE("second moment of simple laws") {
  const GridPtr g = make_grid(1, 8.0, 129);
  CHECK(second_moment(EmpiricalLaw::dirac(g, FieldPair::zeros(*g)), 2) == 0.0);

  FieldPair one = FieldPair::zeros(*g);
  one.u.setOnes();
  CHECK(second_moment(EmpiricalLaw::dirac(g, one), 2) == doctest::Approx(16.0).epsilon(1e-14));

  std::mt19937_64 rng(11);
  const auto atoms = oracle::random_atoms(*g, rng, 2);
  const auto w = oracle::trapezoid_weights(129, 8.0);
  const FieldPair zero = FieldPair::zeros(*g);
  const double a = oracle::pair_cost(w, atoms[0], zero);
  const double b = oracle::pair_cost(w, atoms[1], zero);
  CHECK(second_moment(uniform_law(g, atoms), 2) == doctest::Approx(0.5 * (a + b)).epsilon(1e-13));
  CHECK(second_moment(uniform_law(g, atoms), 4) == doctest::Approx(0.5 * (a * a + b * b)).epsilon(1e-13));
  CHECK(second_moment(uniform_law(g, atoms), 1) ==
        doctest::Approx(0.5 * (std::sqrt(a) + std::sqrt(b))).epsilon(1e-13));
  CHECK_THROWS_AS(second_moment(uniform_law(g, atoms), 3), std::invalid_argument);
}

TEST_CASE("law construction normalizes weights and rejects bad input") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(3);
  auto atoms = oracle::random_atoms(*g, rng, 3);
  const EmpiricalLaw law(g, atoms, {2.0, 0.0, 6.0});
  REQUIRE(law.size() == 2);
  CHECK(law.weight(0) == doctest::Approx(0.25));
  CHECK(law.weight(1) == doctest::Approx(0.75));
  CHECK_THROWS_AS(EmpiricalLaw(g, atoms, {1.0, -1.0, 1.0}), StructuralError);
  CHECK_THROWS_AS(EmpiricalLaw(g, atoms, {0.0, 0.0, 0.0}), StructuralError);

  const GridPtr other = make_grid(1, 2.0, 17);
  CHECK_THROWS_AS(EmpiricalLaw(other, atoms, {1.0, 1.0, 1.0}), StructuralError);
  const EmpiricalLaw a = uniform_law(g, atoms);
  const EmpiricalLaw b = EmpiricalLaw::dirac(other, FieldPair::zeros(*other));
  CHECK_THROWS_AS(wasserstein2_exact(a, b), StructuralError);
}

TEST_CASE("exact W2 basics") {
  const GridPtr g = small_grid();
  const auto w = oracle::trapezoid_weights(9, 2.0);
  std::mt19937_64 rng(5);
  const auto atoms = oracle::random_atoms(*g, rng, 4);
  const EmpiricalLaw law = uniform_law(g, atoms);
  CHECK(wasserstein2_exact(law, law) == 0.0);

  const EmpiricalLaw d1 = EmpiricalLaw::dirac(g, atoms[0]);
  const EmpiricalLaw d2 = EmpiricalLaw::dirac(g, atoms[1]);
  CHECK(wasserstein2_exact(d1, d2) == doctest::Approx(std::sqrt(oracle::pair_cost(w, atoms[0], atoms[1]))));

  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_atoms(*g, rng, 3);
    const auto b = oracle::random_atoms(*g, rng, 3);
    CHECK(std::abs(wasserstein2_exact(uniform_law(g, a), uniform_law(g, b)) - oracle::brute_force_w2(w, a, b)) <=
          1e-10);
  }
}

TEST_CASE("exact W2 equals the exhaustive assignment for up to five atoms") {
  const GridPtr g = small_grid();
  const auto w = oracle::trapezoid_weights(9, 2.0);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 5;
    const auto a = oracle::random_atoms(*g, rng, n);
    const auto b = oracle::random_atoms(*g, rng, n);
    CHECK(std::abs(wasserstein2_exact(uniform_law(g, a), uniform_law(g, b)) - oracle::brute_force_w2(w, a, b)) <=
          1e-10);
  }
}

TEST_CASE("weighted transport equals assignment on repeated atoms") {
  const GridPtr g = small_grid();
  const auto w = oracle::trapezoid_weights(9, 2.0);
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = oracle::random_atoms(*g, rng, 2);
    const auto b = oracle::random_atoms(*g, rng, 3);
    const std::vector<int> ca{1, 5}, cb{2, 1, 3};
    const EmpiricalLaw la(g, a, {1.0, 5.0});
    const EmpiricalLaw lb(g, b, {2.0, 1.0, 3.0});
    const double expected = oracle::brute_force_w2(w, oracle::repeat_atoms(a, ca), oracle::repeat_atoms(b, cb));
    CHECK(std::abs(wasserstein2_exact(la, lb) - expected) <= 1e-10);
  }
}

TEST_CASE("exact W2 metric axioms on small supports") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(29);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, size(rng)));
    const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, size(rng)));
    const EmpiricalLaw c = uniform_law(g, oracle::random_atoms(*g, rng, size(rng)));
    const double ab = wasserstein2_exact(a, b);
    const double ba = wasserstein2_exact(b, a);
    const double bc = wasserstein2_exact(b, c);
    const double ac = wasserstein2_exact(a, c);
    REQUIRE(ab >= 0.0);
    REQUIRE(std::abs(ab - ba) <= 1e-10);
    REQUIRE(ac <= ab + bc + 1e-9);
    REQUIRE(ab > 0.0);
  }
}

TEST_CASE("W2 scales with pushforward by a scalar") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(31);
  const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 4));
  const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 3));
  const double base = wasserstein2_exact(a, b);
  for (double s : {0.0, 1.0, -2.0, 0.5})
    CHECK(wasserstein2_exact(scaled(a, s), scaled(b, s)) == doctest::Approx(std::abs(s) * base).epsilon(1e-12));
}

TEST_CASE("exact W2 refuses laws above the cap") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(37);
  const EmpiricalLaw big = uniform_law(g, oracle::random_atoms(*g, rng, 65));
  CHECK_THROWS_AS(wasserstein2_exact(big, big), CapacityError);
}

TEST_CASE("exact W2 is infinite when an atom is not finite") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(41);
  auto atoms = oracle::random_atoms(*g, rng, 3);
  const EmpiricalLaw finite = uniform_law(g, atoms);
  atoms[1].u[4] = std::numeric_limits<double>::infinity();
  const EmpiricalLaw blown = uniform_law(g, atoms);
  CHECK(std::isinf(wasserstein2_exact(finite, blown)));
  CHECK(std::isinf(wasserstein2_exact(blown, finite)));
}

TEST_CASE("entropic W2") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(41);
  const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 4));
  const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 4));

  const EntropicResult same = wasserstein2_entropic(a, a, 1e-3);
  CHECK(same.value <= 1e-6);

  const double exact = wasserstein2_exact(a, b);
  const EntropicResult approx = wasserstein2_entropic(a, b, 1e-3);
  CHECK(approx.converged);
  CHECK(std::abs(approx.value - exact) <= 0.02 * exact);

  const auto atoms = oracle::random_atoms(*g, rng, 2);
  const EntropicResult point =
      wasserstein2_entropic(EmpiricalLaw::dirac(g, atoms[0]), EmpiricalLaw::dirac(g, atoms[1]), 1e-3);
  CHECK(point.value == doctest::Approx(wasserstein2_exact(EmpiricalLaw::dirac(g, atoms[0]),
                                                          EmpiricalLaw::dirac(g, atoms[1])))
                           .epsilon(1e-6));
  CHECK_THROWS_AS(wasserstein2_entropic(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("entropic W2 approaches the exact value as the regularization shrinks") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(43);
  const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 8));
  const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 8));
  const double exact = wasserstein2_exact(a, b);
  std::vector<double> errors;
  for (double reg = 1e-1; reg >= 0.99e-4; reg *= 0.5) {
    const EntropicResult r = wasserstein2_entropic(a, b, reg, 200000);
    errors.push_back(std::abs(r.value - exact));
  }
  for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i] <= errors[i - 1] + 1e-6 * exact);
  CHECK(errors.back() <= 0.02 * exact);
  CHECK(errors.back() < errors.front());
}

TEST_CASE("bounded-Lipschitz lower bound") {
  const GridPtr g = make_grid(1, 4.0, 17);
  std::mt19937_64 rng(47);
  const TestFunctionFamily family = TestFunctionFamily::make_default(*g, 5);
  REQUIRE(family.size() == 64);

  for (int trial = 0; trial < 200; ++trial) {
    const FieldPair x1 = oracle::random_pair(*g, rng, 0.5);
    const FieldPair x2 = oracle::random_pair(*g, rng, 0.5);
    const double d = std::sqrt(pair_distance_sq(*g, x1, x2));
    for (std::size_t i = 0; i < family.size(); ++i) {
      const double p1 = family.evaluate(i, *g, x1);
      REQUIRE(std::abs(p1) <= 1.0);
      REQUIRE(std::abs(p1 - family.evaluate(i, *g, x2)) <= d + 1e-12);
    }
  }

  for (int trial = 0; trial < 50; ++trial) {
    const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 3, 0.3));
    const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 3, 0.3));
    CHECK(bounded_lipschitz_distance(a, a, family) == 0.0);
    CHECK(bounded_lipschitz_distance(a, b, family) <= wasserstein2_exact(a, b) + 1e-12);
    CHECK(bounded_lipschitz_distance(a, b, TestFunctionFamily::constant(0.7)) == 0.0);
  }

  const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 3, 0.3));
  const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 3, 0.3));
  TestFunctionFamily growing;
  double last = 0.0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    growing.add(family.member(i));
    const double d = bounded_lipschitz_distance(a, b, growing);
    CHECK(d >= last);
    last = d;
  }
  CHECK_THROWS_AS(bounded_lipschitz_distance(a, b, TestFunctionFamily{}), std::invalid_argument);
}

TEST_CASE("moment balls are closed") {
  const GridPtr g = make_grid(1, 8.0, 129);
  CHECK(moment_ball_contains(EmpiricalLaw::dirac(g, FieldPair::zeros(*g)), 1e-9, 2));

  FieldPair unit = FieldPair::zeros(*g);
  unit.u.setOnes();
  unit.u /= std::sqrt(l2_norm_sq(*g, unit.u));
  FieldPair two = unit;
  two.u *= 2.0;
  const EmpiricalLaw law = EmpiricalLaw::dirac(g, two);
  CHECK(std::pow(second_moment(law, 4), 0.25) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_FALSE(moment_ball_contains(law, 1.9, 4));
  CHECK(moment_ball_contains(law, 2.1, 4));
  CHECK(moment_ball_contains(law, std::pow(second_moment(law, 4), 0.25), 4));
  CHECK(moment_ball_contains(law, std::sqrt(second_moment(law, 2)), 2));
  CHECK_THROWS_AS(moment_ball_contains(law, 1.0, 3), std::invalid_argument);
}

TEST_CASE("second moments are a 1-Lipschitz function of the law in W2") {
  const GridPtr g = small_grid();
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const EmpiricalLaw a = uniform_law(g, oracle::random_atoms(*g, rng, 1 + trial % 4));
    const EmpiricalLaw b = uniform_law(g, oracle::random_atoms(*g, rng, 1 + trial % 3, 2.0));
    CHECK(std::abs(std::sqrt(second_moment(a, 2)) - std::sqrt(second_moment(b, 2))) <=
          wasserstein2_exact(a, b) + 1e-12);
  }
}

}  // TEST_SUITE
