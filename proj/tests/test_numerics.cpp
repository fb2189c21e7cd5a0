#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "netlasso/errors.hpp"
#include "netlasso/numerics.hpp"
#include "netlasso/rng.hpp"
#include "oracles.hpp"

using namespace netlasso;

namespace {

std::vector<double> random_vector(CounterRng& rng, std::size_t d, double scale) {
  std::vector<double> v(d);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

double l1(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("projection matches the bisection oracle") {
  CounterRng rng(101, Stream::kDirections);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t d = 1 + rng.below(40);
    const auto v = random_vector(rng, d, 1.0 + 3.0 * rng.uniform());
    const double r = 4.0 * rng.uniform();
    std::vector<double> out(d);
    project_l1_ball(v, r, out);
    const auto expect = oracle::project_l1_bisect(v, r);
    for (std::size_t i = 0; i < d; ++i) REQUIRE(out[i] == doctest::Approx(expect[i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("projection properties") {
  CounterRng rng(202, Stream::kDirections);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng.below(25);
    const auto v = random_vector(rng, d, 2.0);
    const auto w = random_vector(rng, d, 2.0);
    const double r = 3.0 * rng.uniform();
    std::vector<double> pv(d), pw(d), ppv(d);
    project_l1_ball(v, r, pv);
    project_l1_ball(w, r, pw);
    project_l1_ball(pv, r, ppv);

    // Feasible.
    CHECK(l1(pv) <= r * (1.0 + 1e-12) + 1e-15);
    // Idempotent.
    for (std::size_t i = 0; i < d; ++i) CHECK(ppv[i] == doctest::Approx(pv[i]).epsilon(1e-12));
    // Nonexpansive.
    CHECK(dist2(pv, pw) <= dist2(v, w) * (1.0 + 1e-12) + 1e-15);
    // Sign preserving, magnitude shrinking.
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(pv[i] * v[i] >= 0.0);
      CHECK(std::abs(pv[i]) <= std::abs(v[i]) + 1e-15);
    }
    // Closest point: no random feasible point is closer.
    for (int k = 0; k < 5; ++k) {
      auto y = random_vector(rng, d, 1.0);
      std::vector<double> py(d);
      project_l1_ball(y, r, py);
      CHECK(dist2(v, pv) <= dist2(v, py) + 1e-12);
    }
  }
}

TEST_CASE("projection edge cases") {
  const std::vector<double> v = {3.0, -1.0, 0.5};
  std::vector<double> out(3);
  project_l1_ball(v, 0.0, out);
  CHECK(out == std::vector<double>{0.0, 0.0, 0.0});

  project_l1_ball(v, 10.0, out);
  CHECK(out == v);

  // In-place projection.
  std::vector<double> inplace = v;
  project_l1_ball(inplace, 1.0, inplace);
  CHECK(l1(inplace) == doctest::Approx(1.0));
  CHECK(inplace[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(project_l1_ball(v, -1.0, out), InvalidArgument);
  std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> bad_out(2);
  CHECK_THROWS_AS(project_l1_ball(bad, 1.0, bad_out), InvalidArgument);
  CHECK_THROWS_AS(L1Ball(-0.5), InvalidArgument);

  L1Ball ball(2.0);
  CHECK(ball.contains(std::vector<double>{1.0, -1.0}));
  CHECK_FALSE(ball.contains(std::vector<double>{1.5, -1.0}));
}

TEST_CASE("projection threshold solves the mass equation") {
  const std::vector<double> v = {4.0, -2.0, 1.0, 0.25};
  const double tau = l1_projection_threshold(v, 3.0);
  double mass = 0.0;
  for (double x : v) mass += std::max(std::abs(x) - tau, 0.0);
  CHECK(mass == doctest::Approx(3.0));
  CHECK(l1_projection_threshold(v, 100.0) == 0.0);
}

TEST_CASE("spectral norm agrees with an SVD") {
  CounterRng rng(303, Stream::kDesign);
  for (int trial = 0; trial < 30; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(30));
    const auto cols = static_cast<Eigen::Index>(1 + rng.below(30));
    RealMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    const double expect = Eigen::JacobiSVD<RealMatrix>(m).singularValues()(0);
    CHECK(spectral_norm(m, 1e-5) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("spectral norm special inputs") {
  CHECK(spectral_norm(RealMatrix::Zero(4, 3), 1e-6) == 0.0);
  RealMatrix diag = RealMatrix::Zero(3, 3);
  diag.diagonal() << 1.0, -5.0, 2.0;
  CHECK(spectral_norm(diag, 1e-9) == doctest::Approx(5.0));
  CHECK(spectral_norm_symmetric_exact(diag) == doctest::Approx(5.0));
  CHECK_THROWS_AS(spectral_norm(diag, 0.0), InvalidArgument);
  CHECK_THROWS_AS(spectral_norm(diag, 0.1), InvalidArgument);
}

TEST_CASE("symmetry and finiteness helpers") {
  RealMatrix a(2, 2);
  a << 1.0, 2.0, 2.0, 3.0;
  CHECK(is_symmetric(a));
  a(0, 1) = 2.0 + 1e-10;
  CHECK_FALSE(is_symmetric(a));
  CHECK(is_symmetric(a, 1e-9));
  CHECK(all_finite(a));
  a(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(a));
}
