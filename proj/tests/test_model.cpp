#include <doctest.h>

#include <cmath>
#include <sstream>

#include "netlasso/errors.hpp"
#include "netlasso/model.hpp"
#include "netlasso/rng.hpp"
#include "oracles.hpp"

using namespace netlasso;

namespace {

ModelConfig small_config(std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.d = 12;
  cfg.s = 3;
  cfg.m = 4;
  cfg.n = 6;
  cfg.sigma_noise = 0.5;
  cfg.seed = seed;
  return cfg;
}

RealVector random_point(CounterRng& rng, std::size_t d) {
  RealVector v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("model generation is deterministic and seed dependent") {
  const LinearModel a = generate_model(small_config(5));
  const LinearModel b = generate_model(small_config(5));
  const LinearModel c = generate_model(small_config(6));
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("ground truth is supported on the first s coordinates") {
  ModelConfig cfg = small_config();
  const LinearModel model = generate_model(cfg);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    if (j < cfg.s) {
      CHECK(model.theta_star()[j] != 0.0);
    } else {
      CHECK(model.theta_star()[j] == 0.0);
    }
  }
  cfg.signal = SignalRule::kUniformSign;
  const LinearModel signs = generate_model(cfg);
  for (std::size_t j = 0; j < cfg.s; ++j) CHECK(std::abs(signs.theta_star()[j]) == 1.0);
}

TEST_CASE("responses follow the linear model") {
  const LinearModel model = generate_model(small_config());
  for (std::size_t i = 0; i < model.m(); ++i) {
    const RealVector expect = model.design(i) * model.theta_star() + model.noise(i);
    CHECK((model.response(i) - expect).norm() == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(model.design(model.m()), InvalidArgument);
}

TEST_CASE("losses match a from-scratch evaluation") {
  const LinearModel model = generate_model(small_config());
  CounterRng rng(17, Stream::kDirections);
  for (int k = 0; k < 10; ++k) {
    const RealVector theta = random_point(rng, model.d());
    CHECK(model.global_loss(theta) == doctest::Approx(oracle::stacked_loss(model, theta)));
  }
}

TEST_CASE("gradients agree with central finite differences") {
  CounterRng rng(23, Stream::kDirections);
  for (int probe = 0; probe < 20; ++probe) {
    ModelConfig cfg = small_config(100 + probe);
    cfg.d = 3 + rng.below(15);
    cfg.s = 1 + rng.below(cfg.d);
    const LinearModel model = generate_model(cfg);
    const RealVector theta = random_point(rng, model.d());
    const RealVector grad = model.global_gradient(theta);
    const double h = 1e-5;
    for (std::size_t j = 0; j < model.d(); ++j) {
      RealVector plus = theta, minus = theta;
      plus[j] += h;
      minus[j] -= h;
      const double fd =
          (oracle::stacked_loss(model, plus) - oracle::stacked_loss(model, minus)) / (2 * h);
      CHECK(std::abs(fd - grad[j]) <= 1e-6 * std::max(1.0, grad.norm()));
    }
    // Local gradients of each agent, same scheme.
    const std::size_t agent = rng.below(model.m());
    const RealVector local = model.local_gradient(agent, theta);
    for (std::size_t j = 0; j < model.d(); ++j) {
      RealVector plus = theta, minus = theta;
      plus[j] += h;
      minus[j] -= h;
      const double fd = (model.local_loss(agent, plus) - model.local_loss(agent, minus)) / (2 * h);
      CHECK(std::abs(fd - local[j]) <= 1e-6 * std::max(1.0, local.norm()));
    }
  }
}

TEST_CASE("batched gradients match per-row evaluation") {
  const LinearModel model = generate_model(small_config());
  CounterRng rng(31, Stream::kDirections);
  AgentMatrix thetas(model.m(), model.d());
  for (std::size_t i = 0; i < model.m(); ++i) thetas.row(i) = random_point(rng, model.d()).transpose();

  const AgentMatrix global = model.global_gradients(thetas);
  AgentMatrix local;
  model.stacked_local_gradients(thetas, local);
  for (std::size_t i = 0; i < model.m(); ++i) {
    const RealVector row = thetas.row(i).transpose();
    CHECK((global.row(i).transpose() - model.global_gradient(row)).norm() < 1e-12);
    CHECK((local.row(i).transpose() - model.local_gradient(i, row)).norm() < 1e-12);
  }
}

TEST_CASE("noiseless gradients vanish at the ground truth") {
  ModelConfig cfg = small_config();
  cfg.sigma_noise = 0.0;
  const LinearModel model = generate_model(cfg);
  CHECK(model.global_gradient(model.theta_star()).norm() < 1e-13);
  CHECK(model.global_loss(model.theta_star()) == 0.0);
}

TEST_CASE("alpha is s log d over N") {
  ModelConfig cfg = small_config();
  CHECK(cfg.alpha() == doctest::Approx(3.0 * std::log(12.0) / 24.0));
  cfg.s = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = small_config();
  cfg.sigma_noise = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("covariance quadratic forms and spectra") {
  CounterRng rng(41, Stream::kDirections);
  const std::size_t d = 9;
  for (const CovarianceSpec& spec :
       {CovarianceSpec::identity(), CovarianceSpec::diagonal(0.5, 2.0),
        CovarianceSpec::toeplitz(0.6), CovarianceSpec::toeplitz(-0.3)}) {
    RealMatrix sigma(d, d);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        if (spec.kind == CovarianceKind::kToeplitz) {
          sigma(j, k) = std::pow(spec.corr, std::abs(static_cast<int>(j) - static_cast<int>(k)));
        } else {
          sigma(j, k) = j == k ? spec.variance(j, d) : 0.0;
        }
      }
    }
    const RealVector u = random_point(rng, d);
    CHECK(spec.quadratic_form(u) == doctest::Approx(u.dot(sigma * u)));
    Eigen::SelfAdjointEigenSolver<RealMatrix> eig(sigma);
    const auto [lo, hi] = spec.eigen_extremes(d);
    CHECK(lo == doctest::Approx(eig.eigenvalues().minCoeff()));
    CHECK(hi == doctest::Approx(eig.eigenvalues().maxCoeff()));
  }
  CHECK(CovarianceSpec::diagonal(0.5, 2.0).zeta(10) == 2.0);
  CHECK_THROWS_AS(CovarianceSpec::toeplitz(1.0), InvalidArgument);
}

TEST_CASE("toeplitz designs have the requested correlation") {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.s = 1;
  cfg.m = 1;
  cfg.n = 40000;
  cfg.covariance = CovarianceSpec::toeplitz(0.5);
  const LinearModel model = generate_model(cfg);
  const RealMatrix& x = model.design(0);
  const RealMatrix emp = x.transpose() * x / static_cast<double>(cfg.n);
  CHECK(emp(0, 0) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(emp(2, 3) == doctest::Approx(0.5).epsilon(0.06));
  CHECK(emp(1, 3) == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("model container round trip") {
  ModelConfig cfg = small_config();
  cfg.covariance = CovarianceSpec::diagonal(0.5, 1.5);
  const LinearModel model = generate_model(cfg);
  std::stringstream buffer;
  write_model(buffer, model);
  const std::string bytes = buffer.str();
  CHECK(bytes.substr(0, 8) == "NLMODEL1");

  std::stringstream in(bytes);
  const LinearModel back = read_model(in);
  CHECK(back == model);
  CHECK(back.config().covariance.kind == CovarianceKind::kDiagonal);
  CHECK(back.response(2) == model.response(2));

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_model(truncated), InvalidArgument);
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  std::stringstream bad(corrupt);
  CHECK_THROWS_AS(read_model(bad), InvalidArgument);
}

TEST_CASE("reference solution matches a grid minimizer in three dimensions") {
  ModelConfig cfg;
  cfg.d = 3;
  cfg.s = 2;
  cfg.m = 2;
  cfg.n = 3;
  cfg.sigma_noise = 0.3;
  cfg.seed = 77;
  const LinearModel model = generate_model(cfg);
  const double r = 0.6 * model.theta_star().lpNorm<1>();
  const ReferenceSolution ref = reference_solution(model, r, 1e-12);
  CHECK(ref.converged);
  CHECK(ref.theta_hat.lpNorm<1>() <= r * (1 + 1e-12));
  CHECK(ref.constraint_active);

  // Brute force: coarse grid over the cube, then successive refinement,
  // keeping only points inside the ball.
  RealVector best = RealVector::Zero(3);
  double best_loss = oracle::stacked_loss(model, best);
  RealVector center = RealVector::Zero(3);
  double half = r;
  for (int level = 0; level < 8; ++level) {
    const int steps = 40;
    for (int a = -steps; a <= steps; ++a) {
      for (int b = -steps; b <= steps; ++b) {
        for (int c = -steps; c <= steps; ++c) {
          RealVector p(3);
          p << center[0] + half * a / steps, center[1] + half * b / steps,
              center[2] + half * c / steps;
          if (p.lpNorm<1>() > r) continue;
          const double loss = oracle::stacked_loss(model, p);
          if (loss < best_loss) {
            best_loss = loss;
            best = p;
          }
        }
      }
    }
    center = best;
    half /= 8.0;
  }
  CHECK(model.global_loss(ref.theta_hat) <= best_loss + 1e-10);
  CHECK((ref.theta_hat - best).norm() < 1e-4);
}

TEST_CASE("reference solution honors its iteration cap") {
  const LinearModel model = generate_model(small_config());
  CHECK_THROWS_AS(reference_solution(model, 1.0, 1e-300, 3), ConvergenceFailure);
  const ReferenceSolution partial = reference_solution(model, 1.0, 1e-300, 3, false);
  CHECK_FALSE(partial.converged);
  CHECK(partial.iterations == 3);
  CHECK_THROWS_AS(reference_solution(model, 0.0), InvalidArgument);
}

TEST_CASE("statistical nu and the cone margin") {
  RealVector hat(3), star(3);
  hat << 1.0, 0.5, 0.0;
  star << 1.0, 0.0, 0.0;
  CHECK(statistical_nu(hat, star, 4) == doctest::Approx(2 * 0.5 + 2 * 2 * 0.5));
  CHECK(cone_bound_margin(hat, hat, star, 4) == doctest::Approx(statistical_nu(hat, star, 4)));
}

TEST_CASE("curvature probe bookkeeping") {
  ModelConfig cfg;
  cfg.d = 50;
  cfg.s = 3;
  cfg.m = 4;
  cfg.n = 100;
  cfg.seed = 3;
  const LinearModel model = generate_model(cfg);
  const ProbeReport report = rsc_rsm_probe(model, 400, 9);
  CHECK(report.directions.size() == 400);
  CHECK(report.gradient_fd_rel_error < 1e-6);
  // The fitted constant satisfies every direction by construction.
  CHECK(report.satisfaction_fraction(report.fitted_c1() * (1 + 1e-9) + 1e-12) == 1.0);
  for (const auto& p : report.directions) {
    CHECK(p.energy >= 0.0);
    CHECK(p.local_energy * static_cast<double>(cfg.m) >= p.energy * (1 - 1e-12));
  }
  const ProbeReport sparse = rsc_rsm_probe_sparse(model, 100, 3, 9);
  for (const auto& p : sparse.directions) CHECK(p.support == 3);
  CHECK_THROWS_AS(rsc_rsm_probe_sparse(model, 10, 0, 1), InvalidArgument);
}
