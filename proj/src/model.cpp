#include "netlasso/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "netlasso/errors.hpp"
#include "netlasso/rng.hpp"

namespace netlasso {

CovarianceSpec CovarianceSpec::diagonal(double low, double high) {
  if (!(low > 0.0) || !(high >= low)) {
    throw InvalidArgument("diagonal covariance needs 0 < low <= high");
  }
  return {CovarianceKind::kDiagonal, low, high, 0.0};
}

CovarianceSpec CovarianceSpec::toeplitz(double corr) {
  if (!(corr > -1.0 && corr < 1.0)) {
    throw InvalidArgument("toeplitz correlation must lie in (-1, 1)");
  }
  return {CovarianceKind::kToeplitz, 1.0, 1.0, corr};
}

double CovarianceSpec::variance(std::size_t j, std::size_t d) const {
  if (kind != CovarianceKind::kDiagonal) return 1.0;
  if (d <= 1) return high;
  return low + (high - low) * static_cast<double>(j) / static_cast<double>(d - 1);
}

double CovarianceSpec::zeta(std::size_t d) const {
  (void)d;
  return kind == CovarianceKind::kDiagonal ? high : 1.0;
}

double CovarianceSpec::quadratic_form(const RealVector& u) const {
  const auto d = static_cast<std::size_t>(u.size());
  switch (kind) {
    case CovarianceKind::kIdentity:
      return u.squaredNorm();
    case CovarianceKind::kDiagonal: {
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) sum += variance(j, d) * u[j] * u[j];
      return sum;
    }
    case CovarianceKind::kToeplitz: {
      // sum_jk corr^|j-k| u_j u_k via the running sum a_k = corr a_{k-1} + u_{k-1}.
      double sum = u.squaredNorm();
      double carry = 0.0;
      for (std::size_t k = 1; k < d; ++k) {
        carry = corr * (carry + u[k - 1]);
        sum += 2.0 * carry * u[k];
      }
      return sum;
    }
  }
  return 0.0;
}

std::pair<double, double> CovarianceSpec::eigen_extremes(std::size_t d) const {
  switch (kind) {
    case CovarianceKind::kIdentity:
      return {1.0, 1.0};
    case CovarianceKind::kDiagonal:
      return {d <= 1 ? high : low, high};
    case CovarianceKind::kToeplitz: {
      if (d <= 2048) {
        RealMatrix sigma(d, d);
        for (std::size_t j = 0; j < d; ++j) {
          for (std::size_t k = 0; k < d; ++k) {
            sigma(j, k) = std::pow(corr, std::abs(static_cast<double>(j) -
                                                  static_cast<double>(k)));
          }
        }
        Eigen::SelfAdjointEigenSolver<RealMatrix> solver(sigma,
                                                         Eigen::EigenvaluesOnly);
        return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
      }
      // Limits of the Kac-Murdock-Szego spectrum.
      const double a = std::abs(corr);
      return {(1.0 - a) / (1.0 + a), (1.0 + a) / (1.0 - a)};
    }
  }
  return {1.0, 1.0};
}

double ModelConfig::alpha() const {
  return static_cast<double>(s) * std::log(static_cast<double>(d)) /
         static_cast<double>(total_samples());
}

void ModelConfig::validate() const {
  if (d == 0) throw InvalidArgument("model dimension d must be positive");
  if (s < 1 || s > d) throw InvalidArgument("sparsity must satisfy 1 <= s <= d");
  if (m < 1) throw InvalidArgument("agent count m must be positive");
  if (n < 1) throw InvalidArgument("per-agent sample count n must be positive");
  if (!(sigma_noise >= 0.0) || !std::isfinite(sigma_noise)) {
    throw InvalidArgument("noise standard deviation must be nonnegative");
  }
}

LinearModel::LinearModel(ModelConfig config, std::vector<RealMatrix> designs,
                         std::vector<RealVector> noise, RealVector theta_star)
    : config_(std::move(config)),
      designs_(std::move(designs)),
      noise_(std::move(noise)),
      theta_star_(std::move(theta_star)) {
  config_.validate();
  if (designs_.size() != config_.m || noise_.size() != config_.m ||
      static_cast<std::size_t>(theta_star_.size()) != config_.d) {
    throw InvalidArgument("linear model blocks do not match the configuration");
  }
  responses_.reserve(config_.m);
  for (std::size_t i = 0; i < config_.m; ++i) {
    if (static_cast<std::size_t>(designs_[i].rows()) != config_.n ||
        static_cast<std::size_t>(designs_[i].cols()) != config_.d ||
        static_cast<std::size_t>(noise_[i].size()) != config_.n) {
      throw InvalidArgument("agent block has the wrong shape");
    }
    responses_.push_back(designs_[i] * theta_star_ + noise_[i]);
  }
}

void LinearModel::check_agent(std::size_t agent) const {
  if (agent >= config_.m) {
    throw InvalidArgument("agent index " + std::to_string(agent) +
                          " out of range");
  }
}

const RealMatrix& LinearModel::design(std::size_t agent) const {
  check_agent(agent);
  return designs_[agent];
}

const RealVector& LinearModel::response(std::size_t agent) const {
  check_agent(agent);
  return responses_[agent];
}

const RealVector& LinearModel::noise(std::size_t agent) const {
  check_agent(agent);
  return noise_[agent];
}

double LinearModel::local_loss(std::size_t agent, const RealVector& theta) const {
  check_agent(agent);
  if (static_cast<std::size_t>(theta.size()) != d()) {
    throw InvalidArgument("theta has the wrong dimension");
  }
  return (responses_[agent] - designs_[agent] * theta).squaredNorm() /
         (2.0 * static_cast<double>(n()));
}

void LinearModel::local_gradient_into(std::size_t agent,
                                      std::span<const double> theta,
                                      std::span<double> out) const {
  check_agent(agent);
  if (theta.size() != d() || out.size() != d()) {
    throw InvalidArgument("gradient buffers have the wrong dimension");
  }
  const Eigen::Map<const RealVector> th(theta.data(), theta.size());
  Eigen::Map<RealVector> g(out.data(), out.size());
  const RealVector residual = designs_[agent] * th - responses_[agent];
  g.noalias() = designs_[agent].transpose() * residual;
  g /= static_cast<double>(n());
}

RealVector LinearModel::local_gradient(std::size_t agent,
                                       const RealVector& theta) const {
  RealVector out(d());
  local_gradient_into(agent, {theta.data(), static_cast<std::size_t>(theta.size())},
                      {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

void LinearModel::stacked_local_gradients(const AgentMatrix& thetas,
                                          AgentMatrix& out) const {
  if (static_cast<std::size_t>(thetas.rows()) != m() ||
      static_cast<std::size_t>(thetas.cols()) != d()) {
    throw InvalidArgument("stacked iterate has the wrong shape");
  }
  out.resize(thetas.rows(), thetas.cols());
  for (std::size_t i = 0; i < m(); ++i) {
    local_gradient_into(i, {thetas.row(i).data(), d()}, {out.row(i).data(), d()});
  }
}

double LinearModel::global_loss(const RealVector& theta) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < m(); ++i) sum += local_loss(i, theta);
  return sum / static_cast<double>(m());
}

RealVector LinearModel::global_gradient(const RealVector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != d()) {
    throw InvalidArgument("theta has the wrong dimension");
  }
  RealVector sum = RealVector::Zero(d());
  RealVector local(d());
  for (std::size_t i = 0; i < m(); ++i) {
    local_gradient_into(i, {theta.data(), d()}, {local.data(), d()});
    sum += local;
  }
  return sum / static_cast<double>(m());
}

AgentMatrix LinearModel::global_gradients(const AgentMatrix& thetas) const {
  if (static_cast<std::size_t>(thetas.cols()) != d()) {
    throw InvalidArgument("stacked iterate has the wrong dimension");
  }
  // Column j of `acc` accumulates X^T (X theta_j - y) over agents; with equal
  // block sizes (1/m) sum_i (1/n) X_i^T r_i = (1/N) X^T r.
  RealMatrix acc = RealMatrix::Zero(d(), thetas.rows());
  const RealMatrix thetas_t = thetas.transpose();
  for (std::size_t i = 0; i < m(); ++i) {
    RealMatrix residual = designs_[i] * thetas_t;
    residual.colwise() -= responses_[i];
    acc.noalias() += designs_[i].transpose() * residual;
  }
  acc /= static_cast<double>(total_samples());
  return acc.transpose();
}

double LinearModel::design_energy(const RealVector& u) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < m(); ++i) sum += (designs_[i] * u).squaredNorm();
  return sum / static_cast<double>(total_samples());
}

bool LinearModel::operator==(const LinearModel& other) const {
  if (config_.d != other.config_.d || config_.s != other.config_.s ||
      config_.m != other.config_.m || config_.n != other.config_.n ||
      config_.seed != other.config_.seed ||
      config_.sigma_noise != other.config_.sigma_noise ||
      theta_star_ != other.theta_star_) {
    return false;
  }
  for (std::size_t i = 0; i < m(); ++i) {
    if (designs_[i] != other.designs_[i] || noise_[i] != other.noise_[i]) {
      return false;
    }
  }
  return true;
}

LinearModel generate_model(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d;

  RealVector theta_star = RealVector::Zero(d);
  CounterRng signal_rng(cfg.seed, Stream::kSignal);
  for (std::size_t j = 0; j < cfg.s; ++j) {
    theta_star[j] = cfg.signal == SignalRule::kGaussian
                        ? signal_rng.normal()
                        : (signal_rng.uniform() < 0.5 ? -1.0 : 1.0);
  }

  std::vector<double> scale(d);
  for (std::size_t j = 0; j < d; ++j) {
    scale[j] = std::sqrt(cfg.covariance.variance(j, d));
  }
  const bool toeplitz = cfg.covariance.kind == CovarianceKind::kToeplitz;
  const double corr = cfg.covariance.corr;
  const double innovation = std::sqrt(1.0 - corr * corr);

  std::vector<RealMatrix> designs;
  std::vector<RealVector> noise;
  designs.reserve(cfg.m);
  noise.reserve(cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) {
    CounterRng design_rng(cfg.seed, Stream::kDesign, static_cast<std::uint32_t>(i));
    RealMatrix x(cfg.n, d);
    for (std::size_t row = 0; row < cfg.n; ++row) {
      if (toeplitz) {
        // Stationary AR(1) row has covariance corr^|j-k|.
        double prev = design_rng.normal();
        x(row, 0) = prev;
        for (std::size_t j = 1; j < d; ++j) {
          prev = corr * prev + innovation * design_rng.normal();
          x(row, j) = prev;
        }
      } else {
        for (std::size_t j = 0; j < d; ++j) x(row, j) = scale[j] * design_rng.normal();
      }
    }
    designs.push_back(std::move(x));

    CounterRng noise_rng(cfg.seed, Stream::kNoise, static_cast<std::uint32_t>(i));
    RealVector e(cfg.n);
    for (std::size_t row = 0; row < cfg.n; ++row) {
      e[row] = cfg.sigma_noise * noise_rng.normal();
    }
    noise.push_back(std::move(e));
  }
  return LinearModel(cfg, std::move(designs), std::move(noise), std::move(theta_star));
}

double design_lipschitz(const LinearModel& model, double tol) {
  const std::size_t d = model.d();
  RealVector v(d);
  for (std::size_t j = 0; j < d; ++j) {
    v[j] = 1.0 + 0.5 * static_cast<double>((j * 7919 + 13) % 1009) / 1009.0;
  }
  v.normalize();
  double lambda = 0.0;
  const auto n_total = static_cast<double>(model.total_samples());
  for (std::size_t it = 0; it < 10000; ++it) {
    RealVector w = RealVector::Zero(d);
    for (std::size_t i = 0; i < model.m(); ++i) {
      const RealVector xv = model.design(i) * v;
      w.noalias() += model.design(i).transpose() * xv;
    }
    w /= n_total;
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    if ((w - next * v).norm() <= tol * next) return next;
    lambda = next;
    v = w / norm;
  }
  return lambda;
}

ReferenceSolution reference_solution(const LinearModel& model, double r,
                                     double tol, std::size_t max_iterations,
                                     bool throw_at_cap) {
  if (!(r > 0.0)) throw InvalidArgument("reference solution needs radius r > 0");
  ReferenceSolution out;
  out.gamma = 1.05 * design_lipschitz(model, 1e-3);
  if (out.gamma <= 0.0) out.gamma = 1.0;

  RealVector theta = RealVector::Zero(model.d());
  RealVector next(model.d());
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const RealVector step = theta - model.global_gradient(theta) / out.gamma;
    project_l1_ball({step.data(), model.d()}, r, {next.data(), model.d()});
    out.residual = (next - theta).norm();
    theta.swap(next);
    out.iterations = it;
    if (out.residual <= tol) {
      out.theta_hat = theta;
      out.converged = true;
      out.constraint_active =
          std::abs(l1_norm({theta.data(), model.d()}) - r) <= 1e-8 * r;
      return out;
    }
  }
  if (!throw_at_cap) {
    out.theta_hat = theta;
    out.constraint_active =
        std::abs(l1_norm({theta.data(), model.d()}) - r) <= 1e-8 * r;
    return out;
  }
  throw ConvergenceFailure("reference solution: PGD iteration cap reached",
                           theta.norm(), out.residual);
}

double statistical_nu(const RealVector& theta_hat, const RealVector& theta_star,
                      std::size_t s) {
  const RealVector delta = theta_hat - theta_star;
  return 2.0 * delta.lpNorm<1>() +
         2.0 * std::sqrt(static_cast<double>(s)) * delta.norm();
}

double cone_bound_margin(const RealVector& theta, const RealVector& theta_hat,
                         const RealVector& theta_star, std::size_t s) {
  const RealVector diff = theta - theta_hat;
  return 2.0 * std::sqrt(static_cast<double>(s)) * diff.norm() +
         statistical_nu(theta_hat, theta_star, s) - diff.lpNorm<1>();
}

double ProbeReport::lower_margin(const DirectionProbe& p, double c1) const {
  return p.energy - 0.5 * p.sigma_energy + c1 * zeta * log_d_over_N * p.l1_squared;
}

double ProbeReport::upper_margin(const DirectionProbe& p, double c1) const {
  return 2.0 * p.sigma_energy + c1 * zeta * log_d_over_N * p.l1_squared - p.energy;
}

double ProbeReport::local_margin(const DirectionProbe& p, double c1) const {
  // m log d / n == m^2 log d / N.
  const double md = static_cast<double>(m);
  return 16.0 * md * p.sigma_energy +
         c1 * zeta * md * md * log_d_over_N * p.l1_squared - p.local_energy;
}

double ProbeReport::fitted_c1() const {
  double c = 0.0;
  const auto need = [&](double margin_at_zero, double coefficient) {
    if (margin_at_zero >= 0.0) return 0.0;
    return coefficient > 0.0 ? -margin_at_zero / coefficient
                             : std::numeric_limits<double>::infinity();
  };
  const double md = static_cast<double>(m);
  for (const auto& p : directions) {
    const double coef = zeta * log_d_over_N * p.l1_squared;
    c = std::max(c, need(lower_margin(p, 0.0), coef));
    c = std::max(c, need(upper_margin(p, 0.0), coef));
    c = std::max(c, need(local_margin(p, 0.0), coef * md * md));
  }
  return c;
}

double ProbeReport::satisfaction_fraction(double c1) const {
  if (directions.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& p : directions) {
    if (lower_margin(p, c1) >= 0.0 && upper_margin(p, c1) >= 0.0 &&
        local_margin(p, c1) >= 0.0) {
      ++ok;
    }
  }
  return static_cast<double>(ok) / static_cast<double>(directions.size());
}

double ProbeReport::global_satisfaction_fraction(double c1) const {
  if (directions.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& p : directions) {
    if (lower_margin(p, c1) >= 0.0 && upper_margin(p, c1) >= 0.0) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(directions.size());
}

namespace {

RealVector sparse_direction(CounterRng& rng, std::size_t d, std::size_t k) {
  // Partial Fisher-Yates over the index set picks the support.
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RealVector u = RealVector::Zero(d);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + rng.below(d - j);
    std::swap(idx[j], idx[pick]);
    u[idx[j]] = rng.normal();
  }
  return u;
}

DirectionProbe evaluate_direction(const LinearModel& model, const RealVector& u,
                                  DirectionFamily family, std::size_t support) {
  DirectionProbe p;
  p.family = family;
  p.support = support;
  const double l1 = u.lpNorm<1>();
  p.l1_squared = l1 * l1;
  p.sigma_energy = model.config().covariance.quadratic_form(u);
  double total = 0.0;
  for (std::size_t i = 0; i < model.m(); ++i) {
    const double e = (model.design(i) * u).squaredNorm();
    total += e;
    p.local_energy = std::max(p.local_energy, e / static_cast<double>(model.n()));
  }
  p.energy = total / static_cast<double>(model.total_samples());
  return p;
}

ProbeReport empty_report(const LinearModel& model) {
  ProbeReport report;
  report.log_d_over_N = std::log(static_cast<double>(model.d())) /
                        static_cast<double>(model.total_samples());
  report.zeta = model.zeta();
  report.m = model.m();
  report.n = model.n();
  return report;
}

double finite_difference_check(const LinearModel& model, CounterRng& rng) {
  RealVector theta(model.d());
  for (auto& v : theta) v = rng.normal();
  const RealVector grad = model.global_gradient(theta);
  const std::size_t coords = std::min<std::size_t>(model.d(), 8);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t j = rng.below(model.d());
    RealVector plus = theta, minus = theta;
    plus[j] += h;
    minus[j] -= h;
    const double fd = (model.global_loss(plus) - model.global_loss(minus)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[j]) / std::max(1.0, grad.norm()));
  }
  return worst;
}

}  // namespace

ProbeReport rsc_rsm_probe(const LinearModel& model, std::size_t n_dirs,
                          std::uint64_t seed) {
  if (n_dirs < 1) throw InvalidArgument("probe needs at least one direction");
  CounterRng rng(seed, Stream::kDirections);
  ProbeReport report = empty_report(model);
  const std::size_t d = model.d();
  const std::size_t s = model.s();
  const std::size_t supports[3] = {1, std::min(s, d), std::min(2 * s, d)};
  report.directions.reserve(n_dirs);
  for (std::size_t k = 0; k < n_dirs; ++k) {
    const std::size_t family = k % 4;
    if (family < 3) {
      const RealVector u = sparse_direction(rng, d, supports[family]);
      report.directions.push_back(
          evaluate_direction(model, u, DirectionFamily::kSparse, supports[family]));
    } else {
      RealVector u(d);
      for (auto& v : u) v = rng.normal();
      report.directions.push_back(
          evaluate_direction(model, u, DirectionFamily::kDense, d));
    }
  }
  report.gradient_fd_rel_error = finite_difference_check(model, rng);
  return report;
}

ProbeReport rsc_rsm_probe_sparse(const LinearModel& model, std::size_t n_dirs,
                                 std::size_t k, std::uint64_t seed) {
  if (n_dirs < 1) throw InvalidArgument("probe needs at least one direction");
  if (k < 1 || k > model.d()) throw InvalidArgument("support size out of range");
  CounterRng rng(seed, Stream::kDirections);
  ProbeReport report = empty_report(model);
  report.directions.reserve(n_dirs);
  for (std::size_t j = 0; j < n_dirs; ++j) {
    const RealVector u = sparse_direction(rng, model.d(), k);
    report.directions.push_back(
        evaluate_direction(model, u, DirectionFamily::kSparse, k));
  }
  report.gradient_fd_rel_error = finite_difference_check(model, rng);
  return report;
}

}  // namespace netlasso
