#include "netlasso/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "netlasso/errors.hpp"

namespace netlasso {

MetricsRecord compute_metrics(const SolverState& state, const LinearModel& model,
                              const RealVector* theta_hat, const MetricsOptions& options) {
  const AgentMatrix& theta = state.theta;
  const Eigen::Index m = theta.rows();
  const Eigen::Index d = theta.cols();
  if (d != static_cast<Eigen::Index>(model.d()) || m == 0) {
    throw InvalidArgument("state dimensions do not match the model");
  }
  MetricsRecord rec;
  rec.t = state.t;

  const RealVector& star = model.theta_star();
  double est = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) est += (theta.row(i).transpose() - star).squaredNorm();
  rec.estimation_error = est / static_cast<double>(m);
  const double star_sq = star.squaredNorm();
  rec.estimation_error_normalized = star_sq > 0.0 ? rec.estimation_error / star_sq
                                                  : rec.estimation_error;

  if (theta_hat != nullptr) {
    double opt = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) opt += (theta.row(i).transpose() - *theta_hat).squaredNorm();
    rec.optimization_error = opt / static_cast<double>(m);
    rec.optimization_error_normalized =
        star_sq > 0.0 ? *rec.optimization_error / star_sq : *rec.optimization_error;
  }

  const Eigen::RowVectorXd mean = theta.colwise().mean();
  double cons = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) cons += (theta.row(i) - mean).squaredNorm();
  rec.consensus_error = cons;

  const bool tracked = state.tracking.rows() == m && state.tracking.cols() == d;
  if (tracked && state.local_grads.rows() == m) {
    const Eigen::RowVectorXd g_mean = state.tracking.colwise().mean();
    const Eigen::RowVectorXd l_mean = state.local_grads.colwise().mean();
    const double scale = std::max({options.gradient_scale, l_mean.norm(),
                                   std::numeric_limits<double>::min()});
    rec.tracking_conservation = (g_mean - l_mean).norm() / scale;
  }

  if (tracked && options.tracking_residual) {
    const AgentMatrix full = model.global_gradients(theta);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      worst = std::max(worst, (state.tracking.row(i) - full.row(i)).norm());
    }
    rec.tracking_residual = worst;
    if (theta_hat != nullptr && state.half.rows() == m) {
      double delta = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        delta += (full.row(i) - state.tracking.row(i))
                     .dot(state.half.row(i) - theta_hat->transpose());
      }
      rec.delta_t = delta;
    }
  }
  return rec;
}

void TheoryParams::validate() const {
  const double fields[] = {mu, L, ell, tau_mu, tau_g, tau_ell, s, rho, c_m, m, nu, C1, C2, C3, c6};
  for (double v : fields) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument("theory parameters must be finite and nonnegative");
    }
  }
  if (mu > L || L > ell) throw InvalidArgument("theory parameters require mu <= L <= ell");
}

TheoryParams gaussian_ensemble_params(const ModelConfig& cfg, double rho, double c1) {
  cfg.validate();
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("rho must lie in [0, 1]");
  if (!(c1 >= 0.0)) throw InvalidArgument("c1 must be nonnegative");
  const auto [sigma_min, sigma_max] = cfg.covariance.eigen_extremes(cfg.d);
  const double zeta = cfg.covariance.zeta(cfg.d);
  const double big_n = static_cast<double>(cfg.total_samples());
  const double log_d = std::log(static_cast<double>(cfg.d));
  const double m = static_cast<double>(cfg.m);

  TheoryParams p;
  p.mu = sigma_min / 2.0;
  p.L = 2.0 * sigma_max;
  p.ell = 16.0 * m * sigma_max;
  p.tau_mu = c1 * zeta * log_d / big_n;
  p.tau_g = p.tau_mu;
  p.tau_ell = c1 * zeta * m * m * log_d / big_n;
  p.s = static_cast<double>(cfg.s);
  p.rho = rho;
  p.c_m = std::sqrt(m);
  p.m = m;
  return p;
}

RateResult theoretical_rate(const TheoryParams& p) {
  p.validate();
  if (p.mu <= 0.0) throw PreconditionViolation("rate needs mu > 0");
  const double denom = 1.0 - 2.0 * p.C1 * p.s * p.tau_g / p.L;
  if (!(denom > 0.0)) {
    throw PreconditionViolation("rate denominator 1 - 2 C1 s tau_g / L is not positive");
  }
  const double numer = 1.0 - 1.0 / (2.0 * p.kappa()) + p.C1 * p.s * (p.tau_mu + p.tau_g) / p.L;
  RateResult out;
  out.lambda = numer / denom;
  out.theory_violated = out.lambda >= 1.0;
  return out;
}

double delta_stat_network_term(const TheoryParams& p) {
  p.validate();
  if (!(p.rho < 1.0)) throw PreconditionViolation("residual term needs rho < 1");
  if (p.rho == 0.0) return 0.0;
  if (p.mu <= 0.0 || p.L <= 0.0) throw PreconditionViolation("residual term needs mu, L > 0");
  const double one_minus = 1.0 - p.rho;
  return p.rho / (2.0 * p.L) * (p.ell / p.mu) *
         (5.0 * p.C2 * p.C2 * p.c_m * p.c_m / (one_minus * one_minus)) * p.tau_ell * p.nu * p.nu;
}

double delta_stat(const TheoryParams& p) {
  const double network = delta_stat_network_term(p);
  if (p.L <= 0.0) throw PreconditionViolation("residual term needs L > 0");
  return network + p.C1 * (p.tau_mu + p.tau_g) * p.nu * p.nu / p.L;
}

double theoretical_gamma(const TheoryParams& p) {
  p.validate();
  if (!(p.rho < 1.0)) throw PreconditionViolation("step size formula needs rho < 1");
  if (p.mu <= 0.0) throw PreconditionViolation("step size formula needs mu > 0");
  const double q = 1.0 - p.rho;
  return p.L + p.C3 * (p.ell * p.ell / p.mu) * p.c_m * p.c_m * std::sqrt(p.rho) / (q * q * q * q);
}

namespace {

ConditionItem make_item(std::string name, double lhs, double bound, bool pass) {
  ConditionItem item;
  item.name = std::move(name);
  item.lhs = lhs;
  item.bound = bound;
  item.pass = pass;
  item.slack_ratio = lhs > 0.0 ? bound / lhs : std::numeric_limits<double>::infinity();
  return item;
}

}  // namespace

ConditionReport condition_check(const TheoryParams& p) {
  p.validate();
  ConditionReport report;

  const double curvature_need = 36.0 * p.C1 * p.s * (p.tau_mu + p.tau_g);
  report.mu_condition = make_item("mu > 36 C1 s (tau_mu + tau_g)", curvature_need, p.mu,
                                  p.mu > curvature_need);

  double rho_bound = 0.0;
  if (p.mu > 0.0) {
    const double mu2 = p.mu * p.mu;
    const double cm2c2 = p.c_m * p.c_m * p.C2 * p.C2;
    const double inner = 75.0 * cm2c2 * p.ell * p.ell / mu2 +
                         (p.ell / mu2) * 6.0 * cm2c2 * p.s * p.tau_ell;
    const double base = 2.0 * inner;
    rho_bound = base > 0.0 ? 1.0 / (base * base) : std::numeric_limits<double>::infinity();
  }
  report.rho_condition = make_item("rho <= network bound", p.rho, rho_bound, p.rho <= rho_bound);

  double scaling = std::numeric_limits<double>::infinity();
  if (p.mu > 0.0) scaling = p.c6 * p.rho * std::pow(p.m, 8.0) * std::pow(p.kappa(), 4.0);
  if (p.rho == 0.0) scaling = 0.0;
  report.scaling_condition = make_item("c6 rho m^8 kappa^4 < 1", scaling, 1.0, scaling < 1.0);
  return report;
}

double c_g_estimate(const LinearModel& model, const RealVector& theta) {
  double local_max = 0.0;
  for (std::size_t j = 0; j < model.m(); ++j) {
    local_max = std::max(local_max, model.local_gradient(j, theta).cwiseAbs().maxCoeff());
  }
  return local_max + model.global_gradient(theta).cwiseAbs().maxCoeff();
}

double plateau_level(std::span<const double> series) {
  if (series.empty()) throw InsufficientData("empty series has no plateau");
  const std::size_t quarter = std::max<std::size_t>(1, series.size() / 4);
  std::vector<double> tail(series.end() - static_cast<std::ptrdiff_t>(quarter), series.end());
  const std::size_t mid = tail.size() / 2;
  std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid), tail.end());
  double med = tail[mid];
  if (tail.size() % 2 == 0) {
    const double lower = *std::max_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

SlopeFit slope_fit(std::span<const double> series,
                   std::optional<std::pair<std::size_t, std::size_t>> window) {
  SlopeFit fit;
  fit.plateau = plateau_level(series);
  if (window) {
    fit.begin = window->first;
    fit.end = window->second;
    if (fit.end > series.size() || fit.begin > fit.end) {
      throw InvalidArgument("slope window outside the series");
    }
  } else {
    const double cut = 4.0 * fit.plateau;
    std::size_t end = 0;
    while (end < series.size() && series[end] > cut) ++end;
    fit.begin = 0;
    fit.end = end;
  }
  const std::size_t count = fit.end - fit.begin;
  if (count < 10) throw InsufficientData("slope window has fewer than 10 points");

  double sum_t = 0.0, sum_y = 0.0;
  for (std::size_t t = fit.begin; t < fit.end; ++t) {
    if (!(series[t] > 0.0) || !std::isfinite(series[t])) {
      throw InvalidArgument("slope fit needs positive finite values");
    }
    sum_t += static_cast<double>(t);
    sum_y += std::log(series[t]);
  }
  const double n = static_cast<double>(count);
  const double t_bar = sum_t / n;
  const double y_bar = sum_y / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t t = fit.begin; t < fit.end; ++t) {
    const double dt = static_cast<double>(t) - t_bar;
    sxx += dt * dt;
    sxy += dt * (std::log(series[t]) - y_bar);
  }
  fit.slope = sxy / sxx;
  fit.intercept = y_bar - fit.slope * t_bar;
  return fit;
}

}  // namespace netlasso
