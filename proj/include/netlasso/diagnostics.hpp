#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netlasso/model.hpp"
#include "netlasso/network.hpp"
#include "netlasso/state.hpp"

namespace netlasso {

struct MetricsRecord {
  std::size_t t = 0;
  /// (1/m) sum_i ||theta_i - theta*||^2 and the same divided by ||theta*||^2.
  double estimation_error = 0.0;
  double estimation_error_normalized = 0.0;
  /// Against the centralized LASSO solution; absent without theta_hat.
  std::optional<double> optimization_error;
  std::optional<double> optimization_error_normalized;
  /// ||Theta - 1 mean(Theta)||_F^2.
  double consensus_error = 0.0;
  /// max_i ||g_i - grad L(theta_i)||_2 (gradient tracking only, on request).
  std::optional<double> tracking_residual;
  /// sum_i (grad L(theta_i) - g_i)^T (theta_i^{t+1/2} - theta_hat).
  std::optional<double> delta_t;
  /// ||mean(G) - mean(local grads)|| relative to the gradient scale.
  std::optional<double> tracking_conservation;
  /// Cumulative communication up to and including iteration t.
  CommCost comm;
};

struct MetricsOptions {
  /// Evaluate the global gradient at every agent's iterate (costly: one
  /// full pass over the data per agent).
  bool tracking_residual = false;
  /// Normalizer for tracking_conservation; <= 0 means use the current
  /// average gradient norm alone.
  double gradient_scale = 0.0;
};

MetricsRecord compute_metrics(const SolverState& state, const LinearModel& model,
                              const RealVector* theta_hat,
                              const MetricsOptions& options = {});

/// Constants entering the rate and residual expressions. Everything is "up
/// to universal constants": C1, C2, C3 and c6 are not fixed by the theory and
/// default to 1, 1, 4 and 1.
struct TheoryParams {
  double mu = 0.0;       // global RSC curvature
  double L = 0.0;        // global RSM curvature
  double ell = 0.0;      // local RSM curvature
  double tau_mu = 0.0;
  double tau_g = 0.0;
  double tau_ell = 0.0;
  double s = 1.0;
  double rho = 0.0;
  double c_m = 1.0;
  double m = 1.0;
  double nu = 0.0;
  double C1 = 1.0;
  double C2 = 1.0;
  double C3 = 4.0;
  double c6 = 1.0;

  double kappa() const { return L / mu; }
  void validate() const;
};

/// Gaussian-ensemble choice: mu = sigma_min/2, L = 2 sigma_max,
/// ell = 16 m sigma_max, tau_mu = tau_g = c1 zeta log d / N,
/// tau_ell = c1 zeta m^2 log d / N.
TheoryParams gaussian_ensemble_params(const ModelConfig& cfg, double rho, double c1 = 1.0);

struct RateResult {
  double lambda = 0.0;
  /// lambda >= 1: the bound gives no contraction.
  bool theory_violated = false;
};

/// lambda = (1 - 1/(2 kappa) + C1 s (tau_mu + tau_g)/L) / (1 - 2 C1 s tau_g / L).
/// PreconditionViolation when the denominator is not positive.
RateResult theoretical_rate(const TheoryParams& p);

/// Residual term: network-dependent part
///   rho/(2L) * (ell/mu) * 5 C2^2 c_m^2 / (1-rho)^2 * tau_ell * nu^2
/// plus network-independent part C1 (tau_mu + tau_g) nu^2 / L.
double delta_stat(const TheoryParams& p);
double delta_stat_network_term(const TheoryParams& p);

/// gamma = L + C3 (ell^2 / mu) c_m^2 sqrt(rho) / (1 - rho)^4.
double theoretical_gamma(const TheoryParams& p);

struct ConditionItem {
  std::string name;
  double lhs = 0.0;
  double bound = 0.0;
  bool pass = false;
  /// bound / lhs: > 1 when satisfied, +inf when lhs is zero.
  double slack_ratio = 0.0;
};

struct ConditionReport {
  ConditionItem mu_condition;       // mu > 36 C1 s (tau_mu + tau_g)
  ConditionItem rho_condition;      // rho <= {2 (75 c_m^2 C2^2 ell^2/mu^2 + 6 C2^2 c_m^2 ell s tau_ell / mu^2)}^-2
  ConditionItem scaling_condition;  // c6 rho m^8 kappa^4 < 1
  bool all_pass() const {
    return mu_condition.pass && rho_condition.pass && scaling_condition.pass;
  }
};

ConditionReport condition_check(const TheoryParams& p);

/// max_j ||grad L_j(theta)||_inf + ||grad L(theta)||_inf.
double c_g_estimate(const LinearModel& model, const RealVector& theta);

struct SlopeFit {
  double slope = 0.0;      // d log(value) / dt over the window
  double intercept = 0.0;
  double plateau = 0.0;    // median of the final quarter
  std::size_t begin = 0;   // window [begin, end)
  std::size_t end = 0;
};

/// Least-squares slope of log(series[t]) against t. Without an explicit
/// window, the window is the leading run of points exceeding 4x the plateau.
/// InsufficientData when the window has fewer than 10 points.
SlopeFit slope_fit(std::span<const double> series,
                   std::optional<std::pair<std::size_t, std::size_t>> window = std::nullopt);

/// Median of the final quarter of the series.
double plateau_level(std::span<const double> series);

}  // namespace netlasso
