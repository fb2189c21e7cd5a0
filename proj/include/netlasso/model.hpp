#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "netlasso/numerics.hpp"

namespace netlasso {

enum class CovarianceKind : std::uint32_t {
  kIdentity = 0,
  kDiagonal = 1,  // Sigma_jj ramps linearly from `low` to `high` (= zeta)
  kToeplitz = 2,  // Sigma_jk = corr^|j-k|
};

struct CovarianceSpec {
  CovarianceKind kind = CovarianceKind::kIdentity;
  double low = 1.0;
  double high = 1.0;
  double corr = 0.0;

  static CovarianceSpec identity() { return {}; }
  static CovarianceSpec diagonal(double low, double high);
  static CovarianceSpec toeplitz(double corr);

  double variance(std::size_t j, std::size_t d) const;
  /// zeta = max_j Sigma_jj.
  double zeta(std::size_t d) const;
  /// u^T Sigma u, evaluated without forming Sigma.
  double quadratic_form(const RealVector& u) const;
  /// Smallest and largest eigenvalue of Sigma (d x d).
  std::pair<double, double> eigen_extremes(std::size_t d) const;
};

enum class SignalRule : std::uint32_t {
  kGaussian = 0,     // first s coordinates i.i.d. N(0, 1)
  kUniformSign = 1,  // first s coordinates i.i.d. +-1
};

struct ModelConfig {
  std::size_t d = 0;
  std::size_t s = 0;
  std::size_t m = 1;
  std::size_t n = 1;
  double sigma_noise = 0.0;
  CovarianceSpec covariance;
  SignalRule signal = SignalRule::kGaussian;
  std::uint64_t seed = 0;

  std::size_t total_samples() const { return m * n; }
  /// alpha = s log d / N.
  double alpha() const;
  void validate() const;
};

/// Per-agent data y_i = X_i theta* + noise_i with X_i rows i.i.d. N(0, Sigma).
class LinearModel {
 public:
  LinearModel(ModelConfig config, std::vector<RealMatrix> designs,
              std::vector<RealVector> noise, RealVector theta_star);

  const ModelConfig& config() const { return config_; }
  std::size_t d() const { return config_.d; }
  std::size_t s() const { return config_.s; }
  std::size_t m() const { return config_.m; }
  std::size_t n() const { return config_.n; }
  std::size_t total_samples() const { return config_.total_samples(); }
  double zeta() const { return config_.covariance.zeta(config_.d); }

  const RealMatrix& design(std::size_t agent) const;
  const RealVector& response(std::size_t agent) const;
  const RealVector& noise(std::size_t agent) const;
  const RealVector& theta_star() const { return theta_star_; }

  /// L_i(theta) = ||y_i - X_i theta||^2 / (2n).
  double local_loss(std::size_t agent, const RealVector& theta) const;
  RealVector local_gradient(std::size_t agent, const RealVector& theta) const;
  /// Gradient of agent `agent`'s loss at `theta`, written into `out`.
  void local_gradient_into(std::size_t agent, std::span<const double> theta,
                           std::span<double> out) const;
  /// Row i of the result is grad L_i at row i of `thetas`.
  void stacked_local_gradients(const AgentMatrix& thetas, AgentMatrix& out) const;

  double global_loss(const RealVector& theta) const;
  RealVector global_gradient(const RealVector& theta) const;
  /// Row i of the result is grad L at row i of `thetas` (batched over rows).
  AgentMatrix global_gradients(const AgentMatrix& thetas) const;

  /// ||X u||^2 / N for the stacked design.
  double design_energy(const RealVector& u) const;

  bool operator==(const LinearModel& other) const;

 private:
  void check_agent(std::size_t agent) const;

  ModelConfig config_;
  std::vector<RealMatrix> designs_;
  std::vector<RealVector> noise_;
  std::vector<RealVector> responses_;
  RealVector theta_star_;
};

/// Deterministic in cfg.seed. Draws use independent named streams for the
/// design, the noise and the ground truth.
LinearModel generate_model(const ModelConfig& cfg);

/// Largest eigenvalue of X^T X / N by power iteration.
double design_lipschitz(const LinearModel& model, double tol = 1e-8);

struct ReferenceSolution {
  RealVector theta_hat;
  double gamma = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
  /// ||theta_hat||_1 == r within 1e-8 (relative to r).
  bool constraint_active = false;
  bool converged = false;
};

/// Centralized LASSO solution by projected gradient with step 1/gamma,
/// gamma = 1.05 * lambda_max(X^T X / N). Iterates until the fixed-point
/// residual ||theta - P(theta - grad/gamma)||_2 drops to `tol`. Past
/// `max_iterations` it throws ConvergenceFailure, or with `throw_at_cap`
/// false returns the last iterate with converged == false.
ReferenceSolution reference_solution(const LinearModel& model, double r,
                                     double tol = 1e-10,
                                     std::size_t max_iterations = 200000,
                                     bool throw_at_cap = true);

/// nu = 2 ||theta_hat - theta*||_1 + 2 sqrt(s) ||theta_hat - theta*||_2.
double statistical_nu(const RealVector& theta_hat, const RealVector& theta_star,
                      std::size_t s);

/// Margin of the cone bound
///   ||theta - theta_hat||_1 <= 2 sqrt(s) ||theta - theta_hat||_2 + nu
/// (right side minus left side). Only meaningful when the constraint is
/// active at theta_hat.
double cone_bound_margin(const RealVector& theta, const RealVector& theta_hat,
                         const RealVector& theta_star, std::size_t s);

enum class DirectionFamily { kSparse, kDense };

struct DirectionProbe {
  DirectionFamily family = DirectionFamily::kSparse;
  std::size_t support = 0;
  double energy = 0.0;         // ||X u||^2 / N
  double sigma_energy = 0.0;   // ||Sigma^{1/2} u||^2
  double l1_squared = 0.0;     // ||u||_1^2
  double local_energy = 0.0;   // max_i ||X_i u||^2 / n
};

/// Empirical check of the Gaussian-ensemble restricted eigenvalue bounds
///   lower:  ||Xu||^2/N >= 1/2 ||S^{1/2}u||^2 - c zeta (log d / N) ||u||_1^2
///   upper:  ||Xu||^2/N <= 2   ||S^{1/2}u||^2 + c zeta (log d / N) ||u||_1^2
///   local:  ||X_i u||^2/n <= 16 m ||S^{1/2}u||^2 + c zeta (m log d / n) ||u||_1^2
struct ProbeReport {
  std::vector<DirectionProbe> directions;
  double log_d_over_N = 0.0;
  double zeta = 1.0;
  std::size_t m = 1;
  std::size_t n = 1;

  double lower_margin(const DirectionProbe& p, double c1) const;
  double upper_margin(const DirectionProbe& p, double c1) const;
  double local_margin(const DirectionProbe& p, double c1) const;

  /// Smallest c >= 0 under which every sampled direction meets all three
  /// inequalities.
  double fitted_c1() const;
  /// Fraction of directions meeting all three inequalities at c.
  double satisfaction_fraction(double c1 = 1.0) const;
  /// Fraction meeting only the global (lower, upper) pair at c.
  double global_satisfaction_fraction(double c1 = 1.0) const;

  /// Worst relative deviation between the analytic gradient and central
  /// finite differences, measured at a random point during the probe.
  double gradient_fd_rel_error = 0.0;
};

/// Samples `n_dirs` directions round-robin from k-sparse families
/// (k in {1, s, 2s}, capped at d) and a dense Gaussian family.
ProbeReport rsc_rsm_probe(const LinearModel& model, std::size_t n_dirs,
                          std::uint64_t seed);

/// Like rsc_rsm_probe but only s-sparse directions.
ProbeReport rsc_rsm_probe_sparse(const LinearModel& model, std::size_t n_dirs,
                                 std::size_t k, std::uint64_t seed);

// Binary container. All integers little-endian u64 unless noted; reals are
// IEEE-754 binary64 stored little-endian.
//   magic "NLMODEL1" (8 bytes), version u32 = 1, covariance tag u32,
//   signal tag u32, reserved u32 = 0,
//   d, s, m, n, seed,
//   sigma_noise, cov.low, cov.high, cov.corr,
//   theta* (d reals),
//   per agent: X_i row-major (n*d reals), noise_i (n reals).
// Responses are rebuilt as X_i theta* + noise_i on load.
void write_model(std::ostream& out, const LinearModel& model);
LinearModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const LinearModel& model);
LinearModel load_model(const std::filesystem::path& path);

}  // namespace netlasso
