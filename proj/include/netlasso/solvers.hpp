#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "netlasso/diagnostics.hpp"
#include "netlasso/model.hpp"
#include "netlasso/network.hpp"
#include "netlasso/state.hpp"

namespace netlasso {

enum class Algorithm { kPgd, kDgd, kNetLasso, kStarPushPull };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);

struct StopRule {
  enum class Kind { kFixed, kResidual };
  Kind kind = Kind::kFixed;
  /// Residual rule: stop once ||Theta^{t+1/2} - Theta^t||_F <= tol
  /// (gradient tracking) or the iterate change drops to tol (the others).
  double tol = 0.0;

  static StopRule fixed() { return {}; }
  static StopRule residual(double tol) { return {Kind::kResidual, tol}; }
};

/// Step-size conventions differ by algorithm:
///   pgd, star_pushpull, netlasso: gamma is a proximal weight (step 1/gamma);
///   dgd: gamma multiplies the local gradient directly.
struct RunConfig {
  Algorithm algorithm = Algorithm::kNetLasso;
  double gamma = 1.0;
  std::size_t max_iterations = 100;
  double radius = 1.0;
  /// Communication rounds per iteration (repeated W, or Chebyshev degree).
  std::size_t rounds = 1;
  bool chebyshev = false;
  StopRule stop;
  /// After an early stop, repeat the last record up to max_iterations so that
  /// traces of different runs align.
  bool pad_after_stop = true;
  MetricsOptions metrics;
  /// Starting iterate (one row per agent, or one row broadcast); zero if unset.
  std::optional<AgentMatrix> init;

  void validate() const;
};

struct RunTrace {
  Algorithm algorithm = Algorithm::kPgd;
  double gamma = 0.0;
  std::size_t rounds = 1;
  /// Contraction of the mixing operator actually applied (0 for centralized).
  double effective_rho = 0.0;
  /// Records for t = 0..max_iterations (fewer if stopped without padding).
  std::vector<MetricsRecord> records;
  /// Iterations actually executed.
  std::size_t iterations = 0;
  bool stopped_early = false;
  AgentMatrix final_theta;
  AgentMatrix final_half;
  /// Largest tracking conservation error seen (gradient tracking only).
  double max_conservation_error = 0.0;

  std::vector<double> estimation_error() const;
  std::vector<double> estimation_error_normalized() const;
  std::vector<double> consensus_error() const;
  /// Average iterate at the end of the run.
  RealVector final_average() const;
};

/// Called with the state after every iteration (t = 0 included).
using Observer = std::function<void(const SolverState&)>;

/// Centralized projected gradient:
///   theta^{t+1} = P(theta^t - grad L(theta^t) / gamma), theta^0 = 0.
RunTrace pgd_run(const LinearModel& model, const RunConfig& cfg,
                 const RealVector* theta_hat = nullptr, const Observer& observer = {});

/// Decentralized gradient descent:
///   theta_i^{t+1} = P(sum_j w_ij theta_j^t - gamma grad L_i(theta_i^t)).
RunTrace dgd_run(const LinearModel& model, const Network& network, const RunConfig& cfg,
                 const RealVector* theta_hat = nullptr, const Observer& observer = {});

/// Projected gradient with gradient tracking over a mesh. Starting from
/// Theta^0 = Theta^{1/2} = 0 and G^0 = stacked local gradients at 0, each
/// iteration does
///   Theta^t = W Theta^{t-1/2},  G^t = W (G^{t-1} + grad(Theta^t) - grad(Theta^{t-1})),
///   theta_i^{t+1/2} = P(theta_i^t - g_i^t / gamma),
/// with W the K-round power of the network weights or their Chebyshev
/// polynomial of degree K.
RunTrace netlasso_run(const LinearModel& model, const Network& network, const RunConfig& cfg,
                      const RealVector* theta_hat = nullptr, const Observer& observer = {});

/// Master/worker execution of centralized PGD over a star: workers upload
/// local gradients, the master averages them, takes the projected step and
/// broadcasts. Same iterates as pgd_run; only the communication differs.
RunTrace star_pushpull_run(const LinearModel& model, const RunConfig& cfg,
                           const RealVector* theta_hat = nullptr,
                           const Observer& observer = {});

/// Dispatches on cfg.algorithm. `network` may be null for the centralized
/// algorithms.
RunTrace run_algorithm(const LinearModel& model, const Network* network, const RunConfig& cfg,
                       const RealVector* theta_hat = nullptr, const Observer& observer = {});

struct GammaSearchResult {
  double gamma = 0.0;
  /// Final estimation error per candidate (NaN when the run diverged).
  std::vector<double> final_errors;
};

/// Runs `probe_iterations` per candidate and keeps the one with the smallest
/// final average estimation error; ties go to the larger gamma. Diverged runs
/// are skipped; SearchFailure if all diverge.
GammaSearchResult grid_search_gamma(const LinearModel& model, const Network* network,
                                    const RunConfig& base, std::span<const double> candidates,
                                    std::size_t probe_iterations);

/// Norm beyond which an iterate counts as diverged.
inline constexpr double kDivergenceNorm = 1e12;

}  // namespace netlasso
