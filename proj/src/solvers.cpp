#include "netlasso/solvers.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <memory>

#include <fmt/format.h>

#include "netlasso/errors.hpp"

namespace netlasso {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kPgd: return "pgd";
    case Algorithm::kDgd: return "dgd";
    case Algorithm::kNetLasso: return "netlasso";
    case Algorithm::kStarPushPull: return "star_pushpull";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::kPgd, Algorithm::kDgd, Algorithm::kNetLasso,
                      Algorithm::kStarPushPull}) {
    if (name == to_string(a)) return a;
  }
  throw InvalidArgument(fmt::format("unknown algorithm '{}'", name));
}

void RunConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("radius must be finite and nonnegative");
  }
  if (rounds < 1) throw InvalidArgument("rounds must be >= 1");
  if (stop.kind == StopRule::Kind::kResidual && !(stop.tol >= 0.0)) {
    throw InvalidArgument("residual tolerance must be nonnegative");
  }
}

std::vector<double> RunTrace::estimation_error() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.estimation_error);
  return out;
}

std::vector<double> RunTrace::estimation_error_normalized() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.estimation_error_normalized);
  return out;
}

std::vector<double> RunTrace::consensus_error() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.consensus_error);
  return out;
}

RealVector RunTrace::final_average() const {
  if (final_theta.rows() == 0) return {};
  return final_theta.colwise().mean().transpose();
}

namespace {

// Plain K-fold application of W, or its Chebyshev polynomial of degree K.
class MixingOperator {
 public:
  MixingOperator(const MixingMatrix& w, std::size_t rounds, bool chebyshev)
      : w_(w.weights()), rounds_(rounds) {
    if (chebyshev && rounds > 1) {
      cheb_ = std::make_unique<ChebyshevMixing>(w, rounds);
      rho_ = cheb_->contraction();
    } else {
      rho_ = std::pow(w.rho(), static_cast<double>(rounds));
    }
  }

  double rho() const { return rho_; }

  void apply(const AgentMatrix& in, AgentMatrix& out) const {
    if (in.rows() != w_.rows()) throw InvalidArgument("mixing operator dimension mismatch");
    if (cheb_) {
      cheb_->apply(in, out);
      return;
    }
    out.noalias() = w_ * in;
    for (std::size_t k = 1; k < rounds_; ++k) {
      AgentMatrix tmp = w_ * out;
      out.swap(tmp);
    }
  }

 private:
  RealMatrix w_;
  std::size_t rounds_;
  std::unique_ptr<ChebyshevMixing> cheb_;
  double rho_ = 0.0;
};

AgentMatrix initial_iterate(const RunConfig& cfg, std::size_t rows, std::size_t d) {
  if (!cfg.init) return AgentMatrix::Zero(rows, d);
  const AgentMatrix& init = *cfg.init;
  if (static_cast<std::size_t>(init.cols()) != d) {
    throw InvalidArgument("initial iterate has the wrong dimension");
  }
  if (static_cast<std::size_t>(init.rows()) == rows) return init;
  if (init.rows() == 1) return init.replicate(static_cast<Eigen::Index>(rows), 1);
  if (rows == 1) return init.colwise().mean();
  throw InvalidArgument("initial iterate has the wrong number of rows");
}

void check_divergence(const AgentMatrix& theta, std::size_t t, std::string_view who) {
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    const double norm = theta.row(i).norm();
    if (!std::isfinite(norm) || norm > kDivergenceNorm) {
      throw DivergenceFailure(
          fmt::format("{}: iterate of agent {} diverged at iteration {}", who, i, t), t);
    }
  }
}

void project_rows(const AgentMatrix& in, double r, AgentMatrix& out) {
  out.resize(in.rows(), in.cols());
  const auto d = static_cast<std::size_t>(in.cols());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    project_l1_ball({in.row(i).data(), d}, r, {out.row(i).data(), d});
  }
}

// Collects records and handles padding after an early stop.
class Recorder {
 public:
  Recorder(RunTrace& trace, const LinearModel& model, const RealVector* theta_hat,
           const RunConfig& cfg, const Observer& observer)
      : trace_(trace), model_(model), theta_hat_(theta_hat), cfg_(cfg), observer_(observer) {
    trace_.records.reserve(cfg.max_iterations + 1);
  }

  void record(const SolverState& state, const CommCost& comm, const MetricsOptions& opts) {
    MetricsRecord rec = compute_metrics(state, model_, theta_hat_, opts);
    rec.comm = comm;
    if (rec.tracking_conservation) {
      trace_.max_conservation_error =
          std::max(trace_.max_conservation_error, *rec.tracking_conservation);
    }
    trace_.records.push_back(std::move(rec));
    if (observer_) observer_(state);
  }

  void finish(const SolverState& state, bool stopped) {
    trace_.iterations = state.t;
    trace_.stopped_early = stopped;
    trace_.final_theta = state.theta;
    trace_.final_half = state.half;
    if (stopped && cfg_.pad_after_stop) {
      MetricsRecord last = trace_.records.back();
      while (trace_.records.size() < cfg_.max_iterations + 1) {
        ++last.t;
        trace_.records.push_back(last);
      }
    }
  }

 private:
  RunTrace& trace_;
  const LinearModel& model_;
  const RealVector* theta_hat_;
  const RunConfig& cfg_;
  const Observer& observer_;
};

bool residual_stop(const RunConfig& cfg, double residual) {
  return cfg.stop.kind == StopRule::Kind::kResidual && residual <= cfg.stop.tol;
}

RunTrace centralized_run(const LinearModel& model, const RunConfig& cfg,
                         const RealVector* theta_hat, const Observer& observer,
                         bool star) {
  cfg.validate();
  const std::size_t d = model.d();
  const std::size_t m = model.m();
  RunTrace trace;
  trace.algorithm = star ? Algorithm::kStarPushPull : Algorithm::kPgd;
  trace.gamma = cfg.gamma;
  trace.rounds = 1;
  Recorder rec(trace, model, theta_hat, cfg, observer);

  SolverState state;
  state.theta = initial_iterate(cfg, 1, d);
  state.half = state.theta;
  state.gamma = cfg.gamma;
  auto cost_at = [&](std::size_t t) {
    return star ? star_pushpull_cost(m, t) : CommCost{};
  };
  rec.record(state, cost_at(0), cfg.metrics);

  RealVector theta = state.theta.row(0).transpose();
  RealVector grad(d), local(d), next(d);
  bool stopped = false;
  const std::string_view who = star ? "star_pushpull" : "pgd";
  for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
    if (star) {
      // Workers upload local gradients; the master averages in agent order.
      grad.setZero();
      for (std::size_t j = 0; j < m; ++j) {
        model.local_gradient_into(j, {theta.data(), d}, {local.data(), d});
        grad += local;
      }
      grad /= static_cast<double>(m);
    } else {
      grad = model.global_gradient(theta);
    }
    const RealVector step = theta - grad / cfg.gamma;
    project_l1_ball({step.data(), d}, cfg.radius, {next.data(), d});
    const double change = (next - theta).norm();
    theta.swap(next);

    state.theta.row(0) = theta.transpose();
    state.half = state.theta;
    state.t = t;
    check_divergence(state.theta, t, who);
    rec.record(state, cost_at(t), cfg.metrics);
    if (residual_stop(cfg, change)) {
      stopped = t < cfg.max_iterations;
      break;
    }
  }
  rec.finish(state, stopped);
  return trace;
}

void require_network(const LinearModel& model, const Network& network) {
  if (network.weights.size() != model.m() || network.graph.size() != model.m()) {
    throw InvalidArgument(fmt::format("network has {} nodes but the model has {} agents",
                                      network.weights.size(), model.m()));
  }
}

}  // namespace

RunTrace pgd_run(const LinearModel& model, const RunConfig& cfg, const RealVector* theta_hat,
                 const Observer& observer) {
  return centralized_run(model, cfg, theta_hat, observer, false);
}

RunTrace star_pushpull_run(const LinearModel& model, const RunConfig& cfg,
                           const RealVector* theta_hat, const Observer& observer) {
  return centralized_run(model, cfg, theta_hat, observer, true);
}

RunTrace dgd_run(const LinearModel& model, const Network& network, const RunConfig& cfg,
                 const RealVector* theta_hat, const Observer& observer) {
  cfg.validate();
  require_network(model, network);
  const std::size_t m = model.m();
  const std::size_t d = model.d();
  const MixingOperator mix(network.weights, cfg.rounds, cfg.chebyshev);

  RunTrace trace;
  trace.algorithm = Algorithm::kDgd;
  trace.gamma = cfg.gamma;
  trace.rounds = cfg.rounds;
  trace.effective_rho = mix.rho();
  Recorder rec(trace, model, theta_hat, cfg, observer);

  SolverState state;
  state.theta = initial_iterate(cfg, m, d);
  state.half = state.theta;
  state.gamma = cfg.gamma;
  rec.record(state, comm_cost(network.graph, 0, Protocol::kMesh), cfg.metrics);

  AgentMatrix grads, mixed, next;
  bool stopped = false;
  for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
    model.stacked_local_gradients(state.theta, grads);
    mix.apply(state.theta, mixed);
    mixed -= cfg.gamma * grads;
    project_rows(mixed, cfg.radius, next);
    const double change = (next - state.theta).norm();
    state.theta.swap(next);
    state.half = state.theta;
    state.t = t;
    check_divergence(state.theta, t, "dgd");
    rec.record(state, comm_cost(network.graph, t * cfg.rounds, Protocol::kMesh), cfg.metrics);
    if (residual_stop(cfg, change)) {
      stopped = t < cfg.max_iterations;
      break;
    }
  }
  rec.finish(state, stopped);
  return trace;
}

RunTrace netlasso_run(const LinearModel& model, const Network& network, const RunConfig& cfg,
                      const RealVector* theta_hat, const Observer& observer) {
  cfg.validate();
  require_network(model, network);
  const std::size_t m = model.m();
  const std::size_t d = model.d();
  const MixingOperator mix(network.weights, cfg.rounds, cfg.chebyshev);

  RunTrace trace;
  trace.algorithm = Algorithm::kNetLasso;
  trace.gamma = cfg.gamma;
  trace.rounds = cfg.rounds;
  trace.effective_rho = mix.rho();
  Recorder rec(trace, model, theta_hat, cfg, observer);

  SolverState state;
  state.theta = initial_iterate(cfg, m, d);
  state.half = state.theta;
  state.gamma = cfg.gamma;
  model.stacked_local_gradients(state.theta, state.local_grads);
  state.tracking = state.local_grads;

  MetricsOptions opts = cfg.metrics;
  if (opts.gradient_scale <= 0.0) {
    opts.gradient_scale = state.local_grads.colwise().mean().norm();
  }
  rec.record(state, comm_cost(network.graph, 0, Protocol::kMesh), opts);

  AgentMatrix grads_new, buffer, step;
  bool stopped = false;
  for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
    mix.apply(state.half, state.theta);
    model.stacked_local_gradients(state.theta, grads_new);
    buffer = state.tracking + grads_new - state.local_grads;
    mix.apply(buffer, state.tracking);
    state.local_grads.swap(grads_new);

    step = state.theta - state.tracking / cfg.gamma;
    project_rows(step, cfg.radius, state.half);
    const double residual = (state.half - state.theta).norm();
    state.t = t;
    check_divergence(state.theta, t, "netlasso");
    check_divergence(state.half, t, "netlasso");
    rec.record(state, comm_cost(network.graph, t * cfg.rounds, Protocol::kMesh), opts);
    assert(!trace.records.back().tracking_conservation ||
           *trace.records.back().tracking_conservation <= 1e-10);
    if (residual_stop(cfg, residual)) {
      stopped = t < cfg.max_iterations;
      break;
    }
  }
  rec.finish(state, stopped);
  return trace;
}

RunTrace run_algorithm(const LinearModel& model, const Network* network, const RunConfig& cfg,
                       const RealVector* theta_hat, const Observer& observer) {
  switch (cfg.algorithm) {
    case Algorithm::kPgd: return pgd_run(model, cfg, theta_hat, observer);
    case Algorithm::kStarPushPull: return star_pushpull_run(model, cfg, theta_hat, observer);
    case Algorithm::kDgd:
    case Algorithm::kNetLasso:
      if (network == nullptr) {
        throw InvalidArgument(fmt::format("{} needs a network", to_string(cfg.algorithm)));
      }
      return cfg.algorithm == Algorithm::kDgd
                 ? dgd_run(model, *network, cfg, theta_hat, observer)
                 : netlasso_run(model, *network, cfg, theta_hat, observer);
  }
  throw InvalidArgument("unknown algorithm");
}

GammaSearchResult grid_search_gamma(const LinearModel& model, const Network* network,
                                    const RunConfig& base, std::span<const double> candidates,
                                    std::size_t probe_iterations) {
  if (candidates.empty()) throw InvalidArgument("gamma grid is empty");
  GammaSearchResult result;
  if (candidates.size() == 1) {
    result.gamma = candidates[0];
    result.final_errors.push_back(std::numeric_limits<double>::quiet_NaN());
    return result;
  }
  double best_err = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double gamma : candidates) {
    RunConfig cfg = base;
    cfg.gamma = gamma;
    cfg.max_iterations = probe_iterations;
    cfg.stop = StopRule::fixed();
    cfg.metrics = MetricsOptions{};
    double err = std::numeric_limits<double>::quiet_NaN();
    try {
      err = run_algorithm(model, network, cfg).records.back().estimation_error;
    } catch (const DivergenceFailure&) {
    }
    result.final_errors.push_back(err);
    if (!std::isfinite(err)) continue;
    if (!found || err < best_err || (err == best_err && gamma > result.gamma)) {
      best_err = err;
      result.gamma = gamma;
      found = true;
    }
  }
  if (!found) throw SearchFailure("every gamma candidate diverged");
  return result;
}

}  // namespace netlasso
