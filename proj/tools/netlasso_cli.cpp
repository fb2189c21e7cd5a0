// Command-line front end: run experiments and presets, print round counts,
// probe restricted eigenvalue bounds.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "netlasso/diagnostics.hpp"
#include "netlasso/errors.hpp"
#include "netlasso/harness.hpp"
#include "netlasso/model.hpp"
#include "netlasso/network.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitOther = 1;

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

netlasso::ExperimentConfig resolve_config(const std::string& source, const std::string& scale) {
  if (netlasso::is_preset(source)) return netlasso::preset(source, netlasso::parse_scale(scale));
  return netlasso::load_experiment_config(source);
}

int cmd_run(const std::string& source, const std::string& scale, std::optional<std::string> out,
            std::optional<std::uint64_t> seed, std::optional<std::size_t> workers) {
  netlasso::ExperimentConfig cfg = resolve_config(source, scale);
  // Precedence: flag, then environment, then file.
  if (!out) out = env("NETLASSO_OUT_DIR");
  if (out) cfg.output_dir = *out;
  if (seed) cfg.base_seed = *seed;
  if (!workers) {
    if (auto w = env("NETLASSO_WORKERS")) {
      try {
        workers = std::stoul(*w);
      } catch (const std::exception&) {
        throw netlasso::InvalidArgument("NETLASSO_WORKERS must be a positive integer");
      }
    }
  }
  if (workers) cfg.workers = *workers;
  cfg.validate();

  const netlasso::ExperimentResult result = netlasso::run_experiment(cfg);
  netlasso::write_experiment(result, cfg.output_dir);

  if (cfg.kind == netlasso::ExperimentKind::kRoundTable) {
    for (const auto& r : result.round_table) {
      fmt::print("{:<12} m={:<5} {:<16} rho={:.6f} rounds={} chebyshev={} ({:.2f}s)\n",
                 netlasso::to_string(r.kind), r.m, netlasso::to_string(r.rule), r.rho, r.rounds,
                 r.chebyshev_rounds, r.seconds);
    }
  } else {
    for (const auto& c : result.cases) {
      for (const auto& a : c.algorithms) {
        const auto& err = a.summary.at("estimation_error_normalized").mean;
        std::string slope = "n/a";
        try {
          slope = fmt::format("{:.4f}", netlasso::slope_fit(err).slope);
        } catch (const netlasso::Error&) {
        }
        fmt::print("{:<16} {:<14} alpha={:.3f} rho={:.4f} gamma={:g} final={:.3e} slope={}\n",
                   c.label, a.label, c.alpha, c.rho, a.gamma, err.back(), slope);
      }
    }
  }
  fmt::print("wrote {}\n", cfg.output_dir.string());
  return kExitOk;
}

int cmd_rounds(const std::string& topology, std::size_t m, const std::string& rule, double target,
               double p, std::uint64_t seed) {
  const auto kind = netlasso::parse_topology(topology);
  const auto weight_rule = netlasso::parse_weight_rule(rule);
  const netlasso::Graph g = netlasso::build_topology(kind, m, {p}, seed);
  const netlasso::MixingMatrix w = netlasso::make_weights(g, weight_rule);
  const std::size_t k = netlasso::rounds_for_target(w.rho(), target);
  const std::size_t kc = netlasso::chebyshev_rounds_for_target(w.rho(), target);
  fmt::print("topology={} m={} rule={} edges={} rho={:.10f} target={:.6e} rounds={} chebyshev_rounds={}\n",
             topology, m, rule, g.edge_count(), w.rho(), target, k, kc);
  return kExitOk;
}

int cmd_probe(const std::string& source, const std::string& scale, std::size_t directions,
              std::uint64_t seed) {
  const netlasso::ExperimentConfig cfg = resolve_config(source, scale);
  if (cfg.cases.empty()) throw netlasso::InvalidArgument("config has no model to probe");
  netlasso::ModelConfig model_cfg = cfg.cases.front().model;
  model_cfg.seed = cfg.base_seed;
  const netlasso::LinearModel model = netlasso::generate_model(model_cfg);
  const netlasso::ProbeReport report = netlasso::rsc_rsm_probe(model, directions, seed);
  fmt::print("d={} s={} m={} n={} alpha={:.4f} directions={}\n", model.d(), model.s(), model.m(),
             model.n(), model_cfg.alpha(), report.directions.size());
  fmt::print("satisfied at c1=1: all={:.4f} global={:.4f}\n", report.satisfaction_fraction(1.0),
             report.global_satisfaction_fraction(1.0));
  fmt::print("smallest c1 meeting every direction: {:.6g}\n", report.fitted_c1());
  fmt::print("gradient finite-difference relative error: {:.3e}\n",
             report.gradient_fd_rel_error);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized sparse regression experiments"};
  app.require_subcommand(1);

  std::string source, scale = "desk";
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  auto* run = app.add_subcommand("run", "Run an experiment config file or a named preset");
  run->add_option("config", source, "JSON config file or preset name")->required();
  run->add_option("--scale", scale, "Preset scale")->check(CLI::IsMember({"desk", "full"}));
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "Base seed");
  run->add_option("--workers", workers, "Parallel trial workers")->check(CLI::PositiveNumber);

  std::string topology, rule;
  std::size_t m = 0;
  double target = 0.0, p = 0.5;
  std::uint64_t graph_seed = 1;
  auto* rounds = app.add_subcommand("rounds", "Communication rounds needed for rho^k <= target");
  rounds->add_option("topology", topology, "line, grid2d, star, complete, erdos_renyi")->required();
  rounds->add_option("m", m, "Number of agents")->required();
  rounds->add_option("rule", rule, "metropolis, lazy_metropolis, uniform_complete")->required();
  rounds->add_option("--target", target, "Target contraction")->required();
  rounds->add_option("--p", p, "Erdos-Renyi edge probability");
  rounds->add_option("--seed", graph_seed, "Graph seed");

  std::size_t directions = 10000;
  std::uint64_t probe_seed = 11;
  std::string probe_source, probe_scale = "desk";
  auto* probe = app.add_subcommand("probe-rsc", "Sample directions and check curvature bounds");
  probe->add_option("config", probe_source, "JSON config file or preset name")->required();
  probe->add_option("--scale", probe_scale, "Preset scale")->check(CLI::IsMember({"desk", "full"}));
  probe->add_option("--directions", directions, "Number of sampled directions");
  probe->add_option("--seed", probe_seed, "Direction seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(source, scale, out, seed, workers);
    if (*rounds) return cmd_rounds(topology, m, rule, target, p, graph_seed);
    if (*probe) return cmd_probe(probe_source, probe_scale, directions, probe_seed);
  } catch (const netlasso::DivergenceFailure& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const netlasso::ExperimentFailure& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const netlasso::InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const netlasso::PreconditionViolation& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
