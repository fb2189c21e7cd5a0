#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "netlasso/model.hpp"
#include "netlasso/network.hpp"
#include "netlasso/solvers.hpp"

namespace netlasso {

struct TopologySpec {
  TopologyKind kind = TopologyKind::kErdosRenyi;
  double edge_probability = 0.5;
  /// Erdos-Renyi only: pick p so that rho under the weight rule is closest
  /// to this value (overrides edge_probability).
  std::optional<double> target_rho;
  std::uint64_t seed = 1;
};

struct AlgorithmSpec {
  std::string label;
  RunConfig run;
  /// Empty: use run.gamma as given.
  std::vector<double> gamma_grid;
  std::size_t probe_iterations = 100;
};

struct CaseSpec {
  std::string label;
  ModelConfig model;
  TopologySpec topology;
  WeightRule weight_rule = WeightRule::kMetropolis;
  /// Fixed radius; when unset r = radius_scale * ||theta*||_1 per trial.
  std::optional<double> radius;
  double radius_scale = 1.0;
  std::vector<AlgorithmSpec> algorithms;
};

struct RoundTableSpec {
  struct Family {
    TopologyKind kind = TopologyKind::kErdosRenyi;
    double edge_probability = 0.87;
  };
  std::vector<Family> families;
  std::vector<std::size_t> sizes;
  std::vector<WeightRule> rules;
  /// Rounds k with rho^k <= m^-exponent.
  double exponent = 8.0;
  std::uint64_t seed = 1;
};

enum class ExperimentKind { kTrajectories, kRoundTable };
enum class Scale { kDesk, kFull };

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view name);

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::kTrajectories;
  std::vector<CaseSpec> cases;
  RoundTableSpec round_table;
  std::size_t trials = 1;
  std::uint64_t base_seed = 1;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;
  /// Solve the centralized problem per trial (optimization error and
  /// statistical precision in the metadata).
  bool reference = true;
  /// Search gamma on the first case only and reuse it for every case.
  bool share_gamma = false;

  void validate() const;
};

/// Parse a JSON experiment description (schema in the README).
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

inline constexpr std::string_view kPresetNames[] = {
    "P1_fixed_alpha",          "P2_varying_alpha",  "P3_fixed_rho_growing_m",
    "P4_fixed_p_growing_m",    "P5_multi_consensus", "P6_round_table"};

bool is_preset(std::string_view name);
ExperimentConfig preset(std::string_view name, Scale scale = Scale::kDesk);

struct TrialOutcome {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double radius = 0.0;
  /// ||theta_hat - theta*||^2 (NaN without a reference solution).
  double statistical_error = 0.0;
  bool reference_converged = false;
  bool diverged = false;
  std::string failure;
  RunTrace trace;
};

struct SummarySeries {
  std::vector<double> mean;
  std::vector<double> p10;
  std::vector<double> p90;
  std::size_t count = 0;
};

struct AlgorithmResult {
  std::string label;
  Algorithm algorithm = Algorithm::kNetLasso;
  double gamma = 0.0;
  std::vector<double> gamma_grid_errors;
  std::size_t rounds = 1;
  bool chebyshev = false;
  double effective_rho = 0.0;
  std::vector<TrialOutcome> trials;
  /// metric name -> averaged series over non-diverged trials.
  std::map<std::string, SummarySeries> summary;
};

struct CaseResult {
  std::string label;
  ModelConfig model;
  double alpha = 0.0;
  double rho = 0.0;
  double edge_probability = 0.0;
  std::size_t edges = 0;
  WeightRule weight_rule = WeightRule::kMetropolis;
  TopologyKind topology = TopologyKind::kErdosRenyi;
  std::vector<AlgorithmResult> algorithms;
};

struct RoundTableRow {
  TopologyKind kind = TopologyKind::kErdosRenyi;
  double edge_probability = 0.0;
  std::size_t m = 0;
  WeightRule rule = WeightRule::kMetropolis;
  double rho = 0.0;
  double target = 0.0;
  std::size_t rounds = 0;
  std::size_t chebyshev_rounds = 0;
  double seconds = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CaseResult> cases;
  std::vector<RoundTableRow> round_table;
};

/// Runs every case, trial and algorithm; trial i uses model seed base_seed + i
/// and all trials of a case share one graph. Deterministic in the config and
/// independent of the worker count.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes traces.csv, summary.csv and metadata.json (or rounds.csv and
/// metadata.json for a round table) into cfg.output_dir.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

void write_traces_csv(std::ostream& out, const ExperimentResult& result);
void write_summary_csv(std::ostream& out, const ExperimentResult& result);
void write_rounds_csv(std::ostream& out, const ExperimentResult& result);
nlohmann::json experiment_metadata(const ExperimentResult& result);

/// Builds the graph and weights of a case.
Network build_case_network(const CaseSpec& spec);

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

/// "%.16e", the number format used in every CSV file.
std::string format_real(double v);

}  // namespace netlasso
