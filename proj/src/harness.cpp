#include "netlasso/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "netlasso/errors.hpp"

namespace netlasso {

using nlohmann::json;

std::string_view to_string(Scale scale) { return scale == Scale::kDesk ? "desk" : "full"; }

Scale parse_scale(std::string_view name) {
  if (name == "desk") return Scale::kDesk;
  if (name == "full") return Scale::kFull;
  throw InvalidArgument(fmt::format("unknown scale '{}' (expected desk or full)", name));
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw InvalidArgument("trials must be >= 1");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  if (kind == ExperimentKind::kRoundTable) {
    if (round_table.families.empty() || round_table.sizes.empty() ||
        round_table.rules.empty()) {
      throw InvalidArgument("round table needs families, sizes and rules");
    }
    if (!(round_table.exponent > 0.0)) throw InvalidArgument("round exponent must be positive");
    return;
  }
  if (cases.empty()) throw InvalidArgument("experiment has no cases");
  for (const CaseSpec& c : cases) {
    c.model.validate();
    if (c.algorithms.empty()) {
      throw InvalidArgument(fmt::format("case '{}' has no algorithms", c.label));
    }
    if (c.radius && !(*c.radius >= 0.0)) throw InvalidArgument("radius must be nonnegative");
    if (!(c.radius_scale >= 0.0)) throw InvalidArgument("radius_scale must be nonnegative");
    if (c.topology.target_rho && c.topology.kind != TopologyKind::kErdosRenyi) {
      throw InvalidArgument("target_rho is only supported for erdos_renyi graphs");
    }
    for (const AlgorithmSpec& a : c.algorithms) {
      a.run.validate();
      for (double g : a.gamma_grid) {
        if (!(g > 0.0)) throw InvalidArgument("gamma grid entries must be positive");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

CovarianceSpec parse_covariance(const json& j) {
  const std::string kind = get_or<std::string>(j, "kind", "identity");
  if (kind == "identity") return CovarianceSpec::identity();
  if (kind == "diagonal") {
    return CovarianceSpec::diagonal(j.at("low").get<double>(), j.at("high").get<double>());
  }
  if (kind == "toeplitz") return CovarianceSpec::toeplitz(j.at("corr").get<double>());
  throw InvalidArgument(fmt::format("unknown covariance kind '{}'", kind));
}

json covariance_json(const CovarianceSpec& c) {
  switch (c.kind) {
    case CovarianceKind::kIdentity: return {{"kind", "identity"}};
    case CovarianceKind::kDiagonal: return {{"kind", "diagonal"}, {"low", c.low}, {"high", c.high}};
    case CovarianceKind::kToeplitz: return {{"kind", "toeplitz"}, {"corr", c.corr}};
  }
  return {};
}

ModelConfig parse_model(const json& j) {
  ModelConfig m;
  m.d = j.at("d").get<std::size_t>();
  m.s = j.at("s").get<std::size_t>();
  m.m = j.at("m").get<std::size_t>();
  m.n = j.at("n").get<std::size_t>();
  m.sigma_noise = get_or<double>(j, "sigma", 0.5);
  if (j.contains("covariance")) m.covariance = parse_covariance(j.at("covariance"));
  const std::string signal = get_or<std::string>(j, "signal", "gaussian");
  if (signal == "gaussian") {
    m.signal = SignalRule::kGaussian;
  } else if (signal == "uniform_sign") {
    m.signal = SignalRule::kUniformSign;
  } else {
    throw InvalidArgument(fmt::format("unknown signal rule '{}'", signal));
  }
  return m;
}

json model_json(const ModelConfig& m) {
  return {{"d", m.d},
          {"s", m.s},
          {"m", m.m},
          {"n", m.n},
          {"sigma", m.sigma_noise},
          {"covariance", covariance_json(m.covariance)},
          {"signal", m.signal == SignalRule::kGaussian ? "gaussian" : "uniform_sign"}};
}

StopRule parse_stop(const json& j) {
  const std::string kind = get_or<std::string>(j, "kind", "fixed");
  if (kind == "fixed") return StopRule::fixed();
  if (kind == "residual") return StopRule::residual(j.at("tol").get<double>());
  throw InvalidArgument(fmt::format("unknown stop rule '{}'", kind));
}

AlgorithmSpec parse_algorithm_spec(const json& j) {
  AlgorithmSpec a;
  a.run.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  a.label = get_or<std::string>(j, "label", std::string(to_string(a.run.algorithm)));
  a.run.gamma = get_or<double>(j, "gamma", 1.0);
  a.run.max_iterations = get_or<std::size_t>(j, "iterations", 100);
  a.run.rounds = get_or<std::size_t>(j, "rounds", 1);
  a.run.chebyshev = get_or<bool>(j, "chebyshev", false);
  if (j.contains("stop")) a.run.stop = parse_stop(j.at("stop"));
  a.run.metrics.tracking_residual = get_or<bool>(j, "tracking_residual", false);
  a.gamma_grid = get_or<std::vector<double>>(j, "gamma_grid", {});
  a.probe_iterations = get_or<std::size_t>(j, "probe_iterations", 100);
  return a;
}

json algorithm_json(const AlgorithmSpec& a) {
  json stop = a.run.stop.kind == StopRule::Kind::kFixed
                  ? json{{"kind", "fixed"}}
                  : json{{"kind", "residual"}, {"tol", a.run.stop.tol}};
  return {{"label", a.label},
          {"algorithm", std::string(to_string(a.run.algorithm))},
          {"gamma", a.run.gamma},
          {"iterations", a.run.max_iterations},
          {"rounds", a.run.rounds},
          {"chebyshev", a.run.chebyshev},
          {"stop", stop},
          {"tracking_residual", a.run.metrics.tracking_residual},
          {"gamma_grid", a.gamma_grid},
          {"probe_iterations", a.probe_iterations}};
}

TopologySpec parse_topology_spec(const json& j) {
  TopologySpec t;
  t.kind = parse_topology(get_or<std::string>(j, "kind", "erdos_renyi"));
  t.edge_probability = get_or<double>(j, "p", 0.5);
  if (j.contains("target_rho") && !j.at("target_rho").is_null()) {
    t.target_rho = j.at("target_rho").get<double>();
  }
  t.seed = get_or<std::uint64_t>(j, "seed", 1);
  return t;
}

json topology_json(const TopologySpec& t) {
  json j = {{"kind", std::string(to_string(t.kind))}, {"p", t.edge_probability}, {"seed", t.seed}};
  j["target_rho"] = t.target_rho ? json(*t.target_rho) : json(nullptr);
  return j;
}

CaseSpec parse_case(const json& j, std::size_t index) {
  CaseSpec c;
  c.label = get_or<std::string>(j, "label", fmt::format("case{}", index));
  c.model = parse_model(j.at("model"));
  if (j.contains("topology")) c.topology = parse_topology_spec(j.at("topology"));
  c.weight_rule = parse_weight_rule(get_or<std::string>(j, "weights", "metropolis"));
  if (j.contains("radius")) {
    const json& r = j.at("radius");
    if (r.is_number()) {
      c.radius = r.get<double>();
    } else {
      c.radius_scale = get_or<double>(r, "scale", 1.0);
    }
  }
  for (const json& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm_spec(a));
  return c;
}

json case_json(const CaseSpec& c) {
  json algos = json::array();
  for (const auto& a : c.algorithms) algos.push_back(algorithm_json(a));
  json j = {{"label", c.label},
            {"model", model_json(c.model)},
            {"topology", topology_json(c.topology)},
            {"weights", std::string(to_string(c.weight_rule))},
            {"algorithms", algos}};
  j["radius"] = c.radius ? json(*c.radius) : json{{"scale", c.radius_scale}};
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  try {
    ExperimentConfig cfg;
    cfg.name = get_or<std::string>(j, "name", "experiment");
    cfg.trials = get_or<std::size_t>(j, "trials", 1);
    cfg.base_seed = get_or<std::uint64_t>(j, "base_seed", 1);
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
    cfg.workers = get_or<std::size_t>(j, "workers", 1);
    cfg.reference = get_or<bool>(j, "reference", true);
    cfg.share_gamma = get_or<bool>(j, "share_gamma", false);
    const std::string kind = get_or<std::string>(j, "kind", "trajectories");
    if (kind == "round_table") {
      cfg.kind = ExperimentKind::kRoundTable;
      const json& rt = j.at("round_table");
      for (const json& f : rt.at("families")) {
        RoundTableSpec::Family fam;
        fam.kind = parse_topology(f.at("kind").get<std::string>());
        fam.edge_probability = get_or<double>(f, "p", 0.0);
        cfg.round_table.families.push_back(fam);
      }
      cfg.round_table.sizes = rt.at("sizes").get<std::vector<std::size_t>>();
      for (const json& r : rt.at("rules")) {
        cfg.round_table.rules.push_back(parse_weight_rule(r.get<std::string>()));
      }
      cfg.round_table.exponent = get_or<double>(rt, "exponent", 8.0);
      cfg.round_table.seed = get_or<std::uint64_t>(rt, "seed", 1);
    } else if (kind == "trajectories") {
      const json& cases = j.at("cases");
      for (std::size_t i = 0; i < cases.size(); ++i) cfg.cases.push_back(parse_case(cases[i], i));
    } else {
      throw InvalidArgument(fmt::format("unknown experiment kind '{}'", kind));
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidArgument(fmt::format("malformed experiment config: {}", e.what()));
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_experiment_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j = {{"name", cfg.name},
            {"trials", cfg.trials},
            {"base_seed", cfg.base_seed},
            {"output_dir", cfg.output_dir.string()},
            {"workers", cfg.workers},
            {"reference", cfg.reference},
            {"share_gamma", cfg.share_gamma}};
  if (cfg.kind == ExperimentKind::kRoundTable) {
    j["kind"] = "round_table";
    json fams = json::array();
    for (const auto& f : cfg.round_table.families) {
      fams.push_back({{"kind", std::string(to_string(f.kind))}, {"p", f.edge_probability}});
    }
    json rules = json::array();
    for (WeightRule r : cfg.round_table.rules) rules.push_back(std::string(to_string(r)));
    j["round_table"] = {{"families", fams},
                        {"sizes", cfg.round_table.sizes},
                        {"rules", rules},
                        {"exponent", cfg.round_table.exponent},
                        {"seed", cfg.round_table.seed}};
  } else {
    j["kind"] = "trajectories";
    json cases = json::array();
    for (const auto& c : cfg.cases) cases.push_back(case_json(c));
    j["cases"] = cases;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

std::size_t ceil_sqrt(std::size_t d) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
}

std::size_t ceil_half_log(std::size_t d) {
  return static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(d)) / 2.0));
}

ModelConfig gaussian_model(std::size_t d, std::size_t s, std::size_t m, std::size_t n) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.s = s;
  cfg.m = m;
  cfg.n = n;
  cfg.sigma_noise = 0.5;
  return cfg;
}

const std::vector<double>& proximal_grid() {
  static const std::vector<double> grid = {0.5, 0.7, 1.0, 1.4, 2.0, 2.8, 4.0, 5.6};
  return grid;
}

AlgorithmSpec netlasso_spec(std::size_t iterations, std::size_t probe, bool desk,
                            std::size_t rounds = 1) {
  AlgorithmSpec a;
  a.label = rounds == 1 ? "netlasso" : fmt::format("netlasso_K{}", rounds);
  a.run.algorithm = Algorithm::kNetLasso;
  a.run.max_iterations = iterations;
  a.run.rounds = rounds;
  a.run.gamma = 1.0;
  a.gamma_grid = proximal_grid();
  a.probe_iterations = probe;
  // Desk runs stop once the iterates settle; padding keeps traces aligned.
  if (desk) a.run.stop = StopRule::residual(1e-12);
  return a;
}

CaseSpec er_case(std::string label, ModelConfig model, double p, AlgorithmSpec algo) {
  CaseSpec c;
  c.label = std::move(label);
  c.model = model;
  c.topology.kind = TopologyKind::kErdosRenyi;
  c.topology.edge_probability = p;
  c.topology.seed = 7;
  c.algorithms.push_back(std::move(algo));
  return c;
}

}  // namespace

bool is_preset(std::string_view name) {
  return std::find(std::begin(kPresetNames), std::end(kPresetNames), name) !=
         std::end(kPresetNames);
}

ExperimentConfig preset(std::string_view name, Scale scale) {
  if (!is_preset(name)) throw InvalidArgument(fmt::format("unknown preset '{}'", name));
  const bool desk = scale == Scale::kDesk;
  ExperimentConfig cfg;
  cfg.name = std::string(name);
  cfg.trials = desk ? 20 : 100;
  cfg.base_seed = 1;
  cfg.output_dir = std::filesystem::path("out") / cfg.name;

  if (name == "P1_fixed_alpha") {
    // alpha = s log d / N ~ 0.2 with s = ceil(sqrt(d)), m = 50.
    const std::vector<std::size_t> ds = desk ? std::vector<std::size_t>{500, 1000, 2000}
                                             : std::vector<std::size_t>{5000, 10000, 20000};
    const std::vector<std::size_t> ns = desk ? std::vector<std::size_t>{14, 22, 34}
                                             : std::vector<std::size_t>{61, 94, 142};
    const std::size_t iters = desk ? 100 : 400;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      cfg.cases.push_back(er_case(fmt::format("d{}", ds[k]),
                                  gaussian_model(ds[k], ceil_sqrt(ds[k]), 50, ns[k]), 0.5,
                                  netlasso_spec(iters, desk ? 20 : 40, desk)));
    }
    cfg.share_gamma = true;
  } else if (name == "P2_varying_alpha") {
    // s = ceil(log d / 2); alpha ~ {1, 0.2, 0.04}. The desk scale needs m = 10
    // to reach alpha = 1 with at least one sample per agent.
    const std::size_t d = desk ? 2000 : 20000;
    const std::size_t m = desk ? 10 : 50;
    const std::vector<std::size_t> ns = desk ? std::vector<std::size_t>{3, 15, 76}
                                             : std::vector<std::size_t>{1, 5, 25};
    const std::size_t iters = desk ? 100 : 400;
    for (std::size_t n : ns) {
      cfg.cases.push_back(er_case(fmt::format("n{}", n), gaussian_model(d, ceil_half_log(d), m, n),
                                  0.5, netlasso_spec(iters, desk ? 20 : 40, desk)));
    }
  } else if (name == "P3_fixed_rho_growing_m" || name == "P4_fixed_p_growing_m") {
    const bool fixed_rho = name == "P3_fixed_rho_growing_m";
    const std::size_t d = desk ? 500 : 5000;
    const std::size_t big_n = desk ? 600 : 2500;
    const std::vector<std::size_t> ms = desk ? std::vector<std::size_t>{25, 50, 100, 200}
                                             : std::vector<std::size_t>{50, 625, 1250, 2500};
    const std::vector<double> ps = {0.87, 0.4, 0.23, 0.15};
    const std::size_t iters = desk ? 100 : 400;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      CaseSpec c = er_case(fmt::format("m{}", ms[k]),
                           gaussian_model(d, ceil_sqrt(d), ms[k], big_n / ms[k]),
                           fixed_rho ? ps[k] : 0.87, netlasso_spec(iters, desk ? 20 : 40, desk));
      if (fixed_rho && desk) c.topology.target_rho = 0.18;
      cfg.cases.push_back(std::move(c));
    }
  } else if (name == "P5_multi_consensus") {
    // Three graphs with rho ~ {0.0638, 0.4038, 0.7281} and K = {1, 3, 9}
    // rounds per step, so that rho^K is about the same.
    const std::size_t d = desk ? 2000 : 20000;
    const std::size_t n = desk ? 3 : 5;
    const double rhos[] = {0.0638, 0.4038, 0.7281};
    const std::size_t ks[] = {1, 3, 9};
    const std::size_t iters = desk ? 100 : 400;
    for (int k = 0; k < 3; ++k) {
      CaseSpec c = er_case(fmt::format("rho{:.4f}_K{}", rhos[k], ks[k]),
                           gaussian_model(d, ceil_half_log(d), 50, n), 0.5,
                           netlasso_spec(iters, desk ? 20 : 40, desk, ks[k]));
      c.topology.target_rho = rhos[k];
      cfg.cases.push_back(std::move(c));
    }
    cfg.share_gamma = true;
  } else {  // P6_round_table
    cfg.kind = ExperimentKind::kRoundTable;
    cfg.trials = 1;
    cfg.round_table.families = {{TopologyKind::kErdosRenyi, 0.87}, {TopologyKind::kLine, 0.0}};
    cfg.round_table.sizes = desk ? std::vector<std::size_t>{50, 625}
                                 : std::vector<std::size_t>{50, 625, 1250, 2500};
    cfg.round_table.rules = {WeightRule::kMetropolis, WeightRule::kLazyMetropolis};
    cfg.round_table.exponent = 8.0;
    cfg.round_table.seed = 1;
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Execution

Network build_case_network(const CaseSpec& spec) {
  const std::size_t m = spec.model.m;
  if (spec.topology.target_rho) {
    Graph g = erdos_renyi_for_rho(m, *spec.topology.target_rho, spec.weight_rule,
                                  spec.topology.seed);
    MixingMatrix w = make_weights(g, spec.weight_rule);
    return Network{std::move(g), std::move(w)};
  }
  Graph g = build_topology(spec.topology.kind, m, {spec.topology.edge_probability},
                           spec.topology.seed);
  MixingMatrix w = make_weights(g, spec.weight_rule);
  return Network{std::move(g), std::move(w)};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::string format_real(double v) { return fmt::format("{:.16e}", v); }

namespace {

using MetricTable = std::vector<std::pair<std::string, std::vector<double>>>;

// Long-format metric columns of one trace, in a fixed order.
MetricTable trace_metrics(const RunTrace& trace) {
  MetricTable out;
  auto add = [&](const char* name, auto getter) {
    std::vector<double> col;
    col.reserve(trace.records.size());
    for (const MetricsRecord& r : trace.records) {
      const std::optional<double> v = getter(r);
      if (!v) return;
      col.push_back(*v);
    }
    out.emplace_back(name, std::move(col));
  };
  add("estimation_error", [](const MetricsRecord& r) { return std::optional(r.estimation_error); });
  add("estimation_error_normalized",
      [](const MetricsRecord& r) { return std::optional(r.estimation_error_normalized); });
  add("optimization_error", [](const MetricsRecord& r) { return r.optimization_error; });
  add("optimization_error_normalized",
      [](const MetricsRecord& r) { return r.optimization_error_normalized; });
  add("consensus_error", [](const MetricsRecord& r) { return std::optional(r.consensus_error); });
  add("tracking_residual", [](const MetricsRecord& r) { return r.tracking_residual; });
  add("tracking_conservation", [](const MetricsRecord& r) { return r.tracking_conservation; });
  add("channel_use", [](const MetricsRecord& r) {
    return std::optional(static_cast<double>(r.comm.total_channel_use));
  });
  return out;
}

// Iteration cap for the per-trial centralized solution. Far from the
// restricted-curvature regime (alpha near 1) projected gradient crawls; the
// last iterate is then kept and flagged as unconverged.
constexpr std::size_t kReferenceIterations = 5000;

struct ResolvedCase {
  const CaseSpec* spec = nullptr;
  std::optional<Network> network;
  std::vector<double> gammas;
  std::vector<std::vector<double>> grid_errors;
};

double trial_radius(const CaseSpec& spec, const LinearModel& model) {
  if (spec.radius) return *spec.radius;
  return spec.radius_scale * model.theta_star().lpNorm<1>();
}

ModelConfig trial_model(const CaseSpec& spec, std::uint64_t seed) {
  ModelConfig m = spec.model;
  m.seed = seed;
  return m;
}

void resolve_gammas(const ExperimentConfig& cfg, std::vector<ResolvedCase>& cases) {
  for (std::size_t c = 0; c < cases.size(); ++c) {
    ResolvedCase& rc = cases[c];
    const CaseSpec& spec = *rc.spec;
    if (cfg.share_gamma && c > 0) {
      for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
        const bool searched = a < cases[0].gammas.size() && !spec.algorithms[a].gamma_grid.empty();
        rc.gammas.push_back(searched ? cases[0].gammas[a] : spec.algorithms[a].run.gamma);
        rc.grid_errors.emplace_back();
      }
      continue;
    }
    std::optional<LinearModel> model;
    for (const AlgorithmSpec& a : spec.algorithms) {
      if (a.gamma_grid.empty()) {
        rc.gammas.push_back(a.run.gamma);
        rc.grid_errors.emplace_back();
        continue;
      }
      if (!model) model.emplace(generate_model(trial_model(spec, cfg.base_seed)));
      RunConfig base = a.run;
      base.radius = trial_radius(spec, *model);
      const Network* net = rc.network ? &*rc.network : nullptr;
      GammaSearchResult res =
          grid_search_gamma(*model, net, base, a.gamma_grid, a.probe_iterations);
      rc.gammas.push_back(res.gamma);
      rc.grid_errors.push_back(std::move(res.final_errors));
    }
  }
}

void summarize(AlgorithmResult& result) {
  std::map<std::string, std::vector<std::vector<double>>> columns;
  for (const TrialOutcome& t : result.trials) {
    if (t.diverged) continue;
    for (auto& [name, col] : trace_metrics(t.trace)) columns[name].push_back(std::move(col));
  }
  for (auto& [name, runs] : columns) {
    std::size_t len = runs.front().size();
    for (const auto& r : runs) len = std::min(len, r.size());
    SummarySeries s;
    s.count = runs.size();
    std::vector<double> at(runs.size());
    for (std::size_t t = 0; t < len; ++t) {
      double sum = 0.0;
      for (std::size_t k = 0; k < runs.size(); ++k) {
        at[k] = runs[k][t];
        sum += at[k];
      }
      s.mean.push_back(sum / static_cast<double>(runs.size()));
      s.p10.push_back(percentile(at, 0.10));
      s.p90.push_back(percentile(at, 0.90));
    }
    result.summary.emplace(name, std::move(s));
  }
}

std::vector<RoundTableRow> run_round_table(const RoundTableSpec& spec) {
  std::vector<RoundTableRow> rows;
  for (const auto& fam : spec.families) {
    for (std::size_t m : spec.sizes) {
      const Graph g = build_topology(fam.kind, m, {fam.edge_probability}, spec.seed);
      for (WeightRule rule : spec.rules) {
        const auto start = std::chrono::steady_clock::now();
        const MixingMatrix w = make_weights(g, rule);
        RoundTableRow row;
        row.kind = fam.kind;
        row.edge_probability = fam.kind == TopologyKind::kErdosRenyi ? fam.edge_probability : 0.0;
        row.m = m;
        row.rule = rule;
        row.rho = w.rho();
        row.target = std::pow(static_cast<double>(m), -spec.exponent);
        row.rounds = rounds_for_target(row.rho, row.target);
        row.chebyshev_rounds = chebyshev_rounds_for_target(row.rho, row.target);
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;
  if (cfg.kind == ExperimentKind::kRoundTable) {
    result.round_table = run_round_table(cfg.round_table);
    return result;
  }

  std::vector<ResolvedCase> resolved(cfg.cases.size());
  for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
    resolved[c].spec = &cfg.cases[c];
    const bool needs_network =
        std::any_of(cfg.cases[c].algorithms.begin(), cfg.cases[c].algorithms.end(),
                    [](const AlgorithmSpec& a) {
                      return a.run.algorithm == Algorithm::kDgd ||
                             a.run.algorithm == Algorithm::kNetLasso;
                    });
    if (needs_network) resolved[c].network.emplace(build_case_network(cfg.cases[c]));
  }
  resolve_gammas(cfg, resolved);

  for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
    const CaseSpec& spec = cfg.cases[c];
    CaseResult cr;
    cr.label = spec.label;
    cr.model = spec.model;
    cr.alpha = spec.model.alpha();
    cr.weight_rule = spec.weight_rule;
    cr.topology = spec.topology.kind;
    if (resolved[c].network) {
      const Network& net = *resolved[c].network;
      cr.rho = net.weights.rho();
      cr.edges = net.graph.edge_count();
      cr.edge_probability = net.graph.edge_probability();
    }
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
      AlgorithmResult ar;
      ar.label = spec.algorithms[a].label;
      ar.algorithm = spec.algorithms[a].run.algorithm;
      ar.gamma = resolved[c].gammas[a];
      ar.gamma_grid_errors = resolved[c].grid_errors[a];
      ar.rounds = spec.algorithms[a].run.rounds;
      ar.chebyshev = spec.algorithms[a].run.chebyshev;
      ar.trials.resize(cfg.trials);
      cr.algorithms.push_back(std::move(ar));
    }
    result.cases.push_back(std::move(cr));
  }

  // One task per (case, trial); every task writes only its own slots.
  const std::size_t n_tasks = cfg.cases.size() * cfg.trials;
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_task = n_tasks;

  auto worker = [&]() {
    for (std::size_t task = next++; task < n_tasks; task = next++) {
      const std::size_t c = task / cfg.trials;
      const std::size_t trial = task % cfg.trials;
      try {
        const CaseSpec& spec = cfg.cases[c];
        const std::uint64_t seed = cfg.base_seed + trial;
        const LinearModel model = generate_model(trial_model(spec, seed));
        const double radius = trial_radius(spec, model);
        std::optional<RealVector> theta_hat;
        double stat_err = std::numeric_limits<double>::quiet_NaN();
        bool ref_converged = false;
        if (cfg.reference && radius > 0.0) {
          ReferenceSolution ref =
              reference_solution(model, radius, 1e-10, kReferenceIterations, false);
          ref_converged = ref.converged;
          theta_hat = std::move(ref.theta_hat);
          stat_err = (*theta_hat - model.theta_star()).squaredNorm();
        }
        const Network* net = resolved[c].network ? &*resolved[c].network : nullptr;
        for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
          TrialOutcome& out = result.cases[c].algorithms[a].trials[trial];
          out.trial = trial;
          out.seed = seed;
          out.radius = radius;
          out.statistical_error = stat_err;
          out.reference_converged = ref_converged;
          RunConfig run = spec.algorithms[a].run;
          run.gamma = resolved[c].gammas[a];
          run.radius = radius;
          try {
            out.trace = run_algorithm(model, net, run, theta_hat ? &*theta_hat : nullptr);
            out.trace.final_theta.resize(0, 0);
            out.trace.final_half.resize(0, 0);
          } catch (const DivergenceFailure& e) {
            out.diverged = true;
            out.failure = e.what();
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (task < first_error_task) {
          first_error_task = task;
          first_error = std::current_exception();
        }
      }
    }
  };

  const std::size_t n_workers = std::min(cfg.workers, std::max<std::size_t>(n_tasks, 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (CaseResult& cr : result.cases) {
    for (AlgorithmResult& ar : cr.algorithms) {
      const bool any_ok = std::any_of(ar.trials.begin(), ar.trials.end(),
                                      [](const TrialOutcome& t) { return !t.diverged; });
      if (!any_ok) {
        throw ExperimentFailure(
            fmt::format("every trial of {} / {} diverged", cr.label, ar.label));
      }
      for (const TrialOutcome& t : ar.trials) {
        if (!t.diverged) {
          ar.effective_rho = t.trace.effective_rho;
          break;
        }
      }
      summarize(ar);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

void write_traces_csv(std::ostream& out, const ExperimentResult& result) {
  out << "case,trial,algorithm,t,metric,value\n";
  for (const CaseResult& cr : result.cases) {
    const std::size_t trials = cr.algorithms.empty() ? 0 : cr.algorithms.front().trials.size();
    for (std::size_t trial = 0; trial < trials; ++trial) {
      for (const AlgorithmResult& ar : cr.algorithms) {
        const TrialOutcome& t = ar.trials[trial];
        if (t.diverged) continue;
        const MetricTable metrics = trace_metrics(t.trace);
        for (std::size_t k = 0; k < t.trace.records.size(); ++k) {
          for (const auto& [name, col] : metrics) {
            out << cr.label << ',' << trial << ',' << ar.label << ',' << t.trace.records[k].t
                << ',' << name << ',' << format_real(col[k]) << '\n';
          }
        }
      }
    }
  }
}

void write_summary_csv(std::ostream& out, const ExperimentResult& result) {
  out << "case,algorithm,metric,t,mean,p10,p90,count\n";
  for (const CaseResult& cr : result.cases) {
    for (const AlgorithmResult& ar : cr.algorithms) {
      for (const auto& [name, s] : ar.summary) {
        for (std::size_t t = 0; t < s.mean.size(); ++t) {
          out << cr.label << ',' << ar.label << ',' << name << ',' << t << ','
              << format_real(s.mean[t]) << ',' << format_real(s.p10[t]) << ','
              << format_real(s.p90[t]) << ',' << s.count << '\n';
        }
      }
    }
  }
}

void write_rounds_csv(std::ostream& out, const ExperimentResult& result) {
  out << "topology,p,m,rule,rho,target,rounds,chebyshev_rounds\n";
  for (const RoundTableRow& r : result.round_table) {
    out << to_string(r.kind) << ',' << format_real(r.edge_probability) << ',' << r.m << ','
        << to_string(r.rule) << ',' << format_real(r.rho) << ',' << format_real(r.target) << ','
        << r.rounds << ',' << r.chebyshev_rounds << '\n';
  }
}

json experiment_metadata(const ExperimentResult& result) {
  json j;
  j["config"] = to_json(result.config);
  if (result.config.kind == ExperimentKind::kRoundTable) {
    json rows = json::array();
    for (const RoundTableRow& r : result.round_table) {
      rows.push_back({{"topology", std::string(to_string(r.kind))},
                      {"p", r.edge_probability},
                      {"m", r.m},
                      {"rule", std::string(to_string(r.rule))},
                      {"rho", r.rho},
                      {"target", r.target},
                      {"rounds", r.rounds},
                      {"chebyshev_rounds", r.chebyshev_rounds}});
    }
    j["round_table"] = rows;
    return j;
  }
  json cases = json::array();
  for (const CaseResult& cr : result.cases) {
    json algos = json::array();
    for (const AlgorithmResult& ar : cr.algorithms) {
      json trials = json::array();
      std::size_t diverged = 0;
      for (const TrialOutcome& t : ar.trials) {
        diverged += t.diverged ? 1 : 0;
        trials.push_back({{"trial", t.trial},
                          {"seed", t.seed},
                          {"radius", t.radius},
                          {"statistical_error", t.statistical_error},
                          {"reference_converged", t.reference_converged},
                          {"diverged", t.diverged},
                          {"failure", t.failure},
                          {"iterations", t.trace.iterations},
                          {"max_conservation_error", t.trace.max_conservation_error}});
      }
      algos.push_back({{"label", ar.label},
                       {"algorithm", std::string(to_string(ar.algorithm))},
                       {"gamma", ar.gamma},
                       {"gamma_grid_errors", ar.gamma_grid_errors},
                       {"rounds", ar.rounds},
                       {"chebyshev", ar.chebyshev},
                       {"effective_rho", ar.effective_rho},
                       {"diverged_trials", diverged},
                       {"trials", trials}});
    }
    cases.push_back({{"label", cr.label},
                     {"alpha", cr.alpha},
                     {"rho", cr.rho},
                     {"topology", std::string(to_string(cr.topology))},
                     {"edge_probability", cr.edge_probability},
                     {"edges", cr.edges},
                     {"weights", std::string(to_string(cr.weight_rule))},
                     {"model", model_json(cr.model)},
                     {"algorithms", algos}});
  }
  j["cases"] = cases;
  return j;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write {}", (dir / name).string()));
    return out;
  };
  if (result.config.kind == ExperimentKind::kRoundTable) {
    auto out = open("rounds.csv");
    write_rounds_csv(out, result);
  } else {
    auto traces = open("traces.csv");
    write_traces_csv(traces, result);
    auto summary = open("summary.csv");
    write_summary_csv(summary, result);
  }
  auto meta = open("metadata.json");
  meta << experiment_metadata(result).dump(2) << '\n';
}

}  // namespace netlasso
