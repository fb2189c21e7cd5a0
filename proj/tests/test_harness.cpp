#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "netlasso/errors.hpp"
#include "netlasso/harness.hpp"

using namespace netlasso;
using nlohmann::json;

namespace {

const std::filesystem::path kData = NETLASSO_TEST_DATA_DIR;

json tiny_json() { return json::parse(std::ifstream(kData / "tiny_config.json")); }

ExperimentConfig tiny() { return parse_experiment_config(tiny_json()); }

std::string csv_text(const ExperimentResult& r, bool summary) {
  std::ostringstream out;
  summary ? write_summary_csv(out, r) : write_traces_csv(out, r);
  return out.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config parsing and round trip") {
  const ExperimentConfig cfg = tiny();
  CHECK(cfg.name == "tiny");
  CHECK(cfg.trials == 3);
  REQUIRE(cfg.cases.size() == 2);
  CHECK(cfg.cases[0].algorithms.size() == 3);
  CHECK(cfg.cases[0].algorithms[0].gamma_grid.size() == 3);
  CHECK(cfg.cases[1].topology.kind == TopologyKind::kLine);
  CHECK(cfg.cases[1].weight_rule == WeightRule::kLazyMetropolis);
  CHECK(cfg.cases[1].radius.value() == 2.0);
  CHECK(cfg.cases[1].algorithms[0].run.rounds == 2);
  CHECK(cfg.cases[1].model.covariance.kind == CovarianceKind::kToeplitz);

  const json once = to_json(cfg);
  const json twice = to_json(parse_experiment_config(once));
  CHECK(once == twice);

  for (std::string_view name : kPresetNames) {
    const ExperimentConfig p = preset(name, Scale::kDesk);
    CHECK(to_json(parse_experiment_config(to_json(p))) == to_json(p));
  }
}

TEST_CASE("bad configs are rejected") {
  json j = tiny_json();
  j["cases"][0]["algorithms"][0]["algorithm"] = "admm";
  CHECK_THROWS_AS(parse_experiment_config(j), InvalidArgument);

  j = tiny_json();
  j["cases"][0]["model"].erase("d");
  CHECK_THROWS_AS(parse_experiment_config(j), InvalidArgument);

  j = tiny_json();
  j["cases"][0]["model"]["s"] = 100;
  CHECK_THROWS_AS(parse_experiment_config(j).validate(), InvalidArgument);

  j = tiny_json();
  j["trials"] = "many";
  CHECK_THROWS_AS(parse_experiment_config(j), InvalidArgument);

  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), InvalidArgument);
}

TEST_CASE("presets") {
  CHECK(is_preset("P5_multi_consensus"));
  CHECK_FALSE(is_preset("P9"));
  CHECK_THROWS_AS(preset("P9", Scale::kDesk), InvalidArgument);
  CHECK_THROWS_AS(parse_scale("huge"), InvalidArgument);

  // Fixed-alpha cases hold s log d / N near 0.2 at both scales.
  for (Scale scale : {Scale::kDesk, Scale::kFull}) {
    const ExperimentConfig p1 = preset("P1_fixed_alpha", scale);
    REQUIRE(p1.cases.size() == 3);
    for (const CaseSpec& c : p1.cases) {
      CHECK(c.model.alpha() >= 0.19);
      CHECK(c.model.alpha() <= 0.21);
      CHECK(c.model.s == static_cast<std::size_t>(std::ceil(std::sqrt(double(c.model.d)))));
    }
  }
  const ExperimentConfig full = preset("P1_fixed_alpha", Scale::kFull);
  CHECK(full.cases[0].model.d == 5000);
  CHECK(full.cases[0].model.n == 61);
  CHECK(full.trials == 100);

  // Desk alphas for the varying-alpha preset stay within 5% of the full-scale ones.
  const ExperimentConfig p2d = preset("P2_varying_alpha", Scale::kDesk);
  const ExperimentConfig p2p = preset("P2_varying_alpha", Scale::kFull);
  REQUIRE(p2d.cases.size() == p2p.cases.size());
  for (std::size_t k = 0; k < p2d.cases.size(); ++k) {
    const double a = p2d.cases[k].model.alpha();
    const double b = p2p.cases[k].model.alpha();
    CHECK(std::abs(a - b) <= 0.05 * b);
  }

  const ExperimentConfig p6 = preset("P6_round_table", Scale::kFull);
  CHECK(p6.kind == ExperimentKind::kRoundTable);
  CHECK(p6.round_table.sizes.size() == 4);
}

TEST_CASE("round table on a small network") {
  ExperimentConfig cfg = preset("P6_round_table", Scale::kDesk);
  cfg.round_table.sizes = {50};
  cfg.round_table.families.resize(1);
  cfg.round_table.rules = {WeightRule::kMetropolis};
  const ExperimentResult r = run_experiment(cfg);
  REQUIRE(r.round_table.size() == 1);
  CHECK(r.round_table[0].rounds == 18);
  CHECK(r.round_table[0].target == doctest::Approx(std::pow(50.0, -8.0)));
  std::ostringstream out;
  write_rounds_csv(out, r);
  CHECK(out.str().rfind("topology,p,m,rule,rho,target,rounds,chebyshev_rounds\n", 0) == 0);
}

TEST_CASE("experiments are deterministic and independent of the worker count") {
  ExperimentConfig cfg = tiny();
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);
  CHECK(csv_text(a, false) == csv_text(b, false));
  CHECK(csv_text(a, true) == csv_text(b, true));
  CHECK(experiment_metadata(a) == experiment_metadata(b));

  cfg.workers = 3;
  const ExperimentResult c = run_experiment(cfg);
  CHECK(csv_text(a, false) == csv_text(c, false));
  CHECK(csv_text(a, true) == csv_text(c, true));

  REQUIRE(a.cases.size() == 2);
  const AlgorithmResult& nl = a.cases[0].algorithms[0];
  CHECK(nl.gamma_grid_errors.size() == 3);
  CHECK(nl.trials.size() == 3);
  CHECK(nl.summary.at("estimation_error").mean.size() == 26);
  CHECK(nl.summary.at("estimation_error").count == 3);
  CHECK(a.cases[1].algorithms[0].summary.count("tracking_residual") == 1);
  CHECK(a.cases[0].algorithms[2].summary.count("tracking_conservation") == 0);
  for (const auto& t : nl.trials) CHECK(t.seed == 40 + t.trial);
}

TEST_CASE("written outputs match the golden files") {
  const ExperimentConfig cfg = tiny();
  const ExperimentResult r = run_experiment(cfg);
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "netlasso_golden";
  std::filesystem::remove_all(dir);
  write_experiment(r, dir);
  CHECK(std::filesystem::exists(dir / "traces.csv"));
  CHECK(std::filesystem::exists(dir / "metadata.json"));

  // Golden files come from `netlasso run tests/data/tiny_config.json`.
  REQUIRE(std::filesystem::exists(kData / "tiny_summary.csv"));
  CHECK(slurp(dir / "summary.csv") == slurp(kData / "tiny_summary.csv"));
  json meta = json::parse(slurp(dir / "metadata.json"));
  json expected = json::parse(slurp(kData / "tiny_metadata.json"));
  meta["config"].erase("output_dir");
  expected["config"].erase("output_dir");
  CHECK(meta == expected);
  std::filesystem::remove_all(dir);
}

TEST_CASE("percentiles interpolate between order statistics") {
  CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.5);
  CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 0.0) == 1.0);
  CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 1.0) == 4.0);
  CHECK(percentile({0.0, 10.0}, 0.1) == doctest::Approx(1.0));
  CHECK(percentile({7.0}, 0.9) == 7.0);
  CHECK(std::isnan(percentile({}, 0.5)));
  CHECK(format_real(0.1) == "1.0000000000000001e-01");
}
