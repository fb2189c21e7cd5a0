#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "netlasso/errors.hpp"
#include "netlasso/network.hpp"

using namespace netlasso;

namespace {

void check_mixing_invariants(const Graph& g, const MixingMatrix& w) {
  const RealMatrix& a = w.weights();
  const auto m = static_cast<Eigen::Index>(g.size());
  REQUIRE(a.rows() == m);
  CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK((a.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      CHECK(a(i, j) >= -1e-15);
      if (i != j && !g.has_edge(i, j)) CHECK(a(i, j) == 0.0);
    }
  }
}

}  // namespace

TEST_CASE("topology families have the expected edge counts") {
  CHECK(build_topology(TopologyKind::kLine, 10).edge_count() == 9);
  CHECK(build_topology(TopologyKind::kStar, 10).edge_count() == 9);
  CHECK(build_topology(TopologyKind::kStar, 10).degree(0) == 9);
  CHECK(build_topology(TopologyKind::kComplete, 10).edge_count() == 45);
  CHECK(build_topology(TopologyKind::kGrid2d, 16).edge_count() == 24);
  CHECK_THROWS_AS(build_topology(TopologyKind::kGrid2d, 15), InvalidArgument);
  CHECK_THROWS_AS(build_topology(TopologyKind::kLine, 1), InvalidArgument);
  CHECK_THROWS_AS(build_topology(TopologyKind::kErdosRenyi, 10, {0.0}), InvalidArgument);
}

TEST_CASE("Erdos-Renyi graphs are connected, seeded and resampled") {
  const Graph a = build_topology(TopologyKind::kErdosRenyi, 40, {0.1}, 3);
  const Graph b = build_topology(TopologyKind::kErdosRenyi, 40, {0.1}, 3);
  CHECK(a.edges() == b.edges());
  CHECK(Graph::is_connected(40, a.edges()));
  // Very sparse draws need retries but still come back connected.
  const Graph sparse = build_topology(TopologyKind::kErdosRenyi, 30, {0.12}, 1);
  CHECK(Graph::is_connected(30, sparse.edges()));
  CHECK(build_topology(TopologyKind::kErdosRenyi, 12, {1.0}, 5).edge_count() == 66);
}

TEST_CASE("graphs normalize and validate their edges") {
  const Graph g(4, {{1, 0}, {2, 1}, {3, 2}}, TopologyKind::kLine);
  CHECK(g.edge_count() == 3);
  CHECK(g.edges().front() == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(g.has_edge(2, 1));
  CHECK_FALSE(g.has_edge(0, 3));
  CHECK_THROWS_AS(Graph(4, {{0, 1}, {2, 3}}, TopologyKind::kLine), ConstructionFailure);
  CHECK_THROWS(Graph(3, {{0, 0}, {0, 1}, {1, 2}}, TopologyKind::kLine));
  CHECK_THROWS(Graph(3, {{0, 1}, {1, 0}, {1, 2}}, TopologyKind::kLine));
  CHECK_THROWS(Graph(3, {{0, 5}}, TopologyKind::kLine));
}

TEST_CASE("weight rules produce valid mixing matrices on every family") {
  for (TopologyKind kind : {TopologyKind::kLine, TopologyKind::kGrid2d, TopologyKind::kStar,
                            TopologyKind::kComplete, TopologyKind::kErdosRenyi}) {
    const Graph g = build_topology(kind, 16, {0.3}, 11);
    for (bool lazy : {false, true}) {
      const MixingMatrix w = metropolis_weights(g, lazy);
      check_mixing_invariants(g, w);
      CHECK(w.symmetric());
      CHECK(w.rho() < 1.0);
      CHECK(w.rho() >= 0.0);
    }
  }
  const Graph line = build_topology(TopologyKind::kLine, 5);
  CHECK_THROWS_AS(uniform_complete_weights(line), InvalidArgument);
  CHECK_THROWS_AS(make_weights(line, WeightRule::kCustom), InvalidArgument);
}

TEST_CASE("contraction factors match closed forms") {
  for (std::size_t m : {5, 12, 40}) {
    const double md = static_cast<double>(m);
    const Graph line = build_topology(TopologyKind::kLine, m);
    // Metropolis on a path is I - Lap/3, spectrum 1 - (2/3)(1 - cos(pi k / m)).
    const double line_rho = 1.0 - (2.0 / 3.0) * (1.0 - std::cos(std::numbers::pi / md));
    CHECK(metropolis_weights(line, false).rho() == doctest::Approx(line_rho).epsilon(1e-12));

    // Star: I - Lap/m has eigenvalues 1, 1 - 1/m and 0.
    const Graph star = build_topology(TopologyKind::kStar, m);
    CHECK(metropolis_weights(star, false).rho() == doctest::Approx(1.0 - 1.0 / md));

    const Graph complete = build_topology(TopologyKind::kComplete, m);
    CHECK(metropolis_weights(complete, false).rho() < 1e-14);
    CHECK(uniform_complete_weights(complete).rho() < 1e-14);
  }
}

TEST_CASE("mixing matrix validation") {
  RealMatrix bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.4;
  CHECK_THROWS_AS(MixingMatrix(bad, WeightRule::kCustom), InvalidArgument);
  RealMatrix rect(2, 3);
  rect.setConstant(1.0 / 3.0);
  CHECK_THROWS_AS(MixingMatrix(rect, WeightRule::kCustom), InvalidArgument);
  const MixingMatrix one(RealMatrix::Ones(1, 1), WeightRule::kCustom);
  CHECK(one.rho() == 0.0);
  CHECK(one.c_m_bound() == 1.0);
}

TEST_CASE("repeated mixing contracts as rho^K") {
  const Graph g = build_topology(TopologyKind::kErdosRenyi, 20, {0.25}, 2);
  const MixingMatrix w = metropolis_weights(g, true);
  for (std::size_t k : {1, 2, 3, 7, 16, 32}) {
    const MixingMatrix wk = power_mixing(w, k);
    CHECK(wk.rounds() == k);
    CHECK(std::abs(wk.rho() - std::pow(w.rho(), static_cast<double>(k))) <= 1e-9);
  }
  CHECK_THROWS_AS(power_mixing(w, 0), InvalidArgument);
}

TEST_CASE("Chebyshev mixing") {
  const Graph g = build_topology(TopologyKind::kLine, 12);
  const MixingMatrix w = metropolis_weights(g, false);
  for (std::size_t k : {1, 2, 5, 9}) {
    const ChebyshevMixing cheb(w, k);
    // 1 / T_K(1/rho) in closed form.
    const double expect = 1.0 / std::cosh(static_cast<double>(k) * std::acosh(1.0 / w.rho()));
    CHECK(cheb.contraction() == doctest::Approx(expect).epsilon(1e-10));
    const RealMatrix p = cheb.materialize();
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(contraction_factor(p) == doctest::Approx(expect).epsilon(1e-8));

    AgentMatrix x = AgentMatrix::Random(12, 3);
    AgentMatrix y;
    cheb.apply(x, y);
    CHECK((y - p * x).norm() < 1e-10);
  }
  CHECK(chebyshev_contraction(0.0, 4) == 0.0);
  CHECK_THROWS_AS(chebyshev_contraction(1.0, 4), InvalidArgument);
  CHECK_THROWS_AS(ChebyshevMixing(w, 0), InvalidArgument);
}

TEST_CASE("round counts") {
  for (double rho : {0.05, 0.3, 0.9, 0.99, 0.9999}) {
    for (double target : {0.5, 1e-3, 1e-14}) {
      std::size_t brute = 1;
      double p = rho;
      while (p > target) {
        p *= rho;
        ++brute;
      }
      CHECK(rounds_for_target(rho, target) == brute);
      const std::size_t kc = chebyshev_rounds_for_target(rho, target);
      CHECK(chebyshev_contraction(rho, kc) <= target);
      if (kc > 1) CHECK(chebyshev_contraction(rho, kc - 1) > target);
      CHECK(kc <= brute);
    }
  }
  CHECK(rounds_for_target(0.0, 1e-3) == 1);
  CHECK(rounds_for_target(0.9, 1e-6) == 132);
  CHECK(chebyshev_rounds_for_target(0.99, 1e-3) < rounds_for_target(0.99, 1e-3) / 5);
  CHECK_THROWS_AS(rounds_for_target(1.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(rounds_for_target(0.5, 1.5), InvalidArgument);
}

TEST_CASE("communication accounting") {
  const Graph g = build_topology(TopologyKind::kStar, 6);
  const CommCost mesh = comm_cost(g, 4, Protocol::kMesh);
  CHECK(mesh.channel_use_per_round == 5);
  CHECK(mesh.max_node_channel_use == 5);
  CHECK(mesh.total_channel_use == 20);
  const CommCost push = star_pushpull_cost(6, 3);
  CHECK(push.channel_use_per_round == 10);
  CHECK(push.total_channel_use == 30);
  CHECK(star_pushpull_cost(1, 10).total_channel_use == 0);
  const Graph line = build_topology(TopologyKind::kLine, 6);
  CHECK(comm_cost(line, 1, Protocol::kMesh).max_node_channel_use == 2);
}

TEST_CASE("Erdos-Renyi search by contraction") {
  const Graph g = erdos_renyi_for_rho(30, 0.4, WeightRule::kMetropolis, 4);
  CHECK(std::abs(metropolis_weights(g, false).rho() - 0.4) < 0.05);
  CHECK_THROWS_AS(erdos_renyi_for_rho(30, 1.0, WeightRule::kMetropolis, 4), InvalidArgument);
}

TEST_CASE("edge lists and mixing csv") {
  const Graph g = build_topology(TopologyKind::kErdosRenyi, 15, {0.3}, 8);
  std::stringstream out;
  write_edge_list(out, g);
  std::stringstream in(out.str());
  const Graph back = read_edge_list(in, 15);
  CHECK(back.edges() == g.edges());

  std::stringstream csv;
  write_mixing_csv(csv, metropolis_weights(build_topology(TopologyKind::kLine, 3), false));
  std::string first;
  std::getline(csv, first);
  CHECK(first == "6.6666666666666674e-01,3.3333333333333331e-01,0.0000000000000000e+00");

  std::stringstream broken("0 1\nx y\n");
  CHECK_THROWS_AS(read_edge_list(broken, 2), InvalidArgument);
}

TEST_CASE("name parsing") {
  CHECK(parse_topology("grid2d") == TopologyKind::kGrid2d);
  CHECK(to_string(parse_weight_rule("lazy_metropolis")) == "lazy_metropolis");
  CHECK_THROWS_AS(parse_topology("torus"), InvalidArgument);
  CHECK_THROWS_AS(parse_weight_rule("max_degree"), InvalidArgument);
}
