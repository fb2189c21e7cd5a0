#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "netlasso/numerics.hpp"

namespace netlasso {

enum class TopologyKind { kLine, kGrid2d, kStar, kComplete, kErdosRenyi };

std::string_view to_string(TopologyKind kind);
TopologyKind parse_topology(std::string_view name);

/// Undirected connected graph on nodes 0..m-1. Edges are stored once as
/// (i, j) with i < j, sorted lexicographically; no self loops.
class Graph {
 public:
  Graph(std::size_t m, std::vector<std::pair<std::size_t, std::size_t>> edges,
        TopologyKind kind, double edge_probability = 0.0, std::uint64_t seed = 0,
        std::size_t resamples = 0);

  std::size_t size() const { return m_; }
  TopologyKind kind() const { return kind_; }
  double edge_probability() const { return p_; }
  std::uint64_t seed() const { return seed_; }
  /// Number of extra Erdos-Renyi draws needed before a connected sample.
  std::size_t resamples() const { return resamples_; }

  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }
  std::size_t max_degree() const;
  bool has_edge(std::size_t i, std::size_t j) const;

  static bool is_connected(std::size_t m,
                           const std::vector<std::pair<std::size_t, std::size_t>>& edges);

 private:
  std::size_t m_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
  TopologyKind kind_;
  double p_;
  std::uint64_t seed_;
  std::size_t resamples_;
};

struct TopologyParams {
  double edge_probability = 0.5;  // Erdos-Renyi only
};

/// Connected graph of the requested family, deterministic in its arguments.
/// Erdos-Renyi draws are repeated with seed+1, seed+2, ... until connected;
/// ConstructionFailure after 1000 attempts.
Graph build_topology(TopologyKind kind, std::size_t m, TopologyParams params = {},
                     std::uint64_t seed = 0);

enum class WeightRule { kMetropolis, kLazyMetropolis, kUniformComplete, kCustom };

std::string_view to_string(WeightRule rule);
WeightRule parse_weight_rule(std::string_view name);

/// Doubly stochastic mixing matrix W with its contraction rho = ||W - J||_2.
class MixingMatrix {
 public:
  /// Validates double stochasticity (1e-12) and computes rho.
  MixingMatrix(RealMatrix weights, WeightRule rule, std::size_t rounds = 1);

  const RealMatrix& weights() const { return w_; }
  WeightRule rule() const { return rule_; }
  std::size_t size() const { return static_cast<std::size_t>(w_.rows()); }
  double rho() const { return rho_; }
  /// sqrt(m): bound on the l_inf constant c_m.
  double c_m_bound() const;
  /// Communication rounds represented by one multiplication with W.
  std::size_t rounds() const { return rounds_; }
  bool symmetric() const { return symmetric_; }

 private:
  RealMatrix w_;
  WeightRule rule_;
  std::size_t rounds_;
  double rho_;
  bool symmetric_;
};

/// A graph together with the weights used for gossip over it.
struct Network {
  Graph graph;
  MixingMatrix weights;
};

/// ||W - J||_2: exact symmetric eigendecomposition for m <= 4096, power
/// iteration otherwise (and for non-symmetric W).
double contraction_factor(const RealMatrix& w);

/// Metropolis weights w_ij = 1 / (1 + max(d_i, d_j)) on edges, or the lazy
/// variant 1 / (2 max(d_i, d_j)); the diagonal completes each row to one.
MixingMatrix metropolis_weights(const Graph& g, bool lazy);
/// W = J (exact averaging); only valid on a complete graph.
MixingMatrix uniform_complete_weights(const Graph& g);
MixingMatrix make_weights(const Graph& g, WeightRule rule);

/// Wbar^K by repeated squaring; rho is recomputed and checked against
/// rho(Wbar)^K for symmetric Wbar.
MixingMatrix power_mixing(const MixingMatrix& wbar, std::size_t k);

/// Degree-K Chebyshev polynomial of a symmetric Wbar, scaled so P_K(1) = 1:
/// P_K(x) = T_K(x / rho_bar) / T_K(1 / rho_bar). Applied matrix-free via the
/// three-term recurrence (K products with Wbar per application).
class ChebyshevMixing {
 public:
  ChebyshevMixing(const MixingMatrix& wbar, std::size_t k);

  std::size_t degree() const { return k_; }
  double rho_bar() const { return rho_bar_; }
  /// 1 / T_K(1 / rho_bar): the contraction of P_K(Wbar) on the disagreement
  /// subspace.
  double contraction() const { return contraction_; }
  void apply(const AgentMatrix& in, AgentMatrix& out) const;
  RealMatrix materialize() const;

 private:
  RealMatrix wbar_;
  std::size_t k_;
  double rho_bar_;
  double contraction_;
};

/// 1 / T_K(1 / rho_bar) computed through ratios (no overflow).
double chebyshev_contraction(double rho_bar, std::size_t k);

/// Smallest k >= 1 with rho_bar^k <= target.
std::size_t rounds_for_target(double rho_bar, double target);
/// Smallest Chebyshev degree K with 1 / T_K(1 / rho_bar) <= target.
std::size_t chebyshev_rounds_for_target(double rho_bar, double target);

enum class Protocol { kMesh, kStarPushPull };

struct CommCost {
  std::size_t channel_use_per_round = 0;
  std::size_t max_node_channel_use = 0;
  std::size_t total_channel_use = 0;
  std::size_t rounds = 0;
};

/// Mesh: one channel use per edge per round, busiest node = max degree.
/// Star push-pull: m-1 broadcast plus m-1 upload channel uses per round,
/// all touching the master.
CommCost comm_cost(const Graph& g, std::size_t rounds, Protocol protocol);
CommCost star_pushpull_cost(std::size_t m, std::size_t rounds);

/// Erdos-Renyi graph whose rho under `rule` is closest to `target_rho`,
/// scanning p over {0.01, ..., 1.00} with a fixed seed.
Graph erdos_renyi_for_rho(std::size_t m, double target_rho, WeightRule rule,
                          std::uint64_t seed);

/// "i j" per line, 0-indexed, sorted.
void write_edge_list(std::ostream& out, const Graph& g);
Graph read_edge_list(std::istream& in, std::size_t m,
                     TopologyKind kind = TopologyKind::kErdosRenyi);
/// Dense CSV, 17 significant digits.
void write_mixing_csv(std::ostream& out, const MixingMatrix& w);

}  // namespace netlasso
