#include "netlasso/network.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "netlasso/errors.hpp"
#include "netlasso/rng.hpp"

namespace netlasso {

std::string_view to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::kLine: return "line";
    case TopologyKind::kGrid2d: return "grid2d";
    case TopologyKind::kStar: return "star";
    case TopologyKind::kComplete: return "complete";
    case TopologyKind::kErdosRenyi: return "erdos_renyi";
  }
  return "unknown";
}

TopologyKind parse_topology(std::string_view name) {
  if (name == "line" || name == "path") return TopologyKind::kLine;
  if (name == "grid2d" || name == "grid") return TopologyKind::kGrid2d;
  if (name == "star") return TopologyKind::kStar;
  if (name == "complete") return TopologyKind::kComplete;
  if (name == "erdos_renyi" || name == "er") return TopologyKind::kErdosRenyi;
  throw InvalidArgument(fmt::format("unknown topology '{}'", name));
}

std::string_view to_string(WeightRule rule) {
  switch (rule) {
    case WeightRule::kMetropolis: return "metropolis";
    case WeightRule::kLazyMetropolis: return "lazy_metropolis";
    case WeightRule::kUniformComplete: return "uniform_complete";
    case WeightRule::kCustom: return "custom";
  }
  return "unknown";
}

WeightRule parse_weight_rule(std::string_view name) {
  if (name == "metropolis") return WeightRule::kMetropolis;
  if (name == "lazy_metropolis" || name == "lazy") return WeightRule::kLazyMetropolis;
  if (name == "uniform_complete" || name == "uniform") return WeightRule::kUniformComplete;
  throw InvalidArgument(fmt::format("unknown weight rule '{}'", name));
}

Graph::Graph(std::size_t m, std::vector<std::pair<std::size_t, std::size_t>> edges,
             TopologyKind kind, double edge_probability, std::uint64_t seed,
             std::size_t resamples)
    : m_(m),
      edges_(std::move(edges)),
      adjacency_(m),
      kind_(kind),
      p_(edge_probability),
      seed_(seed),
      resamples_(resamples) {
  for (auto& [i, j] : edges_) {
    if (i == j || i >= m || j >= m) throw InvalidArgument("invalid edge in graph");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw InvalidArgument("duplicate edge in graph");
  }
  for (const auto& [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& list : adjacency_) std::sort(list.begin(), list.end());
  if (!is_connected(m_, edges_)) {
    throw ConstructionFailure("graph is not connected");
  }
}

std::size_t Graph::max_degree() const {
  std::size_t best = 0;
  for (const auto& list : adjacency_) best = std::max(best, list.size());
  return best;
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= m_ || j >= m_) return false;
  return std::binary_search(adjacency_[i].begin(), adjacency_[i].end(), j);
}

bool Graph::is_connected(std::size_t m,
                         const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (m == 0) return false;
  std::vector<std::vector<std::size_t>> adj(m);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(m, 0);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == m;
}

namespace {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

EdgeList erdos_renyi_edges(std::size_t m, double p, std::uint64_t seed) {
  CounterRng rng(seed, Stream::kGraph);
  EdgeList edges;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (rng.uniform() < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

}  // namespace

Graph build_topology(TopologyKind kind, std::size_t m, TopologyParams params,
                     std::uint64_t seed) {
  if (m < 2) throw InvalidArgument("topology needs at least two nodes");
  EdgeList edges;
  switch (kind) {
    case TopologyKind::kLine:
      for (std::size_t i = 0; i + 1 < m; ++i) edges.emplace_back(i, i + 1);
      break;
    case TopologyKind::kGrid2d: {
      const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
      if (side * side != m) {
        throw InvalidArgument(fmt::format("grid2d needs a perfect square, got m={}", m));
      }
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const std::size_t u = r * side + c;
          if (c + 1 < side) edges.emplace_back(u, u + 1);
          if (r + 1 < side) edges.emplace_back(u, u + side);
        }
      }
      break;
    }
    case TopologyKind::kStar:
      for (std::size_t i = 1; i < m; ++i) edges.emplace_back(0, i);
      break;
    case TopologyKind::kComplete:
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) edges.emplace_back(i, j);
      }
      break;
    case TopologyKind::kErdosRenyi: {
      const double p = params.edge_probability;
      if (!(p > 0.0 && p <= 1.0)) {
        throw InvalidArgument("Erdos-Renyi edge probability must lie in (0, 1]");
      }
      constexpr std::size_t kMaxAttempts = 1000;
      for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
        EdgeList draw = erdos_renyi_edges(m, p, seed + attempt);
        if (Graph::is_connected(m, draw)) {
          return Graph(m, std::move(draw), kind, p, seed, attempt);
        }
      }
      throw ConstructionFailure(fmt::format(
          "Erdos-Renyi(m={}, p={}) still disconnected after {} draws", m, p, kMaxAttempts));
    }
  }
  return Graph(m, std::move(edges), kind, 0.0, seed, 0);
}

double contraction_factor(const RealMatrix& w) {
  const Eigen::Index m = w.rows();
  const RealMatrix centered = w - RealMatrix::Constant(m, m, 1.0 / static_cast<double>(m));
  if (m <= kExactEigenLimit && is_symmetric(w, 1e-14)) {
    return spectral_norm_symmetric_exact(0.5 * (centered + centered.transpose()));
  }
  return spectral_norm(centered, 1e-10);
}

MixingMatrix::MixingMatrix(RealMatrix weights, WeightRule rule, std::size_t rounds)
    : w_(std::move(weights)), rule_(rule), rounds_(rounds) {
  if (w_.rows() != w_.cols() || w_.rows() == 0) {
    throw InvalidArgument("mixing matrix must be square and non-empty");
  }
  if (!w_.allFinite()) throw InvalidArgument("mixing matrix has non-finite entries");
  const double row_err = (w_.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double col_err = (w_.colwise().sum().array() - 1.0).abs().maxCoeff();
  if (row_err > 1e-12 || col_err > 1e-12) {
    throw InvalidArgument(fmt::format(
        "mixing matrix is not doubly stochastic (row err {:.3g}, col err {:.3g})",
        row_err, col_err));
  }
  symmetric_ = is_symmetric(w_, 1e-14);
  rho_ = contraction_factor(w_);
}

double MixingMatrix::c_m_bound() const { return std::sqrt(static_cast<double>(size())); }

MixingMatrix metropolis_weights(const Graph& g, bool lazy) {
  const std::size_t m = g.size();
  RealMatrix w = RealMatrix::Zero(m, m);
  for (const auto& [i, j] : g.edges()) {
    const auto dmax = static_cast<double>(std::max(g.degree(i), g.degree(j)));
    const double weight = lazy ? 1.0 / (2.0 * dmax) : 1.0 / (1.0 + dmax);
    w(i, j) = weight;
    w(j, i) = weight;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double off = 0.0;
    for (std::size_t j : g.neighbors(i)) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return MixingMatrix(std::move(w),
                      lazy ? WeightRule::kLazyMetropolis : WeightRule::kMetropolis);
}

MixingMatrix uniform_complete_weights(const Graph& g) {
  const std::size_t m = g.size();
  if (g.edge_count() != m * (m - 1) / 2) {
    throw InvalidArgument("uniform averaging weights need a complete graph");
  }
  return MixingMatrix(RealMatrix::Constant(m, m, 1.0 / static_cast<double>(m)),
                      WeightRule::kUniformComplete);
}

MixingMatrix make_weights(const Graph& g, WeightRule rule) {
  switch (rule) {
    case WeightRule::kMetropolis: return metropolis_weights(g, false);
    case WeightRule::kLazyMetropolis: return metropolis_weights(g, true);
    case WeightRule::kUniformComplete: return uniform_complete_weights(g);
    case WeightRule::kCustom: break;
  }
  throw InvalidArgument("custom weights cannot be derived from a graph");
}

MixingMatrix power_mixing(const MixingMatrix& wbar, std::size_t k) {
  if (k < 1) throw InvalidArgument("power_mixing needs K >= 1");
  if (k == 1) return wbar;
  RealMatrix result = RealMatrix::Identity(wbar.size(), wbar.size());
  RealMatrix base = wbar.weights();
  for (std::size_t e = k; e > 0; e >>= 1) {
    if (e & 1) result = result * base;
    if (e > 1) base = base * base;
  }
  if (wbar.symmetric()) result = 0.5 * (result + result.transpose()).eval();
  MixingMatrix out(std::move(result), wbar.rule(), wbar.rounds() * k);
  if (wbar.symmetric()) {
    const double expected = std::pow(wbar.rho(), static_cast<double>(k));
    if (std::abs(out.rho() - expected) > 1e-9) {
      throw Error(fmt::format("power_mixing: rho(W^K)={} differs from rho^K={}",
                              out.rho(), expected));
    }
  }
  return out;
}

double chebyshev_contraction(double rho_bar, std::size_t k) {
  if (!(rho_bar >= 0.0 && rho_bar < 1.0)) {
    throw InvalidArgument("Chebyshev mixing needs 0 <= rho_bar < 1");
  }
  if (rho_bar == 0.0) return 0.0;
  // ratio_k = T_{k-1}(1/rho) / T_k(1/rho); 1/T_K = prod of the ratios.
  double ratio = rho_bar;
  double product = ratio;
  for (std::size_t j = 1; j < k; ++j) {
    ratio = 1.0 / (2.0 / rho_bar - ratio);
    product *= ratio;
  }
  return product;
}

ChebyshevMixing::ChebyshevMixing(const MixingMatrix& wbar, std::size_t k)
    : wbar_(wbar.weights()), k_(k), rho_bar_(wbar.rho()) {
  if (k < 1) throw InvalidArgument("Chebyshev degree must be >= 1");
  if (!wbar.symmetric()) throw InvalidArgument("Chebyshev mixing needs a symmetric Wbar");
  if (!(rho_bar_ < 1.0)) throw InvalidArgument("Chebyshev mixing needs rho_bar < 1");
  contraction_ = chebyshev_contraction(rho_bar_, k_);
}

void ChebyshevMixing::apply(const AgentMatrix& in, AgentMatrix& out) const {
  if (in.rows() != wbar_.rows()) {
    throw InvalidArgument("mixing operator dimension mismatch");
  }
  if (rho_bar_ == 0.0 || k_ == 1) {
    out.noalias() = wbar_ * in;
    return;
  }
  // y_{k+1} = (2/rho) (a_k/a_{k+1}) W y_k - (a_{k-1}/a_{k+1}) y_{k-1},
  // a_k = T_k(1/rho), tracked through ratio_k = a_{k-1}/a_k.
  AgentMatrix prev = in;
  AgentMatrix cur = wbar_ * in;
  AgentMatrix next(in.rows(), in.cols());
  double ratio = rho_bar_;
  for (std::size_t j = 1; j < k_; ++j) {
    const double ratio_next = 1.0 / (2.0 / rho_bar_ - ratio);
    next.noalias() = wbar_ * cur;
    next *= 2.0 / rho_bar_ * ratio_next;
    next -= (ratio * ratio_next) * prev;
    std::swap(prev, cur);
    std::swap(cur, next);
    ratio = ratio_next;
  }
  out = std::move(cur);
}

RealMatrix ChebyshevMixing::materialize() const {
  const auto m = wbar_.rows();
  AgentMatrix identity = AgentMatrix::Identity(m, m);
  AgentMatrix out;
  apply(identity, out);
  return out;
}

std::size_t rounds_for_target(double rho_bar, double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw InvalidArgument("round target must lie in (0, 1)");
  }
  if (!(rho_bar >= 0.0 && rho_bar < 1.0)) {
    throw InvalidArgument("rounds_for_target needs 0 <= rho_bar < 1");
  }
  if (rho_bar == 0.0) return 1;
  auto k = static_cast<std::size_t>(
      std::max(1.0, std::ceil(std::log(target) / std::log(rho_bar))));
  // Fix up rounding at the boundary so k is exactly the smallest solution.
  while (std::pow(rho_bar, static_cast<double>(k)) > target) ++k;
  while (k > 1 && std::pow(rho_bar, static_cast<double>(k - 1)) <= target) --k;
  return k;
}

std::size_t chebyshev_rounds_for_target(double rho_bar, double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw InvalidArgument("round target must lie in (0, 1)");
  }
  if (!(rho_bar >= 0.0 && rho_bar < 1.0)) {
    throw InvalidArgument("chebyshev_rounds_for_target needs 0 <= rho_bar < 1");
  }
  if (rho_bar == 0.0) return 1;
  double ratio = rho_bar;
  double product = ratio;
  std::size_t k = 1;
  while (product > target) {
    ratio = 1.0 / (2.0 / rho_bar - ratio);
    product *= ratio;
    ++k;
  }
  return k;
}

CommCost star_pushpull_cost(std::size_t m, std::size_t rounds) {
  CommCost cost;
  cost.channel_use_per_round = m > 1 ? 2 * (m - 1) : 0;
  cost.max_node_channel_use = cost.channel_use_per_round;
  cost.rounds = rounds;
  cost.total_channel_use = cost.channel_use_per_round * rounds;
  return cost;
}

CommCost comm_cost(const Graph& g, std::size_t rounds, Protocol protocol) {
  if (protocol == Protocol::kStarPushPull) return star_pushpull_cost(g.size(), rounds);
  CommCost cost;
  cost.channel_use_per_round = g.edge_count();
  cost.max_node_channel_use = g.max_degree();
  cost.rounds = rounds;
  cost.total_channel_use = cost.channel_use_per_round * rounds;
  return cost;
}

Graph erdos_renyi_for_rho(std::size_t m, double target_rho, WeightRule rule,
                          std::uint64_t seed) {
  if (!(target_rho >= 0.0 && target_rho < 1.0)) {
    throw InvalidArgument("target rho must lie in [0, 1)");
  }
  std::optional<Graph> best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 100; ++step) {
    const double p = step / 100.0;
    try {
      Graph g = build_topology(TopologyKind::kErdosRenyi, m, {p}, seed);
      if (rule == WeightRule::kUniformComplete && g.edge_count() != m * (m - 1) / 2) {
        continue;
      }
      const double gap = std::abs(make_weights(g, rule).rho() - target_rho);
      if (gap < best_gap) {
        best_gap = gap;
        best.emplace(std::move(g));
      }
    } catch (const ConstructionFailure&) {
      continue;
    }
  }
  if (!best) throw ConstructionFailure("no connected Erdos-Renyi graph found");
  return *best;
}

void write_edge_list(std::ostream& out, const Graph& g) {
  for (const auto& [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

Graph read_edge_list(std::istream& in, std::size_t m, TopologyKind kind) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t i = 0, j = 0;
    if (!(fields >> i >> j)) throw InvalidArgument("malformed edge list line: " + line);
    edges.emplace_back(i, j);
  }
  return Graph(m, std::move(edges), kind);
}

void write_mixing_csv(std::ostream& out, const MixingMatrix& w) {
  const RealMatrix& m = w.weights();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << fmt::format("{:.16e}", m(i, j));
    }
    out << '\n';
  }
}

}  // namespace netlasso
