#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "provsyn/graph.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

struct SamplerConfig {
  double restart_prob = 0.15;
  std::size_t iterations = 200;
  std::size_t min_nodes = 4;
  std::size_t max_nodes = 48;
  std::size_t min_edges = 3;
  std::size_t max_edges = 64;
  double walk_factor = 1.0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

/// A sampled training subgraph: undirected, ids 0..n-1 in visit order.
struct SampledSubgraph {
  ProvenanceGraph graph;
  NodeId origin_node = 0;
  /// node_map[i] is the original id of subgraph node i.
  std::vector<NodeId> node_map;
};

struct WalkStats {
  std::size_t steps = 0;
  std::size_t restarts = 0;
};

/// Undirected adjacency over a provenance graph. Each directed edge is
/// traversable both ways; parallel edges appear once per record.
class UndirectedView {
 public:
  explicit UndirectedView(const ProvenanceGraph& g);

  const ProvenanceGraph& graph() const noexcept { return *g_; }
  std::size_t size() const noexcept { return adj_.size(); }
  /// (neighbor index, edge index) pairs of node index i.
  const std::vector<std::pair<std::size_t, std::size_t>>& neighbors(std::size_t i) const { return adj_[i]; }
  std::size_t degree(std::size_t i) const { return adj_[i].size(); }
  std::optional<std::size_t> index_of(NodeId id) const;

 private:
  const ProvenanceGraph* g_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj_;
};

/// Restart-based random walk from `start`. Returns nullopt when the start has
/// no neighbors or the result is disconnected or outside the configured bounds.
std::optional<SampledSubgraph> sample_subgraph(const UndirectedView& view, NodeId start, const SamplerConfig& cfg,
                                               Rng& rng, WalkStats* stats = nullptr);

std::optional<SampledSubgraph> sample_subgraph(const ProvenanceGraph& g, NodeId start, const SamplerConfig& cfg,
                                               Rng& rng, WalkStats* stats = nullptr);

/// Runs ceil(walk_factor * sqrt(degree)) walks from every node with degree >= 1.
/// Each walk draws from its own seed derived from (cfg.seed, node, walk), so
/// the output is identical for any worker count.
std::vector<SampledSubgraph> build_corpus(const ProvenanceGraph& g, const SamplerConfig& cfg,
                                          std::size_t workers = 1);

/// Repeats corpus passes (with fresh derived seeds) until `target` subgraphs
/// are collected or `max_passes` passes have run; the result is truncated to
/// `target`.
std::vector<SampledSubgraph> build_corpus_until(const ProvenanceGraph& g, const SamplerConfig& cfg,
                                                std::size_t target, std::size_t max_passes = 1000,
                                                std::size_t workers = 1);

nlohmann::json subgraph_to_json(const SampledSubgraph& s);
SampledSubgraph subgraph_from_json(const nlohmann::json& j, const std::string& where = "subgraph");
void write_corpus(std::span<const SampledSubgraph> corpus, const std::string& path);
std::vector<SampledSubgraph> read_corpus(const std::string& path);

}  // namespace provsyn
