#include "provsyn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"

namespace provsyn {

using nlohmann::json;

void SamplerConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "sampler: " + m); };
  if (!(restart_prob >= 0.0 && restart_prob < 1.0)) fail("restart_prob must be in [0,1)");
  if (iterations == 0) fail("iterations must be positive");
  if (min_nodes == 0 || max_nodes == 0 || min_edges == 0 || max_edges == 0) fail("bounds must be positive");
  if (min_nodes > max_nodes) fail("min_nodes > max_nodes");
  if (min_edges > max_edges) fail("min_edges > max_edges");
  if (!(walk_factor > 0.0)) fail("walk_factor must be positive");
}

json to_json(const SamplerConfig& c) {
  return json{{"restart_prob", c.restart_prob}, {"iterations", c.iterations}, {"min_nodes", c.min_nodes},
              {"max_nodes", c.max_nodes},       {"min_edges", c.min_edges},   {"max_edges", c.max_edges},
              {"walk_factor", c.walk_factor},   {"seed", c.seed}};
}

SamplerConfig sampler_config_from_json(const json& j) {
  SamplerConfig c;
  c.restart_prob = j.value("restart_prob", c.restart_prob);
  c.iterations = j.value("iterations", c.iterations);
  c.min_nodes = j.value("min_nodes", c.min_nodes);
  c.max_nodes = j.value("max_nodes", c.max_nodes);
  c.min_edges = j.value("min_edges", c.min_edges);
  c.max_edges = j.value("max_edges", c.max_edges);
  c.walk_factor = j.value("walk_factor", c.walk_factor);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

UndirectedView::UndirectedView(const ProvenanceGraph& g) : g_(&g), index_(id_index(g)), adj_(g.nodes.size()) {
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto s = index_.at(g.edges[e].src);
    const auto d = index_.at(g.edges[e].dst);
    adj_[s].emplace_back(d, e);
    if (s != d) adj_[d].emplace_back(s, e);
  }
}

std::optional<std::size_t> UndirectedView::index_of(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<SampledSubgraph> sample_subgraph(const UndirectedView& view, NodeId start, const SamplerConfig& cfg,
                                               Rng& rng, WalkStats* stats) {
  const auto start_idx = view.index_of(start);
  if (!start_idx || view.degree(*start_idx) == 0) return std::nullopt;
  const auto& g = view.graph();

  std::vector<std::size_t> order{*start_idx};  // local id -> original index
  std::unordered_map<std::size_t, std::size_t> local{{*start_idx, 0}};
  struct LocalEdge {
    std::size_t a, b, edge;
  };
  std::vector<LocalEdge> edges;
  std::set<std::pair<std::size_t, std::size_t>> seen_pairs;

  std::size_t current = *start_idx;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const double r = uniform01(rng);
    if (stats) ++stats->steps;
    if (r < cfg.restart_prob) {
      if (stats) ++stats->restarts;
      current = *start_idx;
    } else {
      const auto& nbrs = view.neighbors(current);
      const auto [next, edge_idx] = nbrs[uniform_index(rng, nbrs.size())];
      auto [it, fresh] = local.try_emplace(next, order.size());
      if (fresh) order.push_back(next);
      auto pair = std::minmax(local.at(current), it->second);
      // The sample is a simple graph: the first traversal of a pair fixes its label.
      if (seen_pairs.insert(pair).second) edges.push_back(LocalEdge{pair.first, pair.second, edge_idx});
      current = next;
    }
    if (order.size() >= cfg.max_nodes) break;
    if (edges.size() >= cfg.max_edges) break;
  }

  std::erase_if(edges, [](const LocalEdge& e) { return e.a == e.b; });

  SampledSubgraph out;
  out.origin_node = start;
  out.graph.directed = false;
  out.graph.manifest_id = g.manifest_id;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& n = g.nodes[order[i]];
    out.graph.nodes.push_back(Node{static_cast<NodeId>(i), n.type, n.name});
    out.node_map.push_back(n.id);
  }
  for (const auto& e : edges)
    out.graph.edges.push_back(Edge{static_cast<NodeId>(e.a), static_cast<NodeId>(e.b), g.edges[e.edge].type});

  const std::size_t n = out.graph.nodes.size();
  const std::size_t m = out.graph.edges.size();
  if (count_components(out.graph) != 1 || n < cfg.min_nodes || n > cfg.max_nodes || m < cfg.min_edges ||
      m > cfg.max_edges)
    return std::nullopt;
  return out;
}

std::optional<SampledSubgraph> sample_subgraph(const ProvenanceGraph& g, NodeId start, const SamplerConfig& cfg,
                                               Rng& rng, WalkStats* stats) {
  return sample_subgraph(UndirectedView(g), start, cfg, rng, stats);
}

namespace {

std::vector<SampledSubgraph> corpus_pass(const UndirectedView& view, const SamplerConfig& cfg, std::uint64_t pass_seed,
                                         std::size_t workers) {
  struct Task {
    std::size_t node;
    std::size_t walk;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto d = view.degree(i);
    if (d == 0) continue;
    const auto walks = static_cast<std::size_t>(std::ceil(cfg.walk_factor * std::sqrt(static_cast<double>(d))));
    for (std::size_t w = 0; w < walks; ++w) tasks.push_back({i, w});
  }
  const auto& nodes = view.graph().nodes;
  std::stable_sort(tasks.begin(), tasks.end(),
                   [&](const Task& a, const Task& b) { return nodes[a.node].id < nodes[b.node].id; });
  std::vector<std::optional<SampledSubgraph>> results(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t k) {
    const NodeId id = nodes[tasks[k].node].id;
    Rng rng(derive_seed(pass_seed, static_cast<std::uint64_t>(id), tasks[k].walk));
    results[k] = sample_subgraph(view, id, cfg, rng);
  });
  std::vector<SampledSubgraph> out;
  for (auto& r : results)
    if (r) out.push_back(std::move(*r));
  return out;
}

}  // namespace

std::vector<SampledSubgraph> build_corpus(const ProvenanceGraph& g, const SamplerConfig& cfg, std::size_t workers) {
  cfg.validate();
  const UndirectedView view(g);
  return corpus_pass(view, cfg, cfg.seed, workers);
}

std::vector<SampledSubgraph> build_corpus_until(const ProvenanceGraph& g, const SamplerConfig& cfg, std::size_t target,
                                                std::size_t max_passes, std::size_t workers) {
  cfg.validate();
  const UndirectedView view(g);
  std::vector<SampledSubgraph> out;
  for (std::size_t pass = 0; pass < max_passes && out.size() < target; ++pass) {
    const std::uint64_t seed = pass == 0 ? cfg.seed : derive_seed(cfg.seed, 0x5eed, pass);
    auto batch = corpus_pass(view, cfg, seed, workers);
    if (batch.empty()) break;
    for (auto& s : batch) {
      if (out.size() == target) break;
      out.push_back(std::move(s));
    }
  }
  return out;
}

json subgraph_to_json(const SampledSubgraph& s) {
  json j = graph_to_json(s.graph);
  j["origin"] = s.origin_node;
  j["node_map"] = s.node_map;
  return j;
}

SampledSubgraph subgraph_from_json(const json& j, const std::string& where) {
  SampledSubgraph s;
  s.graph = graph_from_json(j, where);
  s.origin_node = j.value("origin", NodeId{0});
  if (j.contains("node_map")) s.node_map = j["node_map"].get<std::vector<NodeId>>();
  return s;
}

void write_corpus(std::span<const SampledSubgraph> corpus, const std::string& path) {
  JsonlWriter w;
  for (const auto& s : corpus) w.add(subgraph_to_json(s));
  w.write(path);
}

std::vector<SampledSubgraph> read_corpus(const std::string& path) {
  std::vector<SampledSubgraph> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) { out.push_back(subgraph_from_json(j, where)); });
  return out;
}

}  // namespace provsyn
