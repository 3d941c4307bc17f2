#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace provsyn {

/// A type token declared by a dataset manifest. The tag keeps node and edge
/// types from being mixed up at compile time.
template <class Tag>
struct Token {
  std::string value;

  Token() = default;
  explicit Token(std::string v) : value(std::move(v)) {}

  const std::string& str() const noexcept { return value; }
  bool empty() const noexcept { return value.empty(); }

  friend auto operator<=>(const Token&, const Token&) = default;
  friend bool operator==(const Token&, const Token&) = default;
  friend bool operator==(const Token& t, std::string_view s) { return t.value == s; }
};

struct NodeTypeTag {};
struct EdgeTypeTag {};
using NodeType = Token<NodeTypeTag>;
using EdgeType = Token<EdgeTypeTag>;

using NodeId = std::int64_t;

/// Placeholder name carried by skeleton nodes before name synthesis.
inline constexpr std::string_view kNullName = "[null]";

struct Node {
  NodeId id = 0;
  NodeType type;
  std::string name;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeType type;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed (or undirected) labeled multigraph. Undirected graphs store each
/// edge once with src <= dst.
struct ProvenanceGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  bool directed = true;
  std::string manifest_id;

  friend bool operator==(const ProvenanceGraph&, const ProvenanceGraph&) = default;
};

struct DatasetManifest {
  std::string name;
  std::set<NodeType> node_types;
  std::set<EdgeType> edge_types;

  bool has(const NodeType& t) const { return node_types.contains(t); }
  bool has(const EdgeType& t) const { return edge_types.contains(t); }
};

struct EventRecord {
  NodeType src_type;
  std::string src_name;
  NodeType dst_type;
  std::string dst_name;
  EdgeType edge_type;
};

// ---------------------------------------------------------------------------
// Construction and transformation

/// Builds the real provenance graph. Nodes are deduplicated on
/// (node type, MD5(name)); every record becomes one edge, in input order.
ProvenanceGraph parse_events(std::span<const EventRecord> records,
                             const DatasetManifest& manifest);

/// Disjoint union: synthetic graphs are appended with fresh node ids and no
/// edges are added between components.
ProvenanceGraph merge_as_communities(const ProvenanceGraph& base,
                                     std::span<const ProvenanceGraph> synthetic);

/// Checks structural invariants (unique ids, resolvable endpoints, undirected
/// edges stored as src <= dst). Throws MalformedFile describing the first
/// violation.
void validate_graph(const ProvenanceGraph& g);

/// Throws UnknownType if any node or edge type is absent from the manifest.
void validate_against(const ProvenanceGraph& g, const DatasetManifest& manifest);

/// Returns a copy whose node ids are 0..n-1 in node order.
ProvenanceGraph relabel_consecutive(const ProvenanceGraph& g);

std::unordered_map<NodeId, std::size_t> id_index(const ProvenanceGraph& g);

/// Number of weakly connected components (isolated nodes count as one each).
std::size_t count_components(const ProvenanceGraph& g);

bool is_fully_named(const ProvenanceGraph& g);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json graph_to_json(const ProvenanceGraph& g);
/// `where` prefixes error messages (e.g. "corpus.jsonl:12").
ProvenanceGraph graph_from_json(const nlohmann::json& j, const std::string& where = "graph");

void write_graph(const ProvenanceGraph& g, const std::string& path);
ProvenanceGraph read_graph(const std::string& path);

void write_graphs_jsonl(std::span<const ProvenanceGraph> graphs, const std::string& path);
std::vector<ProvenanceGraph> read_graphs_jsonl(const std::string& path);

/// Reads either a single graph file or a JSON Lines file of graphs.
std::vector<ProvenanceGraph> read_graph_set(const std::string& path);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::string& where = "manifest");
DatasetManifest read_manifest(const std::string& path);

/// Reads JSON Lines or tab-separated event records (five columns:
/// src_type, src_name, dst_type, dst_name, edge_type). The format is chosen
/// from the first non-blank line.
std::vector<EventRecord> read_events(const std::string& path);

/// Field mapping for key-value logs that do not use the normalized event keys.
/// Fields are ordered src_type, src_name, dst_type, dst_name, edge_type.
struct ExtractionConfig {
  std::array<std::string, 5> keys{"src_type", "src_name", "dst_type", "dst_name", "edge_type"};
  /// ECMAScript regex with one capture group per field; used for lines that
  /// are not JSON objects. Empty means the field cannot be extracted from text.
  std::array<std::string, 5> patterns;
};

ExtractionConfig extraction_config_from_json(const nlohmann::json& j);

/// Lines where a field cannot be found are skipped and counted in `skipped`.
std::vector<EventRecord> extract_events(const std::string& path, const ExtractionConfig& config,
                                        std::size_t* skipped = nullptr);

}  // namespace provsyn

template <class Tag>
struct std::hash<provsyn::Token<Tag>> {
  std::size_t operator()(const provsyn::Token<Tag>& t) const noexcept {
    return std::hash<std::string>{}(t.value);
  }
};
