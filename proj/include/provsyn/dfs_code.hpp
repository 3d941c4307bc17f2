#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "provsyn/graph.hpp"

namespace provsyn {

/// One DFS-code edge token (t_u, t_v, L_u, L_e, L_v). Forward iff t_u < t_v.
struct EdgeTuple {
  int tu = 0;
  int tv = 0;
  NodeType lu;
  EdgeType le;
  NodeType lv;

  bool forward() const noexcept { return tu < tv; }
  friend bool operator==(const EdgeTuple&, const EdgeTuple&) = default;
};

using DFSCode = std::vector<EdgeTuple>;

inline constexpr std::size_t kDefaultCodecCap = 64;

/// gSpan edge order; labels break ties lexicographically on their token strings.
bool tuple_less(const EdgeTuple& a, const EdgeTuple& b);
bool code_less(const DFSCode& a, const DFSCode& b);

/// Minimum DFS code of a connected labeled graph. Edge direction is ignored.
/// Throws Disconnected, TooLarge (more than `cap` nodes), SelfLoop, or
/// MalformedFile for parallel edges.
DFSCode min_dfs_code(const ProvenanceGraph& g, std::size_t cap = kDefaultCodecCap);

/// Rebuilds an undirected graph with node ids equal to timestamps. Node
/// names are set to "[null]". Throws InvalidCode for timestamp gaps,
/// conflicting labels, self-loops, and repeated edges.
ProvenanceGraph decode(const DFSCode& code, const std::string& manifest_id = {});

/// Full gSpan validity: first tuple (0,1), forward edges grow from the
/// rightmost path to a fresh timestamp, backward edges leave the rightmost
/// vertex toward the rightmost path, no repeated edges, consistent labels.
bool is_valid_code(const DFSCode& code, std::string* why = nullptr);

/// Isomorphism-invariant fingerprint of a directed labeled multigraph
/// (node and edge types only; names are ignored). Equal for isomorphic
/// graphs, different otherwise up to hash collisions.
std::string canonical_certificate(const ProvenanceGraph& g);

nlohmann::json code_to_json(const DFSCode& code);
DFSCode code_from_json(const nlohmann::json& j, const std::string& where = "code");
void write_codes(const std::vector<DFSCode>& codes, const std::string& path);
std::vector<DFSCode> read_codes(const std::string& path);

}  // namespace provsyn
