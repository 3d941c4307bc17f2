#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "provsyn/dfs_code.hpp"
#include "provsyn/graph.hpp"
#include "provsyn/util.hpp"

namespace provsyn::testing {

/// Builds a graph with ids 0..n-1 from node types and (src, dst, type) triples.
ProvenanceGraph make_graph(bool directed, const std::vector<std::string>& node_types,
                           const std::vector<std::tuple<int, int, std::string>>& edges,
                           const std::string& manifest = "test");

/// Connected simple undirected graph: random spanning tree plus extra edges.
/// Labels are drawn from n0..n{node_labels-1} and e0..e{edge_labels-1}.
ProvenanceGraph random_connected_graph(Rng& rng, int n, int extra_edges, int node_labels, int edge_labels);

/// Directed multigraph with random names; may contain parallel edges and self-loops.
ProvenanceGraph random_multigraph(Rng& rng, int n, int m, int node_labels, int edge_labels);

/// Same graph with shuffled node order, shuffled edge order and fresh random ids.
ProvenanceGraph permuted(const ProvenanceGraph& g, Rng& rng);

/// Label-preserving isomorphism by backtracking (types only; names ignored).
bool brute_isomorphic(const ProvenanceGraph& a, const ProvenanceGraph& b);

/// Minimum over every complete rightmost-extension code, compared with an
/// order written out independently of the library.
DFSCode brute_min_code(const ProvenanceGraph& g);

/// Number of weakly connected components by union-find.
std::size_t union_find_components(const ProvenanceGraph& g);

}  // namespace provsyn::testing

namespace provsyn::testing {

/// Fresh path under a per-process scratch directory.
std::string temp_path(const std::string& name);

}  // namespace provsyn::testing

namespace provsyn::testing {

/// Fully named toy graph with one deterministic rule: process names
/// ("proc_*") write to file paths and connect to addresses, nothing else.
/// Every corruption of an edge breaks the rule when names are clustered
/// into three groups.
ProvenanceGraph separable_semantic_graph(Rng& rng, int processes, int files, int sockets, int edges);

}  // namespace provsyn::testing

namespace provsyn::testing {

/// Label-preserving subgraph monomorphism by trying every injective node map;
/// edge multiplicities of the pattern must fit into the target.
bool brute_subgraph(const ProvenanceGraph& pattern, const ProvenanceGraph& target);

}  // namespace provsyn::testing
