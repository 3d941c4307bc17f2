#pragma once

#include <set>
#include <string>
#include <vector>

#include "provsyn/graph.hpp"

namespace provsyn {

enum class RuleKind { SourceTypeMustBe, TargetTypeMustBe };

/// Edges selected by `edge_types` (or by its complement when `complement` is
/// set) must have their source/target typed from `allowed_types`.
struct Rule {
  RuleKind kind = RuleKind::SourceTypeMustBe;
  std::set<EdgeType> edge_types;
  bool complement = false;
  std::set<NodeType> allowed_types;
  std::string description;

  bool selects(const EdgeType& t) const { return edge_types.contains(t) != complement; }
  bool allows(const NodeType& src, const EdgeType& e, const NodeType& dst) const;
};

struct RuleSet {
  std::string manifest_id;
  std::vector<Rule> rules;

  bool allows(const NodeType& src, const EdgeType& e, const NodeType& dst) const;
};

nlohmann::json rules_to_json(const RuleSet& rs);
RuleSet rules_from_json(const nlohmann::json& j, const std::string& where = "rules");
RuleSet read_rules(const std::string& path);

/// Throws UnknownType when a rule names a type the manifest lacks, and
/// ManifestMismatch when the rule set targets another manifest.
void validate_rules(const RuleSet& rs, const DatasetManifest& manifest);

/// Replaces every undirected edge (u, v) with u->v and v->u of the same type.
ProvenanceGraph orient(const ProvenanceGraph& g);

/// Drops rule-violating edges, then nodes left with degree 0. Node ids are kept.
ProvenanceGraph prune(const ProvenanceGraph& g, const RuleSet& rules);

struct RefineResult {
  ProvenanceGraph graph;
  bool empty = false;  // nothing survived; callers usually resample
  std::size_t removed_edges = 0;
  std::size_t removed_nodes = 0;
};

/// orient + prune, ids relabeled 0..n-1 and every name set to "[null]".
RefineResult refine(const ProvenanceGraph& g, const RuleSet& rules);

/// (src_type, edge_type, dst_type) triples of g that break a rule.
std::vector<std::tuple<NodeType, EdgeType, NodeType>> rule_violations(const ProvenanceGraph& g, const RuleSet& rules);

}  // namespace provsyn
