#include "provsyn/refiner.hpp"

#include <unordered_set>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

bool Rule::allows(const NodeType& src, const EdgeType& e, const NodeType& dst) const {
  if (!selects(e)) return true;
  return allowed_types.contains(kind == RuleKind::SourceTypeMustBe ? src : dst);
}

bool RuleSet::allows(const NodeType& src, const EdgeType& e, const NodeType& dst) const {
  for (const auto& r : rules)
    if (!r.allows(src, e, dst)) return false;
  return true;
}

json rules_to_json(const RuleSet& rs) {
  json rules = json::array();
  for (const auto& r : rs.rules) {
    json edges = json::array(), allowed = json::array();
    for (const auto& t : r.edge_types) edges.push_back(t.str());
    for (const auto& t : r.allowed_types) allowed.push_back(t.str());
    json j{{"kind", r.kind == RuleKind::SourceTypeMustBe ? "source_type_must_be" : "target_type_must_be"},
           {r.complement ? "not_edge_types" : "edge_types", edges},
           {"allowed_types", allowed}};
    if (!r.description.empty()) j["description"] = r.description;
    rules.push_back(std::move(j));
  }
  return json{{"manifest", rs.manifest_id}, {"rules", rules}};
}

RuleSet rules_from_json(const json& j, const std::string& where) {
  auto bad = [&](const std::string& m) { return Error(ErrorCode::MalformedFile, where + ": " + m); };
  if (!j.is_object() || !j.contains("manifest") || !j["manifest"].is_string()) throw bad("missing string 'manifest'");
  if (!j.contains("rules") || !j["rules"].is_array()) throw bad("missing array 'rules'");
  RuleSet rs;
  rs.manifest_id = j["manifest"].get<std::string>();
  for (std::size_t i = 0; i < j["rules"].size(); ++i) {
    const auto& r = j["rules"][i];
    const std::string w = "rules[" + std::to_string(i) + "]";
    if (!r.is_object()) throw bad(w + " must be an object");
    Rule rule;
    const std::string kind = r.value("kind", "");
    if (kind == "source_type_must_be") {
      rule.kind = RuleKind::SourceTypeMustBe;
    } else if (kind == "target_type_must_be") {
      rule.kind = RuleKind::TargetTypeMustBe;
    } else {
      throw bad(w + ".kind must be source_type_must_be or target_type_must_be");
    }
    const bool has_sel = r.contains("edge_types"), has_not = r.contains("not_edge_types");
    if (has_sel == has_not) throw bad(w + " needs exactly one of edge_types, not_edge_types");
    rule.complement = has_not;
    const auto& sel = has_sel ? r["edge_types"] : r["not_edge_types"];
    if (!sel.is_array()) throw bad(w + " edge selector must be an array");
    for (const auto& t : sel) rule.edge_types.emplace(t.get<std::string>());
    if (!rule.complement && rule.edge_types.empty()) throw bad(w + ".edge_types must be non-empty");
    if (!r.contains("allowed_types") || !r["allowed_types"].is_array() || r["allowed_types"].empty())
      throw bad(w + ".allowed_types must be a non-empty array");
    for (const auto& t : r["allowed_types"]) rule.allowed_types.emplace(t.get<std::string>());
    rule.description = r.value("description", "");
    rs.rules.push_back(std::move(rule));
  }
  return rs;
}

RuleSet read_rules(const std::string& path) { return rules_from_json(read_json_file(path), path); }

void validate_rules(const RuleSet& rs, const DatasetManifest& manifest) {
  if (rs.manifest_id != manifest.name)
    throw Error(ErrorCode::ManifestMismatch,
                "rules target manifest '" + rs.manifest_id + "', not '" + manifest.name + "'");
  for (std::size_t i = 0; i < rs.rules.size(); ++i) {
    const auto& r = rs.rules[i];
    for (const auto& t : r.edge_types)
      if (!manifest.has(t)) throw Error(ErrorCode::UnknownType, "rule " + std::to_string(i) + ": edge type '" + t.str() + "'");
    for (const auto& t : r.allowed_types)
      if (!manifest.has(t)) throw Error(ErrorCode::UnknownType, "rule " + std::to_string(i) + ": node type '" + t.str() + "'");
  }
}

ProvenanceGraph orient(const ProvenanceGraph& g) {
  ProvenanceGraph out;
  out.nodes = g.nodes;
  out.manifest_id = g.manifest_id;
  out.directed = true;
  out.edges.reserve(2 * g.edges.size());
  for (const auto& e : g.edges) {
    out.edges.push_back(Edge{e.src, e.dst, e.type});
    out.edges.push_back(Edge{e.dst, e.src, e.type});
  }
  return out;
}

ProvenanceGraph prune(const ProvenanceGraph& g, const RuleSet& rules) {
  const auto idx = id_index(g);
  ProvenanceGraph out;
  out.directed = g.directed;
  out.manifest_id = g.manifest_id;
  std::unordered_set<NodeId> touched;
  for (const auto& e : g.edges) {
    if (!rules.allows(g.nodes[idx.at(e.src)].type, e.type, g.nodes[idx.at(e.dst)].type)) continue;
    out.edges.push_back(e);
    touched.insert(e.src);
    touched.insert(e.dst);
  }
  for (const auto& n : g.nodes)
    if (touched.contains(n.id)) out.nodes.push_back(n);
  return out;
}

RefineResult refine(const ProvenanceGraph& g, const RuleSet& rules) {
  const auto oriented = orient(g);
  auto pruned = prune(oriented, rules);
  RefineResult res;
  res.removed_edges = oriented.edges.size() - pruned.edges.size();
  res.removed_nodes = oriented.nodes.size() - pruned.nodes.size();
  res.graph = relabel_consecutive(pruned);
  for (auto& n : res.graph.nodes) n.name = std::string(kNullName);
  res.empty = res.graph.nodes.empty();
  return res;
}

std::vector<std::tuple<NodeType, EdgeType, NodeType>> rule_violations(const ProvenanceGraph& g, const RuleSet& rules) {
  const auto idx = id_index(g);
  std::vector<std::tuple<NodeType, EdgeType, NodeType>> out;
  for (const auto& e : g.edges) {
    const auto& s = g.nodes[idx.at(e.src)].type;
    const auto& d = g.nodes[idx.at(e.dst)].type;
    if (!rules.allows(s, e.type, d)) out.emplace_back(s, e.type, d);
  }
  return out;
}

}  // namespace provsyn
