#include "provsyn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

ProvenanceGraph parse_events(std::span<const EventRecord> records, const DatasetManifest& manifest) {
  ProvenanceGraph g;
  g.directed = true;
  g.manifest_id = manifest.name;

  // Two nodes with the same name but different types stay distinct.
  std::unordered_map<std::string, NodeId> table;
  auto intern = [&](const NodeType& type, const std::string& name) {
    std::string key = type.value;
    key.push_back('\0');
    key += md5_hex(name);
    auto [it, inserted] = table.try_emplace(std::move(key), static_cast<NodeId>(g.nodes.size()));
    if (inserted) g.nodes.push_back(Node{it->second, type, name});
    return it->second;
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "event " + std::to_string(i);
    if (r.src_name.empty() || r.dst_name.empty()) throw Error(ErrorCode::EmptyName, where + ": blank node name");
    if (r.src_type.empty() || r.dst_type.empty() || r.edge_type.empty())
      throw Error(ErrorCode::UnknownType, where + ": blank type field");
    if (!manifest.has(r.src_type)) throw Error(ErrorCode::UnknownType, where + ": node type '" + r.src_type.value + "'");
    if (!manifest.has(r.dst_type)) throw Error(ErrorCode::UnknownType, where + ": node type '" + r.dst_type.value + "'");
    if (!manifest.has(r.edge_type)) throw Error(ErrorCode::UnknownType, where + ": edge type '" + r.edge_type.value + "'");
    const NodeId s = intern(r.src_type, r.src_name);
    const NodeId d = intern(r.dst_type, r.dst_name);
    g.edges.push_back(Edge{s, d, r.edge_type});
  }
  return g;
}

ProvenanceGraph merge_as_communities(const ProvenanceGraph& base, std::span<const ProvenanceGraph> synthetic) {
  ProvenanceGraph out = base;
  NodeId next = 0;
  for (const auto& n : base.nodes) next = std::max(next, n.id + 1);
  for (std::size_t k = 0; k < synthetic.size(); ++k) {
    const auto& s = synthetic[k];
    if (s.manifest_id != base.manifest_id)
      throw Error(ErrorCode::ManifestMismatch, "synthetic graph " + std::to_string(k) + " uses manifest '" +
                                                   s.manifest_id + "', base uses '" + base.manifest_id + "'");
    if (s.directed != base.directed)
      throw Error(ErrorCode::ManifestMismatch, "synthetic graph " + std::to_string(k) + " differs in directedness");
    std::unordered_map<NodeId, NodeId> fresh;
    for (const auto& n : s.nodes) {
      fresh[n.id] = next;
      out.nodes.push_back(Node{next, n.type, n.name});
      ++next;
    }
    for (const auto& e : s.edges) out.edges.push_back(Edge{fresh.at(e.src), fresh.at(e.dst), e.type});
  }
  return out;
}

void validate_graph(const ProvenanceGraph& g) {
  std::unordered_set<NodeId> ids;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.id < 0) throw Error(ErrorCode::MalformedFile, "nodes[" + std::to_string(i) + "].id is negative");
    if (!ids.insert(n.id).second)
      throw Error(ErrorCode::MalformedFile, "nodes[" + std::to_string(i) + "].id duplicates id " + std::to_string(n.id));
    if (n.type.empty()) throw Error(ErrorCode::MalformedFile, "nodes[" + std::to_string(i) + "].type is empty");
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    const std::string field = "edges[" + std::to_string(i) + "]";
    if (!ids.contains(e.src)) throw Error(ErrorCode::MalformedFile, field + ".src references unknown node");
    if (!ids.contains(e.dst)) throw Error(ErrorCode::MalformedFile, field + ".dst references unknown node");
    if (e.type.empty()) throw Error(ErrorCode::MalformedFile, field + ".type is empty");
    if (!g.directed && e.src > e.dst)
      throw Error(ErrorCode::MalformedFile, field + " undirected edge must be stored with src <= dst");
  }
}

void validate_against(const ProvenanceGraph& g, const DatasetManifest& manifest) {
  for (const auto& n : g.nodes)
    if (!manifest.has(n.type)) throw Error(ErrorCode::UnknownType, "node type '" + n.type.value + "'");
  for (const auto& e : g.edges)
    if (!manifest.has(e.type)) throw Error(ErrorCode::UnknownType, "edge type '" + e.type.value + "'");
}

std::unordered_map<NodeId, std::size_t> id_index(const ProvenanceGraph& g) {
  std::unordered_map<NodeId, std::size_t> idx;
  idx.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) idx.emplace(g.nodes[i].id, i);
  return idx;
}

ProvenanceGraph relabel_consecutive(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  ProvenanceGraph out;
  out.directed = g.directed;
  out.manifest_id = g.manifest_id;
  out.nodes.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    out.nodes.push_back(Node{static_cast<NodeId>(i), g.nodes[i].type, g.nodes[i].name});
  out.edges.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    auto s = static_cast<NodeId>(idx.at(e.src));
    auto d = static_cast<NodeId>(idx.at(e.dst));
    if (!g.directed && s > d) std::swap(s, d);
    out.edges.push_back(Edge{s, d, e.type});
  }
  return out;
}

std::size_t count_components(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  std::vector<std::size_t> parent(g.nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = g.nodes.size();
  for (const auto& e : g.edges) {
    auto a = find(idx.at(e.src));
    auto b = find(idx.at(e.dst));
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components;
}

bool is_fully_named(const ProvenanceGraph& g) {
  return std::none_of(g.nodes.begin(), g.nodes.end(),
                      [](const Node& n) { return n.name.empty() || n.name == kNullName; });
}

// ---------------------------------------------------------------------------

json graph_to_json(const ProvenanceGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"type", n.type.value}, {"name", n.name}});
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", e.type.value}});
  return json{{"manifest", g.manifest_id}, {"directed", g.directed}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedFile, where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::MalformedFile, where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_string()) throw Error(ErrorCode::MalformedFile, where + "." + key + ": expected a string");
  return v.get<std::string>();
}

NodeId require_id(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_number_integer()) throw Error(ErrorCode::MalformedFile, where + "." + key + ": expected an integer");
  return v.get<NodeId>();
}

template <class Fn>
void for_each_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, lineno);
  }
}

}  // namespace

ProvenanceGraph graph_from_json(const json& j, const std::string& where) {
  ProvenanceGraph g;
  g.manifest_id = require_string(j, "manifest", where);
  const auto& directed = require(j, "directed", where);
  if (!directed.is_boolean()) throw Error(ErrorCode::MalformedFile, where + ".directed: expected a boolean");
  g.directed = directed.get<bool>();
  const auto& nodes = require(j, "nodes", where);
  if (!nodes.is_array()) throw Error(ErrorCode::MalformedFile, where + ".nodes: expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string w = where + ".nodes[" + std::to_string(i) + "]";
    g.nodes.push_back(Node{require_id(nodes[i], "id", w), NodeType(require_string(nodes[i], "type", w)),
                           require_string(nodes[i], "name", w)});
  }
  const auto& edges = require(j, "edges", where);
  if (!edges.is_array()) throw Error(ErrorCode::MalformedFile, where + ".edges: expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string w = where + ".edges[" + std::to_string(i) + "]";
    g.edges.push_back(Edge{require_id(edges[i], "src", w), require_id(edges[i], "dst", w),
                           EdgeType(require_string(edges[i], "type", w))});
  }
  try {
    validate_graph(g);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedFile, where + ": " + e.what());
  }
  return g;
}

void write_graph(const ProvenanceGraph& g, const std::string& path) {
  write_text_file(path, graph_to_json(g).dump(1) + "\n");
}

ProvenanceGraph read_graph(const std::string& path) {
  return graph_from_json(parse_json_text(read_text_file(path), path), path);
}

void write_graphs_jsonl(std::span<const ProvenanceGraph> graphs, const std::string& path) {
  std::string out;
  for (const auto& g : graphs) {
    out += graph_to_json(g).dump();
    out.push_back('\n');
  }
  write_text_file(path, out);
}

std::vector<ProvenanceGraph> read_graphs_jsonl(const std::string& path) {
  std::vector<ProvenanceGraph> graphs;
  for_each_jsonl(path, [&](const json& j, const std::string& where) { graphs.push_back(graph_from_json(j, where)); });
  return graphs;
}

std::vector<ProvenanceGraph> read_graph_set(const std::string& path) {
  const std::string text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  // A single pretty-printed graph spans many lines; JSON Lines has one object per line.
  try {
    auto j = json::parse(text);
    if (j.is_object()) return {graph_from_json(j, path)};
  } catch (const json::parse_error&) {
  }
  return read_graphs_jsonl(path);
}

json manifest_to_json(const DatasetManifest& m) {
  json nt = json::array(), et = json::array();
  for (const auto& t : m.node_types) nt.push_back(t.value);
  for (const auto& t : m.edge_types) et.push_back(t.value);
  return json{{"name", m.name}, {"node_types", nt}, {"edge_types", et}};
}

DatasetManifest manifest_from_json(const json& j, const std::string& where) {
  DatasetManifest m;
  m.name = require_string(j, "name", where);
  auto read_set = [&](const char* key, auto& out) {
    const auto& arr = require(j, key, where);
    if (!arr.is_array() || arr.empty())
      throw Error(ErrorCode::MalformedFile, where + "." + key + ": expected a non-empty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_string() || arr[i].get<std::string>().empty())
        throw Error(ErrorCode::MalformedFile, where + "." + key + "[" + std::to_string(i) + "]: expected a token");
      if (!out.emplace(arr[i].get<std::string>()).second)
        throw Error(ErrorCode::MalformedFile, where + "." + key + ": duplicate token '" + arr[i].get<std::string>() + "'");
    }
  };
  read_set("node_types", m.node_types);
  read_set("edge_types", m.edge_types);
  return m;
}

DatasetManifest read_manifest(const std::string& path) {
  return manifest_from_json(parse_json_text(read_text_file(path), path), path);
}

std::vector<EventRecord> read_events(const std::string& path) {
  std::vector<EventRecord> records;
  enum class Format { Unknown, Jsonl, Tsv } format = Format::Unknown;
  for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    const std::string where = path + ":" + std::to_string(lineno);
    if (format == Format::Unknown)
      format = line[line.find_first_not_of(" \t")] == '{' ? Format::Jsonl : Format::Tsv;
    if (format == Format::Jsonl) {
      const json j = parse_json_text(line, where);
      records.push_back(EventRecord{NodeType(require_string(j, "src_type", where)), require_string(j, "src_name", where),
                                    NodeType(require_string(j, "dst_type", where)), require_string(j, "dst_name", where),
                                    EdgeType(require_string(j, "edge_type", where))});
    } else {
      std::vector<std::string> cols;
      std::size_t start = 0;
      for (;;) {
        auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (cols.size() != 5)
        throw Error(ErrorCode::MalformedFile, where + ": expected 5 tab-separated columns, got " + std::to_string(cols.size()));
      records.push_back(EventRecord{NodeType(cols[0]), cols[1], NodeType(cols[2]), cols[3], EdgeType(cols[4])});
    }
  });
  return records;
}

ExtractionConfig extraction_config_from_json(const json& j) {
  ExtractionConfig cfg;
  static constexpr const char* kFields[5] = {"src_type", "src_name", "dst_type", "dst_name", "edge_type"};
  for (std::size_t f = 0; f < 5; ++f) {
    if (j.contains("keys") && j["keys"].contains(kFields[f])) cfg.keys[f] = j["keys"][kFields[f]].get<std::string>();
    if (j.contains("patterns") && j["patterns"].contains(kFields[f]))
      cfg.patterns[f] = j["patterns"][kFields[f]].get<std::string>();
  }
  return cfg;
}

std::vector<EventRecord> extract_events(const std::string& path, const ExtractionConfig& config, std::size_t* skipped) {
  std::array<std::optional<std::regex>, 5> regexes;
  for (std::size_t f = 0; f < 5; ++f) {
    if (config.patterns[f].empty()) continue;
    try {
      regexes[f].emplace(config.patterns[f]);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::InvalidConfig, "bad pattern for field " + std::to_string(f) + ": " + e.what());
    }
  }
  std::vector<EventRecord> records;
  std::size_t dropped = 0;
  for_each_line(path, [&](const std::string& line, std::size_t) {
    std::array<std::string, 5> fields;
    bool ok = true;
    if (line[line.find_first_not_of(" \t")] == '{') {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        ok = false;
      }
      for (std::size_t f = 0; ok && f < 5; ++f) {
        auto it = j.find(config.keys[f]);
        if (it == j.end() || !it->is_primitive()) {
          ok = false;
        } else {
          fields[f] = it->is_string() ? it->get<std::string>() : it->dump();
        }
      }
    } else {
      for (std::size_t f = 0; ok && f < 5; ++f) {
        std::smatch m;
        if (!regexes[f] || !std::regex_search(line, m, *regexes[f]) || m.size() < 2) {
          ok = false;
        } else {
          fields[f] = m[1].str();
        }
      }
    }
    if (!ok || std::any_of(fields.begin(), fields.end(), [](const std::string& s) { return s.empty(); })) {
      ++dropped;
      return;
    }
    records.push_back(EventRecord{NodeType(fields[0]), fields[1], NodeType(fields[2]), fields[3], EdgeType(fields[4])});
  });
  if (skipped) *skipped = dropped;
  return records;
}

}  // namespace provsyn
