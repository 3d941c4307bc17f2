#include "generators.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>

namespace provsyn::testing {

ProvenanceGraph make_graph(bool directed, const std::vector<std::string>& node_types,
                           const std::vector<std::tuple<int, int, std::string>>& edges, const std::string& manifest) {
  ProvenanceGraph g;
  g.directed = directed;
  g.manifest_id = manifest;
  for (std::size_t i = 0; i < node_types.size(); ++i)
    g.nodes.push_back(Node{static_cast<NodeId>(i), NodeType(node_types[i]), "node" + std::to_string(i)});
  for (const auto& [s, d, t] : edges) {
    int a = s, b = d;
    if (!directed && a > b) std::swap(a, b);
    g.edges.push_back(Edge{a, b, EdgeType(t)});
  }
  return g;
}

ProvenanceGraph random_connected_graph(Rng& rng, int n, int extra_edges, int node_labels, int edge_labels) {
  ProvenanceGraph g;
  g.directed = false;
  g.manifest_id = "test";
  for (int i = 0; i < n; ++i)
    g.nodes.push_back(Node{i, NodeType("n" + std::to_string(uniform_index(rng, node_labels))), "v" + std::to_string(i)});
  std::set<std::pair<int, int>> pairs;
  auto add = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    if (a == b || !pairs.insert({a, b}).second) return;
    g.edges.push_back(Edge{a, b, EdgeType("e" + std::to_string(uniform_index(rng, edge_labels)))});
  };
  for (int i = 1; i < n; ++i) add(uniform_index(rng, i), i);
  const int max_edges = n * (n - 1) / 2;
  for (int k = 0; k < extra_edges && static_cast<int>(pairs.size()) < max_edges; ++k)
    add(uniform_index(rng, n), uniform_index(rng, n));
  return g;
}

ProvenanceGraph random_multigraph(Rng& rng, int n, int m, int node_labels, int edge_labels) {
  ProvenanceGraph g;
  g.directed = true;
  g.manifest_id = "test";
  for (int i = 0; i < n; ++i)
    g.nodes.push_back(Node{i, NodeType("n" + std::to_string(uniform_index(rng, node_labels))),
                           "name" + std::to_string(uniform_index(rng, 1000))});
  for (int k = 0; k < m; ++k)
    g.edges.push_back(Edge{uniform_index(rng, n), uniform_index(rng, n),
                           EdgeType("e" + std::to_string(uniform_index(rng, edge_labels)))});
  return g;
}

ProvenanceGraph permuted(const ProvenanceGraph& g, Rng& rng) {
  std::vector<NodeId> ids(g.nodes.size());
  std::iota(ids.begin(), ids.end(), 0);
  for (auto& id : ids) id = id * 7 + 3;
  std::shuffle(ids.begin(), ids.end(), rng);
  std::map<NodeId, NodeId> remap;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) remap[g.nodes[i].id] = ids[i];
  ProvenanceGraph out = g;
  for (auto& v : out.nodes) v.id = remap.at(v.id);
  for (auto& e : out.edges) {
    e.src = remap.at(e.src);
    e.dst = remap.at(e.dst);
    if (!out.directed && e.src > e.dst) std::swap(e.src, e.dst);
  }
  std::shuffle(out.nodes.begin(), out.nodes.end(), rng);
  std::shuffle(out.edges.begin(), out.edges.end(), rng);
  return out;
}

namespace {

struct Indexed {
  std::vector<std::string> type;
  std::map<std::pair<int, int>, std::vector<std::string>> pair;  // (u, v) -> sorted edge types u->v
  std::vector<std::string> signature;
};

Indexed index_graph(const ProvenanceGraph& g) {
  Indexed x;
  std::map<NodeId, int> idx;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    idx[g.nodes[i].id] = static_cast<int>(i);
    x.type.push_back(g.nodes[i].type.str());
  }
  std::vector<std::vector<std::string>> sig(g.nodes.size());
  for (const auto& e : g.edges) {
    int s = idx.at(e.src), d = idx.at(e.dst);
    x.pair[{s, d}].push_back(e.type.str());
    if (!g.directed && s != d) x.pair[{d, s}].push_back(e.type.str());
    sig[s].push_back((g.directed ? "o" : "u") + e.type.str());
    sig[d].push_back((g.directed ? "i" : "u") + e.type.str());
  }
  for (auto& [k, v] : x.pair) std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i < sig.size(); ++i) {
    std::sort(sig[i].begin(), sig[i].end());
    std::string s = x.type[i] + "|";
    for (const auto& t : sig[i]) s += t + ",";
    x.signature.push_back(s);
  }
  return x;
}

const std::vector<std::string>& pair_types(const Indexed& x, int u, int v) {
  static const std::vector<std::string> kEmpty;
  auto it = x.pair.find({u, v});
  return it == x.pair.end() ? kEmpty : it->second;
}

bool extend(const Indexed& a, const Indexed& b, std::vector<int>& map, std::vector<char>& used, std::size_t k) {
  const int n = static_cast<int>(a.type.size());
  if (static_cast<int>(k) == n) return true;
  for (int c = 0; c < n; ++c) {
    if (used[c] || a.signature[k] != b.signature[c]) continue;
    bool ok = pair_types(a, k, k) == pair_types(b, c, c);
    for (std::size_t p = 0; ok && p < k; ++p)
      ok = pair_types(a, k, p) == pair_types(b, c, map[p]) && pair_types(a, p, k) == pair_types(b, map[p], c);
    if (!ok) continue;
    map[k] = c;
    used[c] = 1;
    if (extend(a, b, map, used, k + 1)) return true;
    used[c] = 0;
  }
  return false;
}

// Label order: token strings. Edge order: gSpan rules, written out directly.
bool oracle_less(const EdgeTuple& a, const EdgeTuple& b) {
  const bool af = a.tu < a.tv, bf = b.tu < b.tv;
  if (a.tu != b.tu || a.tv != b.tv) {
    if (af && bf) return a.tv < b.tv || (a.tv == b.tv && a.tu > b.tu);
    if (!af && !bf) return a.tu < b.tu || (a.tu == b.tu && a.tv < b.tv);
    if (!af && bf) return a.tu < b.tv;
    return a.tv <= b.tu;
  }
  if (a.lu.str() != b.lu.str()) return a.lu.str() < b.lu.str();
  if (a.le.str() != b.le.str()) return a.le.str() < b.le.str();
  return a.lv.str() < b.lv.str();
}

bool oracle_code_less(const DFSCode& a, const DFSCode& b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (oracle_less(a[i], b[i])) return true;
    if (oracle_less(b[i], a[i])) return false;
  }
  return a.size() < b.size();
}

struct BruteState {
  const ProvenanceGraph* g;
  std::vector<std::vector<std::pair<int, std::string>>> adj;
  std::vector<int> ts2v, v2ts, rmpath;
  std::set<std::pair<int, int>> used;
  DFSCode code;
  std::optional<DFSCode> best;
};

void brute_rec(BruteState& s) {
  if (s.used.size() == s.g->edges.size()) {
    if (!s.best || oracle_code_less(s.code, *s.best)) s.best = s.code;
    return;
  }
  const int r = s.rmpath.back();
  const int rv = s.ts2v[r];
  // Backward edges from the rightmost vertex.
  for (const auto& [w, t] : s.adj[rv]) {
    const int tw = s.v2ts[w];
    if (tw < 0 || s.used.count(std::minmax(rv, w))) continue;
    if (std::find(s.rmpath.begin(), s.rmpath.end(), tw) == s.rmpath.end()) continue;
    s.used.insert(std::minmax(rv, w));
    s.code.push_back(EdgeTuple{r, tw, s.g->nodes[rv].type, EdgeType(t), s.g->nodes[w].type});
    brute_rec(s);
    s.code.pop_back();
    s.used.erase(std::minmax(rv, w));
  }
  // Forward edges from any rightmost-path vertex.
  const auto saved_rmpath = s.rmpath;
  for (std::size_t p = 0; p < saved_rmpath.size(); ++p) {
    const int tu = saved_rmpath[p];
    const int u = s.ts2v[tu];
    for (const auto& [w, t] : s.adj[u]) {
      if (s.v2ts[w] >= 0) continue;
      const int tw = static_cast<int>(s.ts2v.size());
      s.ts2v.push_back(w);
      s.v2ts[w] = tw;
      s.rmpath.assign(saved_rmpath.begin(), saved_rmpath.begin() + p + 1);
      s.rmpath.push_back(tw);
      s.used.insert(std::minmax(u, w));
      s.code.push_back(EdgeTuple{tu, tw, s.g->nodes[u].type, EdgeType(t), s.g->nodes[w].type});
      brute_rec(s);
      s.code.pop_back();
      s.used.erase(std::minmax(u, w));
      s.v2ts[w] = -1;
      s.ts2v.pop_back();
    }
  }
  s.rmpath = saved_rmpath;
}

}  // namespace

bool brute_isomorphic(const ProvenanceGraph& a, const ProvenanceGraph& b) {
  if (a.directed != b.directed || a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
  const auto xa = index_graph(a);
  const auto xb = index_graph(b);
  auto sa = xa.signature, sb = xb.signature;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb) return false;
  std::vector<int> map(a.nodes.size(), -1);
  std::vector<char> used(a.nodes.size(), 0);
  return extend(xa, xb, map, used, 0);
}

DFSCode brute_min_code(const ProvenanceGraph& g) {
  BruteState s;
  s.g = &g;
  s.adj.resize(g.nodes.size());
  std::map<NodeId, int> idx;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) idx[g.nodes[i].id] = static_cast<int>(i);
  for (const auto& e : g.edges) {
    const int a = idx.at(e.src), b = idx.at(e.dst);
    s.adj[a].push_back({b, e.type.str()});
    s.adj[b].push_back({a, e.type.str()});
  }
  s.v2ts.assign(g.nodes.size(), -1);
  for (std::size_t u = 0; u < g.nodes.size(); ++u)
    for (const auto& [w, t] : s.adj[u]) {
      s.ts2v = {static_cast<int>(u), w};
      s.v2ts[u] = 0;
      s.v2ts[w] = 1;
      s.rmpath = {0, 1};
      s.used = {std::minmax(static_cast<int>(u), w)};
      s.code = {EdgeTuple{0, 1, g.nodes[u].type, EdgeType(t), g.nodes[w].type}};
      brute_rec(s);
      s.v2ts[u] = -1;
      s.v2ts[w] = -1;
    }
  return s.best.value_or(DFSCode{});
}

std::size_t union_find_components(const ProvenanceGraph& g) {
  std::map<NodeId, NodeId> parent;
  for (const auto& v : g.nodes) parent[v.id] = v.id;
  auto find = [&](NodeId x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) parent[find(e.src)] = find(e.dst);
  std::set<NodeId> roots;
  for (const auto& v : g.nodes) roots.insert(find(v.id));
  return roots.size();
}

}  // namespace provsyn::testing

#include <filesystem>
#include <unistd.h>

namespace provsyn::testing {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("provsyn_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace provsyn::testing

namespace provsyn::testing {

ProvenanceGraph separable_semantic_graph(Rng& rng, int processes, int files, int sockets, int edges) {
  static const char* kProgs[] = {"bash", "sshd", "nginx", "python", "cron", "vim", "curl", "gcc"};
  static const char* kDirs[] = {"etc", "var", "home", "tmp", "usr"};
  ProvenanceGraph g;
  g.directed = true;
  g.manifest_id = "toy";
  NodeId id = 0;
  for (int i = 0; i < processes; ++i)
    g.nodes.push_back(Node{id++, NodeType("process"), "proc_" + std::string(kProgs[i % 8]) + std::to_string(i)});
  for (int i = 0; i < files; ++i)
    g.nodes.push_back(Node{id++, NodeType("file"),
                           "/" + std::string(kDirs[i % 5]) + "/data/file" + std::to_string(i) + ".log"});
  for (int i = 0; i < sockets; ++i)
    g.nodes.push_back(Node{id++, NodeType("network"),
                           "10.0." + std::to_string(i / 250) + "." + std::to_string(i % 250 + 1) + ":443"});
  for (int k = 0; k < edges; ++k) {
    const auto p = static_cast<NodeId>(uniform_index(rng, static_cast<std::size_t>(processes)));
    if (uniform01(rng) < 0.7) {
      const auto f = static_cast<NodeId>(processes + uniform_index(rng, static_cast<std::size_t>(files)));
      g.edges.push_back(Edge{p, f, EdgeType("write")});
    } else {
      const auto s = static_cast<NodeId>(processes + files + uniform_index(rng, static_cast<std::size_t>(sockets)));
      g.edges.push_back(Edge{p, s, EdgeType("connect")});
    }
  }
  return g;
}

}  // namespace provsyn::testing

namespace provsyn::testing {

bool brute_subgraph(const ProvenanceGraph& p, const ProvenanceGraph& t) {
  const std::size_t k = p.nodes.size(), n = t.nodes.size();
  if (k > n) return false;
  const auto pi = id_index(p), ti = id_index(t);
  auto edge_counts = [](const ProvenanceGraph& g, const std::unordered_map<NodeId, std::size_t>& idx) {
    std::map<std::tuple<std::size_t, std::size_t, std::string>, int> m;
    for (const auto& e : g.edges) {
      const auto a = idx.at(e.src), b = idx.at(e.dst);
      ++m[{a, b, e.type.str()}];
      if (!g.directed && a != b) ++m[{b, a, e.type.str()}];
    }
    return m;
  };
  const auto pe = edge_counts(p, pi), te = edge_counts(t, ti);
  std::vector<std::size_t> target(n);
  std::iota(target.begin(), target.end(), 0);
  std::vector<std::size_t> map(k);
  std::vector<char> used(n, 0);
  std::function<bool(std::size_t)> rec = [&](std::size_t i) {
    if (i == k) {
      for (const auto& [key, c] : pe) {
        const auto& [a, b, l] = key;
        auto it = te.find({map[a], map[b], l});
        if (it == te.end() || it->second < c) return false;
      }
      return true;
    }
    for (std::size_t x = 0; x < n; ++x) {
      if (used[x] || t.nodes[x].type != p.nodes[i].type) continue;
      used[x] = 1;
      map[i] = x;
      if (rec(i + 1)) return true;
      used[x] = 0;
    }
    return false;
  };
  return rec(0);
}

}  // namespace provsyn::testing
