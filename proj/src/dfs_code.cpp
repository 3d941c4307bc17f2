#include "provsyn/dfs_code.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

namespace {

// Integer-labelled graph for the search. el(u, v) is the label of the edge as
// seen from u (directed encodings may differ per side); -1 means no edge.
struct LGraph {
  int n = 0;
  std::vector<int> vl;
  std::vector<int> el;
  std::vector<std::vector<int>> adj;

  int edge(int u, int v) const { return el[static_cast<std::size_t>(u) * n + v]; }
};

struct ITuple {
  int i, j, lu, le, lv;
  bool operator==(const ITuple&) const = default;
};

bool ituple_less(const ITuple& a, const ITuple& b) {
  if (a.i == b.i && a.j == b.j) return std::tie(a.lu, a.le, a.lv) < std::tie(b.lu, b.le, b.lv);
  const bool af = a.i < a.j;
  const bool bf = b.i < b.j;
  if (af && bf) return a.j < b.j || (a.j == b.j && a.i > b.i);
  if (!af && !bf) return a.i < b.i || (a.i == b.i && a.j < b.j);
  if (!af && bf) return a.i < b.j;
  return a.j <= b.i;
}

// twin[v][w]: swapping v and w is a label-preserving automorphism.
std::vector<std::vector<char>> find_twins(const LGraph& g) {
  std::vector<std::vector<char>> twin(g.n, std::vector<char>(g.n, 0));
  for (int v = 0; v < g.n; ++v) {
    for (int w = v + 1; w < g.n; ++w) {
      if (g.vl[v] != g.vl[w] || g.adj[v].size() != g.adj[w].size()) continue;
      if (g.edge(v, w) != g.edge(w, v)) continue;
      bool same = true;
      for (int x : g.adj[v]) {
        if (x == w) continue;
        if (g.edge(v, x) != g.edge(w, x) || g.edge(x, v) != g.edge(x, w)) {
          same = false;
          break;
        }
      }
      if (same) twin[v][w] = twin[w][v] = 1;
    }
  }
  return twin;
}

struct Embedding {
  std::vector<int> ts2v;
  std::vector<int> v2ts;
  std::vector<int> rmpath;  // timestamps root..rightmost
  int last_bwd = -1;        // last backward target emitted from the rightmost vertex
};

// Best extension of one embedding, or nullopt when it has none.
std::optional<ITuple> best_extension(const LGraph& g, const Embedding& e) {
  const int r = e.rmpath.back();
  const int rv = e.ts2v[r];
  const int parent = e.rmpath.size() >= 2 ? e.rmpath[e.rmpath.size() - 2] : -1;
  for (int j : e.rmpath) {
    if (j == r || j == parent || j <= e.last_bwd) continue;
    const int le = g.edge(rv, e.ts2v[j]);
    if (le >= 0) return ITuple{r, j, g.vl[rv], le, g.vl[e.ts2v[j]]};
  }
  const int next = static_cast<int>(e.ts2v.size());
  for (auto p = e.rmpath.rbegin(); p != e.rmpath.rend(); ++p) {
    const int u = e.ts2v[*p];
    std::optional<ITuple> best;
    for (int v : g.adj[u]) {
      if (e.v2ts[v] >= 0) continue;
      ITuple t{*p, next, g.vl[u], g.edge(u, v), g.vl[v]};
      if (!best || ituple_less(t, *best)) best = t;
    }
    if (best) return best;
  }
  return std::nullopt;
}

std::vector<std::uint64_t> state_key(const Embedding& e, int n) {
  std::vector<std::uint64_t> key;
  key.reserve(e.rmpath.size() + 2 + n / 64);
  for (int t : e.rmpath) key.push_back(static_cast<std::uint64_t>(e.ts2v[t]));
  key.push_back(~0ULL);
  key.push_back(static_cast<std::uint64_t>(e.last_bwd + 1));
  std::vector<std::uint64_t> bits((n + 63) / 64, 0);
  for (int v : e.ts2v) bits[v / 64] |= 1ULL << (v % 64);
  key.insert(key.end(), bits.begin(), bits.end());
  return key;
}

std::vector<ITuple> min_code_engine(const LGraph& g) {
  std::vector<ITuple> code;
  if (g.n == 0) return code;
  const auto twin = find_twins(g);
  auto has_smaller_twin = [&](int v, auto&& eligible) {
    for (int w = 0; w < v; ++w)
      if (twin[v][w] && eligible(w)) return true;
    return false;
  };

  // First edge.
  std::optional<ITuple> first;
  for (int u = 0; u < g.n; ++u)
    for (int v : g.adj[u]) {
      ITuple t{0, 1, g.vl[u], g.edge(u, v), g.vl[v]};
      if (!first || ituple_less(t, *first)) first = t;
    }
  if (!first) return code;
  code.push_back(*first);

  std::vector<Embedding> current;
  std::set<std::vector<std::uint64_t>> seen;
  for (int u = 0; u < g.n; ++u) {
    if (g.vl[u] != first->lu) continue;
    if (has_smaller_twin(u, [](int) { return true; })) continue;
    for (int v : g.adj[u]) {
      if (g.edge(u, v) != first->le || g.vl[v] != first->lv) continue;
      if (has_smaller_twin(v, [&](int w) { return w != u && g.edge(u, w) == first->le; })) continue;
      Embedding e;
      e.ts2v = {u, v};
      e.v2ts.assign(g.n, -1);
      e.v2ts[u] = 0;
      e.v2ts[v] = 1;
      e.rmpath = {0, 1};
      if (seen.insert(state_key(e, g.n)).second) current.push_back(std::move(e));
    }
  }

  while (true) {
    std::optional<ITuple> best;
    for (const auto& e : current) {
      auto t = best_extension(g, e);
      if (t && (!best || ituple_less(*t, *best))) best = t;
    }
    if (!best) break;
    code.push_back(*best);

    std::vector<Embedding> next;
    seen.clear();
    for (const auto& e : current) {
      if (best->i > best->j) {
        const int rv = e.ts2v[best->i];
        if (e.rmpath.back() != best->i || best->j <= e.last_bwd) continue;
        const int tv = e.ts2v[best->j];
        if (g.edge(rv, tv) != best->le || g.vl[tv] != best->lv) continue;
        // Earlier targets of this embedding must not offer a smaller backward edge.
        if (auto own = best_extension(g, e); !own || !(*own == *best)) continue;
        Embedding c = e;
        c.last_bwd = best->j;
        if (seen.insert(state_key(c, g.n)).second) next.push_back(std::move(c));
        continue;
      }
      if (auto own = best_extension(g, e); !own || !(*own == *best)) continue;
      const int u = e.ts2v[best->i];
      for (int v : g.adj[u]) {
        if (e.v2ts[v] >= 0 || g.edge(u, v) != best->le || g.vl[v] != best->lv) continue;
        if (has_smaller_twin(v, [&](int w) { return e.v2ts[w] < 0 && g.edge(u, w) == best->le; })) continue;
        Embedding c = e;
        c.v2ts[v] = static_cast<int>(c.ts2v.size());
        c.ts2v.push_back(v);
        while (c.rmpath.back() != best->i) c.rmpath.pop_back();
        c.rmpath.push_back(best->j);
        c.last_bwd = -1;
        if (seen.insert(state_key(c, g.n)).second) next.push_back(std::move(c));
      }
    }
    current = std::move(next);
  }
  return code;
}

template <class T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

template <class T>
int rank_of(const std::vector<T>& sorted, const T& x) {
  return static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}

}  // namespace

bool tuple_less(const EdgeTuple& a, const EdgeTuple& b) {
  if (a.tu == b.tu && a.tv == b.tv) return std::tie(a.lu, a.le, a.lv) < std::tie(b.lu, b.le, b.lv);
  // Label ranks do not matter once (i, j) differ.
  return ituple_less(ITuple{a.tu, a.tv, 0, 0, 0}, ITuple{b.tu, b.tv, 0, 0, 0});
}

bool code_less(const DFSCode& a, const DFSCode& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), tuple_less);
}

DFSCode min_dfs_code(const ProvenanceGraph& g, std::size_t cap) {
  if (g.nodes.size() > cap)
    throw Error(ErrorCode::TooLarge,
                std::to_string(g.nodes.size()) + " nodes exceeds codec cap " + std::to_string(cap));
  if (count_components(g) != 1) throw Error(ErrorCode::Disconnected, "graph must be connected");
  const auto index = id_index(g);
  const int n = static_cast<int>(g.nodes.size());

  std::vector<NodeType> node_labels;
  for (const auto& v : g.nodes) node_labels.push_back(v.type);
  node_labels = sorted_unique(std::move(node_labels));
  std::vector<EdgeType> edge_labels;
  for (const auto& e : g.edges) edge_labels.push_back(e.type);
  edge_labels = sorted_unique(std::move(edge_labels));

  LGraph lg;
  lg.n = n;
  lg.adj.resize(n);
  lg.el.assign(static_cast<std::size_t>(n) * n, -1);
  for (const auto& v : g.nodes) lg.vl.push_back(rank_of(node_labels, v.type));
  for (const auto& e : g.edges) {
    const int s = static_cast<int>(index.at(e.src));
    const int d = static_cast<int>(index.at(e.dst));
    if (s == d) throw Error(ErrorCode::SelfLoop, "self-loop on node " + std::to_string(e.src));
    if (lg.edge(s, d) >= 0)
      throw Error(ErrorCode::MalformedFile,
                  "parallel edges between " + std::to_string(e.src) + " and " + std::to_string(e.dst));
    const int l = rank_of(edge_labels, e.type);
    lg.el[static_cast<std::size_t>(s) * n + d] = l;
    lg.el[static_cast<std::size_t>(d) * n + s] = l;
    lg.adj[s].push_back(d);
    lg.adj[d].push_back(s);
  }
  for (auto& a : lg.adj) std::sort(a.begin(), a.end());

  DFSCode out;
  for (const auto& t : min_code_engine(lg))
    out.push_back(EdgeTuple{t.i, t.j, node_labels[t.lu], edge_labels[t.le], node_labels[t.lv]});
  return out;
}

ProvenanceGraph decode(const DFSCode& code, const std::string& manifest_id) {
  ProvenanceGraph g;
  g.directed = false;
  g.manifest_id = manifest_id;
  std::set<std::pair<int, int>> pairs;
  auto place = [&](int t, const NodeType& label, std::size_t k) {
    if (t < 0) throw Error(ErrorCode::InvalidCode, "tuple " + std::to_string(k) + ": negative timestamp");
    if (static_cast<std::size_t>(t) < g.nodes.size()) {
      if (g.nodes[t].type != label)
        throw Error(ErrorCode::InvalidCode, "tuple " + std::to_string(k) + ": conflicting label for timestamp " +
                                                std::to_string(t));
      return;
    }
    if (static_cast<std::size_t>(t) != g.nodes.size())
      throw Error(ErrorCode::InvalidCode, "tuple " + std::to_string(k) + ": timestamp gap at " + std::to_string(t));
    g.nodes.push_back(Node{t, label, std::string(kNullName)});
  };
  for (std::size_t k = 0; k < code.size(); ++k) {
    const auto& t = code[k];
    if (t.tu == t.tv) throw Error(ErrorCode::InvalidCode, "tuple " + std::to_string(k) + ": self-loop");
    if (t.tu < t.tv) {
      place(t.tu, t.lu, k);
      place(t.tv, t.lv, k);
    } else {
      place(t.tv, t.lv, k);
      place(t.tu, t.lu, k);
    }
    const auto p = std::minmax(t.tu, t.tv);
    if (!pairs.insert(p).second)
      throw Error(ErrorCode::InvalidCode, "tuple " + std::to_string(k) + ": repeated edge");
    g.edges.push_back(Edge{p.first, p.second, t.le});
  }
  return g;
}

bool is_valid_code(const DFSCode& code, std::string* why) {
  auto fail = [&](std::size_t k, const std::string& m) {
    if (why) *why = "tuple " + std::to_string(k) + ": " + m;
    return false;
  };
  if (code.empty()) return true;
  if (code[0].tu != 0 || code[0].tv != 1) return fail(0, "first tuple must be (0,1)");
  std::vector<NodeType> labels{code[0].lu, code[0].lv};
  std::vector<int> rmpath{0, 1};
  std::set<std::pair<int, int>> pairs{{0, 1}};
  for (std::size_t k = 1; k < code.size(); ++k) {
    const auto& t = code[k];
    const int r = rmpath.back();
    if (t.forward()) {
      if (t.tv != static_cast<int>(labels.size())) return fail(k, "forward edge must introduce the next timestamp");
      if (std::find(rmpath.begin(), rmpath.end(), t.tu) == rmpath.end()) return fail(k, "forward edge off the rightmost path");
      if (labels[t.tu] != t.lu) return fail(k, "conflicting label");
      labels.push_back(t.lv);
      while (rmpath.back() != t.tu) rmpath.pop_back();
      rmpath.push_back(t.tv);
    } else {
      if (t.tu == t.tv) return fail(k, "self-loop");
      if (t.tu != r) return fail(k, "backward edge must leave the rightmost vertex");
      if (std::find(rmpath.begin(), rmpath.end(), t.tv) == rmpath.end()) return fail(k, "backward edge off the rightmost path");
      if (labels[t.tu] != t.lu || labels[t.tv] != t.lv) return fail(k, "conflicting label");
    }
    if (!pairs.insert(std::minmax(t.tu, t.tv)).second) return fail(k, "repeated edge");
  }
  return true;
}

std::string canonical_certificate(const ProvenanceGraph& g) {
  const auto index = id_index(g);
  const int n = static_cast<int>(g.nodes.size());

  std::vector<std::vector<std::string>> loops(n);
  std::map<std::pair<int, int>, std::vector<std::string>> out_types;  // (u, v) -> types of u->v edges
  std::vector<std::vector<int>> nbrs(n);
  for (const auto& e : g.edges) {
    const int s = static_cast<int>(index.at(e.src));
    const int d = static_cast<int>(index.at(e.dst));
    if (s == d) {
      loops[s].push_back(e.type.str());
      continue;
    }
    out_types[{s, d}].push_back(e.type.str());
    if (!g.directed) out_types[{d, s}].push_back(e.type.str());
    nbrs[s].push_back(d);
    nbrs[d].push_back(s);
  }
  for (auto& l : loops) std::sort(l.begin(), l.end());
  for (auto& [k, v] : out_types) std::sort(v.begin(), v.end());
  for (auto& a : nbrs) a = sorted_unique(std::move(a));

  std::vector<std::string> vstr(n);
  for (int v = 0; v < n; ++v) vstr[v] = json::array({g.nodes[v].type.str(), loops[v]}).dump();
  auto pair_label = [&](int u, int v) {
    auto find = [&](int a, int b) {
      auto it = out_types.find({a, b});
      return it == out_types.end() ? std::vector<std::string>{} : it->second;
    };
    return json::array({find(u, v), find(v, u)}).dump();
  };

  // Component-wise codes over the direction-aware labels.
  std::vector<int> comp(n, -1);
  std::vector<std::string> parts;
  for (int root = 0; root < n; ++root) {
    if (comp[root] >= 0) continue;
    std::vector<int> members{root};
    comp[root] = root;
    for (std::size_t k = 0; k < members.size(); ++k)
      for (int w : nbrs[members[k]])
        if (comp[w] < 0) {
          comp[w] = root;
          members.push_back(w);
        }
    std::sort(members.begin(), members.end());
    const int m = static_cast<int>(members.size());
    if (m == 1) {
      parts.push_back("v" + vstr[root]);
      continue;
    }
    std::vector<std::string> vls, els;
    for (int v : members) vls.push_back(vstr[v]);
    vls = sorted_unique(std::move(vls));
    std::map<std::pair<int, int>, std::string> pl;
    for (int a = 0; a < m; ++a)
      for (int b : nbrs[members[a]]) {
        pl[{a, rank_of(members, b)}] = pair_label(members[a], b);
        els.push_back(pl[{a, rank_of(members, b)}]);
      }
    els = sorted_unique(std::move(els));
    LGraph lg;
    lg.n = m;
    lg.adj.resize(m);
    lg.el.assign(static_cast<std::size_t>(m) * m, -1);
    for (int v : members) lg.vl.push_back(rank_of(vls, vstr[v]));
    for (const auto& [ab, s] : pl) {
      lg.el[static_cast<std::size_t>(ab.first) * m + ab.second] = rank_of(els, s);
      lg.adj[ab.first].push_back(ab.second);
    }
    json code = json::array();
    for (const auto& t : min_code_engine(lg)) code.push_back(json::array({t.i, t.j, vls[t.lu], els[t.le], vls[t.lv]}));
    parts.push_back("c" + code.dump());
  }
  std::sort(parts.begin(), parts.end());
  std::string text;
  for (const auto& p : parts) {
    text += p;
    text.push_back('\n');
  }
  return sha256_hex(text);
}

json code_to_json(const DFSCode& code) {
  json j = json::array();
  for (const auto& t : code) j.push_back(json::array({t.tu, t.tv, t.lu.str(), t.le.str(), t.lv.str()}));
  return j;
}

DFSCode code_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedFile, where + ": code must be an array");
  DFSCode code;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& t = j[k];
    if (!t.is_array() || t.size() != 5 || !t[0].is_number_integer() || !t[1].is_number_integer() ||
        !t[2].is_string() || !t[3].is_string() || !t[4].is_string())
      throw Error(ErrorCode::MalformedFile, where + ": tuple " + std::to_string(k) + " must be [int,int,str,str,str]");
    code.push_back(EdgeTuple{t[0].get<int>(), t[1].get<int>(), NodeType(t[2].get<std::string>()),
                             EdgeType(t[3].get<std::string>()), NodeType(t[4].get<std::string>())});
  }
  return code;
}

void write_codes(const std::vector<DFSCode>& codes, const std::string& path) {
  JsonlWriter w;
  for (const auto& c : codes) w.add(code_to_json(c));
  w.write(path);
}

std::vector<DFSCode> read_codes(const std::string& path) {
  std::vector<DFSCode> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) { out.push_back(code_from_json(j, where)); });
  return out;
}

}  // namespace provsyn
