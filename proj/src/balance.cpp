#include "provsyn/balance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "provsyn/dfs_code.hpp"
#include "provsyn/error.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

double entropy(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (const double c : counts)
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  return h;
}

double gini(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (const double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

BalanceReport label_balance(const ProvenanceGraph& g) {
  std::map<std::string, double> nodes, edges;
  for (const auto& n : g.nodes) nodes[n.type.str()] += 1.0;
  for (const auto& e : g.edges) edges[e.type.str()] += 1.0;
  auto values = [](const std::map<std::string, double>& m) {
    std::vector<double> v;
    for (const auto& [k, c] : m) v.push_back(c);
    return v;
  };
  BalanceReport r;
  r.node_entropy = entropy(values(nodes));
  r.node_gini = gini(values(nodes));
  r.edge_entropy = entropy(values(edges));
  r.edge_gini = gini(values(edges));
  r.node_classes = nodes.size();
  r.edge_classes = edges.size();
  return r;
}

json to_json(const BalanceReport& r) {
  return json{{"node_entropy", r.node_entropy}, {"node_gini", r.node_gini},       {"edge_entropy", r.edge_entropy},
              {"edge_gini", r.edge_gini},       {"node_classes", r.node_classes}, {"edge_classes", r.edge_classes}};
}

namespace {

/// Dense view: node labels as ints, edge multiplicities per (u, v, label).
struct MatchGraph {
  int n = 0;
  std::vector<int> label;
  std::map<std::tuple<int, int, int>, int> mult;
  std::vector<std::vector<int>> nbrs;  // either direction, unique
  std::vector<int> out_deg, in_deg;
};

struct LabelTable {
  std::map<std::string, int> nodes, edges;
  int node(const std::string& s) { return nodes.try_emplace(s, static_cast<int>(nodes.size())).first->second; }
  int edge(const std::string& s) { return edges.try_emplace(s, static_cast<int>(edges.size())).first->second; }
};

MatchGraph to_match_graph(const ProvenanceGraph& g, LabelTable& labels) {
  MatchGraph m;
  const auto idx = id_index(g);
  m.n = static_cast<int>(g.nodes.size());
  for (const auto& v : g.nodes) m.label.push_back(labels.node(v.type.str()));
  m.nbrs.resize(m.n);
  m.out_deg.assign(m.n, 0);
  m.in_deg.assign(m.n, 0);
  for (const auto& e : g.edges) {
    const int a = static_cast<int>(idx.at(e.src)), b = static_cast<int>(idx.at(e.dst));
    const int l = labels.edge(e.type.str());
    ++m.mult[{a, b, l}];
    ++m.out_deg[a];
    ++m.in_deg[b];
    if (!g.directed && a != b) {
      ++m.mult[{b, a, l}];
      ++m.out_deg[b];
      ++m.in_deg[a];
    }
    m.nbrs[a].push_back(b);
    m.nbrs[b].push_back(a);
  }
  for (auto& l : m.nbrs) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return m;
}

class Matcher {
 public:
  Matcher(const MatchGraph& p, const MatchGraph& t, const MatchBudget& b) : p_(p), t_(t), budget_(b) {
    p_edges_.resize(p_.n);
    for (const auto& [key, c] : p_.mult) {
      const auto [a, bb, l] = key;
      p_edges_[a].push_back({bb, l, c, false});
      if (a != bb) p_edges_[bb].push_back({a, l, c, true});
    }
    // Connected-first order, highest degree first within a component.
    std::vector<char> placed(p_.n, 0);
    for (int k = 0; k < p_.n; ++k) {
      int best = -1, best_links = -1, best_deg = -1;
      for (int v = 0; v < p_.n; ++v) {
        if (placed[v]) continue;
        int links = 0;
        for (int w : p_.nbrs[v]) links += placed[w];
        const int deg = p_.out_deg[v] + p_.in_deg[v];
        if (links > best_links || (links == best_links && deg > best_deg)) {
          best = v;
          best_links = links;
          best_deg = deg;
        }
      }
      placed[best] = 1;
      order_.push_back(best);
    }
    map_.assign(p_.n, -1);
    used_.assign(t_.n, 0);
    start_ = std::chrono::steady_clock::now();
  }

  MatchResult run() {
    const bool ok = extend(0);
    if (ok) return MatchResult::Found;
    return out_of_budget_ ? MatchResult::BudgetExceeded : MatchResult::NotFound;
  }

 private:
  struct PEdge {
    int other, label, count;
    bool incoming;
  };

  bool feasible(int v, int x) const {
    if (p_.label[v] != t_.label[x]) return false;
    if (p_.out_deg[v] > t_.out_deg[x] || p_.in_deg[v] > t_.in_deg[x]) return false;
    for (const auto& e : p_edges_[v]) {
      const int y = e.other == v ? x : map_[e.other];
      if (y < 0) continue;
      const auto key = e.incoming ? std::make_tuple(y, x, e.label) : std::make_tuple(x, y, e.label);
      auto it = t_.mult.find(key);
      if (it == t_.mult.end() || it->second < e.count) return false;
    }
    return true;
  }

  bool extend(std::size_t k) {
    if (k == order_.size()) return true;
    if (++states_ > budget_.max_states ||
        (budget_.max_ms > 0.0 && (states_ & 255) == 0 &&
         std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count() > budget_.max_ms)) {
      out_of_budget_ = true;
      return false;
    }
    const int v = order_[k];
    // Candidates: neighbours of an already mapped neighbour, else everything.
    int anchor = -1;
    for (int w : p_.nbrs[v])
      if (map_[w] >= 0) {
        anchor = map_[w];
        break;
      }
    auto try_x = [&](int x) {
      if (used_[x] || !feasible(v, x)) return false;
      map_[v] = x;
      used_[x] = 1;
      if (extend(k + 1)) return true;
      map_[v] = -1;
      used_[x] = 0;
      return false;
    };
    if (anchor >= 0) {
      for (int x : t_.nbrs[anchor]) {
        if (try_x(x)) return true;
        if (out_of_budget_) return false;
      }
    } else {
      for (int x = 0; x < t_.n; ++x) {
        if (try_x(x)) return true;
        if (out_of_budget_) return false;
      }
    }
    return false;
  }

  const MatchGraph& p_;
  const MatchGraph& t_;
  MatchBudget budget_;
  std::vector<std::vector<PEdge>> p_edges_;
  std::vector<int> order_, map_;
  std::vector<char> used_;
  std::uint64_t states_ = 0;
  bool out_of_budget_ = false;
  std::chrono::steady_clock::time_point start_;
};

bool label_counts_fit(const MatchGraph& p, const MatchGraph& t) {
  if (p.n > t.n) return false;
  std::map<int, int> lp, lt;
  for (int l : p.label) ++lp[l];
  for (int l : t.label) ++lt[l];
  for (const auto& [l, c] : lp)
    if (lt[l] < c) return false;
  std::map<int, int> ep, et;
  for (const auto& [k, c] : p.mult) ep[std::get<2>(k)] += c;
  for (const auto& [k, c] : t.mult) et[std::get<2>(k)] += c;
  for (const auto& [l, c] : ep)
    if (et[l] < c) return false;
  return true;
}

MatchResult match(const MatchGraph& p, const MatchGraph& t, const MatchBudget& b) {
  if (!label_counts_fit(p, t)) return MatchResult::NotFound;
  if (p.n == 0) return MatchResult::Found;
  return Matcher(p, t, b).run();
}

}  // namespace

MatchResult subgraph_match(const ProvenanceGraph& pattern, const ProvenanceGraph& target, const MatchBudget& budget) {
  LabelTable labels;
  const auto p = to_match_graph(pattern, labels);
  const auto t = to_match_graph(target, labels);
  return match(p, t, budget);
}

MatchResult isomorphic(const ProvenanceGraph& a, const ProvenanceGraph& b, const MatchBudget& budget) {
  LabelTable labels;
  const auto p = to_match_graph(a, labels);
  const auto t = to_match_graph(b, labels);
  auto total = [](const MatchGraph& g) {
    int s = 0;
    for (const auto& [k, c] : g.mult) s += c;
    return s;
  };
  if (p.n != t.n || total(p) != total(t)) return MatchResult::NotFound;
  return match(p, t, budget);
}

DiversityReport diversity(const std::vector<ProvenanceGraph>& gen, const std::vector<ProvenanceGraph>& train,
                          const MatchBudget& budget, std::size_t workers) {
  if (gen.empty() || train.empty()) throw Error(ErrorCode::EmptySet, "diversity needs generated and training graphs");
  LabelTable labels;
  std::vector<MatchGraph> g, t;
  for (const auto& x : gen) g.push_back(to_match_graph(x, labels));
  for (const auto& x : train) t.push_back(to_match_graph(x, labels));

  std::vector<char> novel(gen.size(), 0);
  std::vector<std::size_t> exceeded(gen.size(), 0);
  parallel_for(gen.size(), workers, [&](std::size_t i) {
    bool related = false;
    for (std::size_t j = 0; j < t.size() && !related; ++j)
      for (const auto& r : {match(g[i], t[j], budget), match(t[j], g[i], budget)}) {
        if (r == MatchResult::BudgetExceeded) ++exceeded[i];
        if (r != MatchResult::NotFound) related = true;
      }
    novel[i] = !related;
  });

  DiversityReport rep;
  rep.generated = gen.size();
  rep.novel = static_cast<std::size_t>(std::count(novel.begin(), novel.end(), 1));
  rep.budget_exceeded = std::accumulate(exceeded.begin(), exceeded.end(), std::size_t{0});
  std::vector<std::string> certs(gen.size());
  parallel_for(gen.size(), workers, [&](std::size_t i) { certs[i] = canonical_certificate(gen[i]); });
  rep.unique = std::set<std::string>(certs.begin(), certs.end()).size();
  const double n = static_cast<double>(gen.size());
  rep.novelty_pct = 100.0 * static_cast<double>(rep.novel) / n;
  rep.uniqueness_pct = 100.0 * static_cast<double>(rep.unique) / n;
  return rep;
}

json to_json(const DiversityReport& r) {
  return json{{"novelty_pct", r.novelty_pct}, {"uniqueness_pct", r.uniqueness_pct},
              {"generated", r.generated},     {"novel", r.novel},
              {"unique", r.unique},           {"budget_exceeded", r.budget_exceeded}};
}

}  // namespace provsyn
