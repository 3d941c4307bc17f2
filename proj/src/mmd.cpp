#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "provsyn/error.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

const char* to_string(MmdMetric m) noexcept {
  switch (m) {
    case MmdMetric::Degree: return "degree";
    case MmdMetric::Orbit: return "orbit";
    case MmdMetric::NodeLabel: return "node_label";
    case MmdMetric::EdgeLabel: return "edge_label";
    case MmdMetric::NodeLabelDegree: return "node_label_degree";
  }
  return "?";
}

MmdMetric mmd_metric_from_string(const std::string& s) {
  for (auto m : kAllMmdMetrics)
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::InvalidConfig, "unknown MMD metric '" + s + "'");
}

MmdConfig default_mmd_config(MmdMetric m) {
  return MmdConfig{m, m == MmdMetric::Orbit ? MmdKernel::EuclideanGaussian : MmdKernel::EmdGaussian, 0.0};
}

namespace {

std::vector<std::int64_t> degrees(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  std::vector<std::int64_t> d(g.nodes.size(), 0);
  for (const auto& e : g.edges) {
    ++d[idx.at(e.src)];
    ++d[idx.at(e.dst)];
  }
  return d;
}

template <class Map>
void normalize(Map& m) {
  double total = 0.0;
  for (const auto& [k, v] : m) total += v;
  if (total > 0.0)
    for (auto& [k, v] : m) v /= total;
}

/// Simple undirected adjacency as sorted index lists.
std::vector<std::vector<std::size_t>> simple_adjacency(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  std::vector<std::set<std::size_t>> s(g.nodes.size());
  for (const auto& e : g.edges) {
    const auto a = idx.at(e.src), b = idx.at(e.dst);
    if (a == b) continue;
    s[a].insert(b);
    s[b].insert(a);
  }
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  for (std::size_t i = 0; i < s.size(); ++i) adj[i].assign(s[i].begin(), s[i].end());
  return adj;
}

}  // namespace

std::vector<std::array<std::uint64_t, 15>> orbit_counts(const ProvenanceGraph& g) {
  const auto adj = simple_adjacency(g);
  const std::size_t n = adj.size();
  std::vector<std::array<std::uint64_t, 15>> out(n);
  for (auto& row : out) row.fill(0);
  auto linked = [&](std::size_t a, std::size_t b) { return std::binary_search(adj[a].begin(), adj[a].end(), b); };

  auto record = [&](const std::vector<std::size_t>& sub) {
    const std::size_t k = sub.size();
    std::array<int, 4> deg{};
    int edges = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        if (linked(sub[i], sub[j])) {
          ++deg[i];
          ++deg[j];
          ++edges;
        }
    for (std::size_t i = 0; i < k; ++i) {
      int orbit = 0;
      if (k == 2) {
        orbit = 0;
      } else if (k == 3) {
        orbit = edges == 3 ? 3 : (deg[i] == 2 ? 2 : 1);
      } else {
        const bool has3 = *std::max_element(deg.begin(), deg.end()) == 3;
        switch (edges) {
          case 3: orbit = has3 ? (deg[i] == 3 ? 7 : 6) : (deg[i] == 1 ? 4 : 5); break;
          case 4: orbit = has3 ? (deg[i] == 1 ? 9 : deg[i] == 2 ? 10 : 11) : 8; break;
          case 5: orbit = deg[i] == 2 ? 12 : 13; break;
          default: orbit = 14; break;
        }
      }
      ++out[sub[i]][orbit];
    }
  };

  // ESU enumeration: every connected node set of size 2..4 is visited once.
  std::vector<std::size_t> sub;
  std::vector<char> in_sub(n, 0);
  auto extend = [&](auto&& self, std::vector<std::size_t> ext, std::size_t root) -> void {
    if (sub.size() >= 2) record(sub);
    if (sub.size() == 4) return;
    while (!ext.empty()) {
      const std::size_t w = ext.back();
      ext.pop_back();
      std::vector<std::size_t> next = ext;
      for (const auto u : adj[w]) {
        if (u <= root || in_sub[u]) continue;
        bool exclusive = std::find(ext.begin(), ext.end(), u) == ext.end();
        for (const auto s : sub)
          if (exclusive && linked(s, u)) exclusive = false;
        if (exclusive && std::find(next.begin(), next.end(), u) == next.end()) next.push_back(u);
      }
      sub.push_back(w);
      in_sub[w] = 1;
      self(self, std::move(next), root);
      sub.pop_back();
      in_sub[w] = 0;
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> ext;
    for (const auto u : adj[v])
      if (u > v) ext.push_back(u);
    sub = {v};
    in_sub[v] = 1;
    extend(extend, std::move(ext), v);
    in_sub[v] = 0;
  }
  return out;
}

Feature extract_feature(const ProvenanceGraph& g, MmdMetric m) {
  Feature f;
  switch (m) {
    case MmdMetric::Degree:
      for (const auto d : degrees(g)) f.ordinal[d] += 1.0;
      normalize(f.ordinal);
      break;
    case MmdMetric::Orbit: {
      f.dense.assign(15, 0.0);
      const auto counts = orbit_counts(g);
      for (const auto& row : counts)
        for (std::size_t k = 0; k < 15; ++k) f.dense[k] += static_cast<double>(row[k]);
      if (!counts.empty())
        for (auto& x : f.dense) x /= static_cast<double>(counts.size());
      break;
    }
    case MmdMetric::NodeLabel:
      for (const auto& n : g.nodes) f.categorical[n.type.str()] += 1.0;
      normalize(f.categorical);
      break;
    case MmdMetric::EdgeLabel:
      for (const auto& e : g.edges) f.categorical[e.type.str()] += 1.0;
      normalize(f.categorical);
      break;
    case MmdMetric::NodeLabelDegree: {
      const auto d = degrees(g);
      for (std::size_t i = 0; i < g.nodes.size(); ++i)
        f.categorical[g.nodes[i].type.str() + "\x1f" + std::to_string(d[i])] += 1.0;
      normalize(f.categorical);
      break;
    }
  }
  return f;
}

double feature_distance(const Feature& a, const Feature& b, MmdKernel kernel) {
  if (!a.dense.empty() || !b.dense.empty()) {
    const std::size_t n = std::max(a.dense.size(), b.dense.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = i < a.dense.size() ? a.dense[i] : 0.0;
      const double y = i < b.dense.size() ? b.dense[i] : 0.0;
      s += (x - y) * (x - y);
    }
    return std::sqrt(s);
  }
  if (!a.ordinal.empty() || !b.ordinal.empty()) {
    std::set<std::int64_t> keys;
    for (const auto& [k, v] : a.ordinal) keys.insert(k);
    for (const auto& [k, v] : b.ordinal) keys.insert(k);
    if (kernel == MmdKernel::EuclideanGaussian) {
      double s = 0.0;
      for (const auto k : keys) {
        const double d = (a.ordinal.contains(k) ? a.ordinal.at(k) : 0.0) - (b.ordinal.contains(k) ? b.ordinal.at(k) : 0.0);
        s += d * d;
      }
      return std::sqrt(s);
    }
    double ca = 0.0, cb = 0.0, emd = 0.0;
    std::int64_t prev = *keys.begin();
    for (const auto k : keys) {
      emd += std::abs(ca - cb) * static_cast<double>(k - prev);
      if (auto it = a.ordinal.find(k); it != a.ordinal.end()) ca += it->second;
      if (auto it = b.ordinal.find(k); it != b.ordinal.end()) cb += it->second;
      prev = k;
    }
    return emd;
  }
  std::set<std::string> keys;
  for (const auto& [k, v] : a.categorical) keys.insert(k);
  for (const auto& [k, v] : b.categorical) keys.insert(k);
  double s = 0.0;
  for (const auto& k : keys) {
    const auto ia = a.categorical.find(k);
    const auto ib = b.categorical.find(k);
    const double d = (ia == a.categorical.end() ? 0.0 : ia->second) - (ib == b.categorical.end() ? 0.0 : ib->second);
    s += kernel == MmdKernel::EuclideanGaussian ? d * d : std::abs(d);
  }
  return kernel == MmdKernel::EuclideanGaussian ? std::sqrt(s) : 0.5 * s;
}

namespace {

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (const double x : v) s += x;
  return s;
}

}  // namespace

MmdResult mmd(const std::vector<Feature>& x, const std::vector<Feature>& y, const MmdConfig& cfg) {
  if (x.size() < 2 || y.size() < 2)
    throw Error(ErrorCode::EmptySet, "MMD needs at least two graphs per set (got " + std::to_string(x.size()) + " and " +
                                         std::to_string(y.size()) + ")");
  const std::size_t n = x.size(), m = y.size(), t = n + m;
  auto at = [&](std::size_t i) -> const Feature& { return i < n ? x[i] : y[i - n]; };
  std::vector<double> dist(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) dist[i * t + j] = dist[j * t + i] = feature_distance(at(i), at(j), cfg.kernel);

  double sigma = cfg.sigma;
  if (!(sigma > 0.0)) {
    std::vector<double> all, positive;
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = i + 1; j < t; ++j) {
        all.push_back(dist[i * t + j]);
        if (dist[i * t + j] > 0.0) positive.push_back(dist[i * t + j]);
      }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t h = v.size() / 2;
      return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    };
    sigma = median(all);
    if (!(sigma > 0.0)) sigma = positive.empty() ? 1.0 : median(positive);
  }
  auto k = [&](std::size_t i, std::size_t j) {
    const double d = dist[i * t + j];
    return std::exp(-d * d / (2.0 * sigma * sigma));
  };

  std::vector<double> xx, yy, xy;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) xx.push_back(k(i, j));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) yy.push_back(k(n + i, n + j));
  const bool paired = n == m;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (!paired || i != j) xy.push_back(k(i, n + j));
  const double sxx = sorted_sum(xx), syy = sorted_sum(yy), sxy = sorted_sum(xy);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  MmdResult r;
  r.sigma = sigma;
  if (paired) {
    r.value = ((sxx + syy) - 2.0 * sxy) / (dn * (dn - 1.0));
  } else {
    r.value = (sxx / (dn * (dn - 1.0)) + syy / (dm * (dm - 1.0))) - 2.0 * sxy / (dn * dm);
  }
  return r;
}

namespace {

std::vector<Feature> features(const std::vector<ProvenanceGraph>& gs, MmdMetric metric, std::size_t workers) {
  std::vector<Feature> out(gs.size());
  parallel_for(gs.size(), workers, [&](std::size_t i) { out[i] = extract_feature(gs[i], metric); });
  return out;
}

}  // namespace

MmdResult mmd(const std::vector<ProvenanceGraph>& x, const std::vector<ProvenanceGraph>& y, const MmdConfig& cfg) {
  return mmd(features(x, cfg.metric, 1), features(y, cfg.metric, 1), cfg);
}

MmdReport mmd_suite(const std::vector<ProvenanceGraph>& real, const std::vector<ProvenanceGraph>& gen,
                    const std::map<MmdMetric, MmdConfig>& overrides, std::size_t workers) {
  if (real.empty() || gen.empty()) throw Error(ErrorCode::EmptySet, "MMD input set is empty");
  MmdReport rep;
  for (const auto metric : kAllMmdMetrics) {
    auto cfg = default_mmd_config(metric);
    if (auto it = overrides.find(metric); it != overrides.end()) cfg = it->second;
    cfg.metric = metric;
    if (cfg.sigma < 0.0) throw Error(ErrorCode::InvalidConfig, "MMD sigma must be positive");
    rep.values[metric] = mmd(features(real, metric, workers), features(gen, metric, workers), cfg);
  }
  return rep;
}

json to_json(const MmdReport& r) {
  json j = json::object();
  for (const auto& [m, v] : r.values) j[to_string(m)] = json{{"mmd2", v.value}, {"sigma", v.sigma}};
  return j;
}

}  // namespace provsyn
