#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/semantic.hpp"

namespace provsyn {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '/' || c == '\\') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

HashingEncoder::HashingEncoder(int dim, int ngram) : dim_(dim), ngram_(ngram) {
  if (dim < 1 || ngram < 1) throw Error(ErrorCode::InvalidConfig, "hashing encoder needs positive dim and ngram");
}

std::string HashingEncoder::id() const { return "hash-d" + std::to_string(dim_) + "-n" + std::to_string(ngram_); }

Eigen::VectorXd HashingEncoder::encode(const std::string& text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a(feature);
    v[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_))] += (h >> 63) ? -1.0 : 1.0;
  };
  for (const auto& w : words(text)) {
    add("w:" + w);
    const std::string padded = "<" + w + ">";
    const std::size_t n = static_cast<std::size_t>(ngram_);
    if (padded.size() <= n) {
      add("c:" + padded);
      continue;
    }
    for (std::size_t i = 0; i + n <= padded.size(); ++i) add("c:" + padded.substr(i, n));
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

// ---------------------------------------------------------------------------

std::size_t CategoryMap::num_categories() const {
  std::set<std::string> s;
  for (const auto& [e, c] : category) s.insert(c);
  return s.size();
}

void CategoryMap::validate(const DatasetManifest& m) const {
  for (const auto& [e, c] : category)
    if (!m.has(e)) throw Error(ErrorCode::UnknownType, "category map names unknown edge type '" + e.str() + "'");
  for (const auto& e : m.edge_types)
    if (!category.contains(e))
      throw Error(ErrorCode::MalformedFile, "category map does not cover edge type '" + e.str() + "'");
}

CategoryMap default_category_map(const DatasetManifest& m) {
  auto has = [](const std::string& s, std::initializer_list<const char*> keys) {
    return std::any_of(keys.begin(), keys.end(), [&](const char* k) { return s.find(k) != std::string::npos; });
  };
  CategoryMap c;
  for (const auto& e : m.edge_types) {
    const auto& s = e.str();
    std::string cat = "file";
    if (has(s, {"read", "recv", "load"})) {
      cat = "read";
    } else if (has(s, {"write", "send"})) {
      cat = "write";
    } else if (has(s, {"connect", "accept", "bind", "listen"})) {
      cat = "network";
    } else if (has(s, {"clone", "fork", "exec", "kill", "signal", "exit", "principal"})) {
      cat = "process";
    }
    c.category[e] = cat;
  }
  return c;
}

json to_json(const CategoryMap& c, const std::string& manifest_id) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& [e, cat] : c.category) groups[cat].push_back(e.str());
  return json{{"manifest", manifest_id}, {"categories", groups}};
}

CategoryMap category_map_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("categories") || !j["categories"].is_object())
    throw Error(ErrorCode::MalformedFile, where + ": missing object 'categories'");
  CategoryMap c;
  for (const auto& [cat, types] : j["categories"].items()) {
    if (!types.is_array()) throw Error(ErrorCode::MalformedFile, where + ": category '" + cat + "' must be an array");
    for (const auto& t : types) {
      if (!c.category.emplace(EdgeType(t.get<std::string>()), cat).second)
        throw Error(ErrorCode::MalformedFile, where + ": edge type '" + t.get<std::string>() + "' in two categories");
    }
  }
  return c;
}

CategoryMap read_category_map(const std::string& path) { return category_map_from_json(read_json_file(path), path); }

// ---------------------------------------------------------------------------

ClusterAssignment cluster_names(const std::vector<std::string>& input, const TextEncoder& enc, int k,
                                std::uint64_t seed, int iterations) {
  std::vector<std::string> names = input;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  ClusterAssignment out;
  if (names.empty() || k < 1) return out;
  const std::size_t n = names.size();
  k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), n));
  std::vector<Eigen::VectorXd> x;
  for (const auto& s : names) x.push_back(enc.encode(s));

  Rng rng(seed);
  std::vector<Eigen::VectorXd> centers{x[uniform_index(rng, n)]};
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d2[i] = std::min(d2[i], (x[i] - c).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);
    } else {
      double r = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n && r >= d2[pick]; ++pick) r -= d2[pick];
    }
    centers.push_back(x[pick]);
  }

  std::vector<int> assign(n, -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x[i] - centers[c]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<Eigen::VectorXd> sum(k, Eigen::VectorXd::Zero(enc.dim()));
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += x[i];
      ++count[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        centers[c] = sum[c] / count[c];
        continue;
      }
      // Empty cluster: take the point farthest from its center.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (x[i] - centers[assign[i]]).squaredNorm();
        if (count[assign[i]] > 1 && d > fd) {
          fd = d;
          far = i;
        }
      }
      --count[assign[far]];
      assign[far] = c;
      count[c] = 1;
      centers[c] = x[far];
      changed = true;
    }
    if (!changed) break;
  }
  // Renumber clusters by first appearance so ids are compact.
  std::map<int, int> renumber;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = renumber.try_emplace(assign[i], static_cast<int>(renumber.size())).first;
    out.cluster_of[names[i]] = it->second;
  }
  out.k = static_cast<int>(renumber.size());
  return out;
}

// ---------------------------------------------------------------------------

SemanticTriple invert(const SemanticTriple& tr) {
  SemanticTriple out = tr;
  std::swap(out.s, out.t);
  std::swap(out.s_node, out.t_node);
  return out;
}

std::optional<SemanticTriple> replace_predicate(const SemanticTriple& tr, const CategoryMap& cmap, Rng& rng) {
  const auto it = cmap.category.find(tr.e);
  std::vector<EdgeType> options;
  for (const auto& [e, cat] : cmap.category)
    if (it == cmap.category.end() || cat != it->second) options.push_back(e);
  if (it == cmap.category.end() || options.empty()) return std::nullopt;
  SemanticTriple out = tr;
  out.e = options[uniform_index(rng, options.size())];
  return out;
}

EntityPool entity_pool(const ProvenanceGraph& g, const ClusterAssignment& clusters) {
  EntityPool pool;
  std::set<std::string> seen;
  for (const auto& n : g.nodes) {
    if (!seen.insert(n.name).second) continue;
    const auto it = clusters.cluster_of.find(n.name);
    if (it == clusters.cluster_of.end()) continue;
    pool.names.push_back(n.name);
    pool.nodes.push_back(n.id);
    pool.cluster.push_back(it->second);
  }
  return pool;
}

std::optional<SemanticTriple> substitute_entity(const SemanticTriple& tr, const ClusterAssignment& clusters,
                                                const EntityPool& pool, Rng& rng) {
  const bool subject = uniform01(rng) < 0.5;
  const std::string& name = subject ? tr.s : tr.t;
  const auto it = clusters.cluster_of.find(name);
  if (it == clusters.cluster_of.end()) return std::nullopt;
  std::vector<std::size_t> options;
  for (std::size_t i = 0; i < pool.names.size(); ++i)
    if (pool.cluster[i] != it->second) options.push_back(i);
  if (options.empty()) return std::nullopt;
  const std::size_t k = options[uniform_index(rng, options.size())];
  SemanticTriple out = tr;
  (subject ? out.s : out.t) = pool.names[k];
  (subject ? out.s_node : out.t_node) = pool.nodes[k];
  return out;
}

std::vector<SemanticTriple> edge_triples(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  std::vector<SemanticTriple> out;
  for (const auto& e : g.edges)
    out.push_back(SemanticTriple{g.nodes[idx.at(e.src)].name, e.type, g.nodes[idx.at(e.dst)].name, -1, e.src, e.dst});
  return out;
}

std::vector<SemanticTriple> build_contrastive_set(const ProvenanceGraph& real, const CategoryMap& cmap,
                                                  const ClusterAssignment& clusters, std::uint64_t seed,
                                                  ContrastiveStats* stats) {
  for (const auto& n : real.nodes)
    if (n.name.empty() || n.name == kNullName)
      throw Error(ErrorCode::UnnamedNodes, "node " + std::to_string(n.id) + " has no name");
  ContrastiveStats local;
  const bool pr_ok = cmap.num_categories() >= 2;
  const bool es_ok = clusters.k >= 2;
  if (!pr_ok) local.warnings.push_back("fewer than two edge categories: predicate replacement disabled");
  if (!es_ok) local.warnings.push_back("fewer than two name clusters: entity substitution disabled");
  const auto pool = entity_pool(real, clusters);

  Rng rng(seed);
  std::vector<SemanticTriple> out;
  std::size_t skipped = 0;
  for (auto pos : edge_triples(real)) {
    pos.label = 1;
    std::vector<Corruption> options;
    if (pos.s != pos.t) options.push_back(Corruption::SubjectObjectInversion);
    if (pr_ok) options.push_back(Corruption::PredicateReplacement);
    if (es_ok) options.push_back(Corruption::EntitySubstitution);
    std::optional<SemanticTriple> neg;
    while (!neg && !options.empty()) {
      const std::size_t k = uniform_index(rng, options.size());
      switch (options[k]) {
        case Corruption::SubjectObjectInversion:
          neg = invert(pos);
          if (neg) ++local.soi;
          break;
        case Corruption::PredicateReplacement:
          neg = replace_predicate(pos, cmap, rng);
          if (neg) ++local.pr;
          break;
        case Corruption::EntitySubstitution:
          neg = substitute_entity(pos, clusters, pool, rng);
          if (neg) ++local.es;
          break;
      }
      if (!neg) options.erase(options.begin() + static_cast<std::ptrdiff_t>(k));
    }
    if (!neg) {
      ++skipped;
      continue;
    }
    neg->label = 0;
    out.push_back(pos);
    out.push_back(*neg);
  }
  if (skipped) local.warnings.push_back(std::to_string(skipped) + " edges had no applicable corruption and were skipped");
  if (stats) *stats = local;
  return out;
}

}  // namespace provsyn
