#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "provsyn/error.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

void EmbeddingConfig::validate() const {
  if (walks_per_node < 1 || walk_length < 1 || dimension < 1 || window < 1 || epochs < 1 || negatives < 1 ||
      !(learning_rate > 0.0))
    throw Error(ErrorCode::InvalidConfig, "embedding: all settings must be positive");
}

std::vector<std::vector<std::string>> name_walks(const ProvenanceGraph& g, int walks_per_node, int walk_length,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> order(g.nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.nodes[a].id < g.nodes[b].id; });
  const auto idx = id_index(g);
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  for (const auto& e : g.edges) {
    const auto a = idx.at(e.src), b = idx.at(e.dst);
    adj[a].push_back(b);
    if (a != b) adj[b].push_back(a);
  }
  for (auto& list : adj)
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) { return g.nodes[a].id < g.nodes[b].id; });

  Rng rng(seed);
  std::vector<std::vector<std::string>> walks;
  for (int r = 0; r < walks_per_node; ++r)
    for (const auto start : order) {
      std::vector<std::string> w{g.nodes[start].name};
      std::size_t cur = start;
      for (int step = 1; step < walk_length && !adj[cur].empty(); ++step) {
        cur = adj[cur][uniform_index(rng, adj[cur].size())];
        w.push_back(g.nodes[cur].name);
      }
      walks.push_back(std::move(w));
    }
  return walks;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -30.0, 30.0))); }

struct SkipGram {
  int dim;
  std::vector<double> in, out;
  std::discrete_distribution<std::size_t> noise;

  double* vin(std::size_t w) { return in.data() + w * dim; }
  double* vout(std::size_t w) { return out.data() + w * dim; }

  /// One positive and `k` negative updates of `v` against output vectors.
  void step(double* v, std::size_t target, int k, double lr, Rng& rng, bool update_out, std::vector<double>& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int s = 0; s <= k; ++s) {
      const std::size_t w = s == 0 ? target : noise(rng);
      if (s > 0 && w == target) continue;
      double* c = vout(w);
      double dot = 0.0;
      for (int d = 0; d < dim; ++d) dot += v[d] * c[d];
      const double g = ((s == 0 ? 1.0 : 0.0) - sigmoid(dot)) * lr;
      for (int d = 0; d < dim; ++d) grad[d] += g * c[d];
      if (update_out)
        for (int d = 0; d < dim; ++d) c[d] += g * v[d];
    }
    for (int d = 0; d < dim; ++d) v[d] += grad[d];
  }
};

double cosine(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    *degenerate = true;
    return 0.0;
  }
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace

EmbeddingResult embedding_similarity(const ProvenanceGraph& gen, const ProvenanceGraph& real,
                                     const EmbeddingConfig& cfg) {
  cfg.validate();
  if (gen.nodes.empty() || real.nodes.empty()) throw Error(ErrorCode::EmptySet, "embedding needs non-empty graphs");
  const std::uint64_t walk_seed = derive_seed(cfg.seed, 1);
  const std::array<std::vector<std::vector<std::string>>, 2> corpora{
      name_walks(gen, cfg.walks_per_node, cfg.walk_length, walk_seed),
      name_walks(real, cfg.walks_per_node, cfg.walk_length, walk_seed)};

  std::map<std::string, std::size_t> vocab;
  for (const auto& c : corpora)
    for (const auto& w : c)
      for (const auto& t : w) vocab.emplace(t, 0);
  std::size_t next = 0;
  for (auto& [t, i] : vocab) i = next++;
  std::vector<double> freq(vocab.size(), 0.0);
  std::array<std::vector<std::vector<std::size_t>>, 2> ids;
  for (int c = 0; c < 2; ++c)
    for (const auto& w : corpora[c]) {
      std::vector<std::size_t> v;
      for (const auto& t : w) {
        v.push_back(vocab.at(t));
        freq[v.back()] += 1.0;
      }
      ids[c].push_back(std::move(v));
    }
  for (auto& f : freq) f = std::pow(f, 0.75);

  const int dim = cfg.dimension;
  SkipGram sg{dim, std::vector<double>(vocab.size() * dim), std::vector<double>(vocab.size() * dim, 0.0),
              std::discrete_distribution<std::size_t>(freq.begin(), freq.end())};
  Rng rng(derive_seed(cfg.seed, 2));
  std::uniform_real_distribution<double> init(-0.5 / dim, 0.5 / dim);
  for (auto& x : sg.in) x = init(rng);
  std::vector<double> grad(dim);

  std::size_t tokens = 0;
  for (const auto& c : ids)
    for (const auto& w : c) tokens += w.size();
  const double total = static_cast<double>(tokens) * cfg.epochs;
  double done = 0.0;
  for (int ep = 0; ep < cfg.epochs; ++ep)
    for (const auto& c : ids)
      for (const auto& w : c)
        for (std::size_t i = 0; i < w.size(); ++i, done += 1.0) {
          const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - done / total);
          const auto b = static_cast<std::size_t>(1 + uniform_index(rng, cfg.window));
          for (std::size_t j = i > b ? i - b : 0; j < std::min(w.size(), i + b + 1); ++j)
            if (j != i) sg.step(sg.vin(w[i]), w[j], cfg.negatives, lr, rng, true, grad);
        }

  std::array<std::vector<double>, 2> vec;
  const std::array<const ProvenanceGraph*, 2> graphs{&gen, &real};
  for (int c = 0; c < 2; ++c) {
    vec[c].assign(dim, 0.0);
    if (cfg.method == EmbeddingMethod::WalkSkipgram) {
      for (const auto& n : graphs[c]->nodes) {
        const double* v = sg.vin(vocab.at(n.name));
        for (int d = 0; d < dim; ++d) vec[c][d] += v[d];
      }
      for (auto& x : vec[c]) x /= static_cast<double>(graphs[c]->nodes.size());
    } else {
      // Document vector inferred against the frozen output layer.
      Rng doc_rng(derive_seed(cfg.seed, 3));
      for (auto& x : vec[c]) x = init(doc_rng);
      std::size_t doc_tokens = 0;
      for (const auto& w : ids[c]) doc_tokens += w.size();
      const double doc_total = static_cast<double>(doc_tokens) * cfg.epochs;
      double seen = 0.0;
      for (int ep = 0; ep < cfg.epochs; ++ep)
        for (const auto& w : ids[c])
          for (const auto t : w) {
            const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - seen / doc_total);
            sg.step(vec[c].data(), t, cfg.negatives, lr, doc_rng, false, grad);
            seen += 1.0;
          }
    }
  }
  EmbeddingResult res;
  res.similarity = cosine(vec[0], vec[1], &res.degenerate);
  return res;
}

}  // namespace provsyn
