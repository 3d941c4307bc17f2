#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "provsyn/error.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

std::vector<std::string> tokenize_name(const std::string& name) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : name) {
    if (c == '/' || c == '\\' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

using Counts = std::map<std::vector<std::string>, int>;

Counts ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Counts c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

int clipped_overlap(const Counts& h, const Counts& r) {
  int m = 0;
  for (const auto& [g, c] : h)
    if (auto it = r.find(g); it != r.end()) m += std::min(c, it->second);
  return m;
}

}  // namespace

double bleu(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const std::size_t order = std::min<std::size_t>(4, hyp.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= order; ++n) {
    const int m = clipped_overlap(ngrams(hyp, n), ngrams(ref, n));
    if (m == 0) return 0.0;
    log_sum += std::log(static_cast<double>(m) / static_cast<double>(hyp.size() - n + 1));
  }
  const double c = static_cast<double>(hyp.size()), r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(order));
}

double gleu(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  int matches = 0, hyp_total = 0, ref_total = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    matches += clipped_overlap(ngrams(hyp, n), ngrams(ref, n));
    if (hyp.size() >= n) hyp_total += static_cast<int>(hyp.size() - n + 1);
    if (ref.size() >= n) ref_total += static_cast<int>(ref.size() - n + 1);
  }
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  return std::min(static_cast<double>(matches) / hyp_total, static_cast<double>(matches) / ref_total);
}

double rouge_l_f(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(hyp.size()), r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double name_similarity(const std::string& hyp, const std::string& ref, TextMetric m) {
  if (hyp.empty()) return 0.0;
  const auto h = tokenize_name(hyp);
  const auto r = tokenize_name(ref);
  if (hyp == ref || (!h.empty() && h == r)) return 1.0;
  switch (m) {
    case TextMetric::Bleu: return bleu(h, r);
    case TextMetric::Gleu: return gleu(h, r);
    case TextMetric::RougeLF: return rouge_l_f(h, r);
  }
  return 0.0;
}

ReferenceCorpus reference_corpus(const ProvenanceGraph& real) {
  ReferenceCorpus c;
  for (const auto& n : real.nodes)
    if (!n.name.empty() && n.name != kNullName) c[n.type].push_back(n.name);
  for (auto& [t, names] : c) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
  }
  return c;
}

std::map<NodeType, TextScores> text_quality(const ProvenanceGraph& gen, const ReferenceCorpus& corpus,
                                            const std::vector<NodeType>& types, std::size_t workers) {
  std::set<NodeType> wanted(types.begin(), types.end());
  if (wanted.empty())
    for (const auto& n : gen.nodes) wanted.insert(n.type);
  for (const auto& t : wanted)
    if (!corpus.contains(t) || corpus.at(t).empty())
      throw Error(ErrorCode::MissingType, "no reference names for type '" + t.str() + "'");

  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < gen.nodes.size(); ++i)
    if (wanted.contains(gen.nodes[i].type)) nodes.push_back(i);

  struct Prepared {
    std::unordered_set<std::string> exact;
    std::vector<std::vector<std::string>> tokens;
  };
  std::map<NodeType, Prepared> refs;
  for (const auto& t : wanted) {
    auto& p = refs[t];
    for (const auto& r : corpus.at(t)) {
      p.exact.insert(r);
      p.tokens.push_back(tokenize_name(r));
    }
  }

  std::vector<std::array<double, 3>> best(nodes.size(), {0.0, 0.0, 0.0});
  parallel_for(nodes.size(), workers, [&](std::size_t k) {
    const auto& node = gen.nodes[nodes[k]];
    auto& b = best[k];
    if (node.name.empty()) return;
    const auto& p = refs.at(node.type);
    const auto h = tokenize_name(node.name);
    if (p.exact.contains(node.name)) {
      b = {1.0, 1.0, 1.0};
      return;
    }
    for (const auto& r : p.tokens) {
      if (!h.empty() && h == r) {
        b = {1.0, 1.0, 1.0};
        return;
      }
      b[0] = std::max(b[0], bleu(h, r));
      b[1] = std::max(b[1], gleu(h, r));
      b[2] = std::max(b[2], rouge_l_f(h, r));
    }
  });

  std::map<NodeType, TextScores> out;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    auto& s = out[gen.nodes[nodes[k]].type];
    s.bleu += best[k][0];
    s.gleu += best[k][1];
    s.rouge_l_f += best[k][2];
    ++s.nodes;
  }
  for (auto& [t, s] : out) {
    s.bleu /= static_cast<double>(s.nodes);
    s.gleu /= static_cast<double>(s.nodes);
    s.rouge_l_f /= static_cast<double>(s.nodes);
  }
  return out;
}

json to_json(const std::map<NodeType, TextScores>& t) {
  json j = json::object();
  for (const auto& [type, s] : t)
    j[type.str()] = json{{"bleu", s.bleu}, {"gleu", s.gleu}, {"rouge_l_f", s.rouge_l_f}, {"nodes", s.nodes}};
  return j;
}

}  // namespace provsyn
