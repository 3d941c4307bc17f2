#include <algorithm>
#include <limits>

#include "provsyn/error.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/name_synth.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double dtw_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(b.size() + 1, inf), cur(b.size() + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const double d = a[i - 1] == b[j - 1] ? 0.0 : 1.0;
      cur[j] = d + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::vector<std::string>> type_sequences(const ProvenanceGraph& g) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : extract_sequences(g)) {
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      if (i > 0) toks.push_back(s.edges[i - 1].str());
      toks.push_back(s.nodes[i].type.str());
    }
    out.push_back(std::move(toks));
  }
  return out;
}

TemporalReport temporal(const ProvenanceGraph& gen, const ProvenanceGraph& real, std::size_t workers) {
  const auto gs = type_sequences(gen);
  const auto rs = type_sequences(real);
  if (gs.empty() || rs.empty()) throw Error(ErrorCode::NoSequences, "temporal metrics need sequences in both graphs");
  std::vector<double> lcs(gs.size(), 0.0), dtw(gs.size(), 0.0);
  parallel_for(gs.size(), workers, [&](std::size_t i) {
    std::size_t best_l = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& r : rs) {
      best_l = std::max(best_l, lcs_length(gs[i], r));
      best_d = std::min(best_d, dtw_distance(gs[i], r));
    }
    lcs[i] = static_cast<double>(best_l);
    dtw[i] = best_d;
  });
  TemporalReport rep;
  rep.sequences = gs.size();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    rep.lcs += lcs[i];
    rep.dtw += dtw[i];
  }
  rep.lcs /= static_cast<double>(gs.size());
  rep.dtw /= static_cast<double>(gs.size());
  return rep;
}

}  // namespace provsyn
