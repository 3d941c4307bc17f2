#pragma once

#include <cstdint>
#include <vector>

#include "provsyn/graph.hpp"

namespace provsyn {

/// Natural-log entropy of a count vector; zero counts are ignored.
double entropy(const std::vector<double>& counts);
/// Gini impurity 1 - sum p_i^2.
double gini(const std::vector<double>& counts);

struct BalanceReport {
  double node_entropy = 0.0;
  double node_gini = 0.0;
  double edge_entropy = 0.0;
  double edge_gini = 0.0;
  std::size_t node_classes = 0;
  std::size_t edge_classes = 0;
};

BalanceReport label_balance(const ProvenanceGraph& g);
nlohmann::json to_json(const BalanceReport& r);

enum class MatchResult { Found, NotFound, BudgetExceeded };

struct MatchBudget {
  std::uint64_t max_states = 2'000'000;
  double max_ms = 1000.0;  // <= 0 disables the clock
};

/// Label-preserving subgraph monomorphism of `pattern` into `target`: an
/// injective node map keeping node types such that every pattern edge maps
/// to a target edge of the same type (with multiplicity). Undirected graphs
/// are matched as if every edge ran both ways.
MatchResult subgraph_match(const ProvenanceGraph& pattern, const ProvenanceGraph& target,
                           const MatchBudget& budget = {});

/// Exact label isomorphism (equal sizes plus a monomorphism).
MatchResult isomorphic(const ProvenanceGraph& a, const ProvenanceGraph& b, const MatchBudget& budget = {});

struct DiversityReport {
  double novelty_pct = 0.0;
  double uniqueness_pct = 0.0;
  std::size_t generated = 0;
  std::size_t novel = 0;
  std::size_t unique = 0;
  /// Pairs whose search ran out of budget; each makes its graph non-novel.
  std::size_t budget_exceeded = 0;
};

/// Throws EmptySet.
DiversityReport diversity(const std::vector<ProvenanceGraph>& gen, const std::vector<ProvenanceGraph>& train,
                          const MatchBudget& budget = {}, std::size_t workers = 1);
nlohmann::json to_json(const DiversityReport& r);

}  // namespace provsyn
