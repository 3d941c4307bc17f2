#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "generators.hpp"
#include "provsyn/balance.hpp"
#include "provsyn/error.hpp"

using namespace provsyn;

namespace {

ProvenanceGraph random_labeled(Rng& rng, int max_nodes) {
  const int n = 1 + static_cast<int>(uniform_index(rng, max_nodes));
  return testing::random_multigraph(rng, n, static_cast<int>(uniform_index(rng, 2 * n)), 2, 2);
}

}  // namespace

TEST_CASE("entropy and gini closed forms") {
  CHECK(std::abs(entropy({5, 5, 5, 5}) - std::log(4.0)) <= 1e-12);
  CHECK(std::abs(gini({5, 5, 5, 5}) - 0.75) <= 1e-12);
  CHECK(entropy({7}) == 0.0);
  CHECK(gini({7}) == 0.0);
  CHECK(entropy({}) == 0.0);
  CHECK(std::abs(entropy({1, 3}) - (-(0.25 * std::log(0.25) + 0.75 * std::log(0.75)))) <= 1e-12);
  CHECK(std::abs(gini({1, 3}) - (1 - 0.0625 - 0.5625)) <= 1e-12);

  const auto g = testing::make_graph(true, {"a", "b", "c", "d"}, {{0, 1, "x"}, {1, 2, "x"}});
  const auto r = label_balance(g);
  CHECK(std::abs(r.node_entropy - std::log(4.0)) <= 1e-12);
  CHECK(std::abs(r.node_gini - 0.75) <= 1e-12);
  CHECK(r.edge_entropy == 0.0);
  CHECK(r.edge_gini == 0.0);
}

TEST_CASE("balance of a community merge equals that of the pooled labels") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto base = testing::random_multigraph(rng, 10, 20, 3, 4);
    std::vector<ProvenanceGraph> syn;
    std::map<std::string, double> nodes, edges;
    for (const auto& n : base.nodes) nodes[n.type.str()] += 1;
    for (const auto& e : base.edges) edges[e.type.str()] += 1;
    for (int k = 0; k < 4; ++k) {
      syn.push_back(testing::random_multigraph(rng, 5, 6, 4, 3));
      for (const auto& n : syn.back().nodes) nodes[n.type.str()] += 1;
      for (const auto& e : syn.back().edges) edges[e.type.str()] += 1;
    }
    std::vector<double> nc, ec;
    for (const auto& [k, v] : nodes) nc.push_back(v);
    for (const auto& [k, v] : edges) ec.push_back(v);
    const auto r = label_balance(merge_as_communities(base, syn));
    CHECK(r.node_entropy == entropy(nc));
    CHECK(r.node_gini == gini(nc));
    CHECK(r.edge_entropy == entropy(ec));
    CHECK(r.edge_gini == gini(ec));
  }
}

TEST_CASE("subgraph matching agrees with exhaustive search on small graphs") {
  Rng rng(31);
  int found = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    const auto p = random_labeled(rng, 5);
    const auto t = random_labeled(rng, 8);
    const bool expect = testing::brute_subgraph(p, t);
    const auto got = subgraph_match(p, t);
    REQUIRE(got != MatchResult::BudgetExceeded);
    CHECK((got == MatchResult::Found) == expect);
    found += expect;
  }
  CHECK(found > 50);  // both outcomes exercised
}

TEST_CASE("isomorphism is reflexive and symmetric on samples") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_labeled(rng, 7);
    const auto b = testing::permuted(a, rng);
    const auto c = random_labeled(rng, 7);
    CHECK(isomorphic(a, a) == MatchResult::Found);
    CHECK(isomorphic(a, b) == MatchResult::Found);
    CHECK(isomorphic(b, a) == MatchResult::Found);
    CHECK(isomorphic(a, c) == isomorphic(c, a));
  }
}

TEST_CASE("novelty and uniqueness oracles") {
  Rng rng(2);
  std::vector<ProvenanceGraph> train;
  for (int i = 0; i < 10; ++i) train.push_back(testing::random_connected_graph(rng, 5, 2, 2, 2));
  auto rep = diversity(train, train);
  CHECK(rep.novelty_pct == 0.0);

  const auto g = train[3];
  rep = diversity(std::vector<ProvenanceGraph>(5, g), train);
  CHECK(rep.uniqueness_pct == doctest::Approx(20.0));
  CHECK(rep.novelty_pct == 0.0);

  // disjoint labels: nothing relates
  std::vector<ProvenanceGraph> other;
  for (int i = 0; i < 6; ++i) {
    auto h = testing::random_connected_graph(rng, 4, 1, 1, 1);
    for (auto& n : h.nodes) n.type = NodeType("zz");
    other.push_back(h);
  }
  rep = diversity(other, train);
  CHECK(rep.novelty_pct == 100.0);

  // agreement with the brute-force oracle on 8-node graphs
  std::vector<ProvenanceGraph> gen, ref;
  for (int i = 0; i < 25; ++i) gen.push_back(random_labeled(rng, 8));
  for (int i = 0; i < 8; ++i) ref.push_back(random_labeled(rng, 8));
  std::size_t novel = 0;
  for (const auto& x : gen) {
    bool rel = false;
    for (const auto& y : ref) rel = rel || testing::brute_subgraph(x, y) || testing::brute_subgraph(y, x);
    novel += !rel;
  }
  rep = diversity(gen, ref, {}, 2);
  CHECK(rep.novel == novel);
  CHECK(rep.budget_exceeded == 0);

  CHECK_THROWS_AS(diversity({}, train), Error);
}

TEST_CASE("a tiny budget is reported and counts as non-novel") {
  Rng rng(1);
  const auto big = testing::random_connected_graph(rng, 12, 20, 1, 1);
  auto small = testing::random_connected_graph(rng, 7, 3, 1, 1);
  CHECK(subgraph_match(small, big, MatchBudget{3, 0.0}) == MatchResult::BudgetExceeded);
  const auto rep = diversity({small}, {big}, MatchBudget{3, 0.0});
  CHECK(rep.budget_exceeded >= 1);
  CHECK(rep.novel == 0);
}
