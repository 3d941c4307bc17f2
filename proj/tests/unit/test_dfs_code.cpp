#include <doctest.h>

#include "generators.hpp"
#include "provsyn/dfs_code.hpp"
#include "provsyn/error.hpp"

using namespace provsyn;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidConfig;
}

EdgeTuple tup(int u, int v, const char* lu, const char* le, const char* lv) {
  return EdgeTuple{u, v, NodeType(lu), EdgeType(le), NodeType(lv)};
}

}  // namespace

TEST_CASE("single edge picks the smaller orientation") {
  const auto g = testing::make_graph(false, {"process", "file"}, {{0, 1, "read"}});
  const auto code = min_dfs_code(g);
  REQUIRE(code.size() == 1);
  CHECK(code[0] == tup(0, 1, "file", "read", "process"));
}

TEST_CASE("triangle with identical labels") {
  const auto g = testing::make_graph(false, {"a", "a", "a"}, {{0, 1, "e"}, {1, 2, "e"}, {0, 2, "e"}});
  const auto code = min_dfs_code(g);
  REQUIRE(code.size() == 3);
  CHECK(code[0] == tup(0, 1, "a", "e", "a"));
  CHECK(code[1] == tup(1, 2, "a", "e", "a"));
  CHECK(code[2] == tup(2, 0, "a", "e", "a"));
  CHECK(code == testing::brute_min_code(g));
}

TEST_CASE("min code agrees with exhaustive enumeration") {
  Rng rng(123);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + uniform_index(rng, 5);
    const auto g = testing::random_connected_graph(rng, n, uniform_index(rng, 4), 1 + uniform_index(rng, 3),
                                                   1 + uniform_index(rng, 2));
    const auto code = min_dfs_code(g);
    CHECK(code.size() == g.edges.size());
    CHECK(code == testing::brute_min_code(g));
  }
}

TEST_CASE("min code is invariant under id permutations") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + uniform_index(rng, 20);
    const auto g = testing::random_connected_graph(rng, n, uniform_index(rng, 12), 1 + uniform_index(rng, 3),
                                                   1 + uniform_index(rng, 3));
    const auto code = min_dfs_code(g);
    CHECK(is_valid_code(code));
    for (int k = 0; k < 3; ++k) CHECK(min_dfs_code(testing::permuted(g, rng)) == code);
  }
}

TEST_CASE("decode(min code) is isomorphic to the input for 500 graphs") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + uniform_index(rng, 9);
    const auto g = testing::random_connected_graph(rng, n, uniform_index(rng, 10), 1 + uniform_index(rng, 3),
                                                   1 + uniform_index(rng, 3));
    const auto d = decode(min_dfs_code(g));
    CHECK(d.edges.size() == g.edges.size());
    CHECK(testing::brute_isomorphic(d, g));
  }
}

TEST_CASE("non-isomorphic graphs get different codes") {
  const auto path = testing::make_graph(false, {"a", "a", "a", "a"}, {{0, 1, "e"}, {1, 2, "e"}, {2, 3, "e"}});
  const auto star = testing::make_graph(false, {"a", "a", "a", "a"}, {{0, 1, "e"}, {0, 2, "e"}, {0, 3, "e"}});
  CHECK(min_dfs_code(path) != min_dfs_code(star));
}

TEST_CASE("symmetric graphs stay tractable") {
  // Wide stars, complete graphs and grids exercise the twin and state pruning.
  std::vector<std::string> labels(41, "n");
  std::vector<std::tuple<int, int, std::string>> star;
  for (int i = 1; i <= 40; ++i) star.emplace_back(0, i, "e");
  CHECK(min_dfs_code(testing::make_graph(false, labels, star)).size() == 40);

  std::vector<std::tuple<int, int, std::string>> k7;
  for (int i = 0; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j) k7.emplace_back(i, j, "e");
  const auto complete = testing::make_graph(false, std::vector<std::string>(7, "n"), k7);
  std::vector<std::tuple<int, int, std::string>> k5;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) k5.emplace_back(i, j, "e");
  const auto small = testing::make_graph(false, std::vector<std::string>(5, "n"), k5);
  CHECK(min_dfs_code(small) == testing::brute_min_code(small));
  CHECK(min_dfs_code(complete).size() == 21);

  std::vector<std::tuple<int, int, std::string>> grid;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      if (c + 1 < 6) grid.emplace_back(r * 6 + c, r * 6 + c + 1, "e");
      if (r + 1 < 6) grid.emplace_back(r * 6 + c, (r + 1) * 6 + c, "e");
    }
  const auto gg = testing::make_graph(false, std::vector<std::string>(36, "n"), grid);
  Rng rng(1);
  CHECK(min_dfs_code(gg) == min_dfs_code(testing::permuted(gg, rng)));
}

TEST_CASE("codec errors") {
  const auto disconnected = testing::make_graph(false, {"a", "a", "a"}, {{0, 1, "e"}});
  CHECK(code_of([&] { min_dfs_code(disconnected); }) == ErrorCode::Disconnected);
  const auto loop = testing::make_graph(false, {"a", "a"}, {{0, 1, "e"}, {1, 1, "e"}});
  CHECK(code_of([&] { min_dfs_code(loop); }) == ErrorCode::SelfLoop);
  std::vector<std::tuple<int, int, std::string>> path;
  for (int i = 0; i < 64; ++i) path.emplace_back(i, i + 1, "e");
  const auto big = testing::make_graph(false, std::vector<std::string>(65, "n"), path);
  CHECK(code_of([&] { min_dfs_code(big); }) == ErrorCode::TooLarge);
  CHECK(min_dfs_code(big, 100).size() == 64);
}

TEST_CASE("decode basics and errors") {
  const auto g = decode({tup(0, 1, "p", "read", "f")});
  CHECK(g.nodes.size() == 2);
  CHECK(g.edges.size() == 1);
  CHECK(g.nodes[0].type == "p");
  CHECK(g.nodes[1].name == kNullName);

  CHECK(code_of([] { decode({tup(0, 1, "p", "r", "f"), tup(1, 2, "f", "r", "p"), tup(2, 0, "p", "r", "x")}); }) ==
        ErrorCode::InvalidCode);
  CHECK(code_of([] { decode({tup(0, 2, "p", "r", "f")}); }) == ErrorCode::InvalidCode);
  CHECK(code_of([] { decode({tup(0, 1, "p", "r", "f"), tup(1, 0, "f", "r", "p")}); }) == ErrorCode::InvalidCode);
  CHECK(code_of([] { decode({tup(0, 1, "p", "r", "f"), tup(1, 1, "f", "r", "f")}); }) == ErrorCode::InvalidCode);
}

TEST_CASE("structural validity") {
  CHECK(is_valid_code({}));
  CHECK(is_valid_code({tup(0, 1, "a", "e", "a"), tup(1, 2, "a", "e", "a"), tup(2, 0, "a", "e", "a")}));
  std::string why;
  CHECK_FALSE(is_valid_code({tup(1, 0, "a", "e", "a")}, &why));
  CHECK(!why.empty());
  // Forward edge from a vertex that left the rightmost path.
  CHECK_FALSE(is_valid_code({tup(0, 1, "a", "e", "a"), tup(0, 2, "a", "e", "a"), tup(1, 3, "a", "e", "a")}));
  // Backward edge not leaving the rightmost vertex.
  CHECK_FALSE(is_valid_code({tup(0, 1, "a", "e", "a"), tup(1, 2, "a", "e", "a"), tup(1, 0, "a", "e", "a")}));
}

TEST_CASE("gSpan tuple order") {
  CHECK(tuple_less(tup(2, 0, "z", "z", "z"), tup(2, 3, "a", "a", "a")));  // backward before forward
  CHECK(tuple_less(tup(2, 3, "a", "a", "a"), tup(1, 3, "a", "a", "a")));  // deeper source first
  CHECK(tuple_less(tup(1, 2, "z", "z", "z"), tup(2, 0, "a", "a", "a")));
  CHECK(tuple_less(tup(0, 1, "a", "a", "b"), tup(0, 1, "a", "b", "a")));
  CHECK_FALSE(tuple_less(tup(0, 1, "a", "a", "a"), tup(0, 1, "a", "a", "a")));
}

TEST_CASE("canonical certificate for directed multigraphs") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_multigraph(rng, 1 + uniform_index(rng, 8), uniform_index(rng, 14), 2, 2);
    const auto h = testing::permuted(g, rng);
    CHECK(canonical_certificate(g) == canonical_certificate(h));
    const auto other = testing::random_multigraph(rng, 1 + uniform_index(rng, 8), uniform_index(rng, 14), 2, 2);
    CHECK((canonical_certificate(g) == canonical_certificate(other)) == testing::brute_isomorphic(g, other));
  }
  const auto ab = testing::make_graph(true, {"p", "p"}, {{0, 1, "e"}});
  const auto ba = testing::make_graph(true, {"p", "p"}, {{1, 0, "e"}});
  const auto twice = testing::make_graph(true, {"p", "p"}, {{0, 1, "e"}, {0, 1, "e"}});
  const auto both = testing::make_graph(true, {"p", "p"}, {{0, 1, "e"}, {1, 0, "e"}});
  CHECK(canonical_certificate(ab) == canonical_certificate(ba));
  CHECK(canonical_certificate(ab) != canonical_certificate(twice));
  CHECK(canonical_certificate(twice) != canonical_certificate(both));
}

TEST_CASE("code file roundtrip") {
  Rng rng(2);
  std::vector<DFSCode> codes;
  for (int i = 0; i < 50; ++i) codes.push_back(min_dfs_code(testing::random_connected_graph(rng, 6, 3, 3, 3)));
  const auto path = testing::temp_path("codes.jsonl");
  write_codes(codes, path);
  CHECK(read_codes(path) == codes);
}
