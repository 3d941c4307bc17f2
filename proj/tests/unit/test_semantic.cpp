#include <doctest.h>

#include <cmath>
#include <set>

#include "generators.hpp"
#include "provsyn/error.hpp"
#include "provsyn/semantic.hpp"

using namespace provsyn;

namespace {

SemanticConfig tiny_config() {
  SemanticConfig c;
  c.text_dim = 8;
  c.graph_dim = 5;
  c.hidden = 6;
  c.layers = 2;
  c.seed = 3;
  return c;
}

ProvenanceGraph named_graph() {
  auto g = testing::make_graph(true, {"process", "process", "file", "file", "network"},
                               {{0, 1, "clone"}, {0, 2, "write"}, {1, 3, "read"}, {1, 4, "connect"}, {0, 3, "write"}});
  const char* names[] = {"bash", "sshd", "/etc/passwd", "/var/log/auth.log", "10.0.0.1:22"};
  for (std::size_t i = 0; i < g.nodes.size(); ++i) g.nodes[i].name = names[i];
  return g;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1e-4, std::abs(a[i]) + std::abs(b[i])));
  return worst;
}

SemanticConfig toy_config() {
  SemanticConfig c;
  c.clusters = 3;
  c.encoder_epochs = 150;
  c.discriminator_epochs = 150;
  c.learning_rate = 1e-3;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("hashing encoder is deterministic and normalized") {
  const HashingEncoder enc(64, 3);
  const auto a = enc.encode("/usr/bin/bash");
  CHECK(a.size() == 64);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK((a - enc.encode("/usr/bin/bash")).norm() == 0.0);
  CHECK((a - enc.encode("/usr/bin/zsh")).norm() > 0.1);
  CHECK(enc.encode("").norm() == 0.0);
}

TEST_CASE("attention weights sum to one at every node and layer") {
  Rng rng(4);
  auto g = testing::random_multigraph(rng, 25, 60, 3, 3);
  const auto m = init_semantic_model(tiny_config());
  const auto ag = attention_graph(g);
  const auto tr = gat_forward(m.encoder, ag, node_features(g, *m.text_encoder()));
  CHECK(tr.output.rows() == 25);
  CHECK(tr.output.cols() == 5);
  for (const auto& layer : tr.alpha)
    for (const auto& node : layer) {
      double s = 0.0;
      for (double a : node) {
        CHECK(a >= 0.0);
        s += a;
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("graph encoder gradient matches finite differences") {
  const auto g = named_graph();
  auto m = init_semantic_model(tiny_config());
  const auto ag = attention_graph(g);
  const auto x = node_features(g, *m.text_encoder());
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {0, 2}, {1, 4}, {2, 4}, {3, 4}};
  const std::vector<double> labels{1, 1, 1, 0, 0};
  GraphEncoder grad = m.encoder;
  link_loss(m.encoder, ag, x, pairs, labels, &grad);
  const auto analytic = grad.flatten();
  auto params = m.encoder.flatten();
  std::vector<double> numeric(params.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    p[i] += h;
    m.encoder.assign(p);
    const double up = link_loss(m.encoder, ag, x, pairs, labels, nullptr);
    p[i] -= 2 * h;
    m.encoder.assign(p);
    const double down = link_loss(m.encoder, ag, x, pairs, labels, nullptr);
    numeric[i] = (up - down) / (2 * h);
  }
  CHECK(max_rel_error(analytic, numeric) < 1e-4);
}

TEST_CASE("discriminator gradient matches finite differences and outputs stay in [0,1]") {
  auto m = init_semantic_model(tiny_config());
  Rng rng(8);
  Eigen::MatrixXd z(7, 8 + 2 * 5);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = 2.0 * uniform01(rng) - 1.0;
  Eigen::VectorXd y(7);
  y << 1, 0, 1, 1, 0, 0, 1;
  Discriminator grad = m.discriminator;
  discriminator_loss(m.discriminator, z, y, &grad);
  const auto analytic = grad.flatten();
  auto params = m.discriminator.flatten();
  std::vector<double> numeric(params.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    p[i] += h;
    m.discriminator.assign(p);
    const double up = discriminator_loss(m.discriminator, z, y, nullptr);
    p[i] -= 2 * h;
    m.discriminator.assign(p);
    const double down = discriminator_loss(m.discriminator, z, y, nullptr);
    numeric[i] = (up - down) / (2 * h);
  }
  CHECK(max_rel_error(analytic, numeric) < 1e-4);

  m.discriminator.b2 = 1e4;
  const auto out = m.discriminator.forward(z);
  for (Eigen::Index i = 0; i < out.size(); ++i) CHECK((out[i] >= 0.0 && out[i] <= 1.0));
  CHECK(std::isfinite(discriminator_loss(m.discriminator, z, Eigen::VectorXd::Zero(7), nullptr)));
}

TEST_CASE("subject-object inversion swaps the endpoints") {
  const SemanticTriple pos{"bash", EdgeType("clone"), "sshd", 1, 4, 9};
  const auto neg = invert(pos);
  CHECK(neg.s == "sshd");
  CHECK(neg.e == EdgeType("clone"));
  CHECK(neg.t == "bash");
  CHECK(neg.s_node == 9);
  CHECK(neg.t_node == 4);
  CHECK(pos.sentence() == "bash clone sshd");
}

TEST_CASE("predicate replacement never stays within a category") {
  const auto cmap = default_category_map(read_manifest(PROVSYN_SOURCE_DIR "/manifests/cadets.json"));
  REQUIRE(cmap.num_categories() >= 2);
  Rng rng(1);
  std::vector<EdgeType> types;
  for (const auto& [e, c] : cmap.category) types.push_back(e);
  std::size_t within = 0;
  for (int i = 0; i < 10000; ++i) {
    const SemanticTriple pos{"a", types[uniform_index(rng, types.size())], "b"};
    const auto neg = replace_predicate(pos, cmap, rng);
    REQUIRE(neg.has_value());
    within += cmap.category.at(neg->e) == cmap.category.at(pos.e);
    CHECK(neg->s == pos.s);
    CHECK(neg->t == pos.t);
  }
  CHECK(within == 0);

  CategoryMap one;
  one.category[EdgeType("read")] = "x";
  one.category[EdgeType("write")] = "x";
  CHECK_FALSE(replace_predicate(SemanticTriple{"a", EdgeType("read"), "b"}, one, rng).has_value());
}

TEST_CASE("entity substitution never stays within a cluster") {
  Rng grng(2);
  const auto g = testing::separable_semantic_graph(grng, 20, 40, 15, 200);
  const HashingEncoder enc;
  std::vector<std::string> names;
  for (const auto& n : g.nodes) names.push_back(n.name);
  const auto clusters = cluster_names(names, enc, 5, 9);
  REQUIRE(clusters.k == 5);
  CHECK(clusters.cluster_of.size() == names.size());
  const auto pool = entity_pool(g, clusters);
  const auto triples = edge_triples(g);
  Rng rng(3);
  std::size_t within = 0, subject = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto& pos = triples[uniform_index(rng, triples.size())];
    const auto neg = substitute_entity(pos, clusters, pool, rng);
    REQUIRE(neg.has_value());
    const bool s_changed = neg->s != pos.s;
    CHECK(s_changed != (neg->t != pos.t));
    CHECK(neg->e == pos.e);
    subject += s_changed;
    const auto& before = s_changed ? pos.s : pos.t;
    const auto& after = s_changed ? neg->s : neg->t;
    within += clusters.cluster_of.at(before) == clusters.cluster_of.at(after);
    const NodeId nid = s_changed ? neg->s_node : neg->t_node;
    CHECK(g.nodes[static_cast<std::size_t>(nid)].name == after);
  }
  CHECK(within == 0);
  CHECK(std::abs(static_cast<double>(subject) / 10000.0 - 0.5) < 0.03);
}

TEST_CASE("contrastive set is exactly balanced and mutates one component") {
  Rng grng(5);
  const auto g = testing::separable_semantic_graph(grng, 15, 30, 10, 300);
  const auto cmap = default_category_map(read_manifest(PROVSYN_SOURCE_DIR "/manifests/toy.json"));
  std::vector<std::string> names;
  for (const auto& n : g.nodes) names.push_back(n.name);
  const auto clusters = cluster_names(names, HashingEncoder(), 3, 1);
  ContrastiveStats st;
  const auto set = build_contrastive_set(g, cmap, clusters, 17, &st);
  REQUIRE(set.size() == 2 * g.edges.size());
  CHECK(st.soi + st.pr + st.es == g.edges.size());
  CHECK(st.soi > 50);
  CHECK(st.pr > 50);
  CHECK(st.es > 50);
  for (std::size_t i = 0; i < set.size(); i += 2) {
    const auto& pos = set[i];
    const auto& neg = set[i + 1];
    CHECK(pos.label == 1);
    CHECK(neg.label == 0);
    const bool soi = neg.s == pos.t && neg.t == pos.s && neg.e == pos.e;
    const bool pr = neg.s == pos.s && neg.t == pos.t && cmap.category.at(neg.e) != cmap.category.at(pos.e);
    const int changed = (neg.s != pos.s) + (neg.t != pos.t);
    const bool es = neg.e == pos.e && changed == 1;
    CHECK((soi || pr || es));
  }
  CHECK(build_contrastive_set(g, cmap, clusters, 17) == set);
}

TEST_CASE("degenerate category map and clusters fall back with warnings") {
  auto g = testing::make_graph(true, {"p", "p"}, {{0, 0, "read"}, {0, 1, "read"}});
  g.nodes[0].name = "same";
  g.nodes[1].name = "same";
  CategoryMap one;
  one.category[EdgeType("read")] = "x";
  ClusterAssignment single;
  single.cluster_of["same"] = 0;
  single.k = 1;
  ContrastiveStats st;
  const auto set = build_contrastive_set(g, one, single, 1, &st);
  CHECK(set.empty());
  CHECK(st.warnings.size() == 3);

  g.nodes[1].name = kNullName;
  CHECK_THROWS_AS(build_contrastive_set(g, one, single, 1), Error);
}

TEST_CASE("toy validator separates positives from corruptions") {
  Rng grng(11);
  const auto g = testing::separable_semantic_graph(grng, 30, 60, 20, 600);
  const auto cmap = default_category_map(read_manifest(PROVSYN_SOURCE_DIR "/manifests/toy.json"));
  TrainReport rep;
  const auto model = train_validator(g, cmap, toy_config(), &rep);
  CHECK(rep.holdout_triples + rep.train_triples == 1200);
  CHECK(rep.holdout_triples == 240);
  CHECK(rep.holdout_accuracy >= 0.9);

  const auto pos = score_graph(model, g);
  CHECK(pos.triples == 600);
  CHECK(pos.accuracy >= 0.9);

  ProvenanceGraph flipped = g;
  for (auto& e : flipped.edges) std::swap(e.src, e.dst);
  CHECK(score_graph(model, flipped).accuracy <= 0.1);

  ProvenanceGraph empty = g;
  empty.edges.clear();
  const auto none = score_graph(model, empty);
  CHECK(none.empty);
  CHECK(none.accuracy == 0.0);

  const auto path = testing::temp_path("sem.ckpt");
  save_semantic_model(model, path);
  const auto back = load_semantic_model(path);
  CHECK(back.encoder.flatten() == model.encoder.flatten());
  CHECK(back.discriminator.flatten() == model.discriminator.flatten());
  CHECK(score_graph(back, g).mean_score == doctest::Approx(pos.mean_score).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves accuracy at its initial value") {
  Rng grng(12);
  const auto g = testing::separable_semantic_graph(grng, 10, 20, 8, 120);
  const auto cmap = default_category_map(read_manifest(PROVSYN_SOURCE_DIR "/manifests/toy.json"));
  auto cfg = toy_config();
  cfg.learning_rate = 0.0;
  cfg.encoder_epochs = 5;
  cfg.discriminator_epochs = 5;
  TrainReport rep;
  const auto m = train_validator(g, cmap, cfg, &rep);
  CHECK(rep.holdout_accuracy == rep.initial_holdout_accuracy);
  CHECK(m.discriminator.flatten() == init_semantic_model(cfg).discriminator.flatten());
}

TEST_CASE("scoring requires names and checkpoints are validated") {
  auto g = named_graph();
  const auto m = init_semantic_model(tiny_config());
  g.nodes[2].name = kNullName;
  try {
    score_graph(m, g);
    FAIL("expected UnnamedNodes");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnnamedNodes);
  }
  const auto path = testing::temp_path("bad.ckpt");
  write_text_file(path, R"({"format":"other","version":1})");
  CHECK_THROWS_AS(load_semantic_model(path), Error);

  SemanticConfig bad;
  bad.holdout_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  const auto back = semantic_config_from_json(to_json(tiny_config()));
  CHECK(back.graph_dim == 5);
}

TEST_CASE("category maps roundtrip and cover the manifest") {
  const auto man = read_manifest(PROVSYN_SOURCE_DIR "/manifests/nodlink.json");
  const auto cmap = default_category_map(man);
  cmap.validate(man);
  const auto back = category_map_from_json(to_json(cmap, man.name));
  CHECK(back.category == cmap.category);
  CHECK(cmap.category.at(EdgeType("read")) == "read");
  CHECK(cmap.category.at(EdgeType("connect")) == "network");
  CHECK(cmap.category.at(EdgeType("fork")) == "process");
  CategoryMap partial = cmap;
  partial.category.erase(EdgeType("read"));
  CHECK_THROWS_AS(partial.validate(man), Error);
}
