#include <doctest.h>

#include <atomic>
#include <map>
#include <set>
#include <thread>

#include <httplib.h>

#include "generators.hpp"
#include "provsyn/error.hpp"
#include "provsyn/name_synth.hpp"

using namespace provsyn;

namespace {

using Triple = std::tuple<NodeId, std::string, NodeId>;

std::multiset<Triple> graph_triples(const ProvenanceGraph& g) {
  std::multiset<Triple> out;
  for (const auto& e : g.edges) out.emplace(e.src, e.type.str(), e.dst);
  return out;
}

void check_sequences(const ProvenanceGraph& g, const std::vector<NameSequence>& seqs) {
  const auto idx = id_index(g);
  std::set<Triple> seen;
  std::set<NodeId> nodes;
  for (const auto& s : seqs) {
    REQUIRE(!s.nodes.empty());
    REQUIRE(s.edges.size() + 1 == s.nodes.size());
    for (std::size_t i = 0; i < s.nodes.size(); ++i) {
      REQUIRE(idx.contains(s.nodes[i].ref));
      const auto& n = g.nodes[idx.at(s.nodes[i].ref)];
      CHECK(n.type == s.nodes[i].type);
      CHECK(n.name == s.nodes[i].name);
      nodes.insert(n.id);
      if (i > 0) seen.emplace(s.nodes[i - 1].ref, s.edges[i - 1].str(), s.nodes[i].ref);
    }
  }
  for (const auto& t : graph_triples(g)) CHECK(seen.contains(t));
  // and nothing that is not in the graph
  const auto all = graph_triples(g);
  for (const auto& t : seen) CHECK(all.contains(t));
  CHECK(nodes.size() == g.nodes.size());
}

ProvenanceGraph named_graph() {
  auto g = testing::make_graph(true, {"process", "process", "file", "file", "network"},
                               {{0, 1, "clone"}, {1, 2, "write"}, {0, 3, "read"}, {1, 4, "connect"}, {1, 3, "read"}},
                               "toy");
  const char* names[] = {"/usr/bin/bash", "/usr/bin/curl", "/tmp/payload.bin", "/etc/passwd", "10.0.0.5:443"};
  for (std::size_t i = 0; i < g.nodes.size(); ++i) g.nodes[i].name = names[i];
  return g;
}

ProvenanceGraph skeleton_of(ProvenanceGraph g) {
  for (auto& n : g.nodes) n.name = std::string(kNullName);
  return g;
}

/// Names each masked node "<call>.<position>".
struct CountingBackend : NameBackend {
  std::vector<NameSequence> seen;
  NameSequence generate(const NameSequence& seq) override {
    seen.push_back(seq);
    NameSequence out = seq;
    std::map<NodeId, std::string> chosen;
    for (std::size_t i = 0; i < out.nodes.size(); ++i) {
      if (out.nodes[i].name != kNullName) continue;
      auto [it, fresh] = chosen.try_emplace(out.nodes[i].ref, std::to_string(seen.size()) + "." + std::to_string(i));
      out.nodes[i].name = it->second;
    }
    return out;
  }
  std::string id() const override { return "counting"; }
};

struct BrokenBackend : NameBackend {
  int calls = 0;
  int failures;
  ErrorCode code;
  explicit BrokenBackend(int f, ErrorCode c = ErrorCode::LengthMismatch) : failures(f), code(c) {}
  NameSequence generate(const NameSequence& seq) override {
    ++calls;
    if (calls <= failures) {
      if (code != ErrorCode::LengthMismatch) throw Error(code, "simulated");
      NameSequence out = seq;
      out.nodes.pop_back();
      return out;
    }
    NameSequence out = seq;
    for (auto& n : out.nodes)
      if (n.name == kNullName) n.name = "ok";
    return out;
  }
  std::string id() const override { return "broken"; }
};

}  // namespace

TEST_CASE("rendering round-trips and templated parsing tolerates punctuation in names") {
  NameSequence s{{{NodeType("process"), "bash", 4}, {NodeType("file"), "[null]", 9}}, {EdgeType("read")}};
  const std::string text = render_sequence(s);
  CHECK(text == "(process, bash) -read-> (file, [null])");
  const auto back = parse_sequence(text);
  REQUIRE(back.nodes.size() == 2);
  CHECK(back.nodes[1].name == "[null]");
  CHECK(back.edges == s.edges);

  NameSequence odd = s;
  odd.nodes[0].name = "weird (x) -> y, z";
  odd.nodes[1].name = "a, b (c)";
  const auto parsed = parse_sequence("Sure: " + render_sequence(odd) + "\nthanks", &s);
  CHECK(parsed == odd);
  CHECK_THROWS_AS(parse_sequence("(process, bash) -read-> (file, x", &s), Error);
  CHECK_THROWS_AS(parse_sequence("(process, bash)", &s), Error);
  CHECK_THROWS_AS(parse_sequence("nonsense"), Error);
}

TEST_CASE("chain gives a single sequence") {
  const auto g = testing::make_graph(true, {"process", "process", "file"}, {{0, 1, "clone"}, {1, 2, "write"}});
  const auto seqs = extract_sequences(g);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].nodes.size() == 3);
  CHECK(seqs[0].edges.size() == 2);
}

TEST_CASE("self-loop node is a start point") {
  const auto g = testing::make_graph(true, {"process"}, {{0, 0, "fork"}});
  const auto seqs = extract_sequences(g);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].nodes.size() == 2);
  CHECK(seqs[0].nodes[0].ref == 0);
  CHECK(seqs[0].nodes[1].ref == 0);
}

TEST_CASE("branches are split at backtracks and cycles are covered") {
  // 0 -> 1 -> 2, 1 -> 3, and a 4 <-> 5 cycle with no zero in-degree node
  const auto g = testing::make_graph(true, {"p", "p", "f", "f", "p", "p"},
                                     {{0, 1, "c"}, {1, 2, "w"}, {1, 3, "w"}, {4, 5, "c"}, {5, 4, "c"}});
  const auto seqs = extract_sequences(g);
  REQUIRE(seqs.size() == 3);
  CHECK(render_sequence(seqs[0]) == "(p, node0) -c-> (p, node1) -w-> (f, node2)");
  CHECK(render_sequence(seqs[1]) == "(p, node1) -w-> (f, node3)");
  CHECK(render_sequence(seqs[2]) == "(p, node4) -c-> (p, node5) -c-> (p, node4)");
  check_sequences(g, seqs);
}

TEST_CASE("edge coverage on random multigraphs and order independence") {
  Rng rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 12));
    const int m = static_cast<int>(uniform_index(rng, 25));
    const auto g = testing::random_multigraph(rng, n, m, 3, 4);
    const auto seqs = extract_sequences(g);
    check_sequences(g, seqs);

    auto shuffled = g;
    std::shuffle(shuffled.nodes.begin(), shuffled.nodes.end(), rng);
    std::shuffle(shuffled.edges.begin(), shuffled.edges.end(), rng);
    CHECK(extract_sequences(shuffled) == seqs);
  }
}

TEST_CASE("QA pairs keep their invariants") {
  const auto g = named_graph();
  MaskingConfig cfg{300, 300, 0.5};
  const auto pairs = build_qa_dataset(g, cfg, 42, 1);
  REQUIRE(pairs.size() == 600);
  std::size_t full = 0;
  for (const auto& p : pairs) {
    REQUIRE(p.question.nodes.size() == p.answer.nodes.size());
    CHECK(p.question.edges == p.answer.edges);
    std::map<NodeId, bool> masked;
    std::size_t nulls = 0;
    for (std::size_t i = 0; i < p.question.nodes.size(); ++i) {
      const auto& q = p.question.nodes[i];
      const auto& a = p.answer.nodes[i];
      CHECK(q.type == a.type);
      CHECK(a.name != kNullName);
      const bool is_null = q.name == kNullName;
      nulls += is_null;
      if (!is_null) CHECK(q.name == a.name);
      auto [it, fresh] = masked.try_emplace(q.ref, is_null);
      if (!fresh) CHECK(it->second == is_null);
    }
    if (p.mode == MaskMode::Full) {
      ++full;
      CHECK(nulls == p.question.nodes.size());
    } else {
      CHECK(nulls > 0);
      CHECK(nulls < p.question.nodes.size());
    }
  }
  CHECK(full == 300);
  CHECK(build_qa_dataset(g, cfg, 42, 3).size() == pairs.size());
  const auto again = build_qa_dataset(g, cfg, 42, 3);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again[i].question == pairs[i].question);

  const auto path = testing::temp_path("qa.jsonl");
  write_qa_dataset(pairs, path);
  const auto read = read_qa_dataset(path);
  REQUIRE(read.size() == pairs.size());
  for (std::size_t i = 0; i < read.size(); ++i) {
    CHECK(render_sequence(read[i].question) == render_sequence(pairs[i].question));
    CHECK(read[i].mode == pairs[i].mode);
  }
}

TEST_CASE("QA dataset at the configured scale and near-total masking") {
  const auto g = named_graph();
  const auto pairs = build_qa_dataset(g, MaskingConfig{10000, 10000, 0.5}, 1, 2);
  CHECK(pairs.size() == 20000);
  CHECK(std::count_if(pairs.begin(), pairs.end(), [](const QAPair& p) { return p.mode == MaskMode::Full; }) == 10000);

  const auto chain = testing::make_graph(true, {"p", "p", "f"}, {{0, 1, "c"}, {1, 2, "w"}});
  int two = 0;
  for (const auto& p : build_qa_dataset(chain, MaskingConfig{0, 200, 0.99}, 3)) {
    const auto nulls = std::count_if(p.question.nodes.begin(), p.question.nodes.end(),
                                     [](const SeqNode& n) { return n.name == kNullName; });
    CHECK(nulls >= 1);
    CHECK(nulls <= 2);
    two += nulls == 2;
  }
  CHECK(two >= 190);
}

TEST_CASE("QA errors") {
  auto g = named_graph();
  CHECK_THROWS_AS(build_qa_dataset(g, MaskingConfig{0, 0, 0.5}, 0), Error);
  CHECK_THROWS_AS(build_qa_dataset(g, MaskingConfig{1, 1, 1.0}, 0), Error);
  g.nodes[2].name = std::string(kNullName);
  CHECK_THROWS_AS(build_qa_dataset(g, MaskingConfig{1, 1, 0.5}, 0), Error);
  const auto single = testing::make_graph(true, {"p"}, {});
  auto named = single;
  named.nodes[0].name = "x";
  CHECK(build_qa_dataset(named, MaskingConfig{2, 0, 0.5}, 0).size() == 2);
  try {
    build_qa_dataset(named, MaskingConfig{0, 1, 0.5}, 0);
    FAIL("expected InsufficientSequences");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSequences);
  }
  ProvenanceGraph empty;
  CHECK_THROWS_AS(build_qa_dataset(empty, MaskingConfig{1, 0, 0.5}, 0), Error);
}

TEST_CASE("n-gram backend memorizes a single name at zero temperature") {
  auto g = testing::make_graph(true, {"process", "file"}, {{0, 1, "read"}});
  g.nodes[0].name = "/bin/bash";
  g.nodes[1].name = "/etc/hosts";
  NgramBackend b(g, NgramConfig{.order = 4, .smoothing = 0.0, .temperature = 0.0});
  CHECK(b.sample_name(NodeType("process")) == "/bin/bash");
  CHECK(b.sample_name(NodeType("file")) == "/etc/hosts");
  try {
    b.sample_name(NodeType("network"));
    FAIL("expected EmptyTrainingNames");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTrainingNames);
  }
  CHECK_THROWS_AS(NgramBackend(skeleton_of(g), NgramConfig{}), Error);
}

TEST_CASE("unsmoothed n-gram output only contains training n-grams") {
  ProvenanceGraph g;
  const char* names[] = {"/usr/bin/python3", "/usr/sbin/sshd", "/usr/bin/vim", "/bin/sh", "/usr/lib/systemd/systemd"};
  for (int i = 0; i < 5; ++i) g.nodes.push_back(Node{i, NodeType("process"), names[i]});
  const int order = 3;
  std::set<std::string> grams;
  for (const auto* nm : names) {
    const std::string padded = std::string(order - 1, '^') + nm + "$";
    for (std::size_t i = 0; i + order <= padded.size(); ++i) grams.insert(padded.substr(i, order));
  }
  NgramBackend b(g, NgramConfig{.order = order, .smoothing = 0.0, .temperature = 1.0, .seed = 9});
  for (int k = 0; k < 300; ++k) {
    const auto name = b.sample_name(NodeType("process"));
    CHECK(name.front() == '/');
    const std::string padded = std::string(order - 1, '^') + name + "$";
    for (std::size_t i = 0; i + order <= padded.size(); ++i) {
      CAPTURE(name);
      CHECK(grams.contains(padded.substr(i, order)));
    }
  }
}

TEST_CASE("fill_names on one node and consistency across sequences") {
  auto one = testing::make_graph(true, {"process"}, {});
  one.nodes[0].name = std::string(kNullName);
  struct Echo : NameBackend {
    NameSequence generate(const NameSequence& s) override {
      auto o = s;
      for (auto& n : o.nodes) n.name = "x";
      return o;
    }
    std::string id() const override { return "echo"; }
  } echo;
  CHECK(fill_names(one, echo).nodes[0].name == "x");

  const auto sk = skeleton_of(named_graph());
  CountingBackend cb;
  FillStats st;
  const auto filled = fill_names(sk, cb, {}, &st);
  CHECK(is_fully_named(filled));
  for (const auto& n : filled.nodes) CHECK(n.name != kNullName);
  // node 1 is shared: it was named by the first call and shown to later ones
  CHECK(filled.nodes[1].name == "1.1");
  REQUIRE(cb.seen.size() >= 2);
  CHECK(cb.seen[1].nodes[0].name == "1.1");
  CHECK(st.backend_calls == cb.seen.size());
  check_sequences(filled, extract_sequences(filled));
}

TEST_CASE("malformed answers are retried then handed to the fallback") {
  const auto sk = skeleton_of(named_graph());
  BrokenBackend flaky(1);
  FillStats st;
  auto g = fill_names(sk, flaky, {}, &st);
  CHECK(st.retries == 1);
  CHECK(st.fallbacks == 0);
  CHECK(is_fully_named(g));

  BrokenBackend dead(1000);
  NgramBackend local(named_graph(), NgramConfig{});
  g = fill_names(sk, dead, FillOptions{.max_retries = 2, .fallback = &local}, &st);
  CHECK(st.fallbacks >= 1);
  CHECK(dead.calls == 3 * static_cast<int>(st.fallbacks));
  CHECK(g.nodes[0].name.front() == '/');

  try {
    fill_names(sk, dead);
    FAIL("expected BackendFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendFailure);
    CHECK(std::string(e.what()).find("sequence 0") != std::string::npos);
  }
  BrokenBackend down(1000, ErrorCode::Transport);
  fill_names(sk, down, FillOptions{.max_retries = 2, .fallback = &local}, &st);
  CHECK(down.calls == static_cast<int>(st.fallbacks));
}

TEST_CASE("n-gram fill keeps file names path-like") {
  ProvenanceGraph real;
  Rng rng(3);
  const char* dirs[] = {"/usr/bin/", "/usr/lib/", "/etc/", "/var/log/", "/tmp/"};
  for (int i = 0; i < 60; ++i)
    real.nodes.push_back(Node{i, NodeType("file"), std::string(dirs[i % 5]) + "f" + std::to_string(i * 37 % 101)});
  real.nodes.push_back(Node{60, NodeType("process"), "/usr/bin/bash"});
  NgramBackend b(real, NgramConfig{.order = 3, .smoothing = 0.0, .seed = 4});
  auto sk = testing::make_graph(true, {"process", "file", "file", "file"}, {{0, 1, "read"}, {0, 2, "write"}, {0, 3, "read"}});
  sk = skeleton_of(sk);
  const auto g = fill_names(sk, b);
  for (const auto& n : g.nodes)
    if (n.type == "file") CHECK(n.name.front() == '/');
}

namespace {

struct MockServer {
  httplib::Server srv;
  std::thread th;
  int port = 0;
  std::atomic<int> hits{0};
  std::vector<std::string> bodies;
  std::mutex mu;

  template <class Handler>
  explicit MockServer(Handler h) {
    srv.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu);
        bodies.push_back(req.body);
      }
      h(++hits, req, res);
    });
    port = srv.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  ~MockServer() {
    srv.stop();
    th.join();
  }
  LlmConfig config() const {
    LlmConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.backoff_ms = 1;
    c.timeout_seconds = 5;
    return c;
  }
};

std::string answer_for(const std::string& body, bool drop_last) {
  const auto j = nlohmann::json::parse(body);
  std::string text = j["messages"][1]["content"].get<std::string>();
  int k = 0;
  for (auto pos = text.find("[null]"); pos != std::string::npos; pos = text.find("[null]")) {
    text.replace(pos, 6, "gen" + std::to_string(k++));
  }
  if (drop_last) text = text.substr(0, text.rfind(" -"));
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

}  // namespace

TEST_CASE("llm backend against a mock endpoint") {
  MockServer mock([](int, const httplib::Request& req, httplib::Response& res) {
    res.set_content(answer_for(req.body, false), "application/json");
  });
  LlmBackend llm(mock.config());
  const auto sk = skeleton_of(named_graph());
  const auto g = fill_names(sk, llm);
  CHECK(is_fully_named(g));
  for (const auto& n : g.nodes) CHECK(n.name.rfind("gen", 0) == 0);

  const auto first = extract_sequences(sk)[0];
  const auto body = nlohmann::json::parse(mock.bodies.at(0));
  CHECK(body["messages"][1]["content"] == render_sequence(first));
  CHECK(body["messages"][1]["content"].get<std::string>().find("[null]") != std::string::npos);
  CHECK(body["temperature"] == 1.5);
  CHECK(body["max_tokens"] == 2048);
}

TEST_CASE("llm backend retries malformed answers, rate limits and reports transport errors") {
  MockServer mock([](int hit, const httplib::Request& req, httplib::Response& res) {
    if (hit == 1) {
      res.status = 429;
      return;
    }
    res.set_content(answer_for(req.body, hit == 2), "application/json");
  });
  LlmBackend llm(mock.config());
  const auto seq = extract_sequences(skeleton_of(named_graph()))[0];
  CHECK_THROWS_AS(llm.generate(seq), Error);  // 429 then a short answer
  CHECK(mock.hits == 2);
  CHECK_NOTHROW(llm.generate(seq));

  const auto sk = skeleton_of(named_graph());
  MockServer flaky([](int hit, const httplib::Request& req, httplib::Response& res) {
    res.set_content(answer_for(req.body, hit == 1), "application/json");
  });
  LlmBackend llm2(flaky.config());
  FillStats st;
  CHECK(is_fully_named(fill_names(sk, llm2, {}, &st)));
  CHECK(st.retries == 1);

  auto cfg = mock.config();
  cfg.base_url = "http://127.0.0.1:1";
  cfg.max_attempts = 2;
  LlmBackend dead(cfg);
  try {
    dead.generate(seq);
    FAIL("expected Transport");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Transport);
  }
  MockServer limited([](int, const httplib::Request&, httplib::Response& res) { res.status = 429; });
  LlmBackend throttled(limited.config());
  try {
    throttled.generate(seq);
    FAIL("expected RateLimited");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RateLimited);
  }
  CHECK(limited.hits == 4);
}
