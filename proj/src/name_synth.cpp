#include "provsyn/name_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"

namespace provsyn {

using nlohmann::json;

namespace {

bool is_null_name(const std::string& s) { return s == kNullName; }

Error parse_error(const std::string& m) { return Error(ErrorCode::ParseFailure, "sequence text: " + m); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string render_sequence(const NameSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.nodes.size(); ++i) {
    if (i > 0) out += " -" + seq.edges[i - 1].str() + "-> ";
    out += "(" + seq.nodes[i].type.str() + ", " + seq.nodes[i].name + ")";
  }
  return out;
}

NameSequence parse_sequence(const std::string& raw, const NameSequence* templ) {
  NameSequence seq;
  if (templ) {
    if (templ->nodes.empty()) throw parse_error("empty template");
    const std::string head = "(" + templ->nodes[0].type.str() + ", ";
    auto pos = raw.find(head);
    if (pos == std::string::npos) throw parse_error("first node '" + head + "' not found");
    pos += head.size();
    for (std::size_t i = 0; i < templ->nodes.size(); ++i) {
      std::string name;
      if (i + 1 < templ->nodes.size()) {
        const std::string delim =
            ") -" + templ->edges[i].str() + "-> (" + templ->nodes[i + 1].type.str() + ", ";
        const auto end = raw.find(delim, pos);
        if (end == std::string::npos) throw parse_error("missing node " + std::to_string(i + 1));
        name = raw.substr(pos, end - pos);
        pos = end + delim.size();
      } else {
        auto eol = raw.find('\n', pos);
        const std::string rest = trim(raw.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos));
        if (rest.empty() || rest.back() != ')') throw parse_error("unterminated last node");
        name = rest.substr(0, rest.size() - 1);
      }
      if (name.find('\n') != std::string::npos) throw parse_error("line break inside node " + std::to_string(i));
      seq.nodes.push_back(SeqNode{templ->nodes[i].type, name, templ->nodes[i].ref});
    }
    seq.edges = templ->edges;
    return seq;
  }

  static const std::regex delim(R"(\) -([^\s()]+)-> \()");
  const std::string text = trim(raw);
  if (text.size() < 2 || text.front() != '(' || text.back() != ')') throw parse_error("expected '(type, name) ...'");
  std::size_t pos = 1;
  auto read_node = [&](std::size_t end) {
    const std::string body = text.substr(pos, end - pos);
    const auto comma = body.find(", ");
    if (comma == std::string::npos || comma == 0) throw parse_error("node without 'type, name'");
    seq.nodes.push_back(SeqNode{NodeType(body.substr(0, comma)), body.substr(comma + 2),
                                static_cast<NodeId>(seq.nodes.size())});
  };
  auto it = std::sregex_iterator(text.begin(), text.end(), delim);
  for (; it != std::sregex_iterator(); ++it) {
    const auto at = static_cast<std::size_t>(it->position(0));
    if (at < pos) continue;
    read_node(at);
    seq.edges.emplace_back((*it)[1].str());
    pos = at + static_cast<std::size_t>(it->length(0));
  }
  read_node(text.size() - 1);
  return seq;
}

std::vector<NameSequence> extract_sequences(const ProvenanceGraph& g) {
  const auto idx = id_index(g);
  const std::size_t n = g.nodes.size();
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indeg(n, 0);
  std::vector<char> self_loop(n, 0);
  std::vector<std::size_t> src(g.edges.size()), dst(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    src[e] = idx.at(g.edges[e].src);
    dst[e] = idx.at(g.edges[e].dst);
    out[src[e]].push_back(e);
    ++indeg[dst[e]];
    if (src[e] == dst[e]) self_loop[src[e]] = 1;
  }
  for (auto& list : out)
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = g.edges[a];
      const auto& eb = g.edges[b];
      return std::tie(ea.dst, ea.type) < std::tie(eb.dst, eb.type);
    });

  std::vector<std::size_t> by_id(n);
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return g.nodes[a].id < g.nodes[b].id; });

  std::vector<NameSequence> seqs;
  std::vector<char> covered(g.edges.size(), 0);
  std::vector<std::size_t> stamp(n, 0);
  std::size_t traversal = 0;
  auto seq_node = [&](std::size_t i) { return SeqNode{g.nodes[i].type, g.nodes[i].name, g.nodes[i].id}; };

  auto traverse = [&](std::size_t s) {
    ++traversal;
    stamp[s] = traversal;
    if (out[s].empty()) {
      seqs.push_back(NameSequence{{seq_node(s)}, {}});
      return;
    }
    NameSequence cur;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{s, 0}};
    while (!stack.empty()) {
      const std::size_t u = stack.back().first;
      const std::size_t k = stack.back().second;
      if (k == out[u].size()) {
        stack.pop_back();
        continue;
      }
      ++stack.back().second;
      const std::size_t e = out[u][k];
      const std::size_t v = dst[e];
      covered[e] = 1;
      if (cur.nodes.empty()) cur.nodes.push_back(seq_node(u));
      cur.edges.push_back(g.edges[e].type);
      cur.nodes.push_back(seq_node(v));
      if (stamp[v] == traversal || out[v].empty()) {
        stamp[v] = traversal;
        seqs.push_back(std::move(cur));
        cur = {};
        continue;
      }
      stamp[v] = traversal;
      stack.emplace_back(v, 0);
    }
  };

  for (const auto i : by_id)
    if (indeg[i] == 0 || self_loop[i]) traverse(i);
  for (const auto i : by_id)
    if (std::any_of(out[i].begin(), out[i].end(), [&](std::size_t e) { return !covered[e]; })) traverse(i);
  return seqs;
}

void MaskingConfig::validate() const {
  if (full_count == 0 && partial_count == 0)
    throw Error(ErrorCode::InvalidConfig, "masking: full_count and partial_count are both zero");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw Error(ErrorCode::InvalidConfig, "masking: mask_rate must be in (0,1)");
}

json to_json(const MaskingConfig& c) {
  return json{{"full_count", c.full_count}, {"partial_count", c.partial_count}, {"mask_rate", c.mask_rate}};
}

MaskingConfig masking_config_from_json(const json& j) {
  MaskingConfig c;
  c.full_count = j.value("full_count", c.full_count);
  c.partial_count = j.value("partial_count", c.partial_count);
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.validate();
  return c;
}

std::vector<QAPair> build_qa_dataset(const ProvenanceGraph& real, const MaskingConfig& cfg, std::uint64_t seed,
                                     std::size_t workers) {
  cfg.validate();
  for (const auto& n : real.nodes)
    if (n.name.empty() || is_null_name(n.name))
      throw Error(ErrorCode::EmptyName, "node " + std::to_string(n.id) + " has no name");
  const auto seqs = extract_sequences(real);
  if (seqs.empty()) throw Error(ErrorCode::InsufficientSequences, "graph yields no sequences");

  std::vector<std::size_t> full_order(seqs.size());
  std::iota(full_order.begin(), full_order.end(), 0);
  std::vector<std::size_t> partial_order;
  std::vector<std::vector<NodeId>> refs(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::set<NodeId> r;
    for (const auto& n : seqs[i].nodes) r.insert(n.ref);
    refs[i].assign(r.begin(), r.end());
    if (refs[i].size() >= 2) partial_order.push_back(i);
  }
  if (cfg.partial_count > 0 && partial_order.empty())
    throw Error(ErrorCode::InsufficientSequences, "no sequence has two distinct nodes to mask partially");
  Rng order_rng(derive_seed(seed, 0));
  std::shuffle(full_order.begin(), full_order.end(), order_rng);
  std::shuffle(partial_order.begin(), partial_order.end(), order_rng);

  std::vector<QAPair> pairs(cfg.full_count + cfg.partial_count);
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    QAPair& p = pairs[i];
    if (i < cfg.full_count) {
      p.mode = MaskMode::Full;
      p.answer = seqs[full_order[i % full_order.size()]];
      p.question = p.answer;
      for (auto& n : p.question.nodes) n.name = std::string(kNullName);
      return;
    }
    const std::size_t j = i - cfg.full_count;
    const std::size_t s = partial_order[j % partial_order.size()];
    p.mode = MaskMode::Partial;
    p.answer = seqs[s];
    Rng rng(derive_seed(seed, 1, j));
    std::set<NodeId> masked;
    do {
      masked.clear();
      for (const auto r : refs[s])
        if (uniform01(rng) < cfg.mask_rate) masked.insert(r);
    } while (masked.empty() || masked.size() == refs[s].size());
    p.question = p.answer;
    for (auto& n : p.question.nodes)
      if (masked.contains(n.ref)) n.name = std::string(kNullName);
  });
  return pairs;
}

json qa_to_json(const QAPair& p) {
  return json{{"mode", p.mode == MaskMode::Full ? "full" : "partial"},
              {"question", render_sequence(p.question)},
              {"answer", render_sequence(p.answer)}};
}

void write_qa_dataset(const std::vector<QAPair>& pairs, const std::string& path) {
  JsonlWriter w;
  for (const auto& p : pairs) w.add(qa_to_json(p));
  w.write(path);
}

std::vector<QAPair> read_qa_dataset(const std::string& path) {
  std::vector<QAPair> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    QAPair p;
    const std::string mode = j.value("mode", "");
    if (mode != "full" && mode != "partial") throw Error(ErrorCode::MalformedFile, where + ": bad mode");
    p.mode = mode == "full" ? MaskMode::Full : MaskMode::Partial;
    try {
      p.answer = parse_sequence(j.at("answer").get<std::string>());
      p.question = parse_sequence(j.at("question").get<std::string>(), &p.answer);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedFile, where + ": " + e.what());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedFile, where + ": " + e.what());
    }
    out.push_back(std::move(p));
  });
  return out;
}

// ---------------------------------------------------------------------------
// n-gram backend

namespace {
constexpr char kBos = '\x02';
constexpr char kEos = '\x03';
}  // namespace

NgramBackend::NgramBackend(const ProvenanceGraph& real, NgramConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (cfg_.order < 1) throw Error(ErrorCode::InvalidConfig, "ngram order must be >= 1");
  if (cfg_.smoothing < 0.0) throw Error(ErrorCode::InvalidConfig, "ngram smoothing must be >= 0");
  if (cfg_.max_length == 0) throw Error(ErrorCode::InvalidConfig, "ngram max_length must be positive");
  const std::size_t ctx_len = static_cast<std::size_t>(cfg_.order - 1);
  for (const auto& n : real.nodes) {
    if (n.name.empty() || is_null_name(n.name)) continue;
    auto& m = models_[n.type];
    const std::string padded = std::string(ctx_len, kBos) + n.name + kEos;
    for (std::size_t i = ctx_len; i < padded.size(); ++i) {
      const std::string ctx = padded.substr(i - ctx_len, ctx_len);
      m.counts[ctx][padded[i]] += 1.0;
      m.totals[ctx] += 1.0;
      if (padded[i] != kEos) m.alphabet.push_back(padded[i]);
    }
  }
  if (models_.empty()) throw Error(ErrorCode::EmptyTrainingNames, "no named nodes to train on");
  for (auto& [t, m] : models_) {
    std::sort(m.alphabet.begin(), m.alphabet.end());
    m.alphabet.erase(std::unique(m.alphabet.begin(), m.alphabet.end()), m.alphabet.end());
  }
}

std::string NgramBackend::sample_name(const NodeType& type) {
  auto it = models_.find(type);
  if (it == models_.end()) throw Error(ErrorCode::EmptyTrainingNames, "no training names for type '" + type.str() + "'");
  const auto& m = it->second;
  std::string symbols = m.alphabet;
  symbols.push_back(kEos);
  const bool greedy = cfg_.temperature <= 1e-6;
  const std::size_t ctx_len = static_cast<std::size_t>(cfg_.order - 1);
  std::vector<double> w(symbols.size());

  for (int attempt = 0;; ++attempt) {
    std::string ctx(ctx_len, kBos), name;
    while (name.size() < cfg_.max_length) {
      const auto cit = m.counts.find(ctx);
      const double total = cit == m.counts.end() ? 0.0 : m.totals.at(ctx);
      for (std::size_t s = 0; s < symbols.size(); ++s) {
        double c = 0.0;
        if (cit != m.counts.end()) {
          auto f = cit->second.find(symbols[s]);
          if (f != cit->second.end()) c = f->second;
        }
        const double denom = total + cfg_.smoothing * static_cast<double>(symbols.size());
        w[s] = denom > 0.0 ? (c + cfg_.smoothing) / denom : 1.0 / static_cast<double>(symbols.size());
      }
      std::size_t pick = 0;
      if (greedy) {
        pick = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
      } else {
        double sum = 0.0;
        for (auto& x : w) {
          x = x > 0.0 ? std::pow(x, 1.0 / cfg_.temperature) : 0.0;
          sum += x;
        }
        double r = uniform01(rng_) * sum;
        pick = symbols.size() - 1;
        for (std::size_t s = 0; s < w.size(); ++s) {
          if (w[s] > 0.0 && r < w[s]) {
            pick = s;
            break;
          }
          r -= w[s];
        }
      }
      const char c = symbols[pick];
      if (c == kEos) break;
      name.push_back(c);
      if (ctx_len > 0) ctx = ctx.substr(1) + c;
    }
    if (!name.empty() && !is_null_name(name)) return name;
    if (greedy || attempt >= 16) return type.str();
  }
}

NameSequence NgramBackend::generate(const NameSequence& seq) {
  NameSequence out = seq;
  std::map<NodeId, std::string> chosen;
  for (auto& n : out.nodes) {
    if (!is_null_name(n.name)) continue;
    auto [it, fresh] = chosen.try_emplace(n.ref);
    if (fresh) it->second = sample_name(n.type);
    n.name = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequential filling

void check_answer(const NameSequence& q, const NameSequence& a) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::LengthMismatch, "backend answer: " + m); };
  if (a.nodes.size() != q.nodes.size() || a.edges.size() != q.edges.size())
    fail("expected " + std::to_string(q.nodes.size()) + " nodes, got " + std::to_string(a.nodes.size()));
  if (a.edges != q.edges) fail("edge types changed");
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    if (a.nodes[i].type != q.nodes[i].type) fail("node type changed at position " + std::to_string(i));
    const auto& name = a.nodes[i].name;
    if (name.empty() || is_null_name(name)) fail("position " + std::to_string(i) + " left unnamed");
    if (!is_null_name(q.nodes[i].name) && name != q.nodes[i].name)
      fail("existing name changed at position " + std::to_string(i));
  }
}

ProvenanceGraph fill_names(const ProvenanceGraph& skeleton, NameBackend& backend, const FillOptions& opts,
                           FillStats* stats) {
  ProvenanceGraph g = skeleton;
  const auto idx = id_index(g);
  const auto seqs = extract_sequences(g);
  FillStats local;
  local.sequences = seqs.size();

  for (std::size_t si = 0; si < seqs.size(); ++si) {
    NameSequence q = seqs[si];
    bool open = false;
    for (auto& n : q.nodes) {
      n.name = g.nodes[idx.at(n.ref)].name;
      open |= is_null_name(n.name);
    }
    if (!open) continue;

    auto ask = [&](NameBackend& b) {
      ++local.backend_calls;
      NameSequence a = b.generate(q);
      check_answer(q, a);
      return a;
    };
    const std::string where = "sequence " + std::to_string(si) + " (" + backend.id() + ")";
    std::optional<NameSequence> answer;
    std::string last_error;
    for (int attempt = 0; attempt <= opts.max_retries && !answer; ++attempt) {
      if (attempt > 0) ++local.retries;
      try {
        answer = ask(backend);
      } catch (const Error& e) {
        last_error = e.what();
        const bool malformed = e.code() == ErrorCode::LengthMismatch || e.code() == ErrorCode::ParseFailure;
        if (!malformed) break;
      }
    }
    if (!answer) {
      if (!opts.fallback) throw Error(ErrorCode::BackendFailure, where + ": " + last_error);
      ++local.fallbacks;
      try {
        answer = ask(*opts.fallback);
      } catch (const Error& e) {
        throw Error(ErrorCode::BackendFailure, where + ": " + last_error + "; fallback: " + e.what());
      }
    }
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      auto& name = g.nodes[idx.at(q.nodes[i].ref)].name;
      if (is_null_name(name)) name = answer->nodes[i].name;
    }
  }
  if (stats) *stats = local;
  return g;
}

}  // namespace provsyn
