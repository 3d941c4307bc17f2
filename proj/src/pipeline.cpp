#include "provsyn/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "provsyn/dfs_code.hpp"
#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"

namespace provsyn {

using nlohmann::json;
namespace fs = std::filesystem;

std::string config_hash(const json& j) { return sha256_hex(j.dump()); }

void write_meta(const std::string& path, const std::string& hash, const std::string& stage) {
  const json meta{{"config_hash", hash}, {"sha256", sha256_file(path)}, {"stage", stage}};
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

std::optional<std::string> verify_meta(const std::string& path, const std::string& hash) {
  if (!fs::exists(path)) return path + ": missing";
  const std::string meta_path = path + ".meta.json";
  if (!fs::exists(meta_path)) return meta_path + ": missing";
  const json meta = read_json_file(meta_path);
  if (meta.value("config_hash", "") != hash) return path + ": produced by a different configuration";
  if (meta.value("sha256", "") != sha256_file(path)) return path + ": contents changed since it was written";
  return std::nullopt;
}

// ---------------------------------------------------------------------------

json to_json(const GenerateConfig& c) {
  return json{{"count", c.count},
              {"temperature", c.sample.temperature},
              {"max_edges", c.sample.max_edges},
              {"strict", c.sample.strict},
              {"max_attempts", c.max_attempts}};
}

GenerateConfig generate_config_from_json(const json& j) {
  GenerateConfig c;
  c.count = j.value("count", c.count);
  c.sample.temperature = j.value("temperature", c.sample.temperature);
  c.sample.max_edges = j.value("max_edges", c.sample.max_edges);
  c.sample.strict = j.value("strict", c.sample.strict);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  if (c.count == 0) throw Error(ErrorCode::InvalidConfig, "generate: count must be positive");
  if (c.max_attempts < c.count) throw Error(ErrorCode::InvalidConfig, "generate: max_attempts < count");
  if (c.sample.max_edges < 1) throw Error(ErrorCode::InvalidConfig, "generate: max_edges must be positive");
  return c;
}

GeneratedSet generate_refined(const StructureModel& model, const RuleSet& rules, const GenerateConfig& cfg,
                              std::uint64_t seed) {
  GeneratedSet out;
  while (out.refined.size() < cfg.count) {
    if (out.attempts == cfg.max_attempts)
      throw Error(ErrorCode::InsufficientGraphs, "only " + std::to_string(out.refined.size()) + " of " +
                                                     std::to_string(cfg.count) + " graphs survived " +
                                                     std::to_string(cfg.max_attempts) + " attempts");
    Rng rng(derive_seed(seed, 0x6e6, out.attempts++));
    auto s = sample_graph(model, rng, cfg.sample);
    if (s.degenerate) {
      ++out.degenerate;
      continue;
    }
    if (s.rejected) {
      ++out.rejected;
      continue;
    }
    auto r = refine(s.graph, rules);
    if (r.empty) {
      ++out.empty_after_refine;
      continue;
    }
    r.graph.manifest_id = rules.manifest_id;
    s.graph.manifest_id = rules.manifest_id;
    out.skeletons.push_back(std::move(s.graph));
    out.refined.push_back(std::move(r.graph));
  }
  return out;
}

std::vector<ProvenanceGraph> fill_all(const std::vector<ProvenanceGraph>& skeletons, NameBackend& backend,
                                      FillStats* stats) {
  std::vector<ProvenanceGraph> out;
  FillStats total;
  for (const auto& g : skeletons) {
    FillStats st;
    out.push_back(fill_names(g, backend, {}, &st));
    total.sequences += st.sequences;
    total.backend_calls += st.backend_calls;
    total.retries += st.retries;
    total.fallbacks += st.fallbacks;
  }
  if (stats) *stats = total;
  return out;
}

ProvenanceGraph union_graph(const std::vector<ProvenanceGraph>& graphs, const std::string& manifest_id) {
  ProvenanceGraph base;
  base.manifest_id = manifest_id;
  base.directed = graphs.empty() || graphs.front().directed;
  return merge_as_communities(base, graphs);
}

// ---------------------------------------------------------------------------

namespace {

json embedding_json(const EmbeddingConfig& c) {
  return json{{"walks_per_node", c.walks_per_node}, {"walk_length", c.walk_length}, {"dimension", c.dimension},
              {"window", c.window},                 {"epochs", c.epochs},           {"negatives", c.negatives},
              {"learning_rate", c.learning_rate},   {"seed", c.seed}};
}

EmbeddingConfig embedding_from_json(const json& j) {
  EmbeddingConfig c;
  c.walks_per_node = j.value("walks_per_node", c.walks_per_node);
  c.walk_length = j.value("walk_length", c.walk_length);
  c.dimension = j.value("dimension", c.dimension);
  c.window = j.value("window", c.window);
  c.epochs = j.value("epochs", c.epochs);
  c.negatives = j.value("negatives", c.negatives);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json ngram_json(const NgramConfig& c) {
  return json{{"order", c.order},
              {"smoothing", c.smoothing},
              {"temperature", c.temperature},
              {"max_length", c.max_length},
              {"seed", c.seed}};
}

NgramConfig ngram_from_json(const json& j) {
  NgramConfig c;
  c.order = j.value("order", c.order);
  c.smoothing = j.value("smoothing", c.smoothing);
  c.temperature = j.value("temperature", c.temperature);
  c.max_length = j.value("max_length", c.max_length);
  c.seed = j.value("seed", c.seed);
  if (c.order < 1 || c.smoothing < 0.0 || c.temperature < 0.0 || c.max_length == 0)
    throw Error(ErrorCode::InvalidConfig, "names.ngram: order, max_length must be positive; smoothing, temperature >= 0");
  return c;
}

}  // namespace

json to_json(const EvalOptions& o) {
  return json{{"mmd", o.mmd},
              {"text", o.text},
              {"temporal", o.temporal},
              {"embedding", o.embedding},
              {"balance", o.balance},
              {"diversity", o.diversity},
              {"embedding_config", embedding_json(o.embedding_config)},
              {"match_max_states", o.budget.max_states},
              {"match_max_ms", o.budget.max_ms}};
}

EvalOptions eval_options_from_json(const json& j) {
  EvalOptions o;
  o.mmd = j.value("mmd", o.mmd);
  o.text = j.value("text", o.text);
  o.temporal = j.value("temporal", o.temporal);
  o.embedding = j.value("embedding", o.embedding);
  o.balance = j.value("balance", o.balance);
  o.diversity = j.value("diversity", o.diversity);
  if (j.contains("embedding_config")) o.embedding_config = embedding_from_json(j["embedding_config"]);
  o.budget.max_states = j.value("match_max_states", o.budget.max_states);
  o.budget.max_ms = j.value("match_max_ms", o.budget.max_ms);
  return o;
}

json evaluate(const EvalInputs& in, const EvalOptions& opts, std::size_t workers, const Logger& log) {
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  json report = json::object();
  if (opts.mmd && in.real_set && in.gen_set) {
    note("eval: mmd");
    report["mmd"] = to_json(mmd_suite(*in.real_set, *in.gen_set, {}, workers));
  }
  if (opts.text && in.real && in.gen_named) {
    note("eval: text");
    report["text"] = to_json(text_quality(*in.gen_named, reference_corpus(*in.real), {}, workers));
  }
  if (opts.temporal && in.real && in.gen_named) {
    note("eval: temporal");
    const auto t = temporal(*in.gen_named, *in.real, workers);
    report["temporal"] = json{{"lcs", t.lcs}, {"dtw", t.dtw}, {"sequences", t.sequences}};
  }
  if (opts.embedding && in.real && in.gen_named) {
    note("eval: embedding");
    json e;
    for (const auto method : {EmbeddingMethod::WalkSkipgram, EmbeddingMethod::WalkDocument}) {
      auto cfg = opts.embedding_config;
      cfg.method = method;
      const auto r = embedding_similarity(*in.gen_named, *in.real, cfg);
      e[method == EmbeddingMethod::WalkSkipgram ? "skipgram" : "document"] =
          json{{"similarity", r.similarity}, {"degenerate", r.degenerate}};
    }
    report["embedding"] = e;
  }
  if (opts.balance) {
    json b;
    if (in.real) b["real"] = to_json(label_balance(*in.real));
    if (in.gen_named) b["generated"] = to_json(label_balance(*in.gen_named));
    if (!b.empty()) report["balance"] = b;
  }
  if (opts.diversity && in.gen_skeletons && in.train_set) {
    note("eval: diversity");
    report["diversity"] = to_json(diversity(*in.gen_skeletons, *in.train_set, opts.budget, workers));
  }
  if (in.semantic && in.gen_named) {
    note("eval: semantic");
    report["semantic"] = to_json(score_graph(*in.semantic, *in.gen_named));
  }
  return report;
}

AugmentResult augment(const ProvenanceGraph& base, const std::vector<ProvenanceGraph>& synthetic, std::size_t count) {
  if (count > synthetic.size())
    throw Error(ErrorCode::InsufficientGraphs, "requested " + std::to_string(count) + " synthetic graphs, only " +
                                                   std::to_string(synthetic.size()) + " available");
  AugmentResult r;
  r.graph = merge_as_communities(base, std::span(synthetic.data(), count));
  r.before = label_balance(base);
  r.after = label_balance(r.graph);
  return r;
}

json to_json(const AugmentResult& r) {
  return json{{"before", to_json(r.before)},
              {"after", to_json(r.after)},
              {"delta",
               {{"node_entropy", r.after.node_entropy - r.before.node_entropy},
                {"node_gini", r.after.node_gini - r.before.node_gini},
                {"edge_entropy", r.after.edge_entropy - r.before.edge_entropy},
                {"edge_gini", r.after.edge_gini - r.before.edge_gini}}},
              {"nodes", r.graph.nodes.size()},
              {"edges", r.graph.edges.size()}};
}

// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  auto need = [](const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, std::string("pipeline: '") + what + "' is required");
    if (!fs::exists(path)) throw Error(ErrorCode::InvalidConfig, std::string("pipeline: ") + what + " file not found: " + path);
  };
  need(events, "events");
  need(manifest, "manifest");
  need(rules, "rules");
  if (!categories.empty()) need(categories, "categories");
  sampler.validate();
  train.validate();
  masking.validate();
  semantic.validate();
  if (backend != "ngram" && backend != "llm")
    throw Error(ErrorCode::InvalidConfig, "pipeline: backend must be 'ngram' or 'llm'");
  const auto m = read_manifest(manifest);
  validate_rules(read_rules(rules), m);
  if (!categories.empty()) read_category_map(categories).validate(m);
}

PipelineConfig pipeline_config_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "pipeline config must be a JSON object");
  auto path = [&](const char* key) -> std::string {
    const std::string p = j.value(key, "");
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base_dir) / p).lexically_normal().string();
  };
  PipelineConfig c;
  try {
    c.events = path("events");
    c.manifest = path("manifest");
    c.rules = path("rules");
    c.categories = path("categories");
    c.seed = j.value("seed", c.seed);
    if (j.contains("sampler")) c.sampler = sampler_config_from_json(j["sampler"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("generate")) c.generate = generate_config_from_json(j["generate"]);
    if (j.contains("masking")) c.masking = masking_config_from_json(j["masking"]);
    if (j.contains("names")) {
      const auto& n = j["names"];
      c.backend = n.value("backend", c.backend);
      if (n.contains("ngram")) c.ngram = ngram_from_json(n["ngram"]);
      if (n.contains("llm")) c.llm = llm_config_from_json(n["llm"]);
    }
    if (j.contains("semantic")) {
      c.semantic_enabled = j["semantic"].value("enabled", true);
      c.semantic = semantic_config_from_json(j["semantic"]);
    }
    if (j.contains("eval")) c.eval = eval_options_from_json(j["eval"]);
    c.augment_count = j.value("augment", json::object()).value("count", c.augment_count);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("pipeline config: ") + e.what());
  }
  return c;
}

json to_json(const PipelineConfig& c) {
  json sem = to_json(c.semantic);
  sem["enabled"] = c.semantic_enabled;
  return json{{"events", c.events},
              {"manifest", c.manifest},
              {"rules", c.rules},
              {"categories", c.categories},
              {"seed", c.seed},
              {"sampler", to_json(c.sampler)},
              {"train", to_json(c.train)},
              {"generate", to_json(c.generate)},
              {"masking", to_json(c.masking)},
              {"names", {{"backend", c.backend}, {"ngram", ngram_json(c.ngram)}, {"llm", to_json(c.llm)}}},
              {"semantic", sem},
              {"eval", to_json(c.eval)},
              {"augment", {{"count", c.augment_count}}}};
}

std::string pipeline_hash(const PipelineConfig& c) {
  json j = to_json(c);
  json inputs = json::object();
  for (const char* key : {"events", "manifest", "rules", "categories"}) {
    const std::string p = j[key];
    inputs[key] = p.empty() ? "" : sha256_file(p);
    j.erase(key);
  }
  j["inputs"] = inputs;
  return config_hash(j);
}

std::vector<std::string> pipeline_artifacts(const PipelineConfig& c) {
  std::vector<std::string> a{"real.json",      "corpus.jsonl",  "codes.jsonl", "struct_model.bin", "loss.csv",
                             "skeletons.jsonl", "refined.jsonl", "qa.jsonl",    "named.jsonl"};
  if (c.semantic_enabled) a.push_back("semantic.ckpt");
  if (c.augment_count > 0) {
    a.push_back("augmented.json");
    a.push_back("augment_report.json");
  }
  a.push_back("report.json");
  return a;
}

namespace {

class StageClock {
 public:
  StageClock(std::vector<StageTiming>& out, const Logger& log) : out_(out), log_(log) {}

  template <class Fn>
  auto run(const std::string& stage, Fn&& fn) {
    if (log_) log_("stage " + stage);
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      out_.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        finish();
      } else {
        auto r = fn();
        finish();
        return r;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "stage " + stage + ": " + e.what());
    }
  }

 private:
  std::vector<StageTiming>& out_;
  const Logger& log_;
};

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg, const std::string& out_dir, std::size_t workers,
                       const Logger& log) {
  cfg.validate();
  fs::create_directories(out_dir);
  RunReport rep;
  rep.config_hash = pipeline_hash(cfg);
  rep.artifacts = pipeline_artifacts(cfg);
  auto at = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  auto written = [&](const std::string& name, const std::string& stage) { write_meta(at(name), rep.config_hash, stage); };
  StageClock clock(rep.timings, log);

  const auto manifest = read_manifest(cfg.manifest);
  const auto rules = read_rules(cfg.rules);
  const auto cmap = cfg.categories.empty() ? default_category_map(manifest) : read_category_map(cfg.categories);

  const auto real = clock.run("parse", [&] {
    const auto events = read_events(cfg.events);
    auto g = parse_events(events, manifest);
    write_graph(g, at("real.json"));
    written("real.json", "parse");
    return g;
  });

  auto sampler = cfg.sampler;
  sampler.seed = derive_seed(cfg.seed, 1);
  const auto corpus = clock.run("sample", [&] {
    auto c = build_corpus(real, sampler, workers);
    if (c.empty()) throw Error(ErrorCode::EmptyCorpus, "no subgraph satisfied the sampler bounds");
    write_corpus(c, at("corpus.jsonl"));
    written("corpus.jsonl", "sample");
    return c;
  });

  const auto codes = clock.run("encode", [&] {
    std::vector<DFSCode> out(corpus.size());
    parallel_for(corpus.size(), workers, [&](std::size_t i) { out[i] = min_dfs_code(corpus[i].graph); });
    write_codes(out, at("codes.jsonl"));
    written("codes.jsonl", "encode");
    return out;
  });

  const auto model = clock.run("train-struct", [&] {
    auto tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 2);
    std::vector<EpochStats> history;
    const auto vocab = Vocabulary::from_manifest(manifest, static_cast<int>(cfg.sampler.max_nodes));
    auto m = train_structure_model(codes, vocab, tc, &history);
    save_model(m, at("struct_model.bin"));
    write_loss_csv(history, at("loss.csv"));
    written("struct_model.bin", "train-struct");
    written("loss.csv", "train-struct");
    return m;
  });

  const auto gen = clock.run("gen-struct+refine", [&] {
    auto g = generate_refined(model, rules, cfg.generate, derive_seed(cfg.seed, 3));
    write_graphs_jsonl(g.skeletons, at("skeletons.jsonl"));
    write_graphs_jsonl(g.refined, at("refined.jsonl"));
    written("skeletons.jsonl", "gen-struct");
    written("refined.jsonl", "refine");
    return g;
  });

  clock.run("qa-export", [&] {
    const auto qa = build_qa_dataset(real, cfg.masking, derive_seed(cfg.seed, 4), workers);
    write_qa_dataset(qa, at("qa.jsonl"));
    written("qa.jsonl", "qa-export");
  });

  FillStats fill_stats;
  const auto named = clock.run("fill-names", [&] {
    auto nc = cfg.ngram;
    nc.seed = derive_seed(cfg.seed, 5);
    NgramBackend ngram(real, nc);
    std::vector<ProvenanceGraph> out;
    if (cfg.backend == "llm") {
      LlmBackend llm(cfg.llm);
      FillOptions opts;
      opts.fallback = &ngram;
      for (const auto& g : gen.refined) {
        FillStats st;
        out.push_back(fill_names(g, llm, opts, &st));
        fill_stats.sequences += st.sequences;
        fill_stats.backend_calls += st.backend_calls;
        fill_stats.retries += st.retries;
        fill_stats.fallbacks += st.fallbacks;
      }
    } else {
      out = fill_all(gen.refined, ngram, &fill_stats);
    }
    write_graphs_jsonl(out, at("named.jsonl"));
    written("named.jsonl", "fill-names");
    return out;
  });

  std::optional<SemanticModel> sem;
  TrainReport sem_report;
  if (cfg.semantic_enabled) {
    sem = clock.run("sem-train", [&] {
      auto sc = cfg.semantic;
      sc.seed = derive_seed(cfg.seed, 6);
      auto m = train_validator(real, cmap, sc, &sem_report);
      save_semantic_model(m, at("semantic.ckpt"));
      written("semantic.ckpt", "sem-train");
      return m;
    });
  }

  const auto gen_union = union_graph(named, manifest.name);
  std::vector<ProvenanceGraph> real_set, train_set;
  for (const auto& s : corpus) {
    train_set.push_back(s.graph);
    auto r = refine(s.graph, rules);
    if (!r.empty) real_set.push_back(std::move(r.graph));
  }

  rep.eval = clock.run("eval", [&] {
    auto opts = cfg.eval;
    opts.embedding_config.seed = derive_seed(cfg.seed, 7);
    EvalInputs in;
    in.real = &real;
    in.real_set = &real_set;
    in.gen_set = &gen.refined;
    in.train_set = &train_set;
    in.gen_skeletons = &gen.skeletons;
    in.gen_named = &gen_union;
    in.semantic = sem ? &*sem : nullptr;
    return evaluate(in, opts, workers, log);
  });
  if (sem)
    rep.eval["semantic_training"] = json{{"holdout_accuracy", sem_report.holdout_accuracy},
                                         {"train_accuracy", sem_report.train_accuracy},
                                         {"holdout_triples", sem_report.holdout_triples},
                                         {"soi", sem_report.contrastive.soi},
                                         {"pr", sem_report.contrastive.pr},
                                         {"es", sem_report.contrastive.es}};

  if (cfg.augment_count > 0) {
    clock.run("augment", [&] {
      const auto a = augment(real, named, cfg.augment_count);
      write_graph(a.graph, at("augmented.json"));
      write_text_file(at("augment_report.json"), to_json(a).dump(2) + "\n");
      written("augmented.json", "augment");
      written("augment_report.json", "augment");
      rep.eval["augment"] = to_json(a);
    });
  }

  rep.counts = json{{"real_nodes", real.nodes.size()},
                    {"real_edges", real.edges.size()},
                    {"sampled", corpus.size()},
                    {"generation_attempts", gen.attempts},
                    {"degenerate", gen.degenerate},
                    {"rejected", gen.rejected},
                    {"empty_after_refine", gen.empty_after_refine},
                    {"generated", gen.refined.size()},
                    {"name_sequences", fill_stats.sequences},
                    {"name_fallbacks", fill_stats.fallbacks}};

  const json report{{"config_hash", rep.config_hash}, {"counts", rep.counts}, {"eval", rep.eval}};
  write_text_file(at("report.json"), report.dump(2) + "\n");
  written("report.json", "report");

  json timings = json::array();
  for (const auto& t : rep.timings) timings.push_back(json{{"stage", t.stage}, {"seconds", t.seconds}});
  write_text_file(at("timings.json"), json{{"config_hash", rep.config_hash}, {"stages", timings}}.dump(2) + "\n");
  return rep;
}

}  // namespace provsyn
