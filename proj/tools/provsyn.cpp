#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "provsyn/dfs_code.hpp"
#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/pipeline.hpp"

using namespace provsyn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out_dir = ".";
  bool verify = false;
  bool quiet = false;
};

Globals G;

void progress(const std::string& m) {
  if (!G.quiet) std::cerr << "[provsyn] " << m << "\n";
}

std::string out_path(const std::string& p) {
  if (fs::path(p).is_absolute()) return p;
  return (fs::path(G.out_dir) / p).string();
}

json optional_config(const std::string& path) { return path.empty() ? json::object() : read_json_file(path); }

/// One command invocation: its effective configuration, inputs, outputs and
/// the work that produces them.
struct Job {
  std::string stage;
  json config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::function<void()> work;
};

std::string job_hash(const Job& job) {
  json inputs = json::array();
  for (const auto& p : job.inputs) {
    if (!fs::exists(p)) throw Error(ErrorCode::InvalidConfig, job.stage + ": input file not found: " + p);
    inputs.push_back(sha256_file(p));
  }
  return config_hash(json{{"stage", job.stage}, {"config", job.config}, {"inputs", inputs}});
}

int verify_outputs(const std::vector<std::string>& outputs, const std::string& hash) {
  int bad = 0;
  for (const auto& p : outputs) {
    if (auto problem = verify_meta(p, hash)) {
      std::cout << "MISMATCH " << *problem << "\n";
      ++bad;
    } else {
      std::cout << "OK " << p << "\n";
    }
  }
  return bad == 0 ? 0 : 1;
}

int execute(const Job& job) {
  const auto hash = job_hash(job);
  if (G.verify) return verify_outputs(job.outputs, hash);
  for (const auto& p : job.outputs) {
    const auto parent = fs::path(p).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }
  job.work();
  for (const auto& p : job.outputs) write_meta(p, hash, job.stage);
  return 0;
}

std::vector<ProvenanceGraph> graphs_of(const std::string& path) { return read_graph_set(path); }

ProvenanceGraph single_or_union(const std::string& path) {
  auto set = read_graph_set(path);
  if (set.size() == 1) return std::move(set.front());
  const std::string manifest = set.empty() ? std::string() : set.front().manifest_id;
  return union_graph(set, manifest);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Provenance graph synthesis and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", G.seed, "Global random seed");
  app.add_option("--workers", G.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", G.out_dir, "Directory for relative output paths");
  app.add_flag("--verify", G.verify, "Check existing outputs against the configuration instead of running");
  app.add_flag("-q,--quiet", G.quiet, "No progress messages");

  std::function<int()> action;

  // parse
  std::string events, manifest_path, extract_cfg, out = "real.json";
  auto* parse = app.add_subcommand("parse", "Build the real provenance graph from an event log");
  parse->add_option("--events", events, "Event log (JSONL or TSV, or raw lines with --extract)")->required()->check(CLI::ExistingFile);
  parse->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  parse->add_option("--extract", extract_cfg, "Regex extraction config for raw log lines")->check(CLI::ExistingFile);
  parse->add_option("--out", out, "Output graph");
  parse->callback([&] {
    action = [&] {
      const auto o = out_path(out);
      std::vector<std::string> inputs{events, manifest_path};
      if (!extract_cfg.empty()) inputs.push_back(extract_cfg);
      return execute(Job{"parse", json::object(), inputs, {o}, [&, o] {
                           const auto m = read_manifest(manifest_path);
                           std::size_t skipped = 0;
                           const auto recs = extract_cfg.empty()
                                                 ? read_events(events)
                                                 : extract_events(events, extraction_config_from_json(
                                                                              read_json_file(extract_cfg)),
                                                                  &skipped);
                           if (skipped) progress(std::to_string(skipped) + " lines did not match the extraction config");
                           const auto g = parse_events(recs, m);
                           write_graph(g, o);
                           progress("graph: " + std::to_string(g.nodes.size()) + " nodes, " +
                               std::to_string(g.edges.size()) + " edges");
                         }});
    };
  });

  // sample
  std::string graph_path, sampler_cfg, corpus_out = "corpus.jsonl";
  std::size_t target = 0;
  auto* sample = app.add_subcommand("sample", "Sample connected subgraphs by restart random walks");
  sample->add_option("--graph", graph_path, "Real graph")->required()->check(CLI::ExistingFile);
  sample->add_option("--config", sampler_cfg, "Sampler config (JSON)")->check(CLI::ExistingFile);
  sample->add_option("--target", target, "Keep sampling passes until this many subgraphs exist");
  sample->add_option("--out", corpus_out, "Output corpus (JSONL)");
  sample->callback([&] {
    action = [&] {
      auto cfg = sampler_config_from_json(optional_config(sampler_cfg));
      cfg.seed = G.seed;
      const auto o = out_path(corpus_out);
      json c = to_json(cfg);
      c["target"] = target;
      return execute(Job{"sample", c, {graph_path}, {o}, [&, cfg, o] {
                           const auto g = read_graph(graph_path);
                           const auto corpus = target ? build_corpus_until(g, cfg, target, 1000, G.workers)
                                                      : build_corpus(g, cfg, G.workers);
                           write_corpus(corpus, o);
                           progress(std::to_string(corpus.size()) + " subgraphs");
                         }});
    };
  });

  // encode
  std::string corpus_in, codes_out = "codes.jsonl";
  auto* encode = app.add_subcommand("encode", "Encode subgraphs as minimum DFS codes");
  encode->add_option("--corpus", corpus_in, "Subgraph corpus or graph set")->required()->check(CLI::ExistingFile);
  encode->add_option("--out", codes_out, "Output codes (JSONL)");
  encode->callback([&] {
    action = [&] {
      const auto o = out_path(codes_out);
      return execute(Job{"encode", json::object(), {corpus_in}, {o}, [&, o] {
                           const auto graphs = graphs_of(corpus_in);
                           std::vector<DFSCode> codes(graphs.size());
                           parallel_for(graphs.size(), G.workers,
                                        [&](std::size_t i) { codes[i] = min_dfs_code(graphs[i]); });
                           write_codes(codes, o);
                           progress(std::to_string(codes.size()) + " codes");
                         }});
    };
  });

  // train-struct
  std::string codes_in, train_cfg, model_out = "struct_model.bin", loss_out = "loss.csv";
  int max_nodes = 48;
  auto* train = app.add_subcommand("train-struct", "Train the structure sequence model");
  train->add_option("--codes", codes_in, "DFS codes (JSONL)")->required()->check(CLI::ExistingFile);
  train->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--config", train_cfg, "Training config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--max-nodes", max_nodes, "Timestamp vocabulary size")->check(CLI::PositiveNumber);
  train->add_option("--out", model_out, "Model checkpoint");
  train->add_option("--loss-csv", loss_out, "Per-epoch loss table");
  train->callback([&] {
    action = [&] {
      auto cfg = train_config_from_json(optional_config(train_cfg));
      cfg.seed = G.seed;
      const auto o = out_path(model_out), l = out_path(loss_out);
      json c = to_json(cfg);
      c["max_nodes"] = max_nodes;
      return execute(Job{"train-struct", c, {codes_in, manifest_path}, {o, l}, [&, cfg, o, l] {
                           const auto codes = read_codes(codes_in);
                           const auto vocab = Vocabulary::from_manifest(read_manifest(manifest_path), max_nodes);
                           std::vector<EpochStats> history;
                           const auto m = train_structure_model(codes, vocab, cfg, &history, [](const EpochStats& s) {
                             if (s.epoch % 50 == 0)
                               progress("epoch " + std::to_string(s.epoch) + " train " + std::to_string(s.train_loss) +
                                   " val " + std::to_string(s.val_loss));
                           });
                           save_model(m, o);
                           write_loss_csv(history, l);
                         }});
    };
  });

  // gen-struct
  std::string model_in, skel_out = "skeletons.jsonl";
  std::size_t count = 100;
  SampleOptions sopts;
  auto* gen = app.add_subcommand("gen-struct", "Sample graph skeletons from a trained model");
  gen->add_option("--model", model_in, "Model checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--count", count, "Number of non-degenerate skeletons");
  gen->add_option("--temperature", sopts.temperature, "Sampling temperature (0 = greedy)");
  gen->add_option("--max-edges", sopts.max_edges, "Maximum tuples per sample");
  gen->add_flag("--strict", sopts.strict, "Reject samples that need repair");
  gen->add_option("--out", skel_out, "Output skeletons (JSONL)");
  gen->callback([&] {
    action = [&] {
      const auto o = out_path(skel_out);
      const json c{{"count", count}, {"temperature", sopts.temperature}, {"max_edges", sopts.max_edges},
                   {"strict", sopts.strict}, {"seed", G.seed}};
      return execute(Job{"gen-struct", c, {model_in}, {o}, [&, o] {
                           const auto m = load_model(model_in);
                           std::vector<ProvenanceGraph> out_graphs;
                           std::size_t attempts = 0;
                           while (out_graphs.size() < count) {
                             if (attempts == 20 * count)
                               throw Error(ErrorCode::InsufficientGraphs,
                                           "too many degenerate or rejected samples");
                             Rng rng(derive_seed(G.seed, 0x6e6, attempts++));
                             auto s = sample_graph(m, rng, sopts);
                             if (s.degenerate || s.rejected) continue;
                             s.graph.manifest_id = m.vocab().manifest_id;
                             out_graphs.push_back(std::move(s.graph));
                           }
                           write_graphs_jsonl(out_graphs, o);
                           progress(std::to_string(out_graphs.size()) + " skeletons from " + std::to_string(attempts) +
                               " attempts");
                         }});
    };
  });

  // refine
  std::string graphs_in, rules_path, refined_out = "refined.jsonl";
  auto* ref = app.add_subcommand("refine", "Orient skeletons and prune rule violations");
  ref->add_option("--graphs", graphs_in, "Skeletons (JSONL)")->required()->check(CLI::ExistingFile);
  ref->add_option("--rules", rules_path, "Rule file")->required()->check(CLI::ExistingFile);
  ref->add_option("--manifest", manifest_path, "Manifest to validate the rules against")->check(CLI::ExistingFile);
  ref->add_option("--out", refined_out, "Output graphs (JSONL)");
  ref->callback([&] {
    action = [&] {
      const auto o = out_path(refined_out);
      std::vector<std::string> inputs{graphs_in, rules_path};
      const auto rules = read_rules(rules_path);
      if (!manifest_path.empty()) {
        validate_rules(rules, read_manifest(manifest_path));
        inputs.push_back(manifest_path);
      }
      return execute(Job{"refine", json::object(), inputs, {o}, [&, rules, o] {
                           std::vector<ProvenanceGraph> kept;
                           std::size_t empty = 0;
                           for (const auto& g : graphs_of(graphs_in)) {
                             auto r = refine(g, rules);
                             if (r.empty) {
                               ++empty;
                               continue;
                             }
                             r.graph.manifest_id = rules.manifest_id;
                             kept.push_back(std::move(r.graph));
                           }
                           write_graphs_jsonl(kept, o);
                           progress(std::to_string(kept.size()) + " refined, " + std::to_string(empty) + " empty dropped");
                         }});
    };
  });

  // qa-export
  std::string masking_cfg, qa_out = "qa.jsonl";
  auto* qa = app.add_subcommand("qa-export", "Export masked question/answer pairs for name fine-tuning");
  qa->add_option("--graph", graph_path, "Real named graph")->required()->check(CLI::ExistingFile);
  qa->add_option("--config", masking_cfg, "Masking config (JSON)")->check(CLI::ExistingFile);
  qa->add_option("--out", qa_out, "Output pairs (JSONL)");
  qa->callback([&] {
    action = [&] {
      const auto cfg = masking_config_from_json(optional_config(masking_cfg));
      const auto o = out_path(qa_out);
      json c = to_json(cfg);
      c["seed"] = G.seed;
      return execute(Job{"qa-export", c, {graph_path}, {o}, [&, cfg, o] {
                           const auto pairs = build_qa_dataset(read_graph(graph_path), cfg, G.seed, G.workers);
                           write_qa_dataset(pairs, o);
                           progress(std::to_string(pairs.size()) + " pairs");
                         }});
    };
  });

  // fill-names
  std::string real_path, backend = "ngram", llm_cfg, named_out = "named.jsonl";
  auto* fill = app.add_subcommand("fill-names", "Fill node names of skeletons");
  fill->add_option("--graphs", graphs_in, "Refined graphs (JSONL)")->required()->check(CLI::ExistingFile);
  fill->add_option("--real", real_path, "Real named graph (trains the n-gram backend)")->required()->check(CLI::ExistingFile);
  fill->add_option("--backend", backend, "ngram or llm")->check(CLI::IsMember({"ngram", "llm"}));
  fill->add_option("--llm-config", llm_cfg, "Chat-completions backend config (JSON)")->check(CLI::ExistingFile);
  fill->add_option("--out", named_out, "Output graphs (JSONL)");
  fill->callback([&] {
    action = [&] {
      const auto o = out_path(named_out);
      json c{{"backend", backend}, {"seed", G.seed}};
      if (backend == "llm") c["llm"] = to_json(llm_config_from_json(optional_config(llm_cfg)));
      return execute(Job{"fill-names", c, {graphs_in, real_path}, {o}, [&, o] {
                           NgramConfig nc;
                           nc.seed = G.seed;
                           NgramBackend ngram(read_graph(real_path), nc);
                           std::vector<ProvenanceGraph> named;
                           FillStats total;
                           std::unique_ptr<LlmBackend> llm;
                           if (backend == "llm") llm = std::make_unique<LlmBackend>(llm_config_from_json(optional_config(llm_cfg)));
                           FillOptions opts;
                           if (llm) opts.fallback = &ngram;
                           for (const auto& g : graphs_of(graphs_in)) {
                             FillStats st;
                             named.push_back(fill_names(g, llm ? static_cast<NameBackend&>(*llm) : ngram, opts, &st));
                             total.sequences += st.sequences;
                             total.fallbacks += st.fallbacks;
                           }
                           write_graphs_jsonl(named, o);
                           progress(std::to_string(named.size()) + " graphs, " + std::to_string(total.sequences) +
                               " sequences, " + std::to_string(total.fallbacks) + " fallbacks");
                         }});
    };
  });

  // sem-train
  std::string categories_path, sem_cfg, sem_out = "semantic.ckpt";
  auto* semt = app.add_subcommand("sem-train", "Train the semantic triple validator");
  semt->add_option("--graph", graph_path, "Real named graph")->required()->check(CLI::ExistingFile);
  semt->add_option("--manifest", manifest_path, "Manifest (default category map)")->check(CLI::ExistingFile);
  semt->add_option("--categories", categories_path, "Edge category map (JSON)")->check(CLI::ExistingFile);
  semt->add_option("--config", sem_cfg, "Validator config (JSON)")->check(CLI::ExistingFile);
  semt->add_option("--out", sem_out, "Checkpoint");
  semt->callback([&] {
    action = [&] {
      if (manifest_path.empty() && categories_path.empty())
        throw Error(ErrorCode::InvalidConfig, "sem-train needs --manifest or --categories");
      auto cfg = semantic_config_from_json(optional_config(sem_cfg));
      cfg.seed = G.seed;
      const auto o = out_path(sem_out);
      std::vector<std::string> inputs{graph_path};
      if (!manifest_path.empty()) inputs.push_back(manifest_path);
      if (!categories_path.empty()) inputs.push_back(categories_path);
      return execute(Job{"sem-train", to_json(cfg), inputs, {o}, [&, cfg, o] {
                           const auto cmap = categories_path.empty() ? default_category_map(read_manifest(manifest_path))
                                                                     : read_category_map(categories_path);
                           TrainReport rep;
                           const auto m = train_validator(read_graph(graph_path), cmap, cfg, &rep);
                           save_semantic_model(m, o);
                           std::cout << json{{"holdout_accuracy", rep.holdout_accuracy},
                                             {"train_accuracy", rep.train_accuracy},
                                             {"holdout_triples", rep.holdout_triples},
                                             {"warnings", rep.contrastive.warnings}}
                                            .dump(2)
                                     << "\n";
                         }});
    };
  });

  // sem-score
  double threshold = 0.5;
  std::string sem_in;
  auto* sems = app.add_subcommand("sem-score", "Score the semantic correctness of a graph");
  sems->add_option("--model", sem_in, "Validator checkpoint")->required()->check(CLI::ExistingFile);
  sems->add_option("--graph", graph_path, "Graph or graph set")->required()->check(CLI::ExistingFile);
  sems->add_option("--threshold", threshold, "Correctness threshold");
  sems->callback([&] {
    action = [&] {
      const auto s = score_graph(load_semantic_model(sem_in), single_or_union(graph_path), threshold);
      std::cout << to_json(s).dump(2) << "\n";
      return 0;
    };
  });

  // eval
  std::string gen_in, skel_in, train_in, eval_cfg, report_out = "report.json";
  auto* ev = app.add_subcommand("eval", "Compare generated graphs with the real data");
  ev->add_option("--real", real_path, "Real named graph")->required()->check(CLI::ExistingFile);
  ev->add_option("--gen", gen_in, "Generated named graphs (JSONL)")->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", train_in, "Training subgraphs (structural reference and novelty)")->check(CLI::ExistingFile);
  ev->add_option("--skeletons", skel_in, "Generated skeletons (novelty and uniqueness)")->check(CLI::ExistingFile);
  ev->add_option("--rules", rules_path, "Rules applied to the corpus before structural comparison")->check(CLI::ExistingFile);
  ev->add_option("--semantic", sem_in, "Validator checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--config", eval_cfg, "Eval options (JSON)")->check(CLI::ExistingFile);
  ev->add_option("--out", report_out, "Report file");
  ev->callback([&] {
    action = [&] {
      auto opts = eval_options_from_json(optional_config(eval_cfg));
      opts.embedding_config.seed = G.seed;
      const auto o = out_path(report_out);
      std::vector<std::string> inputs{real_path, gen_in};
      for (const auto* p : {&train_in, &skel_in, &rules_path, &sem_in})
        if (!p->empty()) inputs.push_back(*p);
      return execute(Job{"eval", to_json(opts), inputs, {o}, [&, opts, o] {
                           const auto real = read_graph(real_path);
                           const auto gen_set = graphs_of(gen_in);
                           const auto gen_named = union_graph(gen_set, real.manifest_id);
                           std::vector<ProvenanceGraph> train_set, real_set, skeletons;
                           std::optional<SemanticModel> sem;
                           EvalInputs in;
                           in.real = &real;
                           in.gen_named = &gen_named;
                           if (!train_in.empty()) {
                             train_set = graphs_of(train_in);
                             const auto rules = rules_path.empty() ? std::optional<RuleSet>() : read_rules(rules_path);
                             for (const auto& g : train_set) {
                               if (!rules) {
                                 real_set.push_back(g);
                                 continue;
                               }
                               auto r = refine(g, *rules);
                               if (!r.empty) real_set.push_back(std::move(r.graph));
                             }
                             in.real_set = &real_set;
                             in.gen_set = &gen_set;
                             in.train_set = &train_set;
                           }
                           if (!skel_in.empty()) {
                             skeletons = graphs_of(skel_in);
                             in.gen_skeletons = &skeletons;
                           }
                           if (!sem_in.empty()) {
                             sem = load_semantic_model(sem_in);
                             in.semantic = &*sem;
                           }
                           const auto report = evaluate(in, opts, G.workers, progress);
                           write_text_file(o, report.dump(2) + "\n");
                         }});
    };
  });

  // augment
  std::string base_in, aug_out = "augmented.json", aug_report = "augment_report.json";
  auto* aug = app.add_subcommand("augment", "Append synthetic graphs to a base graph as communities");
  aug->add_option("--base", base_in, "Base graph")->required()->check(CLI::ExistingFile);
  aug->add_option("--gen", gen_in, "Synthetic graphs (JSONL)")->required()->check(CLI::ExistingFile);
  aug->add_option("--count", count, "Number of synthetic graphs to add")->required();
  aug->add_option("--out", aug_out, "Augmented graph");
  aug->add_option("--report", aug_report, "Before/after balance report");
  aug->callback([&] {
    action = [&] {
      const auto o = out_path(aug_out), r = out_path(aug_report);
      return execute(Job{"augment", json{{"count", count}}, {base_in, gen_in}, {o, r}, [&, o, r] {
                           const auto a = augment(read_graph(base_in), graphs_of(gen_in), count);
                           write_graph(a.graph, o);
                           const auto rep = to_json(a);
                           write_text_file(r, rep.dump(2) + "\n");
                           progress("entropy " + std::to_string(a.before.node_entropy) + " -> " +
                               std::to_string(a.after.node_entropy));
                         }});
    };
  });

  // run
  std::string pipeline_cfg;
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  run->add_option("--config", pipeline_cfg, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->callback([&] {
    action = [&] {
      auto cfg = pipeline_config_from_json(read_json_file(pipeline_cfg), fs::path(pipeline_cfg).parent_path().string());
      if (app.count("--seed")) cfg.seed = G.seed;
      if (G.verify) {
        cfg.validate();
        std::vector<std::string> outs;
        for (const auto& a : pipeline_artifacts(cfg)) outs.push_back(out_path(a));
        return verify_outputs(outs, pipeline_hash(cfg));
      }
      const auto rep = run_pipeline(cfg, G.out_dir, G.workers, progress);
      double total = 0.0;
      for (const auto& t : rep.timings) total += t.seconds;
      progress("done in " + std::to_string(total) + " s; report at " + out_path("report.json"));
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "provsyn: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "provsyn: " << e.what() << "\n";
    return 1;
  }
}
