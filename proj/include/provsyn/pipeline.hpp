#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "provsyn/balance.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/graph.hpp"
#include "provsyn/name_synth.hpp"
#include "provsyn/refiner.hpp"
#include "provsyn/sampler.hpp"
#include "provsyn/semantic.hpp"
#include "provsyn/struct_model.hpp"

namespace provsyn {

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Artifact metadata

/// SHA-256 of the compact dump of `j` (object keys are sorted).
std::string config_hash(const nlohmann::json& j);

/// Writes `<path>.meta.json` next to an artifact.
void write_meta(const std::string& path, const std::string& hash, const std::string& stage);

/// Empty when the sidecar exists, carries `hash` and matches the file contents.
std::optional<std::string> verify_meta(const std::string& path, const std::string& hash);

// ---------------------------------------------------------------------------
// Stages

struct GenerateConfig {
  std::size_t count = 100;
  SampleOptions sample;
  std::size_t max_attempts = 2000;
};

nlohmann::json to_json(const GenerateConfig& c);
GenerateConfig generate_config_from_json(const nlohmann::json& j);

struct GeneratedSet {
  std::vector<ProvenanceGraph> skeletons;  // undirected, kept samples only
  std::vector<ProvenanceGraph> refined;    // same order, non-empty
  std::size_t attempts = 0;
  std::size_t degenerate = 0;
  std::size_t rejected = 0;
  std::size_t empty_after_refine = 0;
};

/// Samples skeletons and refines them until `count` non-empty graphs exist.
/// Throws InsufficientGraphs when max_attempts runs out first.
GeneratedSet generate_refined(const StructureModel& model, const RuleSet& rules, const GenerateConfig& cfg,
                              std::uint64_t seed);

/// Fills every graph with one backend, in order.
std::vector<ProvenanceGraph> fill_all(const std::vector<ProvenanceGraph>& skeletons, NameBackend& backend,
                                      FillStats* stats = nullptr);

/// Disjoint union of a set of graphs.
ProvenanceGraph union_graph(const std::vector<ProvenanceGraph>& graphs, const std::string& manifest_id);

struct EvalOptions {
  bool mmd = true;
  bool text = true;
  bool temporal = true;
  bool embedding = true;
  bool balance = true;
  bool diversity = true;
  EmbeddingConfig embedding_config;
  /// No clock limit by default.
  MatchBudget budget{2'000'000, 0.0};
};

nlohmann::json to_json(const EvalOptions& o);
EvalOptions eval_options_from_json(const nlohmann::json& j);

struct EvalInputs {
  const ProvenanceGraph* real = nullptr;                   // full named real graph
  const std::vector<ProvenanceGraph>* real_set = nullptr;  // structural reference for MMD
  const std::vector<ProvenanceGraph>* gen_set = nullptr;   // refined generated graphs
  const std::vector<ProvenanceGraph>* train_set = nullptr; // training subgraphs for novelty
  const std::vector<ProvenanceGraph>* gen_skeletons = nullptr;
  const ProvenanceGraph* gen_named = nullptr;              // union of named generated graphs
  const SemanticModel* semantic = nullptr;
};

/// Report object with keys mmd, text, temporal, embedding, balance,
/// diversity, semantic for the enabled and available parts.
nlohmann::json evaluate(const EvalInputs& in, const EvalOptions& opts, std::size_t workers = 1,
                        const Logger& log = {});

struct AugmentResult {
  ProvenanceGraph graph;
  BalanceReport before;
  BalanceReport after;
};

/// Appends the first `count` synthetic graphs as communities. Throws
/// InsufficientGraphs.
AugmentResult augment(const ProvenanceGraph& base, const std::vector<ProvenanceGraph>& synthetic, std::size_t count);
nlohmann::json to_json(const AugmentResult& r);

// ---------------------------------------------------------------------------
// Full run

struct PipelineConfig {
  std::string events;
  std::string manifest;
  std::string rules;
  std::string categories;  // optional; default map from the manifest
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  TrainConfig train;
  GenerateConfig generate;
  MaskingConfig masking;
  std::string backend = "ngram";  // "ngram" or "llm"
  NgramConfig ngram;
  LlmConfig llm;
  SemanticConfig semantic;
  bool semantic_enabled = true;
  EvalOptions eval;
  std::size_t augment_count = 0;

  /// Checks every sub-config and that referenced files exist.
  void validate() const;
};

/// Relative paths are resolved against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json to_json(const PipelineConfig& c);

/// Config plus the digests of every input file.
std::string pipeline_hash(const PipelineConfig& c);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  std::string config_hash;
  nlohmann::json counts;
  nlohmann::json eval;
  std::vector<StageTiming> timings;
  std::vector<std::string> artifacts;  // file names under the output directory
};

/// Files written by run_pipeline, relative to its output directory.
std::vector<std::string> pipeline_artifacts(const PipelineConfig& c);

RunReport run_pipeline(const PipelineConfig& cfg, const std::string& out_dir, std::size_t workers = 1,
                       const Logger& log = {});

}  // namespace provsyn
