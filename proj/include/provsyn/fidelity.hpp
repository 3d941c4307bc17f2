#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "provsyn/graph.hpp"

namespace provsyn {

// ---------------------------------------------------------------------------
// MMD

enum class MmdMetric { Degree, Orbit, NodeLabel, EdgeLabel, NodeLabelDegree };
enum class MmdKernel { EmdGaussian, EuclideanGaussian };

inline constexpr std::array<MmdMetric, 5> kAllMmdMetrics{MmdMetric::Degree, MmdMetric::Orbit, MmdMetric::NodeLabel,
                                                        MmdMetric::EdgeLabel, MmdMetric::NodeLabelDegree};

const char* to_string(MmdMetric m) noexcept;
MmdMetric mmd_metric_from_string(const std::string& s);

struct MmdConfig {
  MmdMetric metric = MmdMetric::Degree;
  MmdKernel kernel = MmdKernel::EmdGaussian;
  /// <= 0 selects the median pairwise distance of the pooled features.
  double sigma = 0.0;
};

/// Default kernel per metric: Euclidean for orbit vectors, EMD otherwise.
MmdConfig default_mmd_config(MmdMetric m);

/// Sparse histogram or dense vector. Degree histograms use integer keys
/// {degree}; label histograms use string keys.
struct Feature {
  std::map<std::int64_t, double> ordinal;
  std::map<std::string, double> categorical;
  std::vector<double> dense;
};

/// Degree counts edges at a node in either direction. Histograms are
/// normalized to unit mass; orbit vectors are averaged over nodes.
Feature extract_feature(const ProvenanceGraph& g, MmdMetric m);

/// 1-D EMD for ordinal keys (unit spacing), total variation for categorical
/// keys, Euclidean distance for dense vectors.
double feature_distance(const Feature& a, const Feature& b, MmdKernel kernel);

struct MmdResult {
  double value = 0.0;
  double sigma = 0.0;
};

/// Unbiased MMD^2. With equal set sizes the paired U-statistic is used, so a
/// set compared with itself gives exactly 0. Symmetric in its arguments.
/// Throws EmptySet; sets need at least two graphs.
MmdResult mmd(const std::vector<Feature>& x, const std::vector<Feature>& y, const MmdConfig& cfg);
MmdResult mmd(const std::vector<ProvenanceGraph>& x, const std::vector<ProvenanceGraph>& y, const MmdConfig& cfg);

struct MmdReport {
  std::map<MmdMetric, MmdResult> values;
};

MmdReport mmd_suite(const std::vector<ProvenanceGraph>& real, const std::vector<ProvenanceGraph>& gen,
                    const std::map<MmdMetric, MmdConfig>& overrides = {}, std::size_t workers = 1);

nlohmann::json to_json(const MmdReport& r);

/// Orbit counts of connected graphlets with 2 to 4 nodes (15 orbits) per
/// node, on the simple undirected graph underlying g. Rows follow g.nodes.
std::vector<std::array<std::uint64_t, 15>> orbit_counts(const ProvenanceGraph& g);

// ---------------------------------------------------------------------------
// Text

enum class TextMetric { Bleu, Gleu, RougeLF };

std::vector<std::string> tokenize_name(const std::string& name);

double bleu(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double gleu(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double rouge_l_f(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

/// Similarity between two names under `m`. Empty generated names score 0 and
/// identical token lists score 1.
double name_similarity(const std::string& hyp, const std::string& ref, TextMetric m);

using ReferenceCorpus = std::map<NodeType, std::vector<std::string>>;

/// Real names per node type, excluding "[null]" and empty names.
ReferenceCorpus reference_corpus(const ProvenanceGraph& real);

struct TextScores {
  double bleu = 0.0;
  double gleu = 0.0;
  double rouge_l_f = 0.0;
  std::size_t nodes = 0;
};

/// Mean over generated nodes of the best score against R_t, per type.
/// `types` limits the evaluation; empty means every type in `gen`.
/// Throws MissingType.
std::map<NodeType, TextScores> text_quality(const ProvenanceGraph& gen, const ReferenceCorpus& corpus,
                                            const std::vector<NodeType>& types = {}, std::size_t workers = 1);

nlohmann::json to_json(const std::map<NodeType, TextScores>& t);

// ---------------------------------------------------------------------------
// Temporal

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
/// Dynamic time warping with 0/1 token distance.
double dtw_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Type tokens of every DFS sequence: node type, edge type, node type, ...
std::vector<std::vector<std::string>> type_sequences(const ProvenanceGraph& g);

struct TemporalReport {
  double lcs = 0.0;
  double dtw = 0.0;
  std::size_t sequences = 0;
};

/// Throws NoSequences.
TemporalReport temporal(const ProvenanceGraph& gen, const ProvenanceGraph& real, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Walk embeddings

enum class EmbeddingMethod { WalkSkipgram, WalkDocument };

struct EmbeddingConfig {
  EmbeddingMethod method = EmbeddingMethod::WalkSkipgram;
  int walks_per_node = 10;
  int walk_length = 20;
  int dimension = 64;
  int window = 5;
  int epochs = 5;
  int negatives = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmbeddingResult {
  double similarity = 0.0;
  bool degenerate = false;  // a graph vector was zero; similarity set to 0
};

/// Walks of each graph are drawn from the same seed, so identical graphs get
/// identical corpora and vectors.
std::vector<std::vector<std::string>> name_walks(const ProvenanceGraph& g, int walks_per_node, int walk_length,
                                                 std::uint64_t seed);

EmbeddingResult embedding_similarity(const ProvenanceGraph& gen, const ProvenanceGraph& real,
                                     const EmbeddingConfig& cfg);

}  // namespace provsyn
