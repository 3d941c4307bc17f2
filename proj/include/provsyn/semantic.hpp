#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "provsyn/graph.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

// ---------------------------------------------------------------------------
// Text encoding

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd encode(const std::string& text) const = 0;
  virtual std::string id() const = 0;
};

/// Signed feature hashing of character n-grams (with word boundary markers)
/// and whole words, L2-normalized.
class HashingEncoder final : public TextEncoder {
 public:
  explicit HashingEncoder(int dim = 64, int ngram = 3);
  int dim() const override { return dim_; }
  Eigen::VectorXd encode(const std::string& text) const override;
  std::string id() const override;
  int ngram() const { return ngram_; }

 private:
  int dim_;
  int ngram_;
};

// ---------------------------------------------------------------------------
// Contrastive data

struct SemanticTriple {
  std::string s;
  EdgeType e;
  std::string t;
  int label = 1;        // 1 positive, 0 negative, -1 unlabeled
  NodeId s_node = 0;    // graph nodes whose context vectors represent s and t
  NodeId t_node = 0;

  std::string sentence() const { return s + " " + e.str() + " " + t; }
  friend bool operator==(const SemanticTriple&, const SemanticTriple&) = default;
};

/// Edge type -> category name.
struct CategoryMap {
  std::map<EdgeType, std::string> category;

  std::size_t num_categories() const;
  /// Throws UnknownType or MalformedFile when the map and manifest differ.
  void validate(const DatasetManifest& m) const;
};

/// Groups by token: read/recv/load, write/send, network setup, process
/// control, everything else as file management.
CategoryMap default_category_map(const DatasetManifest& m);
nlohmann::json to_json(const CategoryMap& c, const std::string& manifest_id);
CategoryMap category_map_from_json(const nlohmann::json& j, const std::string& where = "categories");
CategoryMap read_category_map(const std::string& path);

struct ClusterAssignment {
  std::map<std::string, int> cluster_of;
  int k = 0;
};

/// k-means (k-means++ seeding, Lloyd iterations) over encoded unique names.
/// k is capped by the number of distinct names.
ClusterAssignment cluster_names(const std::vector<std::string>& names, const TextEncoder& enc, int k,
                                std::uint64_t seed, int iterations = 100);

enum class Corruption { SubjectObjectInversion, PredicateReplacement, EntitySubstitution };

/// (s, e, t) -> (t, e, s).
SemanticTriple invert(const SemanticTriple& tr);
/// Replaces e with a type from another category; nullopt if there is none.
std::optional<SemanticTriple> replace_predicate(const SemanticTriple& tr, const CategoryMap& cmap, Rng& rng);

/// Name pool for entity substitution.
struct EntityPool {
  std::vector<std::string> names;
  std::vector<NodeId> nodes;  // a node carrying each name
  std::vector<int> cluster;
};

EntityPool entity_pool(const ProvenanceGraph& g, const ClusterAssignment& clusters);

/// Replaces s or t (fair coin) with a name from a different cluster.
std::optional<SemanticTriple> substitute_entity(const SemanticTriple& tr, const ClusterAssignment& clusters,
                                                const EntityPool& pool, Rng& rng);

struct ContrastiveStats {
  std::size_t soi = 0, pr = 0, es = 0;
  std::vector<std::string> warnings;
};

/// Positive triple per edge followed by one negative; the strategy is drawn
/// uniformly from those that apply. Throws UnnamedNodes.
std::vector<SemanticTriple> build_contrastive_set(const ProvenanceGraph& real, const CategoryMap& cmap,
                                                  const ClusterAssignment& clusters, std::uint64_t seed,
                                                  ContrastiveStats* stats = nullptr);

std::vector<SemanticTriple> edge_triples(const ProvenanceGraph& g);

// ---------------------------------------------------------------------------
// Model

/// Neighbourhoods for attention: undirected, deduplicated, self included.
struct AttentionGraph {
  std::vector<std::vector<int>> nbrs;
  std::unordered_map<NodeId, std::size_t> index;
};

AttentionGraph attention_graph(const ProvenanceGraph& g);
Eigen::MatrixXd node_features(const ProvenanceGraph& g, const TextEncoder& enc);  // one row per node

struct GatLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd a_src;
  Eigen::VectorXd a_dst;
  bool elu = true;
};

struct GraphEncoder {
  std::vector<GatLayer> layers;

  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows()); }
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
};

struct GatTrace {
  std::vector<Eigen::MatrixXd> inputs;  // per layer
  std::vector<Eigen::MatrixXd> z;
  std::vector<Eigen::MatrixXd> mixed;
  std::vector<std::vector<std::vector<double>>> alpha;  // [layer][node][neighbour]
  std::vector<std::vector<std::vector<double>>> pre;
  Eigen::MatrixXd output;
};

GatTrace gat_forward(const GraphEncoder& enc, const AttentionGraph& g, const Eigen::MatrixXd& x);
/// Accumulates parameter gradients for d(loss)/d(output).
void gat_backward(const GraphEncoder& enc, const AttentionGraph& g, const GatTrace& tr, const Eigen::MatrixXd& d_out,
                  GraphEncoder& grad);

/// Mean BCE of sigmoid(u_i . u_j) over labeled node pairs.
double link_loss(const GraphEncoder& enc, const AttentionGraph& g, const Eigen::MatrixXd& x,
                 const std::vector<std::pair<int, int>>& pairs, const std::vector<double>& labels,
                 GraphEncoder* grad);

struct Discriminator {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;

  Eigen::VectorXd forward(const Eigen::MatrixXd& z) const;  // rows are samples
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
};

inline constexpr double kProbClamp = 1e-7;

/// Mean BCE with clamped probabilities; fills `grad` when given.
double discriminator_loss(const Discriminator& d, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                          Discriminator* grad);

struct SemanticConfig {
  int text_dim = 64;
  int ngram = 3;
  int graph_dim = 64;
  int layers = 2;
  int hidden = 64;
  int encoder_epochs = 2500;
  int discriminator_epochs = 1500;
  double learning_rate = 1e-4;
  int batch_size = 64;
  int clusters = 8;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  /// Randomly permute labels before training (no-signal control).
  bool shuffle_labels = false;

  void validate() const;
};

nlohmann::json to_json(const SemanticConfig& c);
SemanticConfig semantic_config_from_json(const nlohmann::json& j);

struct SemanticModel {
  SemanticConfig cfg;
  GraphEncoder encoder;
  Discriminator discriminator;

  std::unique_ptr<TextEncoder> text_encoder() const;
};

struct TrainReport {
  double initial_holdout_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  double train_accuracy = 0.0;
  double final_link_loss = 0.0;
  double final_loss = 0.0;
  std::size_t train_triples = 0;
  std::size_t holdout_triples = 0;
  ContrastiveStats contrastive;
};

SemanticModel init_semantic_model(const SemanticConfig& cfg);

/// Staged: the encoder learns link reconstruction, then the discriminator
/// learns the contrastive labels on frozen encoder outputs. Pairs of a
/// positive and its negative stay in the same split. Throws NonFiniteLoss.
SemanticModel train_validator(const ProvenanceGraph& real, const CategoryMap& cmap, const SemanticConfig& cfg,
                              TrainReport* report = nullptr);

/// Scores of triples in the context of `g`; s_node/t_node must be nodes of g.
std::vector<double> score_triples(const SemanticModel& m, const ProvenanceGraph& g,
                                  const std::vector<SemanticTriple>& triples);

struct SemanticScore {
  double accuracy = 0.0;  // fraction above threshold
  double mean_score = 0.0;
  std::size_t triples = 0;
  bool empty = false;  // no edges; accuracy defined as 0
};

/// Throws UnnamedNodes.
SemanticScore score_graph(const SemanticModel& m, const ProvenanceGraph& g, double threshold = 0.5);
nlohmann::json to_json(const SemanticScore& s);

void save_semantic_model(const SemanticModel& m, const std::string& path);
SemanticModel load_semantic_model(const std::string& path);

}  // namespace provsyn
