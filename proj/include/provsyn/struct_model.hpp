#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "provsyn/dfs_code.hpp"
#include "provsyn/graph.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

/// Symbol tables for the five tuple components. Timestamps range over
/// 0..max_nodes-1; labels are kept sorted so the layout does not depend on
/// insertion order.
struct Vocabulary {
  std::string manifest_id;
  int max_nodes = 0;
  std::vector<NodeType> node_labels;
  std::vector<EdgeType> edge_labels;

  static Vocabulary from_manifest(const DatasetManifest& m, int max_nodes);
  /// Collects the labels used by a corpus.
  static Vocabulary from_codes(const std::vector<DFSCode>& codes, int max_nodes, std::string manifest_id = {});

  int node_index(const NodeType& t) const;  // -1 when absent
  int edge_index(const EdgeType& t) const;

  /// Input width: SOS flag plus one-hot blocks for t_u, t_v, L_u, L_e, L_v.
  int input_size() const { return 1 + 2 * max_nodes + 2 * num_node_labels() + num_edge_labels(); }
  /// Output width: five categorical heads plus the stop logit.
  int output_size() const { return 2 * max_nodes + 2 * num_node_labels() + num_edge_labels() + 1; }
  int num_node_labels() const { return static_cast<int>(node_labels.size()); }
  int num_edge_labels() const { return static_cast<int>(edge_labels.size()); }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

nlohmann::json to_json(const Vocabulary& v);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

struct TrainConfig {
  int epochs = 3000;
  int batch_size = 32;
  double learning_rate = 0.003;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int hidden_size = 256;
  int embedding_size = 64;
  double clip_norm = 5.0;
  /// "adam" or "sgd".
  std::string optimizer = "adam";

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Embedding, one LSTM layer, and a shared output layer split into heads.
class StructureModel {
 public:
  using Mat = Eigen::MatrixXf;
  using Vec = Eigen::VectorXf;

  StructureModel() = default;
  StructureModel(Vocabulary vocab, int hidden_size, int embedding_size, Rng& rng);

  const Vocabulary& vocab() const noexcept { return vocab_; }
  int hidden_size() const noexcept { return hidden_; }
  int embedding_size() const noexcept { return embed_; }

  // Parameters. Gates are stacked (input, forget, cell, output).
  Mat w_emb;
  Vec b_emb;
  Mat w_ih;
  Mat w_hh;
  Vec b_gates;
  Mat w_out;
  Vec b_out;

  /// Visits every parameter tensor in a fixed order.
  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(w_emb.data(), w_emb.size());
    fn(b_emb.data(), b_emb.size());
    fn(w_ih.data(), w_ih.size());
    fn(w_hh.data(), w_hh.size());
    fn(b_gates.data(), b_gates.size());
    fn(w_out.data(), w_out.size());
    fn(b_out.data(), b_out.size());
  }

  template <class Fn>
  void for_each_param(Fn&& fn) const {
    const_cast<StructureModel*>(this)->for_each_param(
        [&](float* p, Eigen::Index n) { fn(static_cast<const float*>(p), n); });
  }

  std::size_t num_params() const;
  bool operator==(const StructureModel& o) const;

 private:
  Vocabulary vocab_;
  int hidden_ = 0;
  int embed_ = 0;
};

/// Trains on the corpus and returns the parameters with the best validation
/// loss. Throws EmptyCorpus, VocabularyOverflow (timestamp >= max_nodes),
/// UnknownType (label outside the vocabulary), NonFiniteLoss.
StructureModel train_structure_model(const std::vector<DFSCode>& corpus, const Vocabulary& vocab,
                                     const TrainConfig& cfg, std::vector<EpochStats>* history = nullptr,
                                     const std::function<void(const EpochStats&)>& on_epoch = {});

/// Mean per-sequence teacher-forced loss (summed BCE over all heads and steps).
double teacher_forced_loss(const StructureModel& m, const std::vector<DFSCode>& codes);

/// Loss of all codes as one batch (mean per sequence) and its gradient,
/// flattened in for_each_param order.
double loss_and_gradient(const StructureModel& m, const std::vector<DFSCode>& codes, std::vector<float>* grad);

struct SampleOptions {
  double temperature = 1.0;  // <= 1e-6 decodes greedily
  int max_edges = 64;
  /// Reject samples that need any repair instead of fixing them.
  bool strict = false;
};

struct SampleResult {
  ProvenanceGraph graph;  // undirected skeleton, names "[null]"
  DFSCode raw;            // tuples as emitted
  DFSCode code;           // repaired, structurally valid
  bool degenerate = false;  // stop at step 0; graph is empty
  bool rejected = false;    // strict mode found an invalid tuple
  std::size_t repaired = 0; // tuples modified or dropped by repair
};

SampleResult sample_graph(const StructureModel& m, Rng& rng, const SampleOptions& opts = {});

/// Greedy structural repair: forward edges go to the next fresh timestamp
/// from the nearest rightmost-path vertex, backward edges leave the rightmost
/// vertex toward the nearest rightmost-path vertex without an edge, labels
/// follow the first occurrence. Tuples that cannot be placed are dropped.
DFSCode repair_code(const DFSCode& raw, int max_nodes, std::size_t* changed = nullptr);

void save_model(const StructureModel& m, const std::string& path, const nlohmann::json& extra = {});
StructureModel load_model(const std::string& path, nlohmann::json* extra = nullptr);

void write_loss_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace provsyn
