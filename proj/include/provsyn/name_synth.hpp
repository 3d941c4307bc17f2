#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "provsyn/graph.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

struct SeqNode {
  NodeType type;
  std::string name;
  NodeId ref = 0;

  friend bool operator==(const SeqNode&, const SeqNode&) = default;
};

/// Alternating node/edge sequence: nodes[i] -edges[i]-> nodes[i+1].
struct NameSequence {
  std::vector<SeqNode> nodes;
  std::vector<EdgeType> edges;

  friend bool operator==(const NameSequence&, const NameSequence&) = default;
};

/// `(type, name) -edge-> (type, name) ...` on a single line.
std::string render_sequence(const NameSequence& seq);

/// Parses rendered text. With a template the expected types and edges are
/// used to locate name boundaries, so names may contain commas and
/// parentheses; refs are copied from the template. Throws ParseFailure.
NameSequence parse_sequence(const std::string& text, const NameSequence* templ = nullptr);

/// DFS paths from zero in-degree and self-loop nodes in ascending id, then
/// from the source of any edge still uncovered. Each traversal is split at
/// backtracks; a revisited node ends its branch. Every edge and every node
/// appears in at least one sequence.
std::vector<NameSequence> extract_sequences(const ProvenanceGraph& g);

struct MaskingConfig {
  std::size_t full_count = 10000;
  std::size_t partial_count = 10000;
  double mask_rate = 0.5;

  void validate() const;
};

nlohmann::json to_json(const MaskingConfig& c);
MaskingConfig masking_config_from_json(const nlohmann::json& j);

enum class MaskMode { Full, Partial };

struct QAPair {
  NameSequence question;
  NameSequence answer;
  MaskMode mode = MaskMode::Full;
};

/// Full pairs come first, then partial ones. Partial masking is per node, so
/// a node repeated in one sequence is masked at every position.
/// Throws InsufficientSequences, EmptyName (unnamed node in `real`).
std::vector<QAPair> build_qa_dataset(const ProvenanceGraph& real, const MaskingConfig& cfg, std::uint64_t seed,
                                     std::size_t workers = 1);

nlohmann::json qa_to_json(const QAPair& p);
void write_qa_dataset(const std::vector<QAPair>& pairs, const std::string& path);
std::vector<QAPair> read_qa_dataset(const std::string& path);

class NameBackend {
 public:
  virtual ~NameBackend() = default;
  /// Returns `seq` with every "[null]" replaced. Types, edges, length and
  /// existing names must be preserved.
  virtual NameSequence generate(const NameSequence& seq) = 0;
  virtual std::string id() const = 0;
};

struct NgramConfig {
  int order = 4;
  double smoothing = 0.01;  // additive; 0 disables
  double temperature = 1.0; // <= 1e-6 decodes greedily
  std::size_t max_length = 96;
  std::uint64_t seed = 0;
};

/// Character n-gram model per node type.
class NgramBackend final : public NameBackend {
 public:
  NgramBackend(const ProvenanceGraph& real, NgramConfig cfg);

  NameSequence generate(const NameSequence& seq) override;
  std::string id() const override { return "ngram"; }

  /// Throws EmptyTrainingNames for a type without training names.
  std::string sample_name(const NodeType& type);
  bool knows(const NodeType& type) const { return models_.contains(type); }
  const NgramConfig& config() const { return cfg_; }

 private:
  struct TypeModel {
    std::string alphabet;  // sorted, without the end marker
    std::map<std::string, std::map<char, double>> counts;
    std::map<std::string, double> totals;
  };

  NgramConfig cfg_;
  std::map<NodeType, TypeModel> models_;
  Rng rng_;
};

struct LlmConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "provsyn-names";
  std::string api_key_env = "PROVSYN_API_KEY";
  double temperature = 1.5;
  int max_tokens = 2048;
  int timeout_seconds = 60;
  int max_attempts = 4;     // per request, for transport errors and HTTP 429
  int backoff_ms = 500;     // doubled after every attempt
};

nlohmann::json to_json(const LlmConfig& c);
LlmConfig llm_config_from_json(const nlohmann::json& j);

/// Instruction preceding the rendered question in every request.
extern const char* const kNamePrompt;

/// Chat-completions client. Throws Transport, RateLimited, ParseFailure.
class LlmBackend final : public NameBackend {
 public:
  explicit LlmBackend(LlmConfig cfg);
  ~LlmBackend() override;

  NameSequence generate(const NameSequence& seq) override;
  std::string id() const override { return "llm"; }

  /// Request body sent for `seq`.
  nlohmann::json request_body(const NameSequence& seq) const;
  std::size_t requests() const { return requests_; }

 private:
  LlmConfig cfg_;
  std::size_t requests_ = 0;
};

struct FillOptions {
  /// Extra attempts after a malformed answer before falling back.
  int max_retries = 2;
  NameBackend* fallback = nullptr;
};

struct FillStats {
  std::size_t sequences = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;
  std::size_t fallbacks = 0;
};

/// Names every "[null]" node, one sequence at a time. Names written by an
/// earlier sequence are shown to later ones and never changed.
/// Throws BackendFailure naming the sequence index.
ProvenanceGraph fill_names(const ProvenanceGraph& skeleton, NameBackend& backend, const FillOptions& opts = {},
                           FillStats* stats = nullptr);

/// Throws LengthMismatch when `out` is not a valid answer to `question`.
void check_answer(const NameSequence& question, const NameSequence& out);

}  // namespace provsyn
