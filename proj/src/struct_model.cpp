#include "provsyn/struct_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"

namespace provsyn {

using nlohmann::json;
using Mat = StructureModel::Mat;
using Vec = StructureModel::Vec;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::from_manifest(const DatasetManifest& m, int max_nodes) {
  Vocabulary v;
  v.manifest_id = m.name;
  v.max_nodes = max_nodes;
  v.node_labels.assign(m.node_types.begin(), m.node_types.end());
  v.edge_labels.assign(m.edge_types.begin(), m.edge_types.end());
  return v;
}

Vocabulary Vocabulary::from_codes(const std::vector<DFSCode>& codes, int max_nodes, std::string manifest_id) {
  std::set<NodeType> nodes;
  std::set<EdgeType> edges;
  for (const auto& c : codes)
    for (const auto& t : c) {
      nodes.insert(t.lu);
      nodes.insert(t.lv);
      edges.insert(t.le);
    }
  Vocabulary v;
  v.manifest_id = std::move(manifest_id);
  v.max_nodes = max_nodes;
  v.node_labels.assign(nodes.begin(), nodes.end());
  v.edge_labels.assign(edges.begin(), edges.end());
  return v;
}

int Vocabulary::node_index(const NodeType& t) const {
  auto it = std::lower_bound(node_labels.begin(), node_labels.end(), t);
  return it != node_labels.end() && *it == t ? static_cast<int>(it - node_labels.begin()) : -1;
}

int Vocabulary::edge_index(const EdgeType& t) const {
  auto it = std::lower_bound(edge_labels.begin(), edge_labels.end(), t);
  return it != edge_labels.end() && *it == t ? static_cast<int>(it - edge_labels.begin()) : -1;
}

json to_json(const Vocabulary& v) {
  json nodes = json::array(), edges = json::array();
  for (const auto& t : v.node_labels) nodes.push_back(t.str());
  for (const auto& t : v.edge_labels) edges.push_back(t.str());
  return json{{"manifest", v.manifest_id}, {"max_nodes", v.max_nodes}, {"node_labels", nodes}, {"edge_labels", edges}};
}

Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  v.manifest_id = j.value("manifest", std::string{});
  v.max_nodes = j.at("max_nodes").get<int>();
  for (const auto& t : j.at("node_labels")) v.node_labels.emplace_back(t.get<std::string>());
  for (const auto& t : j.at("edge_labels")) v.edge_labels.emplace_back(t.get<std::string>());
  if (!std::is_sorted(v.node_labels.begin(), v.node_labels.end()) ||
      !std::is_sorted(v.edge_labels.begin(), v.edge_labels.end()))
    throw Error(ErrorCode::MalformedFile, "vocabulary labels must be sorted");
  return v;
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "train: " + m); };
  if (epochs <= 0) fail("epochs must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be non-negative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must be in (0,1)");
  if (hidden_size <= 0 || embedding_size <= 0) fail("layer sizes must be positive");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (optimizer != "adam" && optimizer != "sgd") fail("optimizer must be 'adam' or 'sgd'");
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"validation_fraction", c.validation_fraction},
              {"hidden_size", c.hidden_size},
              {"embedding_size", c.embedding_size},
              {"clip_norm", c.clip_norm},
              {"optimizer", c.optimizer}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.embedding_size = j.value("embedding_size", c.embedding_size);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

namespace {

void init_uniform(Mat& m, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void init_uniform(Vec& v, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
}

}  // namespace

StructureModel::StructureModel(Vocabulary vocab, int hidden_size, int embedding_size, Rng& rng)
    : vocab_(std::move(vocab)), hidden_(hidden_size), embed_(embedding_size) {
  const int d_in = vocab_.input_size();
  const int k = vocab_.output_size();
  w_emb.resize(embed_, d_in);
  b_emb.resize(embed_);
  w_ih.resize(4 * hidden_, embed_);
  w_hh.resize(4 * hidden_, hidden_);
  b_gates.resize(4 * hidden_);
  w_out.resize(k, hidden_);
  b_out.resize(k);
  // Fan-in 5: at most five active inputs per row.
  init_uniform(w_emb, 1.0f / std::sqrt(5.0f), rng);
  init_uniform(b_emb, 1.0f / std::sqrt(5.0f), rng);
  const float h = 1.0f / std::sqrt(static_cast<float>(hidden_));
  init_uniform(w_ih, h, rng);
  init_uniform(w_hh, h, rng);
  init_uniform(b_gates, h, rng);
  init_uniform(w_out, h, rng);
  init_uniform(b_out, h, rng);
}

std::size_t StructureModel::num_params() const {
  return static_cast<std::size_t>(w_emb.size() + b_emb.size() + w_ih.size() + w_hh.size() + b_gates.size() +
                                  w_out.size() + b_out.size());
}

bool StructureModel::operator==(const StructureModel& o) const {
  return vocab_ == o.vocab_ && hidden_ == o.hidden_ && embed_ == o.embed_ && w_emb == o.w_emb && b_emb == o.b_emb &&
         w_ih == o.w_ih && w_hh == o.w_hh && b_gates == o.b_gates && w_out == o.w_out && b_out == o.b_out;
}

namespace {

constexpr float kProbEps = 1e-6f;

struct Layout {
  int nts, nnl, nne, k;
  int off_tu, off_tv, off_lu, off_le, off_lv, stop;

  explicit Layout(const Vocabulary& v)
      : nts(v.max_nodes), nnl(v.num_node_labels()), nne(v.num_edge_labels()), k(v.output_size()) {
    off_tu = 0;
    off_tv = nts;
    off_lu = 2 * nts;
    off_le = off_lu + nnl;
    off_lv = off_le + nne;
    stop = k - 1;
  }
  std::array<int, 5> offsets() const { return {off_tu, off_tv, off_lu, off_le, off_lv}; }
  std::array<int, 5> sizes() const { return {nts, nts, nnl, nne, nnl}; }
};

// Output-layout indices of one tuple; input indices are these plus one (SOS at 0).
using TupleIdx = std::array<int, 5>;

struct EncodedSeq {
  std::vector<TupleIdx> tuples;
  int steps() const { return static_cast<int>(tuples.size()) + 1; }
};

EncodedSeq encode(const DFSCode& code, const Vocabulary& v, const Layout& lay, std::size_t which) {
  EncodedSeq s;
  for (std::size_t k = 0; k < code.size(); ++k) {
    const auto& t = code[k];
    auto where = [&] { return "code " + std::to_string(which) + " tuple " + std::to_string(k); };
    if (t.tu < 0 || t.tv < 0 || t.tu >= v.max_nodes || t.tv >= v.max_nodes)
      throw Error(ErrorCode::VocabularyOverflow,
                  where() + ": timestamp exceeds max_nodes " + std::to_string(v.max_nodes));
    const int lu = v.node_index(t.lu), le = v.edge_index(t.le), lv = v.node_index(t.lv);
    if (lu < 0 || lv < 0 || le < 0) throw Error(ErrorCode::UnknownType, where() + ": label outside the vocabulary");
    s.tuples.push_back({lay.off_tu + t.tu, lay.off_tv + t.tv, lay.off_lu + lu, lay.off_le + le, lay.off_lv + lv});
  }
  return s;
}

struct Grads {
  Mat w_emb, w_ih, w_hh, w_out;
  Vec b_emb, b_gates, b_out;

  explicit Grads(const StructureModel& m)
      : w_emb(Mat::Zero(m.w_emb.rows(), m.w_emb.cols())),
        w_ih(Mat::Zero(m.w_ih.rows(), m.w_ih.cols())),
        w_hh(Mat::Zero(m.w_hh.rows(), m.w_hh.cols())),
        w_out(Mat::Zero(m.w_out.rows(), m.w_out.cols())),
        b_emb(Vec::Zero(m.b_emb.size())),
        b_gates(Vec::Zero(m.b_gates.size())),
        b_out(Vec::Zero(m.b_out.size())) {}

  void zero() {
    w_emb.setZero();
    w_ih.setZero();
    w_hh.setZero();
    w_out.setZero();
    b_emb.setZero();
    b_gates.setZero();
    b_out.setZero();
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    fn(w_emb.data(), w_emb.size());
    fn(b_emb.data(), b_emb.size());
    fn(w_ih.data(), w_ih.size());
    fn(w_hh.data(), w_hh.size());
    fn(b_gates.data(), b_gates.size());
    fn(w_out.data(), w_out.size());
    fn(b_out.data(), b_out.size());
  }
};

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Loss of one column's logits and, if dz is given, its gradient (scaled).
// `target` is null for the end-of-sequence step, which only trains the stop head.
double column_loss(const Layout& lay, const float* z, const TupleIdx* target, float* dz, float scale) {
  double loss = 0.0;
  const auto offs = lay.offsets();
  const auto sizes = lay.sizes();
  if (target) {
    float p[512];
    std::vector<float> big;
    for (int h = 0; h < 5; ++h) {
      const int off = offs[h], n = sizes[h];
      float* pp = p;
      if (n > 512) {
        big.resize(n);
        pp = big.data();
      }
      float mx = z[off];
      for (int j = 1; j < n; ++j) mx = std::max(mx, z[off + j]);
      float sum = 0.0f;
      for (int j = 0; j < n; ++j) sum += (pp[j] = std::exp(z[off + j] - mx));
      for (int j = 0; j < n; ++j) pp[j] /= sum;
      const int y = (*target)[h] - off;
      // BCE over the one-hot: -sum_j [y_j log p_j + (1-y_j) log(1-p_j)].
      float dot = 0.0f;
      for (int j = 0; j < n; ++j) {
        const float pc = std::clamp(pp[j], kProbEps, 1.0f - kProbEps);
        if (j == y) {
          loss -= std::log(pc);
        } else {
          loss -= std::log1p(-pc);
        }
        if (dz) {
          const float g = j == y ? -1.0f / pc : 1.0f / (1.0f - pc);
          dz[off + j] = g;  // temporarily holds dL/dp
          dot += pp[j] * g;
        }
      }
      if (dz)
        for (int j = 0; j < n; ++j) dz[off + j] = scale * pp[j] * (dz[off + j] - dot);
    }
  } else if (dz) {
    for (int j = 0; j < lay.stop; ++j) dz[j] = 0.0f;
  }
  const float s = sigmoid(z[lay.stop]);
  const float y = target ? 0.0f : 1.0f;
  const float sc = std::clamp(s, kProbEps, 1.0f - kProbEps);
  loss -= target ? std::log1p(-sc) : std::log(sc);
  if (dz) dz[lay.stop] = scale * (s - y);
  return loss;
}

// Forward (and optionally backward) over a batch sorted by length, longest first.
class BatchRunner {
 public:
  explicit BatchRunner(const StructureModel& m) : m_(m), lay_(m.vocab()) {}

  double run(const std::vector<const EncodedSeq*>& batch, Grads* grads) {
    const int bsz = static_cast<int>(batch.size());
    const int H = m_.hidden_size();
    const int T = batch.front()->steps();
    ensure(T);
    const float scale = 1.0f / static_cast<float>(bsz);
    double loss = 0.0;

    active_.assign(T, 0);
    for (int t = 0; t < T; ++t)
      while (active_[t] < bsz && batch[active_[t]]->steps() > t) ++active_[t];

    for (int t = 0; t < T; ++t) {
      const int n = active_[t];
      auto& ep = epre_[t];
      ep.resize(m_.embedding_size(), n);
      for (int c = 0; c < n; ++c) {
        auto col = ep.col(c);
        col = m_.b_emb;
        if (t == 0) {
          col += m_.w_emb.col(0);
        } else {
          for (int idx : batch[c]->tuples[t - 1]) col += m_.w_emb.col(idx + 1);
        }
      }
      emb_[t] = ep.cwiseMax(0.0f);
      auto& g = gates_[t];
      g.noalias() = m_.w_ih * emb_[t];
      if (t > 0) g.noalias() += m_.w_hh * h_[t - 1].leftCols(n);
      g.colwise() += m_.b_gates;
      g.topRows(2 * H) = g.topRows(2 * H).unaryExpr([](float x) { return sigmoid(x); });
      g.middleRows(2 * H, H) = g.middleRows(2 * H, H).array().tanh();
      g.bottomRows(H) = g.bottomRows(H).unaryExpr([](float x) { return sigmoid(x); });
      c_[t] = g.middleRows(0, H).cwiseProduct(g.middleRows(2 * H, H));
      if (t > 0) c_[t] += g.middleRows(H, H).cwiseProduct(c_[t - 1].leftCols(n));
      tc_[t] = c_[t].array().tanh();
      h_[t] = g.bottomRows(H).cwiseProduct(tc_[t]);
      auto& z = z_[t];
      z.noalias() = m_.w_out * h_[t];
      z.colwise() += m_.b_out;
      for (int c = 0; c < n; ++c) {
        const TupleIdx* target = t < batch[c]->steps() - 1 ? &batch[c]->tuples[t] : nullptr;
        loss += column_loss(lay_, z.col(c).data(), target, grads ? z.col(c).data() : nullptr, scale);
      }
      // z now holds dL/dz when grads are requested.
    }
    if (!grads) return loss;

    Mat dh_rec, dc_next, dg, dh, demb;
    for (int t = T - 1; t >= 0; --t) {
      const int n = active_[t];
      const auto& dz = z_[t];
      grads->w_out.noalias() += dz * h_[t].transpose();
      grads->b_out += dz.rowwise().sum();
      dh.noalias() = m_.w_out.transpose() * dz;
      const int nn = t + 1 < T ? active_[t + 1] : 0;
      if (nn > 0) dh.leftCols(nn) += dh_rec;
      const auto& g = gates_[t];
      // dc = dh * o * (1 - tanh(c)^2) + dc from the next step.
      Mat dc = dh.cwiseProduct(g.bottomRows(H)).cwiseProduct((1.0f - tc_[t].array().square()).matrix());
      if (nn > 0) dc.leftCols(nn) += dc_next;
      dg.resize(4 * H, n);
      const auto i = g.topRows(H).array();
      const auto f = g.middleRows(H, H).array();
      const auto gg = g.middleRows(2 * H, H).array();
      const auto o = g.bottomRows(H).array();
      dg.topRows(H) = (dc.array() * gg * i * (1.0f - i)).matrix();
      if (t > 0) {
        dg.middleRows(H, H) = (dc.array() * c_[t - 1].leftCols(n).array() * f * (1.0f - f)).matrix();
      } else {
        dg.middleRows(H, H).setZero();
      }
      dg.middleRows(2 * H, H) = (dc.array() * i * (1.0f - gg.square())).matrix();
      dg.bottomRows(H) = (dh.array() * tc_[t].array() * o * (1.0f - o)).matrix();

      grads->w_ih.noalias() += dg * emb_[t].transpose();
      grads->b_gates += dg.rowwise().sum();
      if (t > 0) {
        grads->w_hh.noalias() += dg * h_[t - 1].leftCols(n).transpose();
        dh_rec.noalias() = m_.w_hh.transpose() * dg;
        dc_next = dc.cwiseProduct(g.middleRows(H, H));
      }
      demb.noalias() = m_.w_ih.transpose() * dg;
      demb = demb.cwiseProduct((epre_[t].array() > 0.0f).cast<float>().matrix());
      grads->b_emb += demb.rowwise().sum();
      for (int c = 0; c < n; ++c) {
        if (t == 0) {
          grads->w_emb.col(0) += demb.col(c);
        } else {
          for (int idx : batch[c]->tuples[t - 1]) grads->w_emb.col(idx + 1) += demb.col(c);
        }
      }
    }
    return loss;
  }

 private:
  void ensure(int T) {
    if (static_cast<int>(epre_.size()) >= T) return;
    epre_.resize(T);
    emb_.resize(T);
    gates_.resize(T);
    c_.resize(T);
    tc_.resize(T);
    h_.resize(T);
    z_.resize(T);
  }

  const StructureModel& m_;
  Layout lay_;
  std::vector<int> active_;
  std::vector<Mat> epre_, emb_, gates_, c_, tc_, h_, z_;
};

double evaluate(const StructureModel& m, const std::vector<EncodedSeq>& seqs, const std::vector<std::size_t>& idx,
                int batch_size) {
  if (idx.empty()) return 0.0;
  BatchRunner runner(m);
  double total = 0.0;
  std::vector<const EncodedSeq*> batch;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    batch.clear();
    for (std::size_t k = start; k < std::min(idx.size(), start + batch_size); ++k) batch.push_back(&seqs[idx[k]]);
    std::stable_sort(batch.begin(), batch.end(),
                     [](const EncodedSeq* a, const EncodedSeq* b) { return a->steps() > b->steps(); });
    total += runner.run(batch, nullptr);
  }
  return total / static_cast<double>(idx.size());
}

class Optimizer {
 public:
  Optimizer(StructureModel& m, const TrainConfig& cfg) : cfg_(cfg) {
    m.for_each_param([&](float*, Eigen::Index n) {
      m1_.emplace_back(Vec::Zero(n));
      m2_.emplace_back(Vec::Zero(n));
    });
  }

  void step(StructureModel& m, Grads& g) {
    double sq = 0.0;
    g.for_each([&](float* p, Eigen::Index n) { sq += Eigen::Map<Vec>(p, n).squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw Error(ErrorCode::NonFiniteLoss, "gradient norm is not finite");
    const float clip = norm > cfg_.clip_norm ? static_cast<float>(cfg_.clip_norm / norm) : 1.0f;
    std::vector<std::pair<float*, Eigen::Index>> grads;
    g.for_each([&](float* p, Eigen::Index n) { grads.emplace_back(p, n); });
    ++t_;
    const float lr = static_cast<float>(cfg_.learning_rate);
    const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(t_));
    std::size_t k = 0;
    m.for_each_param([&](float* p, Eigen::Index n) {
      Eigen::Map<Vec> w(p, n);
      Eigen::Map<Vec> d(grads[k].first, n);
      d *= clip;
      if (cfg_.optimizer == "sgd") {
        w -= lr * d;
      } else {
        m1_[k] = b1 * m1_[k] + (1.0f - b1) * d;
        m2_[k] = b2 * m2_[k] + (1.0f - b2) * d.cwiseProduct(d);
        w.array() -= lr * (m1_[k].array() / c1) / ((m2_[k].array() / c2).sqrt() + eps);
      }
      ++k;
    });
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Vec> m1_, m2_;
  long t_ = 0;
};

}  // namespace

StructureModel train_structure_model(const std::vector<DFSCode>& corpus, const Vocabulary& vocab,
                                     const TrainConfig& cfg, std::vector<EpochStats>* history,
                                     const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");
  const Layout lay(vocab);
  std::vector<EncodedSeq> seqs;
  seqs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) seqs.push_back(encode(corpus[i], vocab, lay, i));

  Rng rng(cfg.seed);
  StructureModel model(vocab, cfg.hidden_size, cfg.embedding_size, rng);

  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = 0;
  if (seqs.size() >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.validation_fraction * seqs.size())), 1,
                                    seqs.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train(order.begin() + n_val, order.end());
  if (val.empty()) val = train;

  StructureModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  Grads grads(model);
  Optimizer opt(model, cfg);
  BatchRunner runner(model);
  std::vector<const EncodedSeq*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(train.size(), start + cfg.batch_size); ++k)
        batch.push_back(&seqs[train[k]]);
      std::stable_sort(batch.begin(), batch.end(),
                       [](const EncodedSeq* a, const EncodedSeq* b) { return a->steps() > b->steps(); });
      grads.zero();
      total += runner.run(batch, &grads);
      opt.step(model, grads);
    }
    EpochStats st{epoch, total / static_cast<double>(train.size()), evaluate(model, seqs, val, cfg.batch_size)};
    if (!std::isfinite(st.train_loss) || !std::isfinite(st.val_loss))
      throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch));
    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      best = model;
    }
    if (history) history->push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return best;
}

double teacher_forced_loss(const StructureModel& m, const std::vector<DFSCode>& codes) {
  if (codes.empty()) return 0.0;
  const Layout lay(m.vocab());
  std::vector<EncodedSeq> seqs;
  for (std::size_t i = 0; i < codes.size(); ++i) seqs.push_back(encode(codes[i], m.vocab(), lay, i));
  std::vector<std::size_t> idx(seqs.size());
  std::iota(idx.begin(), idx.end(), 0);
  return evaluate(m, seqs, idx, 64);
}

double loss_and_gradient(const StructureModel& m, const std::vector<DFSCode>& codes, std::vector<float>* grad) {
  if (codes.empty()) throw Error(ErrorCode::EmptyCorpus, "no codes");
  const Layout lay(m.vocab());
  std::vector<EncodedSeq> seqs;
  for (std::size_t i = 0; i < codes.size(); ++i) seqs.push_back(encode(codes[i], m.vocab(), lay, i));
  std::vector<const EncodedSeq*> batch;
  for (const auto& s : seqs) batch.push_back(&s);
  std::stable_sort(batch.begin(), batch.end(),
                   [](const EncodedSeq* a, const EncodedSeq* b) { return a->steps() > b->steps(); });
  BatchRunner runner(m);
  Grads g(m);
  const double loss = runner.run(batch, grad ? &g : nullptr) / static_cast<double>(codes.size());
  if (grad) {
    grad->clear();
    g.for_each([&](float* p, Eigen::Index n) { grad->insert(grad->end(), p, p + n); });
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

int sample_categorical(const float* z, int n, double temperature, Rng& rng) {
  if (temperature <= 1e-6) return static_cast<int>(std::max_element(z, z + n) - z);
  std::vector<double> p(n);
  double mx = z[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(z[j]));
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += (p[j] = std::exp((z[j] - mx) / temperature));
  double r = uniform01(rng) * sum;
  for (int j = 0; j < n; ++j) {
    r -= p[j];
    if (r < 0.0) return j;
  }
  return n - 1;
}

int nearest_on_path(const std::vector<int>& candidates, int want) {
  int best = -1;
  for (int c : candidates)
    if (best < 0 || std::abs(c - want) < std::abs(best - want) ||
        (std::abs(c - want) == std::abs(best - want) && c > best))
      best = c;
  return best;
}

}  // namespace

DFSCode repair_code(const DFSCode& raw, int max_nodes, std::size_t* changed) {
  DFSCode out;
  std::size_t fixes = 0;
  if (raw.empty()) {
    if (changed) *changed = 0;
    return out;
  }
  std::vector<NodeType> labels;
  std::vector<int> rmpath;
  std::set<std::pair<int, int>> pairs;

  {
    EdgeTuple t = raw[0];
    if (t.tu != 0 || t.tv != 1) {
      ++fixes;
      if (t.tu > t.tv) std::swap(t.lu, t.lv);
      t.tu = 0;
      t.tv = 1;
    }
    if (max_nodes < 2) {
      if (changed) *changed = raw.size();
      return out;
    }
    labels = {t.lu, t.lv};
    rmpath = {0, 1};
    pairs.insert({0, 1});
    out.push_back(t);
  }

  for (std::size_t k = 1; k < raw.size(); ++k) {
    const auto& t = raw[k];
    const int next = static_cast<int>(labels.size());
    if (t.tu < t.tv) {
      if (next >= max_nodes) {
        ++fixes;
        continue;
      }
      const int src = nearest_on_path(rmpath, t.tu);
      EdgeTuple r{src, next, labels[src], t.le, t.lv};
      if (!(r == t)) ++fixes;
      labels.push_back(t.lv);
      while (rmpath.back() != src) rmpath.pop_back();
      rmpath.push_back(next);
      pairs.insert({src, next});
      out.push_back(r);
    } else {
      const int from = rmpath.back();
      std::vector<int> candidates;
      for (int c : rmpath)
        if (c != from && !pairs.count(std::minmax(c, from))) candidates.push_back(c);
      if (candidates.empty()) {
        ++fixes;
        continue;
      }
      const int to = nearest_on_path(candidates, t.tv);
      EdgeTuple r{from, to, labels[from], t.le, labels[to]};
      if (!(r == t)) ++fixes;
      pairs.insert(std::minmax(from, to));
      out.push_back(r);
    }
  }
  if (changed) *changed = fixes;
  return out;
}

SampleResult sample_graph(const StructureModel& m, Rng& rng, const SampleOptions& opts) {
  const auto& v = m.vocab();
  const Layout lay(v);
  const int H = m.hidden_size();
  SampleResult res;
  res.graph.directed = false;
  res.graph.manifest_id = v.manifest_id;

  Vec h = Vec::Zero(H), c = Vec::Zero(H), e(m.embedding_size()), g(4 * H), z(lay.k);
  std::array<int, 5> prev{};
  bool have_prev = false;
  for (int step = 0; step <= opts.max_edges; ++step) {
    e = m.b_emb;
    if (!have_prev) {
      e += m.w_emb.col(0);
    } else {
      for (int idx : prev) e += m.w_emb.col(idx + 1);
    }
    e = e.cwiseMax(0.0f);
    g.noalias() = m.w_ih * e;
    g.noalias() += m.w_hh * h;
    g += m.b_gates;
    for (int r = 0; r < 2 * H; ++r) g[r] = sigmoid(g[r]);
    for (int r = 2 * H; r < 3 * H; ++r) g[r] = std::tanh(g[r]);
    for (int r = 3 * H; r < 4 * H; ++r) g[r] = sigmoid(g[r]);
    c = g.segment(H, H).cwiseProduct(c) + g.head(H).cwiseProduct(g.segment(2 * H, H));
    h = g.tail(H).cwiseProduct(c.array().tanh().matrix());
    z.noalias() = m.w_out * h;
    z += m.b_out;

    const double p_stop = sigmoid(static_cast<float>(z[lay.stop] / std::max(opts.temperature, 1e-6)));
    const bool stop = opts.temperature <= 1e-6 ? z[lay.stop] > 0.0f : uniform01(rng) < p_stop;
    if (stop || step == opts.max_edges) break;

    const auto offs = lay.offsets();
    const auto sizes = lay.sizes();
    for (int k = 0; k < 5; ++k) prev[k] = offs[k] + sample_categorical(z.data() + offs[k], sizes[k], opts.temperature, rng);
    have_prev = true;
    res.raw.push_back(EdgeTuple{prev[0] - lay.off_tu, prev[1] - lay.off_tv, v.node_labels[prev[2] - lay.off_lu],
                                v.edge_labels[prev[3] - lay.off_le], v.node_labels[prev[4] - lay.off_lv]});
  }
  if (res.raw.empty()) {
    res.degenerate = true;
    return res;
  }
  res.code = repair_code(res.raw, v.max_nodes, &res.repaired);
  if (opts.strict && (res.repaired > 0 || !is_valid_code(res.raw))) {
    res.rejected = true;
    res.code.clear();
    return res;
  }
  res.graph = decode(res.code, v.manifest_id);
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'S', 'Y', 'N', 'S', 'T', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::MalformedFile, path + ": truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_model(const StructureModel& m, const std::string& path, const json& extra) {
  json header{{"vocab", to_json(m.vocab())},
              {"hidden_size", m.hidden_size()},
              {"embedding_size", m.embedding_size()},
              {"extra", extra}};
  const std::string hs = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, hs.size());
  out += hs;
  m.for_each_param([&](const float* p, Eigen::Index n) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(n));
    out.append(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n) * sizeof(float));
  });
  write_text_file(path, out);
}

StructureModel load_model(const std::string& path, json* extra) {
  const std::string in = read_text_file(path);
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::MalformedFile, path + ": not a structure-model checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(in, pos, path);
  if (version != kVersion)
    throw Error(ErrorCode::MalformedFile, path + ": unsupported checkpoint version " + std::to_string(version));
  const auto hlen = take<std::uint64_t>(in, pos, path);
  if (pos + hlen > in.size()) throw Error(ErrorCode::MalformedFile, path + ": truncated checkpoint");
  const json header = parse_json_text(in.substr(pos, hlen), path);
  pos += hlen;
  Rng dummy(0);
  StructureModel m(vocabulary_from_json(header.at("vocab")), header.at("hidden_size").get<int>(),
                   header.at("embedding_size").get<int>(), dummy);
  m.for_each_param([&](float* p, Eigen::Index n) {
    const auto stored = take<std::uint64_t>(in, pos, path);
    if (stored != static_cast<std::uint64_t>(n))
      throw Error(ErrorCode::MalformedFile, path + ": tensor size mismatch");
    if (pos + n * sizeof(float) > in.size()) throw Error(ErrorCode::MalformedFile, path + ": truncated checkpoint");
    std::memcpy(p, in.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
  });
  if (pos != in.size()) throw Error(ErrorCode::MalformedFile, path + ": trailing bytes in checkpoint");
  if (extra) *extra = header.value("extra", json{});
  return m;
}

void write_loss_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& s : history) out << s.epoch << ',' << s.train_loss << ',' << s.val_loss << '\n';
  write_text_file(path, out.str());
}

}  // namespace provsyn
