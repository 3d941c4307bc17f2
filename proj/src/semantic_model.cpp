#include <algorithm>
#include <cmath>
#include <numeric>

#include "provsyn/error.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/semantic.hpp"

namespace provsyn {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

AttentionGraph attention_graph(const ProvenanceGraph& g) {
  AttentionGraph a;
  a.index = id_index(g);
  a.nbrs.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) a.nbrs[i].push_back(static_cast<int>(i));
  for (const auto& e : g.edges) {
    const int s = static_cast<int>(a.index.at(e.src)), d = static_cast<int>(a.index.at(e.dst));
    a.nbrs[s].push_back(d);
    a.nbrs[d].push_back(s);
  }
  for (auto& l : a.nbrs) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return a;
}

MatrixXd node_features(const ProvenanceGraph& g, const TextEncoder& enc) {
  MatrixXd x(static_cast<Eigen::Index>(g.nodes.size()), enc.dim());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = enc.encode(g.nodes[i].name);
  return x;
}

namespace {

template <class Fn>
void visit(GraphEncoder& enc, Fn&& fn) {
  for (auto& l : enc.layers) {
    fn(l.w.data(), l.w.size());
    fn(l.a_src.data(), l.a_src.size());
    fn(l.a_dst.data(), l.a_dst.size());
  }
}

template <class Fn>
void visit(Discriminator& d, Fn&& fn) {
  fn(d.w1.data(), d.w1.size());
  fn(d.b1.data(), d.b1.size());
  fn(d.w2.data(), d.w2.size());
  fn(&d.b2, 1);
}

template <class M>
std::vector<double> flatten_of(const M& m) {
  std::vector<double> out;
  visit(const_cast<M&>(m), [&](double* p, Eigen::Index n) { out.insert(out.end(), p, p + n); });
  return out;
}

template <class M>
void assign_to(M& m, const std::vector<double>& flat) {
  std::size_t k = 0;
  visit(m, [&](double* p, Eigen::Index n) {
    if (k + static_cast<std::size_t>(n) > flat.size()) throw Error(ErrorCode::MalformedFile, "parameter vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(k), flat.begin() + static_cast<std::ptrdiff_t>(k + n), p);
    k += static_cast<std::size_t>(n);
  });
  if (k != flat.size()) throw Error(ErrorCode::MalformedFile, "parameter vector too long");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<double> GraphEncoder::flatten() const { return flatten_of(*this); }
void GraphEncoder::assign(const std::vector<double>& flat) { assign_to(*this, flat); }
std::vector<double> Discriminator::flatten() const { return flatten_of(*this); }
void Discriminator::assign(const std::vector<double>& flat) { assign_to(*this, flat); }

GatTrace gat_forward(const GraphEncoder& enc, const AttentionGraph& g, const MatrixXd& x) {
  GatTrace tr;
  MatrixXd h = x;
  const std::size_t n = g.nbrs.size();
  for (const auto& layer : enc.layers) {
    tr.inputs.push_back(h);
    MatrixXd z = h * layer.w.transpose();
    const VectorXd s = z * layer.a_src;
    const VectorXd t = z * layer.a_dst;
    std::vector<std::vector<double>> alpha(n), pre(n);
    MatrixXd mixed = MatrixXd::Zero(z.rows(), z.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nb = g.nbrs[i];
      pre[i].resize(nb.size());
      alpha[i].resize(nb.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nb.size(); ++k) {
        pre[i][k] = s[static_cast<Eigen::Index>(i)] + t[nb[k]];
        const double e = pre[i][k] > 0 ? pre[i][k] : 0.2 * pre[i][k];
        alpha[i][k] = e;
        mx = std::max(mx, e);
      }
      double sum = 0.0;
      for (auto& a : alpha[i]) sum += (a = std::exp(a - mx));
      for (std::size_t k = 0; k < nb.size(); ++k) {
        alpha[i][k] /= sum;
        mixed.row(static_cast<Eigen::Index>(i)) += alpha[i][k] * z.row(nb[k]);
      }
    }
    h = layer.elu ? MatrixXd(mixed.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); })) : mixed;
    tr.z.push_back(std::move(z));
    tr.mixed.push_back(std::move(mixed));
    tr.alpha.push_back(std::move(alpha));
    tr.pre.push_back(std::move(pre));
  }
  tr.output = h;
  return tr;
}

void gat_backward(const GraphEncoder& enc, const AttentionGraph& g, const GatTrace& tr, const MatrixXd& d_out,
                  GraphEncoder& grad) {
  MatrixXd dh = d_out;
  const std::size_t n = g.nbrs.size();
  for (std::size_t l = enc.layers.size(); l-- > 0;) {
    const auto& layer = enc.layers[l];
    auto& gl = grad.layers[l];
    const MatrixXd& z = tr.z[l];
    const MatrixXd& m = tr.mixed[l];
    MatrixXd dm = dh;
    if (layer.elu)
      for (Eigen::Index i = 0; i < dm.rows(); ++i)
        for (Eigen::Index j = 0; j < dm.cols(); ++j)
          if (m(i, j) <= 0) dm(i, j) *= std::exp(m(i, j));
    MatrixXd dz = MatrixXd::Zero(z.rows(), z.cols());
    VectorXd ds = VectorXd::Zero(z.rows()), dt = VectorXd::Zero(z.rows());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nb = g.nbrs[i];
      const auto& a = tr.alpha[l][i];
      const auto ii = static_cast<Eigen::Index>(i);
      std::vector<double> da(nb.size());
      double dot = 0.0;
      for (std::size_t k = 0; k < nb.size(); ++k) {
        dz.row(nb[k]) += a[k] * dm.row(ii);
        da[k] = dm.row(ii).dot(z.row(nb[k]));
        dot += a[k] * da[k];
      }
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const double de = a[k] * (da[k] - dot);
        const double dp = de * (tr.pre[l][i][k] > 0 ? 1.0 : 0.2);
        ds[ii] += dp;
        dt[nb[k]] += dp;
      }
    }
    gl.a_src += z.transpose() * ds;
    gl.a_dst += z.transpose() * dt;
    dz += ds * layer.a_src.transpose();
    dz += dt * layer.a_dst.transpose();
    gl.w += dz.transpose() * tr.inputs[l];
    dh = dz * layer.w;
  }
}

double link_loss(const GraphEncoder& enc, const AttentionGraph& g, const MatrixXd& x,
                 const std::vector<std::pair<int, int>>& pairs, const std::vector<double>& labels, GraphEncoder* grad) {
  const auto tr = gat_forward(enc, g, x);
  const MatrixXd& u = tr.output;
  MatrixXd du = MatrixXd::Zero(u.rows(), u.cols());
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const double p = std::clamp(sigmoid(u.row(i).dot(u.row(j))), kProbClamp, 1.0 - kProbClamp);
    const double y = labels[k];
    loss -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) * inv;
    const double gk = (p - y) * inv;
    du.row(i) += gk * u.row(j);
    du.row(j) += gk * u.row(i);
  }
  if (grad) {
    for (auto& l : grad->layers) {
      l.w.setZero();
      l.a_src.setZero();
      l.a_dst.setZero();
    }
    gat_backward(enc, g, tr, du, *grad);
  }
  return loss;
}

VectorXd Discriminator::forward(const MatrixXd& z) const {
  const MatrixXd h = ((z * w1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
  return ((h * w2).array() + b2).unaryExpr([](double v) { return sigmoid(v); });
}

double discriminator_loss(const Discriminator& d, const MatrixXd& z, const VectorXd& y, Discriminator* grad) {
  const MatrixXd pre = (z * d.w1.transpose()).rowwise() + d.b1.transpose();
  const MatrixXd h = pre.cwiseMax(0.0);
  const VectorXd logits = (h * d.w2).array() + d.b2;
  const double inv = 1.0 / static_cast<double>(std::max<Eigen::Index>(1, z.rows()));
  double loss = 0.0;
  VectorXd dlogit(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double p = std::clamp(sigmoid(logits[i]), kProbClamp, 1.0 - kProbClamp);
    loss -= (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p)) * inv;
    dlogit[i] = (p - y[i]) * inv;
  }
  if (grad) {
    grad->b2 = dlogit.sum();
    grad->w2 = h.transpose() * dlogit;
    MatrixXd dpre = (dlogit * d.w2.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    grad->w1 = dpre.transpose() * z;
    grad->b1 = dpre.colwise().sum().transpose();
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "discriminator loss is not finite");
  return loss;
}

// ---------------------------------------------------------------------------

void SemanticConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "semantic: " + m); };
  if (text_dim < 1 || ngram < 1 || graph_dim < 1 || layers < 1 || hidden < 1) fail("dimensions must be positive");
  if (encoder_epochs < 0 || discriminator_epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (batch_size < 1) fail("batch_size must be positive");
  if (clusters < 1) fail("clusters must be positive");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) fail("holdout_fraction must be in (0,1)");
}

json to_json(const SemanticConfig& c) {
  return json{{"text_dim", c.text_dim},
              {"ngram", c.ngram},
              {"graph_dim", c.graph_dim},
              {"layers", c.layers},
              {"hidden", c.hidden},
              {"encoder_epochs", c.encoder_epochs},
              {"discriminator_epochs", c.discriminator_epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"clusters", c.clusters},
              {"holdout_fraction", c.holdout_fraction},
              {"seed", c.seed},
              {"shuffle_labels", c.shuffle_labels}};
}

SemanticConfig semantic_config_from_json(const json& j) {
  SemanticConfig c;
  c.text_dim = j.value("text_dim", c.text_dim);
  c.ngram = j.value("ngram", c.ngram);
  c.graph_dim = j.value("graph_dim", c.graph_dim);
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.encoder_epochs = j.value("encoder_epochs", c.encoder_epochs);
  c.discriminator_epochs = j.value("discriminator_epochs", c.discriminator_epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clusters = j.value("clusters", c.clusters);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.seed = j.value("seed", c.seed);
  c.shuffle_labels = j.value("shuffle_labels", c.shuffle_labels);
  c.validate();
  return c;
}

std::unique_ptr<TextEncoder> SemanticModel::text_encoder() const {
  return std::make_unique<HashingEncoder>(cfg.text_dim, cfg.ngram);
}

SemanticModel init_semantic_model(const SemanticConfig& cfg) {
  cfg.validate();
  SemanticModel m;
  m.cfg = cfg;
  Rng rng(derive_seed(cfg.seed, 11));
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixXd w(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * a;
    return w;
  };
  int in = cfg.text_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    GatLayer layer;
    layer.w = glorot(cfg.graph_dim, in);
    layer.a_src = glorot(cfg.graph_dim, 1).col(0);
    layer.a_dst = glorot(cfg.graph_dim, 1).col(0);
    layer.elu = l + 1 < cfg.layers;
    m.encoder.layers.push_back(std::move(layer));
    in = cfg.graph_dim;
  }
  m.discriminator.w1 = glorot(cfg.hidden, cfg.text_dim + 2 * cfg.graph_dim);
  m.discriminator.b1 = VectorXd::Zero(cfg.hidden);
  m.discriminator.w2 = glorot(cfg.hidden, 1).col(0);
  m.discriminator.b2 = 0.0;
  return m;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  double lr;
  int t = 0;
  explicit Adam(std::size_t n, double lr_) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
  void step(std::vector<double>& p, const std::vector<double>& g) {
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

MatrixXd triple_features(const SemanticModel& m, const TextEncoder& enc, const MatrixXd& u,
                         const std::unordered_map<NodeId, std::size_t>& index,
                         const std::vector<SemanticTriple>& triples) {
  const int d = m.cfg.text_dim, gd = m.encoder.output_dim();
  MatrixXd z(static_cast<Eigen::Index>(triples.size()), d + 2 * gd);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    z.row(r).head(d) = enc.encode(triples[i].sentence());
    z.row(r).segment(d, gd) = u.row(static_cast<Eigen::Index>(index.at(triples[i].s_node)));
    z.row(r).tail(gd) = u.row(static_cast<Eigen::Index>(index.at(triples[i].t_node)));
  }
  return z;
}

double accuracy(const Discriminator& d, const MatrixXd& z, const VectorXd& y) {
  if (z.rows() == 0) return 0.0;
  const VectorXd p = d.forward(z);
  std::size_t ok = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) ok += (p[i] > 0.5) == (y[i] > 0.5);
  return static_cast<double>(ok) / static_cast<double>(z.rows());
}

}  // namespace

SemanticModel train_validator(const ProvenanceGraph& real, const CategoryMap& cmap, const SemanticConfig& cfg,
                              TrainReport* report) {
  SemanticModel model = init_semantic_model(cfg);
  const auto enc = model.text_encoder();
  TrainReport rep;

  for (const auto& n : real.nodes)
    if (n.name.empty() || n.name == kNullName)
      throw Error(ErrorCode::UnnamedNodes, "node " + std::to_string(n.id) + " has no name");
  const auto ag = attention_graph(real);
  const MatrixXd x = node_features(real, *enc);

  // Stage 1: link reconstruction for the graph encoder.
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < ag.nbrs.size(); ++i)
    for (int j : ag.nbrs[i])
      if (j > static_cast<int>(i)) edges.emplace_back(static_cast<int>(i), j);
  Rng rng(derive_seed(cfg.seed, 12));
  if (!edges.empty() && real.nodes.size() > 2) {
    auto params = model.encoder.flatten();
    Adam opt(params.size(), cfg.learning_rate);
    GraphEncoder grad = model.encoder;
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> labels;
    const auto n = real.nodes.size();
    for (int ep = 0; ep < cfg.encoder_epochs; ++ep) {
      pairs = edges;
      labels.assign(edges.size(), 1.0);
      for (const auto& [i, j] : edges) {
        (void)j;
        int k = i;
        for (int attempt = 0; attempt < 10; ++attempt) {
          k = static_cast<int>(uniform_index(rng, n));
          if (k != i && !std::binary_search(ag.nbrs[i].begin(), ag.nbrs[i].end(), k)) break;
        }
        pairs.emplace_back(i, k);
        labels.push_back(0.0);
      }
      rep.final_link_loss = link_loss(model.encoder, ag, x, pairs, labels, &grad);
      if (!std::isfinite(rep.final_link_loss))
        throw Error(ErrorCode::NonFiniteLoss, "link loss is not finite at encoder epoch " + std::to_string(ep + 1));
      opt.step(params, grad.flatten());
      model.encoder.assign(params);
    }
  }

  // Stage 2: discriminator on frozen context vectors.
  const auto clusters = cluster_names(
      [&] {
        std::vector<std::string> names;
        for (const auto& nd : real.nodes) names.push_back(nd.name);
        return names;
      }(),
      *enc, cfg.clusters, derive_seed(cfg.seed, 13));
  const auto triples = build_contrastive_set(real, cmap, clusters, derive_seed(cfg.seed, 14), &rep.contrastive);
  if (triples.size() < 4) throw Error(ErrorCode::EmptySet, "too few triples to train the validator");
  const MatrixXd u = gat_forward(model.encoder, ag, x).output;
  const MatrixXd z_all = triple_features(model, *enc, u, ag.index, triples);
  VectorXd y_all(static_cast<Eigen::Index>(triples.size()));
  for (std::size_t i = 0; i < triples.size(); ++i) y_all[static_cast<Eigen::Index>(i)] = triples[i].label;
  if (cfg.shuffle_labels) {
    std::vector<double> ys(y_all.data(), y_all.data() + y_all.size());
    std::shuffle(ys.begin(), ys.end(), rng);
    for (std::size_t i = 0; i < ys.size(); ++i) y_all[static_cast<Eigen::Index>(i)] = ys[i];
  }

  const std::size_t pairs_n = triples.size() / 2;
  std::vector<std::size_t> order(pairs_n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(pairs_n))), 1, pairs_n - 1);
  std::vector<Eigen::Index> train_rows, hold_rows;
  for (std::size_t k = 0; k < pairs_n; ++k) {
    auto& dst = k < hold ? hold_rows : train_rows;
    dst.push_back(static_cast<Eigen::Index>(2 * order[k]));
    dst.push_back(static_cast<Eigen::Index>(2 * order[k] + 1));
  }
  const MatrixXd z_hold = z_all(hold_rows, Eigen::all);
  const VectorXd y_hold = y_all(hold_rows);
  const MatrixXd z_train = z_all(train_rows, Eigen::all);
  const VectorXd y_train = y_all(train_rows);
  rep.initial_holdout_accuracy = accuracy(model.discriminator, z_hold, y_hold);

  auto params = model.discriminator.flatten();
  Adam opt(params.size(), cfg.learning_rate);
  Discriminator grad = model.discriminator;
  std::vector<Eigen::Index> idx(train_rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int ep = 0; ep < cfg.discriminator_epochs; ++ep) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t b = 0; b < idx.size(); b += bs) {
      const std::vector<Eigen::Index> rows(idx.begin() + static_cast<std::ptrdiff_t>(b),
                                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + bs)));
      discriminator_loss(model.discriminator, z_train(rows, Eigen::all), y_train(rows), &grad);
      opt.step(params, grad.flatten());
      model.discriminator.assign(params);
    }
  }
  rep.final_loss = discriminator_loss(model.discriminator, z_train, y_train, nullptr);
  rep.train_accuracy = accuracy(model.discriminator, z_train, y_train);
  rep.holdout_accuracy = accuracy(model.discriminator, z_hold, y_hold);
  rep.train_triples = train_rows.size();
  rep.holdout_triples = hold_rows.size();
  if (report) *report = std::move(rep);
  return model;
}

std::vector<double> score_triples(const SemanticModel& m, const ProvenanceGraph& g,
                                  const std::vector<SemanticTriple>& triples) {
  if (triples.empty()) return {};
  const auto enc = m.text_encoder();
  const auto ag = attention_graph(g);
  const MatrixXd u = gat_forward(m.encoder, ag, node_features(g, *enc)).output;
  const VectorXd p = m.discriminator.forward(triple_features(m, *enc, u, ag.index, triples));
  return std::vector<double>(p.data(), p.data() + p.size());
}

SemanticScore score_graph(const SemanticModel& m, const ProvenanceGraph& g, double threshold) {
  for (const auto& n : g.nodes)
    if (n.name.empty() || n.name == kNullName)
      throw Error(ErrorCode::UnnamedNodes, "node " + std::to_string(n.id) + " has no name");
  SemanticScore s;
  const auto triples = edge_triples(g);
  s.triples = triples.size();
  if (triples.empty()) {
    s.empty = true;
    return s;
  }
  const auto p = score_triples(m, g, triples);
  for (const double v : p) {
    s.accuracy += v > threshold;
    s.mean_score += v;
  }
  s.accuracy /= static_cast<double>(p.size());
  s.mean_score /= static_cast<double>(p.size());
  return s;
}

json to_json(const SemanticScore& s) {
  return json{{"accuracy", s.accuracy}, {"mean_score", s.mean_score}, {"triples", s.triples}, {"empty", s.empty}};
}

void save_semantic_model(const SemanticModel& m, const std::string& path) {
  json j{{"format", "provsyn-semantic"},
         {"version", 1},
         {"config", to_json(m.cfg)},
         {"encoder", m.encoder.flatten()},
         {"discriminator", m.discriminator.flatten()}};
  write_text_file(path, j.dump());
}

SemanticModel load_semantic_model(const std::string& path) {
  const json j = read_json_file(path);
  if (j.value("format", "") != "provsyn-semantic")
    throw Error(ErrorCode::MalformedFile, path + ": not a semantic validator checkpoint");
  if (j.value("version", 0) != 1) throw Error(ErrorCode::MalformedFile, path + ": unsupported checkpoint version");
  try {
    SemanticModel m = init_semantic_model(semantic_config_from_json(j.at("config")));
    m.encoder.assign(j.at("encoder").get<std::vector<double>>());
    m.discriminator.assign(j.at("discriminator").get<std::vector<double>>());
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, path + ": " + e.what());
  }
}

}  // namespace provsyn
