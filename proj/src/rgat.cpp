#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgusql/error.hpp"
#include "sgusql/linker.hpp"

namespace sgusql {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kSlope = 0.01;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Edge {
  std::size_t source, target, relation;
};

// Materialised edges plus one self loop per node, grouped by target.
struct EdgeSet {
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> incoming;
  std::array<bool, kLinkRelations> used{};
};

EdgeSet edge_set(const EnclosingSubgraph& g) {
  EdgeSet es;
  for (const auto& e : g.edges)
    es.edges.push_back({e.source, e.target, static_cast<std::size_t>(e.relation)});
  for (std::size_t i = 0; i < g.size(); ++i)
    es.edges.push_back({i, i, static_cast<std::size_t>(LinkRelation::self_loop)});
  es.incoming.resize(g.size());
  for (std::size_t i = 0; i < es.edges.size(); ++i) {
    es.incoming[es.edges[i].target].push_back(i);
    es.used[es.edges[i].relation] = true;
  }
  return es;
}

std::size_t row_bucket(const EnclosingSubgraph& g, std::size_t i, std::size_t buckets) {
  return embedding_bucket(g.labels[i], buckets);
}

MatrixXd initial_embeddings(const EnclosingSubgraph& g, const LinkerModel& m) {
  MatrixXd h(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(m.dim));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto b = static_cast<Eigen::Index>(row_bucket(g, i, m.buckets));
    h.row(static_cast<Eigen::Index>(i)) =
        g.is_schema[i] ? m.label_embedding.row(b) : m.token_embedding.row(b);
  }
  return h;
}

struct LayerCache {
  MatrixXd input;
  MatrixXd pre;
  std::array<MatrixXd, kLinkRelations> z;
  std::vector<double> alpha;  // per edge
};

struct Forward {
  EdgeSet es;
  std::vector<LayerCache> layers;
  MatrixXd output;
};

Forward encode(const EnclosingSubgraph& g, const LinkerModel& m) {
  Forward f;
  f.es = edge_set(g);
  const auto d = static_cast<Eigen::Index>(m.dim);
  MatrixXd h = initial_embeddings(g, m);
  for (const auto& layer : m.layers) {
    LayerCache c;
    c.input = h;
    for (std::size_t r = 0; r < kLinkRelations; ++r)
      if (f.es.used[r]) c.z[r] = h * layer.w[r].transpose();
    const VectorXd a1 = layer.attention.head(d), a2 = layer.attention.tail(d);
    c.alpha.assign(f.es.edges.size(), 0.0);
    c.pre = MatrixXd::Zero(h.rows(), d);
    for (std::size_t t = 0; t < g.size(); ++t) {
      const auto& in = f.es.incoming[t];
      std::vector<double> logits;
      for (auto ei : in) {
        const auto& e = f.es.edges[ei];
        const auto& z = c.z[e.relation];
        logits.push_back(z.row(static_cast<Eigen::Index>(e.source)).dot(a1) +
                         z.row(static_cast<Eigen::Index>(e.target)).dot(a2));
      }
      const double top = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (auto& l : logits) total += (l = std::exp(l - top));
      VectorXd acc = layer.bias;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const auto& e = f.es.edges[in[k]];
        const double a = logits[k] / total;
        c.alpha[in[k]] = a;
        acc += a * (c.z[e.relation].row(static_cast<Eigen::Index>(e.source)).transpose() +
                    m.relation_embedding.row(static_cast<Eigen::Index>(e.relation)).transpose());
      }
      c.pre.row(static_cast<Eigen::Index>(t)) = acc.transpose();
    }
    h = c.pre.unaryExpr([](double x) { return x > 0 ? x : kSlope * x; });
    f.layers.push_back(std::move(c));
  }
  f.output = h;
  return f;
}

std::vector<std::vector<std::size_t>> schema_neighbor_rows(const EnclosingSubgraph& g) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t j = 0; j < g.schema_nodes.size(); ++j) {
    std::vector<std::size_t> rows;
    for (auto n : g.schema_neighbors(g.query_size + j)) rows.push_back(n - g.query_size);
    out.push_back(std::move(rows));
  }
  return out;
}

std::vector<std::vector<std::size_t>> query_neighbor_rows(const EnclosingSubgraph& g) {
  std::vector<std::vector<std::size_t>> out(g.query_size);
  for (const auto& e : g.edges)
    if (e.source < g.query_size && e.target < g.query_size && e.source != e.target &&
        e.relation != LinkRelation::none_syntax)
      out[e.source].push_back(e.target);
  for (auto& v : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

}  // namespace

Eigen::MatrixXd rgat_encode(const EnclosingSubgraph& g, const LinkerModel& m) {
  return encode(g, m).output;
}

CrossAggregation cross_aggregate(const Eigen::MatrixXd& query, const Eigen::MatrixXd& candidates,
                                 const std::vector<std::vector<std::size_t>>& neighbors,
                                 const LinkerModel& m) {
  if (query.rows() == 0) throw ValidationError("cross aggregation needs query rows");
  if (neighbors.size() != static_cast<std::size_t>(candidates.rows()))
    throw ValidationError("neighbour lists do not match candidate rows");
  CrossAggregation out;
  out.global = query.colwise().mean().transpose();
  const auto n = candidates.rows();
  out.gates.resize(n);
  const VectorXd gw = m.w_g.transpose() * out.global;
  for (Eigen::Index j = 0; j < n; ++j) out.gates(j) = sigmoid(gw.dot(candidates.row(j)));
  const MatrixXd keys = candidates * m.w_k.transpose();
  const VectorXd p = m.w_q * out.global;
  out.updated.resize(n, candidates.cols());
  for (Eigen::Index j = 0; j < n; ++j) {
    VectorXd u = out.gates(j) * keys.row(j).transpose() + (1.0 - out.gates(j)) * p;
    for (auto l : neighbors[static_cast<std::size_t>(j)]) {
      if (l >= static_cast<std::size_t>(n)) throw ValidationError("neighbour row out of range");
      u += out.gates(static_cast<Eigen::Index>(l)) * keys.row(static_cast<Eigen::Index>(l)).transpose();
    }
    out.updated.row(j) = u.transpose();
  }
  return out;
}

ScoreTrace score_subgraph(const EnclosingSubgraph& g, const LinkerModel& m) {
  ScoreTrace t;
  t.embeddings = rgat_encode(g, m);
  const auto q = static_cast<Eigen::Index>(g.query_size);
  const MatrixXd query = t.embeddings.topRows(q);
  const MatrixXd schema = t.embeddings.bottomRows(t.embeddings.rows() - q);
  t.key_side = cross_aggregate(query, schema, schema_neighbor_rows(g), m);
  if (m.query_side_update) t.query_side = cross_aggregate(schema, query, query_neighbor_rows(g), m);
  t.logit = t.key_side.updated.sum();
  t.score = sigmoid(t.logit);
  return t;
}

double matching_score(const EnclosingSubgraph& g, const LinkerModel& m) {
  return score_subgraph(g, m).score;
}

double contrastive_loss(double positive, const std::vector<double>& negatives) {
  auto check = [](double s) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("matching score outside (0, 1)");
  };
  check(positive);
  double total = positive;
  for (double s : negatives) {
    check(s);
    total += s;
  }
  return -std::log(positive / total);
}

// --- gradients ----------------------------------------------------------------

LinkerGradient::LinkerGradient(const LinkerModel& m) {
  const auto d = static_cast<Eigen::Index>(m.dim);
  relation_embedding = MatrixXd::Zero(m.relation_embedding.rows(), d);
  layers.resize(m.layers.size());
  for (auto& l : layers) {
    for (auto& w : l.w) w = MatrixXd::Zero(d, d);
    l.attention = VectorXd::Zero(2 * d);
    l.bias = VectorXd::Zero(d);
  }
  w_g = w_q = w_k = MatrixXd::Zero(d, d);
}

double LinkerGradient::norm() const {
  double sq = relation_embedding.squaredNorm() + w_g.squaredNorm() + w_q.squaredNorm() +
              w_k.squaredNorm();
  for (const auto& [row, g] : token_rows) sq += g.squaredNorm();
  for (const auto& [row, g] : label_rows) sq += g.squaredNorm();
  for (const auto& l : layers) {
    for (const auto& w : l.w) sq += w.squaredNorm();
    sq += l.attention.squaredNorm() + l.bias.squaredNorm();
  }
  return std::sqrt(sq);
}

void LinkerGradient::apply(LinkerModel& m, double lr) const {
  for (const auto& [row, g] : token_rows)
    m.token_embedding.row(static_cast<Eigen::Index>(row)) -= lr * g.transpose();
  for (const auto& [row, g] : label_rows)
    m.label_embedding.row(static_cast<Eigen::Index>(row)) -= lr * g.transpose();
  m.relation_embedding -= lr * relation_embedding;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t r = 0; r < kLinkRelations; ++r) m.layers[i].w[r] -= lr * layers[i].w[r];
    m.layers[i].attention -= lr * layers[i].attention;
    m.layers[i].bias -= lr * layers[i].bias;
  }
  m.w_g -= lr * w_g;
  m.w_q -= lr * w_q;
  m.w_k -= lr * w_k;
}

void backprop_logit(const EnclosingSubgraph& g, const LinkerModel& m, double upstream,
                    LinkerGradient& grad) {
  const Forward f = encode(g, m);
  const auto q = static_cast<Eigen::Index>(g.query_size);
  const auto d = static_cast<Eigen::Index>(m.dim);
  const MatrixXd& H = f.output;
  const MatrixXd query = H.topRows(q);
  const MatrixXd schema = H.bottomRows(H.rows() - q);
  const auto nbrs = schema_neighbor_rows(g);
  const auto ca = cross_aggregate(query, schema, nbrs, m);
  const auto n = schema.rows();

  // logit = sum(updated)
  MatrixXd dH = MatrixXd::Zero(H.rows(), d);

  const VectorXd& hg = ca.global;
  const VectorXd& alpha = ca.gates;
  const MatrixXd keys = schema * m.w_k.transpose();
  const VectorXd p = m.w_q * hg;
  const VectorXd G = VectorXd::Constant(d, upstream);  // d(logit)/d(updated_j)

  VectorXd dalpha = VectorXd::Zero(n);
  MatrixXd dkeys = MatrixXd::Zero(n, d);
  VectorXd dp = VectorXd::Zero(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    dalpha(j) += G.dot(keys.row(j).transpose() - p);
    dkeys.row(j) += alpha(j) * G.transpose();
    dp += (1.0 - alpha(j)) * G;
    for (auto l : nbrs[static_cast<std::size_t>(j)]) {
      const auto li = static_cast<Eigen::Index>(l);
      dalpha(li) += G.dot(keys.row(li));
      dkeys.row(li) += alpha(li) * G.transpose();
    }
  }
  grad.w_k += dkeys.transpose() * schema;
  MatrixXd dschema = dkeys * m.w_k;
  grad.w_q += dp * hg.transpose();
  VectorXd dhg = m.w_q.transpose() * dp;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double ds = dalpha(j) * alpha(j) * (1.0 - alpha(j));
    const VectorXd hj = schema.row(j).transpose();
    grad.w_g += ds * hg * hj.transpose();
    dhg += ds * (m.w_g * hj);
    dschema.row(j) += ds * (m.w_g.transpose() * hg).transpose();
  }
  dH.topRows(q).rowwise() += (dhg / static_cast<double>(q)).transpose();
  dH.bottomRows(n) += dschema;

  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    const auto& c = f.layers[li];
    auto& gl = grad.layers[li];
    const MatrixXd dpre =
        dH.array() * c.pre.unaryExpr([](double x) { return x > 0 ? 1.0 : kSlope; }).array();
    gl.bias += dpre.colwise().sum().transpose();
    const VectorXd a1 = layer.attention.head(d), a2 = layer.attention.tail(d);
    std::array<MatrixXd, kLinkRelations> dz;
    for (std::size_t r = 0; r < kLinkRelations; ++r)
      if (f.es.used[r]) dz[r] = MatrixXd::Zero(c.z[r].rows(), d);

    for (std::size_t t = 0; t < g.size(); ++t) {
      const auto& in = f.es.incoming[t];
      const auto ti = static_cast<Eigen::Index>(t);
      std::vector<double> da(in.size());
      double weighted = 0.0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const auto& e = f.es.edges[in[k]];
        const auto si = static_cast<Eigen::Index>(e.source);
        const auto ri = static_cast<Eigen::Index>(e.relation);
        const double a = c.alpha[in[k]];
        da[k] = dpre.row(ti).dot(c.z[e.relation].row(si) + m.relation_embedding.row(ri));
        weighted += a * da[k];
        dz[e.relation].row(si) += a * dpre.row(ti);
        grad.relation_embedding.row(ri) += a * dpre.row(ti);
      }
      for (std::size_t k = 0; k < in.size(); ++k) {
        const auto& e = f.es.edges[in[k]];
        const auto si = static_cast<Eigen::Index>(e.source);
        const double dl = c.alpha[in[k]] * (da[k] - weighted);
        gl.attention.head(d) += dl * c.z[e.relation].row(si).transpose();
        gl.attention.tail(d) += dl * c.z[e.relation].row(ti).transpose();
        dz[e.relation].row(si) += dl * a1.transpose();
        dz[e.relation].row(ti) += dl * a2.transpose();
      }
    }
    MatrixXd dinput = MatrixXd::Zero(c.input.rows(), d);
    for (std::size_t r = 0; r < kLinkRelations; ++r) {
      if (!f.es.used[r]) continue;
      gl.w[r] += dz[r].transpose() * c.input;
      dinput += dz[r] * layer.w[r];
    }
    dH = std::move(dinput);
  }

  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto b = row_bucket(g, i, m.buckets);
    auto& rows = g.is_schema[i] ? grad.label_rows : grad.token_rows;
    auto it = rows.find(b);
    const VectorXd row = dH.row(static_cast<Eigen::Index>(i)).transpose();
    if (it == rows.end())
      rows.emplace(b, row);
    else
      it->second += row;
  }
}

// Evaluated in log space: log S = -softplus(-logit), so saturated scores keep
// their ordering instead of collapsing to 0 or 1.
double anchor_loss(const std::vector<EnclosingSubgraph>& subgraphs, const LinkerModel& m,
                   LinkerGradient* grad) {
  if (subgraphs.size() < 2) throw ValidationError("anchor loss needs a gold and a negative subgraph");
  std::vector<double> logits, log_s;
  for (const auto& g : subgraphs) {
    const double l = score_subgraph(g, m).logit;
    logits.push_back(l);
    log_s.push_back(l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l)));
  }
  const double top = *std::max_element(log_s.begin(), log_s.end());
  double total = 0.0;
  for (double v : log_s) total += std::exp(v - top);
  const double loss = top + std::log(total) - log_s[0];
  if (grad) {
    for (std::size_t i = 0; i < subgraphs.size(); ++i) {
      const double share = std::exp(log_s[i] - top) / total;
      const double dlog = share - (i == 0 ? 1.0 : 0.0);
      backprop_logit(subgraphs[i], m, dlog * (1.0 - sigmoid(logits[i])), *grad);
    }
  }
  return loss;
}

// --- training -----------------------------------------------------------------

LinkerModel train_linker(const std::vector<LinkExample>& examples, const SchemaGraph& sg,
                         const LinkerConfig& cfg, TrainReport* report,
                         const EpochCallback& on_epoch) {
  LinkerModel model = LinkerModel::initialize(cfg);
  TrainReport rep;
  std::vector<std::vector<EnclosingSubgraph>> sets;
  for (const auto& ex : examples) {
    if (ex.anchor >= ex.graph.size() || ex.gold >= sg.size())
      throw ValidationError("training example refers to a missing node");
    const auto cands = generate_candidates(ex.graph.nodes[ex.anchor], sg, cfg.k);
    const bool has_gold = std::any_of(cands.begin(), cands.end(),
                                      [&](const Candidate& c) { return c.node == ex.gold; });
    if (!has_gold || cands.size() < 2) {
      ++rep.skipped_examples;
      continue;
    }
    std::vector<EnclosingSubgraph> set{build_enclosing_subgraph(ex.anchor, ex.gold, ex.graph, sg)};
    for (const auto& c : cands)
      if (c.node != ex.gold) set.push_back(build_enclosing_subgraph(ex.anchor, c.node, ex.graph, sg));
    sets.push_back(std::move(set));
  }
  rep.trained_examples = sets.size();
  if (sets.empty()) throw TrainingError("no trainable linking examples");

  auto mean_loss = [&](const LinkerModel& m) {
    double total = 0.0;
    for (const auto& s : sets) total += anchor_loss(s, m);
    const double mean = total / static_cast<double>(sets.size());
    if (!std::isfinite(mean)) throw TrainingError("linker loss diverged");
    return mean;
  };

  rep.epoch_loss.push_back(mean_loss(model));
  if (on_epoch) on_epoch(0, rep.epoch_loss.back());
  LinkerModel best = model;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
      LinkerGradient grad(model);
      anchor_loss(sets[i], model, &grad);
      const double norm = grad.norm();
      grad.apply(model, norm > cfg.clip_norm ? cfg.lr * cfg.clip_norm / norm : cfg.lr);
    }
    if (!model.finite()) throw TrainingError("linker parameters diverged");
    rep.epoch_loss.push_back(mean_loss(model));
    if (on_epoch) on_epoch(epoch, rep.epoch_loss.back());
    if (rep.epoch_loss.back() < rep.epoch_loss[rep.best_epoch]) {
      rep.best_epoch = epoch;
      best = model;
    }
  }

  std::size_t correct = 0;
  for (const auto& s : sets) {
    const double gold = matching_score(s[0], best);
    bool top = true;
    for (std::size_t i = 1; i < s.size(); ++i) top = top && matching_score(s[i], best) < gold;
    correct += top;
  }
  rep.train_accuracy = static_cast<double>(correct) / static_cast<double>(sets.size());
  if (report) *report = std::move(rep);
  return best;
}

}  // namespace sgusql
