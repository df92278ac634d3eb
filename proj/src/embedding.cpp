#include "asd/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "asd/errors.hpp"

namespace asd {
namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kLeakySlope = 0.2;
// Below this distance the unit vector of a triplet leg is ill-defined, so the
// leg contributes no gradient.
constexpr double kZeroDistance = 1e-12;

double LeakyRelu(double v) { return v > 0.0 ? v : kLeakySlope * v; }

double LeakyReluGrad(double v) { return v > 0.0 ? 1.0 : kLeakySlope; }

std::vector<std::vector<int>> AdjacencyIds(const GeoGraph& graph) {
  std::vector<std::vector<int>> ids(static_cast<size_t>(graph.n));
  for (int i = 0; i < graph.n; ++i) {
    const auto& adj = graph.neighbors[static_cast<size_t>(i)];
    ids[static_cast<size_t>(i)].reserve(adj.size());
    for (const auto& edge : adj) ids[static_cast<size_t>(i)].push_back(edge.first);
  }
  return ids;
}

void CheckLayerShapes(const GatLayerParams& p, int in) {
  if (p.w_head.empty()) throw ParamError("attention layer has no heads");
  const int per_head = static_cast<int>(p.w_head[0].cols());
  for (const auto& w : p.w_head)
    if (w.rows() != in || w.cols() != per_head)
      throw ParamError("attention head projections disagree with the input width");
  for (const auto& a : p.a_head)
    if (a.size() != 2 * per_head)
      throw ParamError("attention vector length must be twice the head width");
  if (p.a_head.size() != p.w_head.size())
    throw ParamError("attention layer needs one score vector per head");
  const int heads = static_cast<int>(p.w_head.size());
  if (p.w_self.rows() != in + heads * per_head)
    throw ParamError("self map rows must cover the input and the head outputs");
  const int out = static_cast<int>(p.w_self.cols());
  if (p.bn_scale.size() != out || p.bn_shift.size() != out ||
      p.bn_mean.size() != out || p.bn_var.size() != out)
    throw ParamError("normalisation vectors disagree with the layer output width");
}

// Everything the backward pass needs from one layer forward.
struct LayerCache {
  Matrix input;
  std::vector<Matrix> u;       // per head: input * w_head
  std::vector<Vector> s_src;   // per head: source scores
  std::vector<Vector> s_dst;   // per head: destination scores
  std::vector<std::vector<std::vector<double>>> alpha;  // head, node, slot
  Matrix concat;               // [input | aggregated heads]
  Matrix xhat;                 // normalised pre-affine activations
  Vector inv_sigma;            // 1 / sqrt(var + eps) actually applied
  Matrix pre_act;
  Vector batch_mean, batch_var;  // biased batch statistics (training mode)
  const std::vector<std::vector<int>>* nbrs = nullptr;
};

Matrix LayerPass(const Matrix& x, const std::vector<std::vector<int>>& nbrs,
                 const GatLayerParams& p, bool training, LayerCache* cache) {
  const int n = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  const int heads = static_cast<int>(p.w_head.size());
  const int per_head = static_cast<int>(p.w_head[0].cols());
  const int out = static_cast<int>(p.w_self.cols());

  if (cache) {
    cache->input = x;
    cache->u.assign(static_cast<size_t>(heads), Matrix());
    cache->s_src.assign(static_cast<size_t>(heads), Vector());
    cache->s_dst.assign(static_cast<size_t>(heads), Vector());
    cache->alpha.assign(static_cast<size_t>(heads), {});
    cache->nbrs = &nbrs;
  }

  Matrix concat(n, in + heads * per_head);
  concat.leftCols(in) = x;
  for (int k = 0; k < heads; ++k) {
    Matrix u = x * p.w_head[static_cast<size_t>(k)];
    Vector s_src = u * p.a_head[static_cast<size_t>(k)].head(per_head);
    Vector s_dst = u * p.a_head[static_cast<size_t>(k)].tail(per_head);
    auto z = concat.middleCols(in + k * per_head, per_head);
    std::vector<std::vector<double>> alpha_rows(
        cache ? static_cast<size_t>(n) : 0);
    for (int i = 0; i < n; ++i) {
      const std::vector<int>& nbr = nbrs[static_cast<size_t>(i)];
      if (nbr.empty()) {
        // No neighbours: the aggregated term is zero and the node's own state
        // still flows through the concatenation half of the self map.
        z.row(i).setZero();
        continue;
      }
      std::vector<double> w(nbr.size());
      double peak = -std::numeric_limits<double>::infinity();
      for (size_t t = 0; t < nbr.size(); ++t) {
        w[t] = LeakyRelu(s_src[i] + s_dst[nbr[t]]);
        peak = std::max(peak, w[t]);
      }
      double denom = 0.0;
      for (double& v : w) {
        v = std::exp(v - peak);
        denom += v;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(per_head);
      for (size_t t = 0; t < nbr.size(); ++t) {
        w[t] /= denom;
        acc += w[t] * u.row(nbr[t]);
      }
      z.row(i) = acc;
      if (cache) alpha_rows[static_cast<size_t>(i)] = std::move(w);
    }
    if (cache) {
      cache->u[static_cast<size_t>(k)] = std::move(u);
      cache->s_src[static_cast<size_t>(k)] = std::move(s_src);
      cache->s_dst[static_cast<size_t>(k)] = std::move(s_dst);
      cache->alpha[static_cast<size_t>(k)] = std::move(alpha_rows);
    }
  }

  Matrix y = concat * p.w_self;
  Vector mean(out), var(out);
  if (training) {
    for (int c = 0; c < out; ++c) {
      mean[c] = y.col(c).mean();
      var[c] = (y.col(c).array() - mean[c]).square().mean();
    }
  } else {
    mean = p.bn_mean;
    var = p.bn_var;
  }

  Matrix xhat(n, out), pre(n, out), act(n, out);
  Vector inv_sigma(out);
  for (int c = 0; c < out; ++c) {
    inv_sigma[c] = 1.0 / std::sqrt(var[c] + kBnEps);
    xhat.col(c) = ((y.col(c).array() - mean[c]) * inv_sigma[c]).matrix();
    pre.col(c) =
        (xhat.col(c).array() * p.bn_scale[c] + p.bn_shift[c]).matrix();
    for (int i = 0; i < n; ++i) act(i, c) = LeakyRelu(pre(i, c));
  }

  if (cache) {
    cache->concat = std::move(concat);
    cache->xhat = std::move(xhat);
    cache->inv_sigma = std::move(inv_sigma);
    cache->pre_act = std::move(pre);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return act;
}

struct LayerGrads {
  std::vector<Matrix> w_head;
  std::vector<Vector> a_head;
  Matrix w_self;
  Vector bn_scale, bn_shift;
};

struct ModelGrads {
  LayerGrads layer1, layer2;
  Vector head_w;
  double head_b = 0.0;
};

LayerGrads ZeroLayerGrads(const GatLayerParams& p) {
  LayerGrads g;
  g.w_head.reserve(p.w_head.size());
  for (const auto& w : p.w_head) g.w_head.push_back(Matrix::Zero(w.rows(), w.cols()));
  g.a_head.reserve(p.a_head.size());
  for (const auto& a : p.a_head) g.a_head.push_back(Vector::Zero(a.size()));
  g.w_self = Matrix::Zero(p.w_self.rows(), p.w_self.cols());
  g.bn_scale = Vector::Zero(p.bn_scale.size());
  g.bn_shift = Vector::Zero(p.bn_shift.size());
  return g;
}

ModelGrads ZeroModelGrads(const GnnModel& m) {
  ModelGrads g;
  g.layer1 = ZeroLayerGrads(m.layer1);
  g.layer2 = ZeroLayerGrads(m.layer2);
  g.head_w = Vector::Zero(m.head_w.size());
  return g;
}

// Backward through one layer for a training-mode forward (the normalisation
// statistics were computed from this batch, so their dependence on the inputs
// is part of the gradient). Returns the gradient with respect to the layer
// input and accumulates parameter gradients into g.
Matrix LayerBackward(const Matrix& d_out, const GatLayerParams& p,
                     const LayerCache& c, LayerGrads* g) {
  const int n = static_cast<int>(d_out.rows());
  const int out = static_cast<int>(d_out.cols());
  const int in = static_cast<int>(c.input.cols());
  const int heads = static_cast<int>(p.w_head.size());
  const int per_head = static_cast<int>(p.w_head[0].cols());
  const std::vector<std::vector<int>>& nbrs = *c.nbrs;

  Matrix d_pre(n, out);
  for (int cc = 0; cc < out; ++cc)
    for (int i = 0; i < n; ++i)
      d_pre(i, cc) = d_out(i, cc) * LeakyReluGrad(c.pre_act(i, cc));

  Matrix d_y(n, out);
  for (int cc = 0; cc < out; ++cc) {
    g->bn_shift[cc] += d_pre.col(cc).sum();
    g->bn_scale[cc] +=
        (d_pre.col(cc).array() * c.xhat.col(cc).array()).sum();
    Eigen::ArrayXd dxh = d_pre.col(cc).array() * p.bn_scale[cc];
    const double s1 = dxh.sum();
    const double s2 = (dxh * c.xhat.col(cc).array()).sum();
    d_y.col(cc) = ((static_cast<double>(n) * dxh - s1 -
                    c.xhat.col(cc).array() * s2) *
                   (c.inv_sigma[cc] / n))
                      .matrix();
  }

  g->w_self += c.concat.transpose() * d_y;
  Matrix d_concat = d_y * p.w_self.transpose();
  Matrix d_x = d_concat.leftCols(in);

  for (int k = 0; k < heads; ++k) {
    const Matrix& u = c.u[static_cast<size_t>(k)];
    const Vector& s_src = c.s_src[static_cast<size_t>(k)];
    const Vector& s_dst = c.s_dst[static_cast<size_t>(k)];
    auto d_z = d_concat.middleCols(in + k * per_head, per_head);
    Matrix d_u = Matrix::Zero(n, per_head);
    Vector d_ssrc = Vector::Zero(n);
    Vector d_sdst = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
      const std::vector<int>& nbr = nbrs[static_cast<size_t>(i)];
      if (nbr.empty()) continue;
      const std::vector<double>& al =
          c.alpha[static_cast<size_t>(k)][static_cast<size_t>(i)];
      std::vector<double> d_alpha(nbr.size());
      for (size_t t = 0; t < nbr.size(); ++t) {
        d_u.row(nbr[t]) += al[t] * d_z.row(i);
        d_alpha[t] = d_z.row(i).dot(u.row(nbr[t]));
      }
      double mix = 0.0;
      for (size_t t = 0; t < nbr.size(); ++t) mix += al[t] * d_alpha[t];
      for (size_t t = 0; t < nbr.size(); ++t) {
        const double d_logit = al[t] * (d_alpha[t] - mix) *
                               LeakyReluGrad(s_src[i] + s_dst[nbr[t]]);
        d_ssrc[i] += d_logit;
        d_sdst[nbr[t]] += d_logit;
      }
    }
    const Vector a_src = p.a_head[static_cast<size_t>(k)].head(per_head);
    const Vector a_dst = p.a_head[static_cast<size_t>(k)].tail(per_head);
    d_u += d_ssrc * a_src.transpose();
    d_u += d_sdst * a_dst.transpose();
    g->a_head[static_cast<size_t>(k)].head(per_head) += u.transpose() * d_ssrc;
    g->a_head[static_cast<size_t>(k)].tail(per_head) += u.transpose() * d_sdst;
    g->w_head[static_cast<size_t>(k)] += c.input.transpose() * d_u;
    d_x += d_u * p.w_head[static_cast<size_t>(k)].transpose();
  }
  return d_x;
}

struct ForwardCache {
  LayerCache l1, l2;
};

Matrix ModelForward(const GnnModel& m, const Matrix& x,
                    const std::vector<std::vector<int>>& nbrs1,
                    const std::vector<std::vector<int>>& nbrs2, bool training,
                    ForwardCache* cache) {
  Matrix h = LayerPass(x, nbrs1, m.layer1, training, cache ? &cache->l1 : nullptr);
  return LayerPass(h, nbrs2, m.layer2, training, cache ? &cache->l2 : nullptr);
}

// Loss terms plus, when requested, the gradient with respect to the
// embeddings and the regression head.
LossBreakdown Losses(const GnnModel& m, const Matrix& emb, const BatchPlan& plan,
                     const std::vector<double>& targets, Matrix* d_emb,
                     ModelGrads* g) {
  LossBreakdown lb;
  lb.contrastive = TripletLoss(emb, plan.triplets, m.cfg.contrastive_margin);
  lb.regression =
      RegressionHeadLoss(emb, m.head_w, m.head_b, plan.anchors, targets);
  lb.total = lb.contrastive + m.cfg.gamma * lb.regression;
  if (!d_emb) return lb;

  if (!plan.triplets.empty()) {
    const double inv = 1.0 / static_cast<double>(plan.triplets.size());
    for (const Triplet& t : plan.triplets) {
      const Vector to_pos =
          (emb.row(t.anchor) - emb.row(t.positive)).transpose();
      const Vector to_neg =
          (emb.row(t.anchor) - emb.row(t.negative)).transpose();
      const double d_ap = to_pos.norm();
      const double d_an = to_neg.norm();
      if (d_ap - d_an + m.cfg.contrastive_margin <= 0.0) continue;
      if (d_ap > kZeroDistance) {
        const Vector step = (inv / d_ap) * to_pos;
        d_emb->row(t.anchor) += step.transpose();
        d_emb->row(t.positive) -= step.transpose();
      }
      if (d_an > kZeroDistance) {
        const Vector step = (inv / d_an) * to_neg;
        d_emb->row(t.anchor) -= step.transpose();
        d_emb->row(t.negative) += step.transpose();
      }
    }
  }
  if (!plan.anchors.empty()) {
    const double scale = m.cfg.gamma * 2.0 / static_cast<double>(plan.anchors.size());
    for (int i : plan.anchors) {
      const double resid =
          emb.row(i).dot(m.head_w) + m.head_b - targets[static_cast<size_t>(i)];
      d_emb->row(i) += scale * resid * m.head_w.transpose();
      if (g) {
        g->head_w += scale * resid * emb.row(i).transpose();
        g->head_b += scale * resid;
      }
    }
  }
  return lb;
}

void UpdateRunningStats(GatLayerParams* p, const LayerCache& c, int n) {
  const double unbias = n > 1 ? static_cast<double>(n) / (n - 1) : 1.0;
  p->bn_mean = (1.0 - kBnMomentum) * p->bn_mean + kBnMomentum * c.batch_mean;
  p->bn_var =
      (1.0 - kBnMomentum) * p->bn_var + kBnMomentum * (unbias * c.batch_var);
}

// Flattened views over trainable parameters. The traversal order is shared
// between the model and its gradient struct, which is what lets the optimizer
// and the finite-difference check pair coordinates up.
struct FlatView {
  std::vector<double*> ptr;
  std::vector<char> decay;  // weight decay applies to this coordinate
};

template <typename LayerT, typename F>
void VisitLayerTensors(LayerT& layer, F&& f) {
  for (auto& w : layer.w_head) f(w, true);
  for (auto& a : layer.a_head) f(a, true);
  f(layer.w_self, true);
  f(layer.bn_scale, false);
  f(layer.bn_shift, false);
}

template <typename T>
FlatView Flatten(T& m) {
  FlatView fv;
  auto add = [&fv](auto& tensor, bool decayed) {
    double* base = tensor.data();
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      fv.ptr.push_back(base + i);
      fv.decay.push_back(decayed ? 1 : 0);
    }
  };
  VisitLayerTensors(m.layer1, add);
  VisitLayerTensors(m.layer2, add);
  add(m.head_w, true);
  fv.ptr.push_back(&m.head_b);
  fv.decay.push_back(0);
  return fv;
}

struct AdamState {
  std::vector<double> m, v;
};

void AdamStep(const FlatView& params, const FlatView& grads, AdamState* st,
              const GnnConfig& cfg, long step) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  for (size_t i = 0; i < params.ptr.size(); ++i) {
    const double gval = *grads.ptr[i];
    st->m[i] = kBeta1 * st->m[i] + (1.0 - kBeta1) * gval;
    st->v[i] = kBeta2 * st->v[i] + (1.0 - kBeta2) * gval * gval;
    double delta = (st->m[i] / bc1) / (std::sqrt(st->v[i] / bc2) + kEps);
    if (params.decay[i]) delta += cfg.weight_decay * *params.ptr[i];
    *params.ptr[i] -= cfg.learning_rate * delta;
  }
}

void FlagNode(std::vector<int>* nodes, int i) {
  if (std::find(nodes->begin(), nodes->end(), i) == nodes->end())
    nodes->push_back(i);
}

void CheckInputs(const GeoGraph& graph, const Matrix& features,
                 const std::vector<double>& targets) {
  if (graph.n < 1) throw ParamError("embedder needs at least one node");
  if (features.rows() != graph.n)
    throw ParamError("feature rows must match the node count");
  if (features.cols() < 1)
    throw ParamError("embedder needs at least one input feature");
  if (static_cast<int>(targets.size()) != graph.n)
    throw ParamError("one regression target per node is required");
}

}  // namespace

void ValidateGnnConfig(const GnnConfig& cfg) {
  if (cfg.gat_layers != 2)
    throw ParamError("attention depth is fixed at two layers");
  if (cfg.heads < 1) throw ParamError("heads must be positive");
  if (cfg.hidden < 1 || cfg.hidden % cfg.heads != 0)
    throw ParamError("hidden width must be a positive multiple of heads");
  if (cfg.out_dim < 1) throw ParamError("embedding dimension must be positive");
  if (cfg.epochs < 0) throw ParamError("epochs must be non-negative");
  if (!(cfg.learning_rate > 0.0))
    throw ParamError("learning rate must be positive");
  if (cfg.weight_decay < 0.0)
    throw ParamError("weight decay must be non-negative");
  if (cfg.batch_size < 1) throw ParamError("batch size must be positive");
  if (cfg.gamma < 0.0)
    throw ParamError("regression loss weight must be non-negative");
  if (cfg.neighbor_sample_size < 1)
    throw ParamError("neighbour fan-out must be positive");
  if (cfg.contrastive_margin < 0.0)
    throw ParamError("triplet margin must be non-negative");
  if (cfg.negatives_per_anchor < 1)
    throw ParamError("negatives per anchor must be positive");
}

GnnModel InitGnnModel(int in_features, const GnnConfig& cfg) {
  ValidateGnnConfig(cfg);
  if (in_features < 1)
    throw ParamError("embedder needs at least one input feature");
  GnnModel m;
  m.cfg = cfg;
  m.in_features = in_features;
  const int per_head = cfg.hidden / cfg.heads;
  Rng rng(derive_seed(cfg.seed, 0));
  auto draw = [&rng](int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    return (2.0 * rng.uniform() - 1.0) * limit;
  };
  auto init_layer = [&](GatLayerParams* layer, int in, int out) {
    layer->w_head.resize(static_cast<size_t>(cfg.heads));
    for (auto& w : layer->w_head) {
      w.resize(in, per_head);
      for (int r = 0; r < in; ++r)
        for (int c = 0; c < per_head; ++c) w(r, c) = draw(in, per_head);
    }
    layer->a_head.resize(static_cast<size_t>(cfg.heads));
    for (auto& a : layer->a_head) {
      a.resize(2 * per_head);
      for (int r = 0; r < 2 * per_head; ++r) a[r] = draw(2 * per_head, 1);
    }
    const int self_rows = in + cfg.hidden;
    layer->w_self.resize(self_rows, out);
    for (int r = 0; r < self_rows; ++r)
      for (int c = 0; c < out; ++c) layer->w_self(r, c) = draw(self_rows, out);
    layer->bn_scale = Vector::Ones(out);
    layer->bn_shift = Vector::Zero(out);
    layer->bn_mean = Vector::Zero(out);
    layer->bn_var = Vector::Ones(out);
  };
  init_layer(&m.layer1, in_features, cfg.hidden);
  init_layer(&m.layer2, cfg.hidden, cfg.out_dim);
  m.head_w.resize(cfg.out_dim);
  for (int r = 0; r < cfg.out_dim; ++r) m.head_w[r] = draw(cfg.out_dim, 1);
  m.head_b = 0.0;
  return m;
}

BatchPlan SampleBatchPlan(const GeoGraph& graph, const GnnConfig& cfg,
                          const std::vector<int>& anchors, Rng& rng,
                          EmbedDiagnostics* diag) {
  ValidateGnnConfig(cfg);
  if (graph.n < 1) throw ParamError("sampling needs at least one node");
  for (int a : anchors)
    if (a < 0 || a >= graph.n) throw ParamError("anchor id out of range");

  BatchPlan plan;
  plan.anchors = anchors;
  auto sample_lists = [&](std::vector<std::vector<int>>* dst) {
    dst->assign(static_cast<size_t>(graph.n), {});
    for (int i = 0; i < graph.n; ++i) {
      const auto& adj = graph.neighbors[static_cast<size_t>(i)];
      const int deg = static_cast<int>(adj.size());
      auto& slot = (*dst)[static_cast<size_t>(i)];
      if (deg <= cfg.neighbor_sample_size) {
        slot.reserve(static_cast<size_t>(deg));
        for (const auto& e : adj) slot.push_back(e.first);
        continue;
      }
      std::vector<int> pool(static_cast<size_t>(deg));
      for (int t = 0; t < deg; ++t) pool[static_cast<size_t>(t)] = adj[static_cast<size_t>(t)].first;
      for (int t = 0; t < cfg.neighbor_sample_size; ++t) {
        const int j =
            t + static_cast<int>(rng.below(static_cast<std::uint64_t>(deg - t)));
        std::swap(pool[static_cast<size_t>(t)], pool[static_cast<size_t>(j)]);
      }
      slot.assign(pool.begin(), pool.begin() + cfg.neighbor_sample_size);
    }
  };
  sample_lists(&plan.layer1_neighbors);
  sample_lists(&plan.layer2_neighbors);

  for (int a : anchors) {
    const auto& adj = graph.neighbors[static_cast<size_t>(a)];
    if (adj.empty()) {
      if (diag) FlagNode(&diag->isolated_nodes, a);
      continue;
    }
    double total = 0.0;
    for (const auto& e : adj) total += e.second;
    const double u = rng.uniform() * total;
    int positive = adj.back().first;
    double acc = 0.0;
    for (const auto& e : adj) {
      acc += e.second;
      if (u < acc) {
        positive = e.first;
        break;
      }
    }
    const int deg = static_cast<int>(adj.size());
    if (deg >= graph.n - 1) {
      // Adjacent to every other node: fall back to the faintest neighbours as
      // stand-in negatives, cycling when there are fewer than requested.
      if (diag) FlagNode(&diag->negative_fallback_nodes, a);
      std::vector<std::pair<double, int>> faint;
      faint.reserve(adj.size());
      for (const auto& e : adj) faint.emplace_back(e.second, e.first);
      std::sort(faint.begin(), faint.end());
      for (int t = 0; t < cfg.negatives_per_anchor; ++t)
        plan.triplets.push_back(
            {a, positive, faint[static_cast<size_t>(t) % faint.size()].second});
      continue;
    }
    for (int t = 0; t < cfg.negatives_per_anchor; ++t) {
      int pick = -1;
      for (int tries = 0; tries < 64 * graph.n; ++tries) {
        const int j =
            static_cast<int>(rng.below(static_cast<std::uint64_t>(graph.n)));
        if (j == a || graph.has_edge(a, j)) continue;
        pick = j;
        break;
      }
      if (pick < 0) {
        for (int j = 0; j < graph.n && pick < 0; ++j)
          if (j != a && !graph.has_edge(a, j)) pick = j;
      }
      plan.triplets.push_back({a, positive, pick});
    }
  }
  return plan;
}

Matrix GatLayerForward(const Matrix& states, const GeoGraph& graph,
                       const GatLayerParams& params, bool training) {
  if (states.rows() != graph.n)
    throw ParamError("state rows must match the node count");
  CheckLayerShapes(params, static_cast<int>(states.cols()));
  const auto ids = AdjacencyIds(graph);
  return LayerPass(states, ids, params, training, nullptr);
}

std::vector<std::vector<std::vector<double>>> GatLayerAttention(
    const Matrix& states, const GeoGraph& graph, const GatLayerParams& params) {
  if (states.rows() != graph.n)
    throw ParamError("state rows must match the node count");
  CheckLayerShapes(params, static_cast<int>(states.cols()));
  const auto ids = AdjacencyIds(graph);
  LayerCache cache;
  LayerPass(states, ids, params, false, &cache);
  return std::move(cache.alpha);
}

double TripletLoss(const Matrix& embeddings, const std::vector<Triplet>& triplets,
                   double margin) {
  if (triplets.empty()) return 0.0;
  const int n = static_cast<int>(embeddings.rows());
  double sum = 0.0;
  for (const Triplet& t : triplets) {
    if (t.anchor < 0 || t.anchor >= n || t.positive < 0 || t.positive >= n ||
        t.negative < 0 || t.negative >= n)
      throw ParamError("triplet node id out of range");
    const double d_ap = (embeddings.row(t.anchor) - embeddings.row(t.positive)).norm();
    const double d_an = (embeddings.row(t.anchor) - embeddings.row(t.negative)).norm();
    sum += std::max(0.0, d_ap - d_an + margin);
  }
  return sum / static_cast<double>(triplets.size());
}

double RegressionHeadLoss(const Matrix& embeddings, const Vector& head_w,
                          double head_b, const std::vector<int>& anchors,
                          const std::vector<double>& targets) {
  if (anchors.empty()) return 0.0;
  if (head_w.size() != embeddings.cols())
    throw ParamError("regression head width must match the embedding width");
  double sum = 0.0;
  for (int i : anchors) {
    if (i < 0 || i >= static_cast<int>(embeddings.rows()) ||
        i >= static_cast<int>(targets.size()))
      throw ParamError("regression anchor id out of range");
    const double resid =
        embeddings.row(i).dot(head_w) + head_b - targets[static_cast<size_t>(i)];
    sum += resid * resid;
  }
  return sum / static_cast<double>(anchors.size());
}

LossBreakdown ComputeLoss(const GnnModel& model, const Matrix& features,
                          const BatchPlan& plan,
                          const std::vector<double>& targets) {
  if (features.cols() != model.in_features)
    throw ParamError("feature width must match the trained input width");
  if (static_cast<int>(plan.layer1_neighbors.size()) != features.rows() ||
      static_cast<int>(plan.layer2_neighbors.size()) != features.rows())
    throw ParamError("plan neighbour lists must cover every node");
  const Matrix emb = ModelForward(model, features, plan.layer1_neighbors,
                                  plan.layer2_neighbors, true, nullptr);
  return Losses(model, emb, plan, targets, nullptr, nullptr);
}

TrainResult TrainEmbedder(const GeoGraph& graph, const Matrix& features,
                          const std::vector<double>& targets,
                          const GnnConfig& cfg) {
  ValidateGnnConfig(cfg);
  CheckInputs(graph, features, targets);

  TrainResult res;
  res.model = InitGnnModel(static_cast<int>(features.cols()), cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  FlatView params = Flatten(res.model);
  AdamState opt;
  opt.m.assign(params.ptr.size(), 0.0);
  opt.v.assign(params.ptr.size(), 0.0);
  long step = 0;

  std::vector<int> order(static_cast<size_t>(graph.n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = graph.n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    double sum_con = 0.0, sum_reg = 0.0, sum_tot = 0.0;
    int steps_in_epoch = 0;
    for (int start = 0; start < graph.n; start += cfg.batch_size) {
      const int stop = std::min(graph.n, start + cfg.batch_size);
      const std::vector<int> anchors(order.begin() + start, order.begin() + stop);
      const BatchPlan plan =
          SampleBatchPlan(graph, cfg, anchors, rng, &res.diagnostics);

      ForwardCache cache;
      const Matrix emb =
          ModelForward(res.model, features, plan.layer1_neighbors,
                       plan.layer2_neighbors, true, &cache);
      UpdateRunningStats(&res.model.layer1, cache.l1, graph.n);
      UpdateRunningStats(&res.model.layer2, cache.l2, graph.n);

      Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
      ModelGrads grads = ZeroModelGrads(res.model);
      const LossBreakdown lb =
          Losses(res.model, emb, plan, targets, &d_emb, &grads);
      if (!std::isfinite(lb.total)) {
        std::ostringstream msg;
        msg << "training loss went non-finite at epoch " << epoch
            << " (contrastive " << lb.contrastive << ", regression "
            << lb.regression << ")";
        throw EstimationError(msg.str());
      }
      const Matrix d_hidden =
          LayerBackward(d_emb, res.model.layer2, cache.l2, &grads.layer2);
      LayerBackward(d_hidden, res.model.layer1, cache.l1, &grads.layer1);

      const FlatView grad_view = Flatten(grads);
      AdamStep(params, grad_view, &opt, cfg, ++step);

      sum_con += lb.contrastive;
      sum_reg += lb.regression;
      sum_tot += lb.total;
      ++steps_in_epoch;
    }
    res.trace.push_back({epoch, sum_con / steps_in_epoch,
                         sum_reg / steps_in_epoch, sum_tot / steps_in_epoch});
  }

  res.embeddings = EmbedNodes(res.model, graph, features);
  if (!res.embeddings.allFinite())
    throw EstimationError("trained embeddings contain non-finite values");
  std::sort(res.diagnostics.isolated_nodes.begin(),
            res.diagnostics.isolated_nodes.end());
  std::sort(res.diagnostics.negative_fallback_nodes.begin(),
            res.diagnostics.negative_fallback_nodes.end());
  return res;
}

Matrix EmbedNodes(const GnnModel& model, const GeoGraph& graph,
                  const Matrix& features) {
  if (features.rows() != graph.n)
    throw ParamError("feature rows must match the node count");
  if (features.cols() != model.in_features)
    throw ParamError("feature width must match the trained input width");
  const auto ids = AdjacencyIds(graph);
  return ModelForward(model, features, ids, ids, false, nullptr);
}

GradientCheckReport GradientCheck(const GeoGraph& graph, const Matrix& features,
                                  const std::vector<double>& targets,
                                  const GnnConfig& cfg, double fd_step) {
  ValidateGnnConfig(cfg);
  CheckInputs(graph, features, targets);
  if (!(fd_step > 0.0)) throw ParamError("difference step must be positive");

  GnnModel model = InitGnnModel(static_cast<int>(features.cols()), cfg);
  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<int> anchors(static_cast<size_t>(graph.n));
  std::iota(anchors.begin(), anchors.end(), 0);
  const BatchPlan plan = SampleBatchPlan(graph, cfg, anchors, rng, nullptr);

  ForwardCache cache;
  const Matrix emb = ModelForward(model, features, plan.layer1_neighbors,
                                  plan.layer2_neighbors, true, &cache);
  Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
  ModelGrads grads = ZeroModelGrads(model);
  Losses(model, emb, plan, targets, &d_emb, &grads);
  const Matrix d_hidden = LayerBackward(d_emb, model.layer2, cache.l2, &grads.layer2);
  LayerBackward(d_hidden, model.layer1, cache.l1, &grads.layer1);

  const FlatView pv = Flatten(model);
  const FlatView gv = Flatten(grads);
  GradientCheckReport report;
  report.n_params = static_cast<int>(pv.ptr.size());
  for (size_t i = 0; i < pv.ptr.size(); ++i) {
    const double orig = *pv.ptr[i];
    *pv.ptr[i] = orig + fd_step;
    const double up = ComputeLoss(model, features, plan, targets).total;
    *pv.ptr[i] = orig - fd_step;
    const double down = ComputeLoss(model, features, plan, targets).total;
    *pv.ptr[i] = orig;
    const double fd = (up - down) / (2.0 * fd_step);
    const double an = *gv.ptr[i];
    const double rel =
        std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

}  // namespace asd
