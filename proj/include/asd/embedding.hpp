#ifndef ASD_EMBEDDING_HPP_
#define ASD_EMBEDDING_HPP_

#include <cstdint>
#include <vector>

#include "asd/data.hpp"
#include "asd/rng.hpp"

namespace asd {

struct GnnConfig {
  int gat_layers = 2;  // the architecture below is two layers deep
  int heads = 8;
  int hidden = 64;     // concatenated width across heads
  int out_dim = 32;
  int epochs = 200;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 128;
  double gamma = 0.5;  // regression-term weight in the total loss
  int neighbor_sample_size = 10;
  double contrastive_margin = 1.0;
  int negatives_per_anchor = 5;
  std::uint64_t seed = 0;
};

// Throws ParamError on invalid settings (heads < 1, hidden not divisible by
// heads, non-positive learning rate, negative gamma, and similar).
void ValidateGnnConfig(const GnnConfig& cfg);

// One attention layer: per-head projections and attention vectors, the linear
// map applied to the self state concatenated with the aggregated neighbour
// state, then batch normalisation.
struct GatLayerParams {
  std::vector<Matrix> w_head;  // heads x (in x per_head)
  std::vector<Vector> a_head;  // heads x (2 * per_head)
  Matrix w_self;               // (in + heads * per_head) x out
  Vector bn_scale, bn_shift;   // out
  Vector bn_mean, bn_var;      // running statistics, not trained
};

struct GnnModel {
  GnnConfig cfg;
  int in_features = 0;
  GatLayerParams layer1, layer2;
  Vector head_w;  // regression head on the final embedding
  double head_b = 0.0;
};

// Seeded initialisation (uniform Glorot ranges per matrix; batch-norm scale 1,
// shift 0, running mean 0, running variance 1).
GnnModel InitGnnModel(int in_features, const GnnConfig& cfg);

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

// A replayable sampled training step: per-layer sampled neighbour lists for
// every node, the anchor set, and the anchor triplets.
struct BatchPlan {
  std::vector<int> anchors;
  std::vector<Triplet> triplets;
  std::vector<std::vector<int>> layer1_neighbors;  // one list per node
  std::vector<std::vector<int>> layer2_neighbors;
};

struct EmbedDiagnostics {
  std::vector<int> isolated_nodes;           // no neighbours at all
  std::vector<int> negative_fallback_nodes;  // no non-neighbours to sample
};

// Draws neighbour samples (fan-out capped by degree), one edge-weight
// proportional positive per anchor, and uniform non-neighbour negatives.
// Anchors without neighbours contribute no triplets; anchors adjacent to the
// whole graph fall back to their lowest-weight neighbours as negatives. Both
// conditions are flagged in diag when provided.
BatchPlan SampleBatchPlan(const GeoGraph& graph, const GnnConfig& cfg,
                          const std::vector<int>& anchors, Rng& rng,
                          EmbedDiagnostics* diag = nullptr);

// Full-graph forward through one layer. Training mode normalises with batch
// statistics, evaluation mode with the stored running statistics; neither
// updates the running statistics. Isolated nodes get a zero neighbour term.
Matrix GatLayerForward(const Matrix& states, const GeoGraph& graph,
                       const GatLayerParams& params, bool training);

// Per-head attention rows of the full-graph forward, aligned with each node's
// adjacency list. Rows of non-isolated nodes are simplex vectors.
std::vector<std::vector<std::vector<double>>> GatLayerAttention(
    const Matrix& states, const GeoGraph& graph, const GatLayerParams& params);

// Mean triplet margin loss max(0, d(a,p) - d(a,n) + margin) over the triplets
// (0 when there are none).
double TripletLoss(const Matrix& embeddings, const std::vector<Triplet>& triplets,
                   double margin);

// Mean squared error of the linear head over the anchor rows.
double RegressionHeadLoss(const Matrix& embeddings, const Vector& head_w,
                          double head_b, const std::vector<int>& anchors,
                          const std::vector<double>& targets);

struct LossBreakdown {
  double contrastive = 0.0;
  double regression = 0.0;
  double total = 0.0;
};

// Training-mode forward over the plan's sampled neighbourhoods followed by
// both loss terms; total = contrastive + gamma * regression.
LossBreakdown ComputeLoss(const GnnModel& model, const Matrix& features,
                          const BatchPlan& plan,
                          const std::vector<double>& targets);

struct TraceRow {
  int epoch = 0;
  double contrastive = 0.0;
  double regression = 0.0;
  double total = 0.0;
};

struct TrainResult {
  GnnModel model;
  Matrix embeddings;  // n x out_dim, evaluation mode
  std::vector<TraceRow> trace;
  EmbedDiagnostics diagnostics;
};

// Trains with decoupled-weight-decay Adam on neighbour-sampled mini-batches
// and returns evaluation-mode embeddings. Deterministic given cfg.seed.
// Throws EstimationError when the loss goes non-finite (message carries the
// epoch and term values).
TrainResult TrainEmbedder(const GeoGraph& graph, const Matrix& features,
                          const std::vector<double>& targets,
                          const GnnConfig& cfg);

// Evaluation-mode embeddings for a frozen model (full neighbourhoods, running
// batch-norm statistics).
Matrix EmbedNodes(const GnnModel& model, const GeoGraph& graph,
                  const Matrix& features);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  int n_params = 0;
};

// Central finite differences of the total loss against the analytic gradient
// for every trainable parameter, on a frozen sampled plan.
GradientCheckReport GradientCheck(const GeoGraph& graph, const Matrix& features,
                                  const std::vector<double>& targets,
                                  const GnnConfig& cfg, double fd_step = 1e-5);

}  // namespace asd

#endif  // ASD_EMBEDDING_HPP_
