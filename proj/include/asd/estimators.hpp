#ifndef ASD_ESTIMATORS_HPP_
#define ASD_ESTIMATORS_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "asd/balance.hpp"
#include "asd/data.hpp"
#include "asd/embedding.hpp"
#include "asd/partition.hpp"

namespace asd {

// Realised experiment data: treated geos report their treated outcome and
// their spend as uplift, control geos report the untreated outcome and zero.
struct ExperimentOutcome {
  std::vector<double> response;
  std::vector<double> spend_uplift;
  std::vector<Arm> arms;

  int n_geos() const { return static_cast<int>(response.size()); }
};

// Throws ParamError when a geo is missing an arm assignment.
ExperimentOutcome RunExperiment(const std::vector<SyntheticGeo>& geos,
                                const std::vector<Arm>& arms);

// Arm-total ratio estimator: the treated counterfactual is the treated
// baseline total scaled by the control response-to-baseline ratio, so
// (treated response - counterfactual) / treated spend uplift. Throws
// ParamError when an arm is empty, EstimationError when the spend uplift or
// the control baseline total is zero.
double EstimateIroasAggregate(const ExperimentOutcome& outcome,
                              const std::vector<double>& baselines);

enum class Pairing { kSortedBaseline };

struct TrimmedMatchConfig {
  double trim_fraction = 0.10;      // in [0, 0.5)
  Pairing pairing = Pairing::kSortedBaseline;
  double root_tolerance = 1e-9;
};

// Root of the trimmed mean of pair residuals response_delta - theta *
// spend_delta, where at each theta the ceil(q * K) largest-magnitude
// residuals are excluded. Bisection over [min, max] of the pairwise delta
// ratios. Throws ParamError when fewer than two pairs would survive
// trimming, EstimationError when every spend delta is zero or the interval
// does not bracket a sign change (the message carries the endpoint values).
double TrimmedMatchRoot(const std::vector<double>& response_delta,
                        const std::vector<double>& spend_delta,
                        const TrimmedMatchConfig& cfg = {});

struct GeoPair {
  int treated = 0;
  int control = 0;
};

// Pair deltas from an outcome plus explicit treated/control pairs, then the
// trimmed root above. Pairs must be disjoint and arm-consistent.
double TrimmedMatchEstimate(const ExperimentOutcome& outcome,
                            const std::vector<GeoPair>& pairs,
                            const TrimmedMatchConfig& cfg = {});

// Design features for simulated geos: standardised log revenue, standardised
// log spend, and a standardised heterogeneity proxy
// spend * (revenue / mean(revenue) - 1) scaled by deviation_weight.
Matrix SyntheticDesignFeatures(const std::vector<SyntheticGeo>& geos,
                               double deviation_weight = 0.3);

// Balance covariates for simulated geos: baseline revenue plus spend and the
// heterogeneity proxy as modifiers, each weighted by lambda.
CovariateSet SyntheticCovariates(const std::vector<SyntheticGeo>& geos,
                                 double lambda);

// Per-geo arms from a supergeo-level assignment.
std::vector<Arm> ExpandArms(const CandidatePartition& partition,
                            const ArmAssignment& arms, int n_geos);

// Treated-control supergeo pairs matched by baseline-total rank (largest with
// largest). When the arms are uneven the smallest-total surplus supergeos of
// the larger arm stay unpaired.
std::vector<std::pair<int, int>> PairArmsByBaseline(
    const CandidatePartition& partition, const ArmAssignment& arms,
    const std::vector<double>& baseline);

// Shared knobs for the three design-and-estimate pipelines.
struct PipelineConfig {
  TrimmedMatchConfig trimmed_match;
  double modifier_lambda = 0.5;  // weight on each modifier covariate
  // Scale on the heterogeneity-proxy design feature; tempers how strongly
  // clustering chases effect heterogeneity relative to size.
  double deviation_feature_weight = 0.3;
  int knn_neighbors = 10;  // graph degree for the embedding stage
  GnnConfig gnn;           // embedding settings; seed comes per call
  SolveMode asd_solve_mode = SolveMode::kHeuristic;
  double design_time_limit_s = 30.0;
};

// A finished design stage: the chosen partition, its arm split, and the cost
// audit, plus the wall time the stage took.
struct DesignOutcome {
  CandidatePartition partition;
  ArmAssignment arms;
  CostBreakdown cost;
  SolveStatus status = SolveStatus::kOptimal;
  double design_time_s = 0.0;
  int n_candidates = 0;
};

// Coarse design without embeddings: Ward tree on the raw design features cut
// at a few small even levels (supergeo count capped so the exact solver
// always applies), then the exact arm split.
DesignOutcome DesignSupergeosCoarse(const std::vector<SyntheticGeo>& geos,
                                    std::uint64_t seed,
                                    const PipelineConfig& cfg = {});

// Full two-stage design: feature graph, trained node embeddings, Ward tree
// over the embeddings cut at even geometric levels, then the configured
// solver over all candidate cuts.
DesignOutcome DesignSupergeosEmbedded(const std::vector<SyntheticGeo>& geos,
                                      std::uint64_t seed,
                                      const PipelineConfig& cfg = {});

// One simulate-design-estimate replication.
struct PipelineResult {
  double estimate = 0.0;
  double abs_bias = 0.0;      // |estimate - true return on spend|
  double balance = 0.0;       // absolute arm gap in baseline revenue
  double design_time_s = 0.0;
};

// Sort by baseline revenue, pair adjacent geos, flip one seeded coin per pair
// for the arm, then the trimmed pair estimator. Needs an even geo count.
PipelineResult PipelineTmBaseline(const std::vector<SyntheticGeo>& geos,
                                  double rho_star, std::uint64_t seed,
                                  const PipelineConfig& cfg = {});

// Coarse supergeo design, supergeo pairs by baseline rank, trimmed estimator.
PipelineResult PipelineSgTm(const std::vector<SyntheticGeo>& geos,
                            double rho_star, std::uint64_t seed,
                            const PipelineConfig& cfg = {});

// Two-stage embedded design, supergeo pairs by baseline rank, trimmed
// estimator.
PipelineResult PipelineAsdTm(const std::vector<SyntheticGeo>& geos,
                             double rho_star, std::uint64_t seed,
                             const PipelineConfig& cfg = {});

}  // namespace asd

#endif  // ASD_ESTIMATORS_HPP_
