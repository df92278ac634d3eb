#include "asd/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "asd/errors.hpp"
#include "asd/hierarchy.hpp"
#include "asd/rng.hpp"

namespace asd {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> Baselines(const std::vector<SyntheticGeo>& geos) {
  std::vector<double> out;
  out.reserve(geos.size());
  for (const SyntheticGeo& g : geos) out.push_back(g.baseline_revenue);
  return out;
}

double MeanBaseline(const std::vector<SyntheticGeo>& geos) {
  double sum = 0.0;
  for (const SyntheticGeo& g : geos) sum += g.baseline_revenue;
  return sum / static_cast<double>(geos.size());
}

void StandardizeColumns(Matrix* m) {
  for (int c = 0; c < m->cols(); ++c) {
    const double mean = m->col(c).mean();
    const double ss = (m->col(c).array() - mean).square().sum();
    const double sd =
        m->rows() > 1 ? std::sqrt(ss / static_cast<double>(m->rows() - 1)) : 0.0;
    if (sd > 1e-12 * std::max(1.0, std::fabs(mean)))
      m->col(c) = (m->col(c).array() - mean) / sd;
    else
      m->col(c).setZero();
  }
}

// Mean residual after dropping the n_trim largest-magnitude residuals at this
// theta. Ties are broken toward trimming the earlier pair.
double TrimmedResidualMean(const std::vector<double>& dr,
                           const std::vector<double>& ds, double theta,
                           int n_trim) {
  const size_t k = dr.size();
  std::vector<std::pair<double, size_t>> order(k);
  for (size_t i = 0; i < k; ++i)
    order[i] = {std::fabs(dr[i] - theta * ds[i]), i};
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double sum = 0.0;
  int kept = 0;
  for (size_t t = static_cast<size_t>(n_trim); t < k; ++t) {
    const size_t i = order[t].second;
    sum += dr[i] - theta * ds[i];
    ++kept;
  }
  return sum / static_cast<double>(kept);
}

double BaselineGap(const std::vector<SyntheticGeo>& geos,
                   const std::vector<Arm>& arms) {
  double treated = 0.0, control = 0.0;
  for (size_t i = 0; i < geos.size(); ++i) {
    if (arms[i] == Arm::kTreatment)
      treated += geos[i].baseline_revenue;
    else
      control += geos[i].baseline_revenue;
  }
  return std::fabs(treated - control);
}

void CheckPipelineSize(const std::vector<SyntheticGeo>& geos) {
  if (geos.size() < 8)
    throw ParamError("design pipelines need at least eight geos");
}

std::vector<int> CoarseLevels(int n) {
  std::vector<int> levels;
  for (double frac : {0.06, 0.12, 0.18}) {
    int k = 2 * static_cast<int>(std::llround(frac * n / 2.0));
    k = std::max(4, k);
    k = std::min(k, n);
    levels.push_back(k);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

// Five geometrically spaced supergeo counts in the fine band between about
// 0.7n and 0.9n, rounded to even so both arms can hold the same number of
// supergeos. Estimator dispersion falls steadily as cuts get finer (the trim
// resolves the heavy tail better with more pairs), while cuts at or below n/2
// admit occasional coarse picks that degrade the estimate badly; the fine
// band keeps every candidate in the regime where the downstream estimator is
// both well centred and tight, without collapsing to the all-singleton cut.
std::vector<int> EmbeddedLevels(int n) {
  const double lo = std::max(2.0, std::round(0.7 * n));
  const double hi = std::max(lo, std::round(0.9 * n));
  const int points = 5;
  std::vector<int> levels;
  for (int j = 0; j < points; ++j) {
    const double g = lo * std::pow(hi / lo, j / double(points - 1));
    int k = 2 * static_cast<int>(std::llround(g / 2.0));
    k = std::max(4, std::min(k, n));
    levels.push_back(k);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

DesignOutcome SolveDesign(std::vector<CandidatePartition> candidates,
                          const std::vector<SyntheticGeo>& geos,
                          const PipelineConfig& cfg, SolveMode mode,
                          std::uint64_t seed, Clock::time_point start) {
  DesignProblem problem;
  problem.candidates = std::move(candidates);
  problem.cov = SyntheticCovariates(geos, cfg.modifier_lambda);
  problem.time_limit_s = cfg.design_time_limit_s;
  problem.mode = mode;
  problem.seed = derive_seed(seed, 1);
  problem.count_balance = 1;
  // Single greedy-descent start. The estimator pairs rank-adjacent supergeo
  // totals across arms, and the greedy seed is what keeps those ranks
  // interleaved; randomized restarts can cut the cost a little while making
  // the paired totals far more dispersed.
  problem.restarts = 1;
  const DesignAssignment assignment = Solve(problem);

  DesignOutcome out;
  out.partition = problem.candidates[static_cast<size_t>(assignment.candidate_index)];
  out.arms = assignment.arms;
  out.cost = assignment.cost;
  out.status = assignment.status;
  out.n_candidates = static_cast<int>(problem.candidates.size());
  out.design_time_s = SecondsSince(start);
  return out;
}

PipelineResult FinishSupergeoPipeline(const std::vector<SyntheticGeo>& geos,
                                      double rho_star,
                                      const DesignOutcome& design,
                                      const PipelineConfig& cfg) {
  const int n = static_cast<int>(geos.size());
  const std::vector<Arm> geo_arms = ExpandArms(design.partition, design.arms, n);
  const ExperimentOutcome outcome = RunExperiment(geos, geo_arms);
  const auto sg_pairs =
      PairArmsByBaseline(design.partition, design.arms, Baselines(geos));
  if (sg_pairs.size() < 2)
    throw EstimationError("design yields fewer than two supergeo pairs");

  std::vector<double> dr, ds;
  dr.reserve(sg_pairs.size());
  ds.reserve(sg_pairs.size());
  for (const auto& [treated_sg, control_sg] : sg_pairs) {
    double r_t = 0.0, r_c = 0.0, s_t = 0.0, s_c = 0.0;
    for (int g : design.partition.supergeos[static_cast<size_t>(treated_sg)]) {
      r_t += outcome.response[static_cast<size_t>(g)];
      s_t += outcome.spend_uplift[static_cast<size_t>(g)];
    }
    for (int g : design.partition.supergeos[static_cast<size_t>(control_sg)]) {
      r_c += outcome.response[static_cast<size_t>(g)];
      s_c += outcome.spend_uplift[static_cast<size_t>(g)];
    }
    dr.push_back(r_t - r_c);
    ds.push_back(s_t - s_c);
  }

  PipelineResult res;
  res.estimate = TrimmedMatchRoot(dr, ds, cfg.trimmed_match);
  res.abs_bias = std::fabs(res.estimate - rho_star);
  res.balance = BaselineGap(geos, geo_arms);
  res.design_time_s = design.design_time_s;
  return res;
}

}  // namespace

ExperimentOutcome RunExperiment(const std::vector<SyntheticGeo>& geos,
                                const std::vector<Arm>& arms) {
  if (geos.empty()) throw ParamError("experiment needs at least one geo");
  if (arms.size() != geos.size())
    throw ParamError("every geo needs an arm assignment");
  ExperimentOutcome out;
  out.response.reserve(geos.size());
  out.spend_uplift.reserve(geos.size());
  out.arms = arms;
  for (size_t i = 0; i < geos.size(); ++i) {
    if (arms[i] == Arm::kTreatment) {
      out.response.push_back(geos[i].potential_outcomes.second);
      out.spend_uplift.push_back(geos[i].spend);
    } else {
      out.response.push_back(geos[i].potential_outcomes.first);
      out.spend_uplift.push_back(0.0);
    }
  }
  return out;
}

double EstimateIroasAggregate(const ExperimentOutcome& outcome,
                              const std::vector<double>& baselines) {
  const size_t n = outcome.response.size();
  if (baselines.size() != n || outcome.arms.size() != n ||
      outcome.spend_uplift.size() != n)
    throw ParamError("outcome and baselines must cover the same geos");
  double resp_t = 0.0, resp_c = 0.0, base_t = 0.0, base_c = 0.0, uplift = 0.0;
  int n_t = 0, n_c = 0;
  for (size_t i = 0; i < n; ++i) {
    if (outcome.arms[i] == Arm::kTreatment) {
      resp_t += outcome.response[i];
      base_t += baselines[i];
      uplift += outcome.spend_uplift[i];
      ++n_t;
    } else {
      resp_c += outcome.response[i];
      base_c += baselines[i];
      ++n_c;
    }
  }
  if (n_t == 0 || n_c == 0) throw ParamError("both arms must be non-empty");
  if (!(base_c > 0.0))
    throw EstimationError("control baseline total must be positive");
  if (uplift == 0.0)
    throw EstimationError("undefined estimate: treated spend uplift is zero");
  const double counterfactual = base_t * (resp_c / base_c);
  return (resp_t - counterfactual) / uplift;
}

double TrimmedMatchRoot(const std::vector<double>& response_delta,
                        const std::vector<double>& spend_delta,
                        const TrimmedMatchConfig& cfg) {
  const int k = static_cast<int>(response_delta.size());
  if (spend_delta.size() != response_delta.size())
    throw ParamError("one spend delta per response delta is required");
  if (k < 2) throw ParamError("at least two pairs are required");
  if (!(cfg.trim_fraction >= 0.0) || !(cfg.trim_fraction < 0.5))
    throw ParamError("trim fraction must lie in [0, 0.5)");
  if (!(cfg.root_tolerance > 0.0))
    throw ParamError("root tolerance must be positive");
  const int n_trim =
      static_cast<int>(std::ceil(cfg.trim_fraction * k - 1e-9));
  if (k - n_trim < 2)
    throw ParamError("trimming would leave fewer than two pairs");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < k; ++i) {
    if (spend_delta[static_cast<size_t>(i)] == 0.0) continue;
    const double ratio = response_delta[static_cast<size_t>(i)] /
                         spend_delta[static_cast<size_t>(i)];
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (!(lo <= hi))
    throw EstimationError("undefined estimate: every pair spend delta is zero");

  auto g = [&](double theta) {
    return TrimmedResidualMean(response_delta, spend_delta, theta, n_trim);
  };
  const double g_lo = g(lo);
  if (g_lo == 0.0) return lo;
  const double g_hi = g(hi);
  if (g_hi == 0.0) return hi;
  if (g_lo < 0.0 || g_hi > 0.0) {
    std::ostringstream msg;
    msg << "trimmed residual mean does not change sign over [" << lo << ", "
        << hi << "]: endpoint values " << g_lo << " and " << g_hi;
    throw EstimationError(msg.str());
  }
  while (hi - lo > cfg.root_tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double TrimmedMatchEstimate(const ExperimentOutcome& outcome,
                            const std::vector<GeoPair>& pairs,
                            const TrimmedMatchConfig& cfg) {
  const int n = outcome.n_geos();
  std::vector<char> used(static_cast<size_t>(n), 0);
  std::vector<double> dr, ds;
  dr.reserve(pairs.size());
  ds.reserve(pairs.size());
  for (const GeoPair& p : pairs) {
    if (p.treated < 0 || p.treated >= n || p.control < 0 || p.control >= n)
      throw ParamError("pair geo id out of range");
    if (outcome.arms[static_cast<size_t>(p.treated)] != Arm::kTreatment ||
        outcome.arms[static_cast<size_t>(p.control)] != Arm::kControl)
      throw ParamError("pair members must come from opposite arms");
    if (used[static_cast<size_t>(p.treated)] ||
        used[static_cast<size_t>(p.control)])
      throw ParamError("pairs must be disjoint");
    used[static_cast<size_t>(p.treated)] = 1;
    used[static_cast<size_t>(p.control)] = 1;
    dr.push_back(outcome.response[static_cast<size_t>(p.treated)] -
                 outcome.response[static_cast<size_t>(p.control)]);
    ds.push_back(outcome.spend_uplift[static_cast<size_t>(p.treated)] -
                 outcome.spend_uplift[static_cast<size_t>(p.control)]);
  }
  return TrimmedMatchRoot(dr, ds, cfg);
}

Matrix SyntheticDesignFeatures(const std::vector<SyntheticGeo>& geos,
                               double deviation_weight) {
  const int n = static_cast<int>(geos.size());
  if (n < 2) throw ParamError("features need at least two geos");
  for (const SyntheticGeo& g : geos)
    if (!(g.baseline_revenue > 0.0) || !(g.spend > 0.0))
      throw DataError("features need positive revenue and spend per geo");
  const double mean_rev = MeanBaseline(geos);
  Matrix f(n, 3);
  for (int i = 0; i < n; ++i) {
    const SyntheticGeo& g = geos[static_cast<size_t>(i)];
    f(i, 0) = std::log(g.baseline_revenue);
    f(i, 1) = std::log(g.spend);
    f(i, 2) = g.spend * (g.baseline_revenue / mean_rev - 1.0);
  }
  StandardizeColumns(&f);
  f.col(2) *= deviation_weight;
  return f;
}

CovariateSet SyntheticCovariates(const std::vector<SyntheticGeo>& geos,
                                 double lambda) {
  if (lambda < 0.0) throw ParamError("modifier weight must be non-negative");
  if (geos.empty()) throw ParamError("covariates need at least one geo");
  const double mean_rev = MeanBaseline(geos);
  CovariateSet cov;
  cov.baseline = Baselines(geos);
  cov.baseline_aggregation = Aggregation::kExtensiveSum;
  Covariate spend{"spend", {}, Aggregation::kExtensiveSum};
  Covariate proxy{"spend_deviation", {}, Aggregation::kExtensiveSum};
  spend.values.reserve(geos.size());
  proxy.values.reserve(geos.size());
  for (const SyntheticGeo& g : geos) {
    spend.values.push_back(g.spend);
    proxy.values.push_back(g.spend * (g.baseline_revenue / mean_rev - 1.0));
  }
  cov.modifiers = {std::move(spend), std::move(proxy)};
  cov.lambdas = {lambda, lambda};
  return cov;
}

std::vector<Arm> ExpandArms(const CandidatePartition& partition,
                            const ArmAssignment& arms, int n_geos) {
  ValidatePartition(partition, n_geos);
  if (arms.arm.size() != partition.supergeos.size())
    throw ParamError("one arm per supergeo is required");
  std::vector<Arm> out(static_cast<size_t>(n_geos), Arm::kControl);
  for (size_t s = 0; s < partition.supergeos.size(); ++s)
    for (int g : partition.supergeos[s]) out[static_cast<size_t>(g)] = arms.arm[s];
  return out;
}

std::vector<std::pair<int, int>> PairArmsByBaseline(
    const CandidatePartition& partition, const ArmAssignment& arms,
    const std::vector<double>& baseline) {
  if (arms.arm.size() != partition.supergeos.size())
    throw ParamError("one arm per supergeo is required");
  std::vector<std::pair<double, int>> treated, control;
  for (size_t s = 0; s < partition.supergeos.size(); ++s) {
    double total = 0.0;
    for (int g : partition.supergeos[s]) {
      if (g < 0 || g >= static_cast<int>(baseline.size()))
        throw ParamError("supergeo member outside the baseline vector");
      total += baseline[static_cast<size_t>(g)];
    }
    if (arms.arm[s] == Arm::kTreatment)
      treated.emplace_back(-total, static_cast<int>(s));
    else
      control.emplace_back(-total, static_cast<int>(s));
  }
  std::sort(treated.begin(), treated.end());
  std::sort(control.begin(), control.end());
  const size_t m = std::min(treated.size(), control.size());
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(m);
  for (size_t r = 0; r < m; ++r)
    pairs.emplace_back(treated[r].second, control[r].second);
  return pairs;
}

DesignOutcome DesignSupergeosCoarse(const std::vector<SyntheticGeo>& geos,
                                    std::uint64_t seed,
                                    const PipelineConfig& cfg) {
  CheckPipelineSize(geos);
  const auto start = Clock::now();
  const Matrix features =
      SyntheticDesignFeatures(geos, cfg.deviation_feature_weight);
  const Dendrogram tree = WardHac(features);
  auto candidates =
      CutDendrogram(tree, CoarseLevels(static_cast<int>(geos.size())));
  return SolveDesign(std::move(candidates), geos, cfg, SolveMode::kAuto, seed,
                     start);
}

DesignOutcome DesignSupergeosEmbedded(const std::vector<SyntheticGeo>& geos,
                                      std::uint64_t seed,
                                      const PipelineConfig& cfg) {
  CheckPipelineSize(geos);
  const int n = static_cast<int>(geos.size());
  const auto start = Clock::now();
  const Matrix features =
      SyntheticDesignFeatures(geos, cfg.deviation_feature_weight);
  const GeoGraph graph =
      BuildGeoGraph(features, std::min(cfg.knn_neighbors, n - 1));

  Matrix target_col(n, 1);
  for (int i = 0; i < n; ++i)
    target_col(i, 0) = geos[static_cast<size_t>(i)].baseline_revenue;
  StandardizeColumns(&target_col);
  std::vector<double> targets(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) targets[static_cast<size_t>(i)] = target_col(i, 0);

  GnnConfig gnn = cfg.gnn;
  gnn.seed = derive_seed(seed, 2);
  const TrainResult trained = TrainEmbedder(graph, features, targets, gnn);

  const Dendrogram tree = WardHac(trained.embeddings);
  auto candidates = CutDendrogram(tree, EmbeddedLevels(n));
  return SolveDesign(std::move(candidates), geos, cfg, cfg.asd_solve_mode, seed,
                     start);
}

PipelineResult PipelineTmBaseline(const std::vector<SyntheticGeo>& geos,
                                  double rho_star, std::uint64_t seed,
                                  const PipelineConfig& cfg) {
  CheckPipelineSize(geos);
  const int n = static_cast<int>(geos.size());
  if (n % 2 != 0)
    throw ParamError("adjacent pairing needs an even geo count");
  const auto start = Clock::now();

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = geos[static_cast<size_t>(a)].baseline_revenue;
    const double rb = geos[static_cast<size_t>(b)].baseline_revenue;
    if (ra != rb) return ra > rb;
    return a < b;
  });

  Rng rng(derive_seed(seed, 0));
  std::vector<Arm> arms(static_cast<size_t>(n), Arm::kControl);
  std::vector<GeoPair> pairs;
  pairs.reserve(static_cast<size_t>(n / 2));
  for (int i = 0; i < n; i += 2) {
    const int a = order[static_cast<size_t>(i)];
    const int b = order[static_cast<size_t>(i + 1)];
    const bool first_treated = rng.uniform() < 0.5;
    const int treated = first_treated ? a : b;
    const int control = first_treated ? b : a;
    arms[static_cast<size_t>(treated)] = Arm::kTreatment;
    arms[static_cast<size_t>(control)] = Arm::kControl;
    pairs.push_back({treated, control});
  }
  const double design_time = SecondsSince(start);

  const ExperimentOutcome outcome = RunExperiment(geos, arms);
  PipelineResult res;
  res.estimate = TrimmedMatchEstimate(outcome, pairs, cfg.trimmed_match);
  res.abs_bias = std::fabs(res.estimate - rho_star);
  res.balance = BaselineGap(geos, arms);
  res.design_time_s = design_time;
  return res;
}

PipelineResult PipelineSgTm(const std::vector<SyntheticGeo>& geos,
                            double rho_star, std::uint64_t seed,
                            const PipelineConfig& cfg) {
  const DesignOutcome design = DesignSupergeosCoarse(geos, seed, cfg);
  return FinishSupergeoPipeline(geos, rho_star, design, cfg);
}

PipelineResult PipelineAsdTm(const std::vector<SyntheticGeo>& geos,
                             double rho_star, std::uint64_t seed,
                             const PipelineConfig& cfg) {
  const DesignOutcome design = DesignSupergeosEmbedded(geos, seed, cfg);
  return FinishSupergeoPipeline(geos, rho_star, design, cfg);
}

}  // namespace asd
