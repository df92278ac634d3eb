#ifndef ASD_BALANCE_HPP_
#define ASD_BALANCE_HPP_

#include <string>
#include <vector>

namespace asd {

enum class Arm { kTreatment, kControl };

// A full division of all geos into disjoint, non-empty supergeos.
struct CandidatePartition {
  std::vector<std::vector<int>> supergeos;
  std::string source_cut;  // human-readable level descriptor, e.g. "k=24"

  int num_supergeos() const { return static_cast<int>(supergeos.size()); }
};

// Throws ParamError unless the supergeos are disjoint, non-empty, and cover
// exactly the ids [0, n_geos).
void ValidatePartition(const CandidatePartition& partition, int n_geos);

enum class Aggregation {
  kExtensiveSum,       // supergeo value = sum of member values
  kIntensiveWeightedMean  // supergeo value = weight-weighted mean of members
};

struct Covariate {
  std::string name;
  std::vector<double> values;  // one per geo
  Aggregation aggregation = Aggregation::kExtensiveSum;
};

// Baseline plus weighted effect-modifier covariates entering the design cost.
struct CovariateSet {
  std::vector<double> baseline;  // per-geo baseline revenue (currency)
  Aggregation baseline_aggregation = Aggregation::kExtensiveSum;
  std::vector<Covariate> modifiers;
  std::vector<double> lambdas;  // one non-negative weight per modifier
  // Weights for intensive aggregation; defaults to the baseline when empty.
  std::vector<double> weights;
};

// Throws ParamError on length mismatches or negative lambdas.
void ValidateCovariateSet(const CovariateSet& cov, int n_geos);

// One arm label per supergeo; both arms must be non-empty.
struct ArmAssignment {
  std::vector<Arm> arm;
};

// Rolls per-geo values up to the supergeo level under the given rule.
// Intensive aggregation throws AggregationError when a supergeo has zero
// total weight.
std::vector<double> SupergeoCovariate(const CandidatePartition& partition,
                                      const std::vector<double>& values,
                                      Aggregation aggregation,
                                      const std::vector<double>& weights);

// Standardised mean difference (a_mean - b_mean) / sqrt((var_a + var_b) / 2)
// with sample (n-1) variances; single-member groups contribute variance 0.
// Zero pooled spread returns 0 when the means agree and a signed infinity
// sentinel when they differ, so degenerate splits are visible, never dropped.
double Smd(const std::vector<double>& a, const std::vector<double>& b);

struct CostTerm {
  std::string name;
  double smd = 0.0;          // signed
  double lambda = 1.0;       // 1 for the baseline term
  double contribution = 0.0; // lambda * |smd|
};

struct CostBreakdown {
  double total = 0.0;
  std::vector<CostTerm> terms;
};

// Design cost |SMD(baseline)| + sum_m lambda_m * |SMD(modifier_m)| evaluated
// between arms at the supergeo level, with a per-term breakdown.
CostBreakdown DesignCost(const CandidatePartition& partition,
                         const ArmAssignment& arms, const CovariateSet& cov);

// Mean absolute SMD across modifiers (unweighted). Throws ParamError when the
// covariate set has no modifiers.
double Masmd(const CandidatePartition& partition, const ArmAssignment& arms,
             const CovariateSet& cov);

// Absolute difference of arm-total baseline revenue; the currency-scale
// balance figure reported alongside estimates.
double ArmRevenueGap(const CandidatePartition& partition,
                     const ArmAssignment& arms,
                     const std::vector<double>& baseline);

}  // namespace asd

#endif  // ASD_BALANCE_HPP_
