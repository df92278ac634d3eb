#include "asd/balance.hpp"

#include <cmath>
#include <limits>

#include "asd/errors.hpp"

namespace asd {

void ValidatePartition(const CandidatePartition& partition, int n_geos) {
  std::vector<char> seen(static_cast<size_t>(n_geos), 0);
  int covered = 0;
  for (const auto& sg : partition.supergeos) {
    if (sg.empty()) throw ParamError("partition contains an empty supergeo");
    for (int g : sg) {
      if (g < 0 || g >= n_geos)
        throw ParamError("partition references geo id " + std::to_string(g) +
                         " outside [0, " + std::to_string(n_geos) + ")");
      if (seen[static_cast<size_t>(g)])
        throw ParamError("geo id " + std::to_string(g) +
                         " appears in more than one supergeo");
      seen[static_cast<size_t>(g)] = 1;
      ++covered;
    }
  }
  if (covered != n_geos)
    throw ParamError("partition covers " + std::to_string(covered) +
                     " geos, expected " + std::to_string(n_geos));
}

void ValidateCovariateSet(const CovariateSet& cov, int n_geos) {
  auto check_len = [n_geos](const std::vector<double>& v, const std::string& what) {
    if (static_cast<int>(v.size()) != n_geos)
      throw ParamError(what + " has length " + std::to_string(v.size()) +
                       ", expected " + std::to_string(n_geos));
  };
  check_len(cov.baseline, "baseline");
  if (!cov.weights.empty()) check_len(cov.weights, "weights");
  if (cov.lambdas.size() != cov.modifiers.size())
    throw ParamError("lambdas count does not match modifier count");
  for (double l : cov.lambdas)
    if (!(l >= 0.0)) throw ParamError("lambda weights must be non-negative");
  for (size_t m = 0; m < cov.modifiers.size(); ++m) {
    check_len(cov.modifiers[m].values, "modifier " + cov.modifiers[m].name);
    for (size_t j = m + 1; j < cov.modifiers.size(); ++j)
      if (cov.modifiers[m].name == cov.modifiers[j].name)
        throw ParamError("duplicate modifier name " + cov.modifiers[m].name);
  }
}

std::vector<double> SupergeoCovariate(const CandidatePartition& partition,
                                      const std::vector<double>& values,
                                      Aggregation aggregation,
                                      const std::vector<double>& weights) {
  std::vector<double> out;
  out.reserve(partition.supergeos.size());
  for (const auto& sg : partition.supergeos) {
    if (aggregation == Aggregation::kExtensiveSum) {
      double s = 0.0;
      for (int g : sg) s += values[static_cast<size_t>(g)];
      out.push_back(s);
    } else {
      double num = 0.0, den = 0.0;
      for (int g : sg) {
        double w = weights[static_cast<size_t>(g)];
        num += w * values[static_cast<size_t>(g)];
        den += w;
      }
      if (den == 0.0)
        throw AggregationError(
            "zero total weight in a supergeo under intensive aggregation");
      out.push_back(num / den);
    }
  }
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance, n-1 denominator; 0 when n == 1
};

Moments SampleMoments(const std::vector<double>& x) {
  Moments m;
  size_t n = x.size();
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : x) {
      double d = v - m.mean;
      ss += d * d;
    }
    m.var = ss / static_cast<double>(n - 1);
  }
  return m;
}

// Splits supergeo-level values by arm and returns the signed SMD.
double ArmSmd(const std::vector<double>& supergeo_values,
              const ArmAssignment& arms) {
  std::vector<double> t, c;
  for (size_t s = 0; s < supergeo_values.size(); ++s) {
    (arms.arm[s] == Arm::kTreatment ? t : c).push_back(supergeo_values[s]);
  }
  return Smd(t, c);
}

}  // namespace

double Smd(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty())
    throw ParamError("smd requires non-empty groups");
  Moments ma = SampleMoments(a);
  Moments mb = SampleMoments(b);
  double pooled = std::sqrt(0.5 * (ma.var + mb.var));
  double diff = ma.mean - mb.mean;
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return diff / pooled;
}

CostBreakdown DesignCost(const CandidatePartition& partition,
                         const ArmAssignment& arms, const CovariateSet& cov) {
  if (arms.arm.size() != partition.supergeos.size())
    throw ParamError("arm assignment length does not match supergeo count");
  int n_t = 0, n_c = 0;
  for (Arm a : arms.arm) (a == Arm::kTreatment ? n_t : n_c)++;
  if (n_t == 0 || n_c == 0)
    throw ParamError("both arms must contain at least one supergeo");

  const std::vector<double>& w = cov.weights.empty() ? cov.baseline : cov.weights;
  CostBreakdown out;

  std::vector<double> base =
      SupergeoCovariate(partition, cov.baseline, cov.baseline_aggregation, w);
  CostTerm base_term;
  base_term.name = "baseline";
  base_term.smd = ArmSmd(base, arms);
  base_term.lambda = 1.0;
  base_term.contribution = std::fabs(base_term.smd);
  out.terms.push_back(base_term);
  out.total = base_term.contribution;

  for (size_t m = 0; m < cov.modifiers.size(); ++m) {
    std::vector<double> agg = SupergeoCovariate(
        partition, cov.modifiers[m].values, cov.modifiers[m].aggregation, w);
    CostTerm term;
    term.name = cov.modifiers[m].name;
    term.smd = ArmSmd(agg, arms);
    term.lambda = cov.lambdas[m];
    // A zero weight excludes the term even when its SMD is the infinity
    // sentinel, so 0 * inf never leaks a NaN into the total.
    term.contribution =
        term.lambda == 0.0 ? 0.0 : term.lambda * std::fabs(term.smd);
    out.terms.push_back(term);
    out.total += term.contribution;
  }
  return out;
}

double Masmd(const CandidatePartition& partition, const ArmAssignment& arms,
             const CovariateSet& cov) {
  if (cov.modifiers.empty())
    throw ParamError("masmd requires at least one modifier");
  const std::vector<double>& w = cov.weights.empty() ? cov.baseline : cov.weights;
  double sum = 0.0;
  for (const Covariate& mod : cov.modifiers) {
    std::vector<double> agg =
        SupergeoCovariate(partition, mod.values, mod.aggregation, w);
    sum += std::fabs(ArmSmd(agg, arms));
  }
  return sum / static_cast<double>(cov.modifiers.size());
}

double ArmRevenueGap(const CandidatePartition& partition,
                     const ArmAssignment& arms,
                     const std::vector<double>& baseline) {
  double t = 0.0, c = 0.0;
  for (size_t s = 0; s < partition.supergeos.size(); ++s) {
    double total = 0.0;
    for (int g : partition.supergeos[s]) total += baseline[static_cast<size_t>(g)];
    (arms.arm[s] == Arm::kTreatment ? t : c) += total;
  }
  return std::fabs(t - c);
}

}  // namespace asd
