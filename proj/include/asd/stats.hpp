#ifndef ASD_STATS_HPP_
#define ASD_STATS_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace asd {

// Replication-aligned values from two methods; tests act on a - b.
struct PairedSample {
  std::vector<double> a;
  std::vector<double> b;
};

struct TestResult {
  std::string test;
  double statistic = 0.0;
  double p = 1.0;
  double p_corrected = std::numeric_limits<double>::quiet_NaN();
  double cohens_d = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
};

// Inverse standard normal CDF (Wichura's high-precision rational
// approximation). Throws ParamError outside (0, 1).
double NormalQuantile(double p);

double NormalCdf(double z);

// Two-sided tail probability of Student's t with df degrees of freedom.
double StudentTwoSidedP(double t, double df);

// Shapiro-Wilk normality test p-value (Royston's coefficient and p-value
// approximations). Requires 3 <= n <= 5000; constant samples are degenerate.
double ShapiroWilk(const std::vector<double>& x);

// t test on paired differences a - b; two-sided. Degenerate when the
// differences have zero variance. Fills cohens_d with the paired effect size.
TestResult PairedTTest(const PairedSample& s);

// Signed-rank test on a - b: zero differences dropped, tied ranks averaged,
// exact doubled-rank distribution for n <= 25, Normal approximation with
// continuity and tie corrections above. The statistic is the positive-rank
// sum. Degenerate when every difference is zero.
TestResult WilcoxonSignedRank(const PairedSample& s);

// Step-down multiple-testing correction with monotonicity enforcement,
// clipped at 1; output order matches input order.
std::vector<double> HolmBonferroni(const std::vector<double>& pvals);

// mean(diff) / sd(diff) on paired differences; degenerate when sd is 0.
double CohensDPaired(const PairedSample& s);

// Magnitude label at the conventional 0.2 / 0.5 / 0.8 cuts.
std::string EffectSizeLabel(double d);

// Percentile bootstrap interval for the sample mean; deterministic per seed.
std::pair<double, double> BootstrapCiMean(const std::vector<double>& x,
                                          int n_boot = 2000,
                                          double level = 0.95,
                                          std::uint64_t seed = 0);

struct PowerEstimate {
  double power = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
};

// Detection fraction with a 95% Wilson score interval (z = 1.96).
PowerEstimate EmpiricalPower(const std::vector<bool>& detect);

struct TwoSampleResult {
  bool significant = false;
  double p = 1.0;
  double statistic = 0.0;
  double df = 0.0;
};

// Welch's unequal-variance two-sample t test, two-sided; significant means
// p < alpha. Degenerate only when both samples have zero variance.
TwoSampleResult TwoSampleTTest(const std::vector<double>& a,
                               const std::vector<double>& b,
                               double alpha = 0.05);

struct GatedTest {
  TestResult result;
  double shapiro_p = 1.0;
  bool used_t = false;
};

// Normality-gated paired comparison: Shapiro-Wilk on the differences at
// gate_alpha picks the t test, otherwise the signed-rank test.
GatedTest GatedPairedTest(const PairedSample& s, double gate_alpha = 0.05);

}  // namespace asd

#endif  // ASD_STATS_HPP_
