#include "asd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asd/errors.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  size_t n = 0;
};

Moments SampleMoments(const std::vector<double>& x) {
  Moments m;
  m.n = x.size();
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : x) {
      double d = v - m.mean;
      ss += d * d;
    }
    m.sd = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

std::vector<double> Differences(const PairedSample& s) {
  if (s.a.size() != s.b.size())
    throw ParamError("paired sample lengths differ");
  if (s.a.size() < 3) throw ParamError("paired sample needs at least 3 pairs");
  std::vector<double> d(s.a.size());
  for (size_t i = 0; i < d.size(); ++i) {
    d[i] = s.a[i] - s.b[i];
    if (!std::isfinite(d[i])) throw ParamError("paired sample has non-finite values");
  }
  return d;
}

// Continued-fraction evaluation of the regularized incomplete beta function.
double BetaContinuedFraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double RegularizedIncompleteBeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * BetaContinuedFraction(a, b, x) / a;
  return 1.0 - front * BetaContinuedFraction(b, a, 1.0 - x) / b;
}

double PolyAsc(const double* coeff, int count, double x) {
  double acc = 0.0;
  for (int i = count - 1; i >= 0; --i) acc = acc * x + coeff[i];
  return acc;
}

}  // namespace

double NormalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ParamError("normal quantile needs p in (0, 1)");
  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    static const double a[8] = {
        3.3871328727963666080e0,  1.3314166789178437745e2,
        1.9715909503065514427e3,  1.3731693765509461125e4,
        4.5921953931549871457e4,  6.7265770927008700853e4,
        3.3430575583588128105e4,  2.5090809287301226727e3};
    static const double b[8] = {
        1.0,                      4.2313330701600911252e1,
        6.8718700749205790830e2,  5.3941960214247511077e3,
        2.1213794301586595867e4,  3.9307895800092710610e4,
        2.8729085735721942674e4,  5.2264952788528545610e3};
    return q * PolyAsc(a, 8, r) / PolyAsc(b, 8, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    static const double c[8] = {
        1.42343711074968357734e0,  4.63033784615654529590e0,
        5.76949722146069140550e0,  3.64784832476320460504e0,
        1.27045825245236838258e0,  2.41780725177450611770e-1,
        2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static const double d[8] = {
        1.0,                       2.05319162663775882187e0,
        1.67638483018380384940e0,  6.89767334985100004550e-1,
        1.48103976427480074590e-1, 1.51986665636164571966e-2,
        5.47593808499534494600e-4, 1.05075007164441684324e-9};
    value = PolyAsc(c, 8, r) / PolyAsc(d, 8, r);
  } else {
    r -= 5.0;
    static const double e[8] = {
        6.65790464350110377720e0,  5.46378491116411436990e0,
        1.78482653991729133580e0,  2.96560571828504891230e-1,
        2.65321895265761230930e-2, 1.24266094738807843860e-3,
        2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static const double f[8] = {
        1.0,                       5.99832206555887937690e-1,
        1.36929880922735805310e-1, 1.48753612908506148525e-2,
        7.86869131145613259100e-4, 1.84631831751005468180e-5,
        1.42151175831644588870e-7, 2.04426310338993978564e-15};
    value = PolyAsc(e, 8, r) / PolyAsc(f, 8, r);
  }
  return q < 0.0 ? -value : value;
}

double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double StudentTwoSidedP(double t, double df) {
  if (!(df > 0.0)) throw ParamError("degrees of freedom must be positive");
  double x = df / (df + t * t);
  return RegularizedIncompleteBeta(0.5 * df, 0.5, x);
}

double ShapiroWilk(const std::vector<double>& x) {
  size_t n = x.size();
  if (n < 3 || n > 5000)
    throw ParamError("normality test supports 3 <= n <= 5000");
  std::vector<double> sorted(x);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DegenerateError("constant sample has no normality p-value");

  // Expected normal order statistics and the Royston-corrected weights.
  std::vector<double> m(n);
  double ssq_m = 0.0;
  for (size_t i = 0; i < n; ++i) {
    m[i] = NormalQuantile((static_cast<double>(i + 1) - 0.375) /
                          (static_cast<double>(n) + 0.25));
    ssq_m += m[i] * m[i];
  }
  std::vector<double> a(n);
  double u = 1.0 / std::sqrt(static_cast<double>(n));
  double rsqrt_ssq = 1.0 / std::sqrt(ssq_m);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[2] = std::sqrt(0.5);
    a[1] = 0.0;
  } else {
    double an = m[n - 1] * rsqrt_ssq +
                u * (0.221157 +
                     u * (-0.147981 +
                          u * (-2.071190 + u * (4.434685 + u * -2.706056))));
    double phi;
    if (n > 5) {
      double an1 = m[n - 2] * rsqrt_ssq +
                   u * (0.042981 +
                        u * (-0.293762 +
                             u * (-1.752461 + u * (5.682633 + u * -3.582633))));
      phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
            (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      a[n - 1] = an;
      a[0] = -an;
      a[n - 2] = an1;
      a[1] = -an1;
      for (size_t i = 2; i + 2 < n; ++i) a[i] = m[i] / std::sqrt(phi);
    } else {
      phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      a[n - 1] = an;
      a[0] = -an;
      for (size_t i = 1; i + 1 < n; ++i) a[i] = m[i] / std::sqrt(phi);
    }
  }

  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                static_cast<double>(n);
  double numer = 0.0, denom = 0.0;
  for (size_t i = 0; i < n; ++i) {
    numer += a[i] * sorted[i];
    double d = sorted[i] - mean;
    denom += d * d;
  }
  double w = numer * numer / denom;
  if (w > 1.0) w = 1.0;

  double dn = static_cast<double>(n);
  if (n == 3) {
    double pw = 1.90985931710274403 *  // 6 / pi
                (std::asin(std::sqrt(w)) - 1.04719755119659775);  // asin(sqrt(3/4))
    return std::clamp(pw, 0.0, 1.0);
  }
  double z;
  if (n <= 11) {
    double gamma = 0.459 * dn - 2.273;
    double wt = -std::log(gamma - std::log1p(-w));
    double mu = 0.5440 + dn * (-0.39978 + dn * (0.025054 + dn * -6.714e-4));
    double sigma =
        std::exp(1.3822 + dn * (-0.77857 + dn * (0.062767 + dn * -2.0322e-3)));
    z = (wt - mu) / sigma;
  } else {
    double ln_n = std::log(dn);
    double wt = std::log1p(-w);
    double mu =
        -1.5861 + ln_n * (-0.31082 + ln_n * (-0.083751 + ln_n * 3.8915e-3));
    double sigma = std::exp(-0.4803 + ln_n * (-0.082676 + ln_n * 3.0302e-3));
    z = (wt - mu) / sigma;
  }
  return std::clamp(1.0 - NormalCdf(z), 0.0, 1.0);
}

TestResult PairedTTest(const PairedSample& s) {
  std::vector<double> d = Differences(s);
  Moments m = SampleMoments(d);
  if (m.sd == 0.0)
    throw DegenerateError("paired differences have zero variance");
  double n = static_cast<double>(m.n);
  TestResult out;
  out.test = "paired-t";
  out.statistic = m.mean / (m.sd / std::sqrt(n));
  out.p = StudentTwoSidedP(out.statistic, n - 1.0);
  out.cohens_d = m.mean / m.sd;
  return out;
}

TestResult WilcoxonSignedRank(const PairedSample& s) {
  std::vector<double> d = Differences(s);
  std::erase(d, 0.0);
  if (d.empty())
    throw DegenerateError("all paired differences are zero");
  size_t n = d.size();

  // Average ranks of |d|; doubling keeps every rank integral.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
    return std::fabs(d[i]) < std::fabs(d[j]);
  });
  std::vector<double> rank(n);
  std::vector<size_t> tie_sizes;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n &&
           std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]]))
      ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    if (j > i) tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }

  double w_plus = 0.0;
  for (size_t k = 0; k < n; ++k)
    if (d[k] > 0.0) w_plus += rank[k];

  TestResult out;
  out.test = "wilcoxon-signed-rank";
  out.statistic = w_plus;
  Moments dm = SampleMoments(d);
  out.cohens_d = dm.sd > 0.0
                     ? dm.mean / dm.sd
                     : std::numeric_limits<double>::quiet_NaN();

  if (n <= 25) {
    // Exact null distribution over doubled ranks: product of (1 + z^r2).
    std::vector<int> r2(n);
    int total = 0;
    for (size_t k = 0; k < n; ++k) {
      r2[k] = static_cast<int>(std::llround(2.0 * rank[k]));
      total += r2[k];
    }
    std::vector<std::uint64_t> count(static_cast<size_t>(total) + 1, 0);
    count[0] = 1;
    int reach = 0;
    for (size_t k = 0; k < n; ++k) {
      reach += r2[k];
      for (int wsum = reach; wsum >= r2[k]; --wsum)
        count[static_cast<size_t>(wsum)] +=
            count[static_cast<size_t>(wsum - r2[k])];
    }
    std::uint64_t w2 = static_cast<std::uint64_t>(std::llround(2.0 * w_plus));
    std::uint64_t le = 0, ge = 0, all = 0;
    for (int wsum = 0; wsum <= total; ++wsum) {
      std::uint64_t c = count[static_cast<size_t>(wsum)];
      all += c;
      if (static_cast<std::uint64_t>(wsum) <= w2) le += c;
      if (static_cast<std::uint64_t>(wsum) >= w2) ge += c;
    }
    double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(all);
    out.p = std::min(1.0, 2.0 * tail);
  } else {
    double dn = static_cast<double>(n);
    double mu = dn * (dn + 1.0) / 4.0;
    double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
    for (size_t t : tie_sizes) {
      double tt = static_cast<double>(t);
      var -= (tt * tt * tt - tt) / 48.0;
    }
    double num = w_plus - mu;
    if (num > 0.5)
      num -= 0.5;
    else if (num < -0.5)
      num += 0.5;
    else
      num = 0.0;
    double z = num / std::sqrt(var);
    out.p = std::min(1.0, 2.0 * (1.0 - NormalCdf(std::fabs(z))));
  }
  return out;
}

std::vector<double> HolmBonferroni(const std::vector<double>& pvals) {
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0))
      throw ParamError("p-values must lie in [0, 1]");
  size_t m = pvals.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t i, size_t j) { return pvals[i] < pvals[j]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (size_t rank = 0; rank < m; ++rank) {
    double adjusted = static_cast<double>(m - rank) * pvals[order[rank]];
    running = std::max(running, std::min(1.0, adjusted));
    out[order[rank]] = running;
  }
  return out;
}

double CohensDPaired(const PairedSample& s) {
  if (s.a.size() != s.b.size())
    throw ParamError("paired sample lengths differ");
  if (s.a.size() < 2) throw ParamError("effect size needs at least 2 pairs");
  std::vector<double> d(s.a.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = s.a[i] - s.b[i];
  Moments m = SampleMoments(d);
  if (m.sd == 0.0)
    throw DegenerateError("paired differences have zero variance");
  return m.mean / m.sd;
}

std::string EffectSizeLabel(double d) {
  double ad = std::fabs(d);
  if (ad < 0.2) return "negligible";
  if (ad < 0.5) return "small";
  if (ad < 0.8) return "medium";
  return "large";
}

std::pair<double, double> BootstrapCiMean(const std::vector<double>& x,
                                          int n_boot, double level,
                                          std::uint64_t seed) {
  if (x.size() < 2) throw ParamError("bootstrap needs at least 2 values");
  if (n_boot < 1) throw ParamError("bootstrap count must be positive");
  if (!(level > 0.0 && level < 1.0))
    throw ParamError("confidence level must lie in (0, 1)");
  Rng rng(seed);
  size_t n = x.size();
  std::vector<double> boots(static_cast<size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i)
      sum += x[rng.below(n)];
    boots[static_cast<size_t>(b)] = sum / static_cast<double>(n);
  }
  std::sort(boots.begin(), boots.end());
  // Interpolated percentile over the sorted resample means.
  auto quantile = [&](double q) {
    double pos = q * static_cast<double>(n_boot - 1);
    size_t lo = static_cast<size_t>(std::floor(pos));
    size_t hi = std::min(lo + 1, static_cast<size_t>(n_boot - 1));
    double frac = pos - std::floor(pos);
    return boots[lo] * (1.0 - frac) + boots[hi] * frac;
  };
  double alpha = 1.0 - level;
  return {quantile(0.5 * alpha), quantile(1.0 - 0.5 * alpha)};
}

PowerEstimate EmpiricalPower(const std::vector<bool>& detect) {
  if (detect.empty()) throw ParamError("power needs at least one outcome");
  double n = static_cast<double>(detect.size());
  double k = 0.0;
  for (bool b : detect) k += b ? 1.0 : 0.0;
  double phat = k / n;
  constexpr double z = 1.96;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (phat + z2 / (2.0 * n)) / denom;
  double half =
      z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  PowerEstimate out;
  out.power = phat;
  out.wilson_lo = std::max(0.0, center - half);
  out.wilson_hi = std::min(1.0, center + half);
  return out;
}

TwoSampleResult TwoSampleTTest(const std::vector<double>& a,
                               const std::vector<double>& b, double alpha) {
  if (a.size() < 2 || b.size() < 2)
    throw ParamError("each sample needs at least 2 values");
  Moments ma = SampleMoments(a);
  Moments mb = SampleMoments(b);
  if (ma.sd == 0.0 && mb.sd == 0.0)
    throw DegenerateError("both samples have zero variance");
  double va = ma.sd * ma.sd / static_cast<double>(ma.n);
  double vb = mb.sd * mb.sd / static_cast<double>(mb.n);
  TwoSampleResult out;
  out.statistic = (ma.mean - mb.mean) / std::sqrt(va + vb);
  out.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(ma.n - 1) +
            vb * vb / static_cast<double>(mb.n - 1));
  out.p = StudentTwoSidedP(out.statistic, out.df);
  out.significant = out.p < alpha;
  return out;
}

GatedTest GatedPairedTest(const PairedSample& s, double gate_alpha) {
  std::vector<double> d = Differences(s);
  GatedTest out;
  try {
    out.shapiro_p = ShapiroWilk(d);
  } catch (const DegenerateError&) {
    // A constant difference vector cannot enter the t test either; fall
    // through to the rank test which will raise its own degenerate error
    // only when all differences are zero.
    out.shapiro_p = 0.0;
  }
  out.used_t = out.shapiro_p >= gate_alpha;
  out.result = out.used_t ? PairedTTest(s) : WilcoxonSignedRank(s);
  return out;
}

}  // namespace asd
