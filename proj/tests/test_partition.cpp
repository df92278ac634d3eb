#include "asd/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "asd/balance.hpp"
#include "asd/errors.hpp"
#include "asd/rng.hpp"
#include "doctest.h"

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using asd::Arm;
using asd::CandidatePartition;
using asd::CovariateSet;
using asd::DesignProblem;

// Singleton supergeos over n geos, in id order.
CandidatePartition Singletons(int n) {
  CandidatePartition p;
  for (int g = 0; g < n; ++g) p.supergeos.push_back({g});
  p.source_cut = "singletons";
  return p;
}

CovariateSet BaselineOnly(std::vector<double> baseline) {
  CovariateSet cov;
  cov.baseline = std::move(baseline);
  return cov;
}

// Exhaustive oracle over all canonical assignments (first supergeo pinned to
// treatment), honouring the optional arm-count rules.
double BruteForceCost(const CandidatePartition& cand, const CovariateSet& cov,
                      std::optional<int> count_balance = std::nullopt,
                      int min_arm = 1) {
  int m = cand.num_supergeos();
  double best = kInf;
  bool found = false;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); mask += 2) {
    int n_t = 0;
    for (int s = 0; s < m; ++s)
      if (mask & (std::uint64_t{1} << s)) ++n_t;
    int n_c = m - n_t;
    if (n_t < min_arm || n_c < min_arm) continue;
    if (count_balance && std::abs(n_t - n_c) > *count_balance) continue;
    asd::ArmAssignment arms;
    for (int s = 0; s < m; ++s)
      arms.arm.push_back(mask & (std::uint64_t{1} << s) ? Arm::kTreatment
                                                        : Arm::kControl);
    double cost = asd::DesignCost(cand, arms, cov).total;
    if (!found || cost < best) {
      found = true;
      best = cost;
    }
  }
  REQUIRE(found);
  return best;
}

// A random partition of n geos into m non-empty supergeos plus a covariate
// set with the requested number of modifiers.
struct RandomInstance {
  CandidatePartition partition;
  CovariateSet cov;
};

RandomInstance MakeRandomInstance(asd::Rng& rng, int n_geos, int m,
                                  int n_modifiers) {
  RandomInstance inst;
  inst.partition.supergeos.resize(static_cast<size_t>(m));
  for (int g = 0; g < n_geos; ++g) {
    int s = g < m ? g : static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    inst.partition.supergeos[static_cast<size_t>(s)].push_back(g);
  }
  inst.partition.source_cut = "random";
  inst.cov.baseline.resize(static_cast<size_t>(n_geos));
  for (double& v : inst.cov.baseline) v = std::exp(rng.normal(3.0, 0.8));
  for (int k = 0; k < n_modifiers; ++k) {
    asd::Covariate mod;
    mod.name = "mod" + std::to_string(k);
    mod.aggregation = k % 2 == 0 ? asd::Aggregation::kExtensiveSum
                                 : asd::Aggregation::kIntensiveWeightedMean;
    for (int g = 0; g < n_geos; ++g) mod.values.push_back(rng.normal(1.0, 0.4));
    inst.cov.modifiers.push_back(std::move(mod));
    inst.cov.lambdas.push_back(0.5);
  }
  return inst;
}

}  // namespace

TEST_SUITE("partition") {

TEST_CASE("two supergeos leave a unique canonical assignment") {
  DesignProblem p;
  CandidatePartition cand;
  cand.supergeos = {{0, 1}, {2}};
  p.candidates = {cand};
  p.cov = BaselineOnly({1.0, 2.0, 4.0});
  asd::DesignAssignment out = asd::SolveExact(p);
  CHECK(out.candidate_index == 0);
  REQUIRE(out.arms.arm.size() == 2);
  CHECK(out.arms.arm[0] == Arm::kTreatment);
  CHECK(out.arms.arm[1] == Arm::kControl);
  CHECK(out.status == asd::SolveStatus::kOptimal);
  // Two singleton arms have zero spread and unequal means: the sentinel.
  CHECK(out.cost.total == kInf);
  CHECK(out.wall_time_s >= 0.0);
}

TEST_CASE("four singleton baselines split into 1+4 versus 2+3") {
  DesignProblem p;
  p.candidates = {Singletons(4)};
  p.cov = BaselineOnly({1.0, 2.0, 3.0, 4.0});

  asd::DesignAssignment exact = asd::SolveExact(p);
  CHECK(exact.cost.total == doctest::Approx(0.0));
  CHECK(exact.arms.arm == std::vector<Arm>{Arm::kTreatment, Arm::kControl,
                                           Arm::kControl, Arm::kTreatment});
  CHECK(exact.status == asd::SolveStatus::kOptimal);

  asd::DesignAssignment local = asd::SolveHeuristic(p);
  CHECK(local.cost.total == doctest::Approx(0.0));
  CHECK(local.status == asd::SolveStatus::kLocalOptimum);
  CHECK(local.arms.arm[0] == Arm::kTreatment);
}

TEST_CASE("exact matches brute force on a 12-supergeo instance with modifiers") {
  asd::Rng rng(901);
  RandomInstance inst = MakeRandomInstance(rng, 30, 12, 2);
  DesignProblem p;
  p.candidates = {inst.partition};
  p.cov = inst.cov;
  asd::DesignAssignment out = asd::SolveExact(p);
  double oracle = BruteForceCost(inst.partition, inst.cov);
  CHECK(out.cost.total == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(out.status == asd::SolveStatus::kOptimal);
}

TEST_CASE("exact matches brute force across sizes, rules, and modifiers") {
  double worst_ratio = 1.0;
  double ratio_sum = 0.0;
  int ratio_count = 0;
  for (int m = 2; m <= 14; ++m) {
    asd::Rng rng(7000 + static_cast<std::uint64_t>(m));
    int n_geos = m + static_cast<int>(rng.below(12));
    int n_mod = m % 3;
    RandomInstance inst = MakeRandomInstance(rng, n_geos, m, n_mod);
    std::optional<int> cb;
    if (m % 4 == 0) cb = 1;
    CAPTURE(m);

    DesignProblem p;
    p.candidates = {inst.partition};
    p.cov = inst.cov;
    p.count_balance = cb;
    asd::DesignAssignment exact = asd::SolveExact(p);
    double oracle = BruteForceCost(inst.partition, inst.cov, cb);
    if (std::isfinite(oracle)) {
      CHECK(exact.cost.total ==
            doctest::Approx(oracle).epsilon(1e-12).scale(1.0));
    } else {
      CHECK(exact.cost.total == oracle);
    }
    CHECK(exact.arms.arm[0] == Arm::kTreatment);

    asd::DesignAssignment local = asd::SolveHeuristic(p);
    CHECK(local.cost.total >= exact.cost.total - 1e-12);
    CHECK(local.arms.arm[0] == Arm::kTreatment);
    if (std::isfinite(local.cost.total) && exact.cost.total > 0.0 &&
        std::isfinite(exact.cost.total)) {
      double ratio = local.cost.total / exact.cost.total;
      worst_ratio = std::max(worst_ratio, ratio);
      ratio_sum += ratio;
      ++ratio_count;
    }
  }
  if (ratio_count > 0) {
    MESSAGE("heuristic/exact cost ratio: mean ",
            ratio_sum / static_cast<double>(ratio_count), ", worst ",
            worst_ratio, " over ", ratio_count, " instances");
  }
}

TEST_CASE("count-balance cap and per-arm floor restrict the search") {
  asd::Rng rng(112);
  RandomInstance inst = MakeRandomInstance(rng, 18, 6, 1);
  DesignProblem p;
  p.candidates = {inst.partition};
  p.cov = inst.cov;

  SUBCASE("equal arm counts forced") {
    p.count_balance = 0;
    asd::DesignAssignment out = asd::SolveExact(p);
    int n_t = 0;
    for (Arm a : out.arms.arm)
      if (a == Arm::kTreatment) ++n_t;
    CHECK(n_t == 3);
    CHECK(out.cost.total ==
          doctest::Approx(BruteForceCost(inst.partition, inst.cov, 0))
              .epsilon(1e-12));
  }

  SUBCASE("arm floor of two") {
    p.min_supergeos_per_arm = 2;
    asd::DesignAssignment out = asd::SolveExact(p);
    int n_t = 0;
    for (Arm a : out.arms.arm)
      if (a == Arm::kTreatment) ++n_t;
    CHECK(n_t >= 2);
    CHECK(out.arms.arm.size() - static_cast<size_t>(n_t) >= 2);
    CHECK(out.cost.total ==
          doctest::Approx(
              BruteForceCost(inst.partition, inst.cov, std::nullopt, 2))
              .epsilon(1e-12));
  }
}

TEST_CASE("reported cost survives an independent recomputation") {
  asd::Rng rng(445);
  RandomInstance inst = MakeRandomInstance(rng, 24, 10, 2);
  DesignProblem p;
  p.candidates = {inst.partition};
  p.cov = inst.cov;
  for (bool exact : {true, false}) {
    asd::DesignAssignment out =
        exact ? asd::SolveExact(p) : asd::SolveHeuristic(p);
    double recomputed =
        asd::DesignCost(inst.partition, out.arms, inst.cov).total;
    CHECK(std::fabs(out.cost.total - recomputed) <= 1e-12);
  }
}

TEST_CASE("solvers are deterministic") {
  asd::Rng rng(63);
  RandomInstance inst = MakeRandomInstance(rng, 40, 13, 2);
  DesignProblem p;
  p.candidates = {inst.partition};
  p.cov = inst.cov;
  p.seed = 17;
  asd::DesignAssignment a = asd::SolveExact(p);
  asd::DesignAssignment b = asd::SolveExact(p);
  CHECK(a.arms.arm == b.arms.arm);
  CHECK(a.candidate_index == b.candidate_index);
  asd::DesignAssignment c = asd::SolveHeuristic(p);
  asd::DesignAssignment d = asd::SolveHeuristic(p);
  CHECK(c.arms.arm == d.arms.arm);
}

TEST_CASE("auto mode picks exact for small and heuristic for large instances") {
  asd::Rng rng(88);
  RandomInstance small = MakeRandomInstance(rng, 30, 12, 0);
  DesignProblem p;
  p.candidates = {small.partition};
  p.cov = small.cov;
  asd::DesignAssignment via_auto = asd::Solve(p);
  CHECK(via_auto.status == asd::SolveStatus::kOptimal);
  CHECK(via_auto.cost.total ==
        doctest::Approx(asd::SolveExact(p).cost.total).epsilon(1e-12));

  RandomInstance large = MakeRandomInstance(rng, 60, 26, 0);
  DesignProblem q;
  q.candidates = {large.partition};
  q.cov = large.cov;
  CHECK(asd::Solve(q).status == asd::SolveStatus::kLocalOptimum);
}

TEST_CASE("the better of two candidates wins and bad ones are pruned") {
  // Candidate 0 balances perfectly; candidate 1 has one dominating supergeo
  // whose best split is still badly imbalanced.
  CandidatePartition good = Singletons(6);
  CandidatePartition lopsided;
  lopsided.supergeos = {{0, 1, 2}, {3}, {4}, {5}};
  DesignProblem p;
  p.candidates = {lopsided, good};
  p.cov = BaselineOnly({100.0, 101.0, 102.0, 1.0, 2.0, 3.0});
  asd::DesignAssignment out = asd::SolveExact(p);
  double best = std::min(BruteForceCost(lopsided, p.cov),
                         BruteForceCost(good, p.cov));
  CHECK(out.cost.total == doctest::Approx(best).epsilon(1e-12));
  CHECK(out.candidate_index == 1);

  // Identical candidates: ties resolve to the first.
  DesignProblem tie;
  tie.candidates = {good, good};
  tie.cov = p.cov;
  CHECK(asd::SolveExact(tie).candidate_index == 0);
}

TEST_CASE("candidates without a feasible split are skipped or rejected") {
  CandidatePartition whole;
  whole.supergeos = {{0, 1, 2, 3}};
  whole.source_cut = "k=1";
  DesignProblem p;
  p.candidates = {whole};
  p.cov = BaselineOnly({1.0, 2.0, 3.0, 4.0});
  CHECK_THROWS_AS(asd::SolveExact(p), asd::InfeasibleError);
  CHECK_THROWS_AS(asd::SolveHeuristic(p), asd::InfeasibleError);

  DesignProblem mixed;
  mixed.candidates = {whole, Singletons(4)};
  mixed.cov = p.cov;
  asd::DesignAssignment out = asd::SolveExact(mixed);
  CHECK(out.candidate_index == 1);
  CHECK(out.cost.total == doctest::Approx(0.0));
}

TEST_CASE("an expired budget still returns the best assignment found") {
  asd::Rng rng(3141);
  RandomInstance inst = MakeRandomInstance(rng, 24, 24, 1);
  DesignProblem p;
  p.candidates = {inst.partition};
  p.cov = inst.cov;
  p.time_limit_s = 1e-6;
  asd::DesignAssignment out = asd::SolveExact(p);
  CHECK(out.status == asd::SolveStatus::kFeasibleTimeout);
  CHECK(out.arms.arm.size() == 24);
  CHECK(out.arms.arm[0] == Arm::kTreatment);
}

TEST_CASE("invalid problems are rejected up front") {
  DesignProblem p;
  p.cov = BaselineOnly({1.0, 2.0});
  CHECK_THROWS_AS(asd::Solve(p), asd::ParamError);  // no candidates

  p.candidates = {Singletons(2)};
  p.time_limit_s = 0.0;
  CHECK_THROWS_AS(asd::Solve(p), asd::ParamError);

  p.time_limit_s = 30.0;
  p.count_balance = -1;
  CHECK_THROWS_AS(asd::Solve(p), asd::ParamError);
}

}  // TEST_SUITE("partition")
