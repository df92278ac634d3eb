#include "asd/balance.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "asd/errors.hpp"
#include "doctest.h"

namespace {

using asd::Aggregation;
using asd::Arm;
using asd::ArmAssignment;
using asd::CandidatePartition;
using asd::Covariate;
using asd::CovariateSet;

CandidatePartition Singletons(int n) {
  CandidatePartition p;
  for (int i = 0; i < n; ++i) p.supergeos.push_back({i});
  p.source_cut = "singletons";
  return p;
}

}  // namespace

TEST_SUITE("balance") {

TEST_CASE("partition validation accepts a disjoint cover") {
  CandidatePartition p;
  p.supergeos = {{0, 2}, {1}, {3}};
  CHECK_NOTHROW(asd::ValidatePartition(p, 4));
}

TEST_CASE("partition validation rejects overlap, gaps, and empties") {
  CandidatePartition overlap;
  overlap.supergeos = {{0, 1}, {1, 2}};
  CHECK_THROWS_AS(asd::ValidatePartition(overlap, 3), asd::ParamError);

  CandidatePartition gap;
  gap.supergeos = {{0}, {2}};
  CHECK_THROWS_AS(asd::ValidatePartition(gap, 3), asd::ParamError);

  CandidatePartition empty_sg;
  empty_sg.supergeos = {{0, 1, 2}, {}};
  CHECK_THROWS_AS(asd::ValidatePartition(empty_sg, 3), asd::ParamError);
}

TEST_CASE("supergeo aggregation: passthrough, sums, weighted means") {
  CandidatePartition p;
  p.supergeos = {{0}, {1, 2}};
  std::vector<double> values = {7.0, 10.0, 20.0};
  std::vector<double> weights = {5.0, 1.0, 3.0};

  auto sums = asd::SupergeoCovariate(p, values, Aggregation::kExtensiveSum, weights);
  CHECK(sums[0] == doctest::Approx(7.0));
  CHECK(sums[1] == doctest::Approx(30.0));

  auto means =
      asd::SupergeoCovariate(p, values, Aggregation::kIntensiveWeightedMean, weights);
  CHECK(means[0] == doctest::Approx(7.0));
  // (1*10 + 3*20) / 4
  CHECK(means[1] == doctest::Approx(17.5));
}

TEST_CASE("intensive aggregation with zero total weight fails") {
  CandidatePartition p;
  p.supergeos = {{0, 1}};
  std::vector<double> values = {1.0, 2.0};
  std::vector<double> weights = {0.0, 0.0};
  CHECK_THROWS_AS(
      asd::SupergeoCovariate(p, values, Aggregation::kIntensiveWeightedMean, weights),
      asd::AggregationError);
}

TEST_CASE("smd matches the hand-computed two-by-two fixture") {
  // means 1 and 2, both sds sqrt(2) -> -1 / sqrt(2)
  double v = asd::Smd({0.0, 2.0}, {1.0, 3.0});
  CHECK(v == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("smd of identical groups is zero") {
  CHECK(asd::Smd({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
}

TEST_CASE("smd is antisymmetric") {
  std::vector<double> a = {0.3, 1.9, 4.2, 0.4};
  std::vector<double> b = {1.1, 2.0, 0.7};
  CHECK(asd::Smd(a, b) == doctest::Approx(-asd::Smd(b, a)).epsilon(1e-12));
}

TEST_CASE("smd is invariant under positive affine maps") {
  std::vector<double> a = {0.5, 2.5, 3.0, 9.1};
  std::vector<double> b = {1.5, 0.25, 4.0};
  double base = asd::Smd(a, b);
  for (double& x : a) x = 3.7 * x + 11.0;
  for (double& x : b) x = 3.7 * x + 11.0;
  CHECK(asd::Smd(a, b) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("smd degenerate spread: equal means give 0, unequal give infinity") {
  CHECK(asd::Smd({2.0, 2.0}, {2.0, 2.0}) == doctest::Approx(0.0));
  double up = asd::Smd({3.0, 3.0}, {2.0, 2.0});
  CHECK(std::isinf(up));
  CHECK(up > 0.0);
  double down = asd::Smd({2.0}, {5.0});
  CHECK(std::isinf(down));
  CHECK(down < 0.0);
}

TEST_CASE("smd rejects empty groups") {
  CHECK_THROWS_AS(asd::Smd({}, {1.0}), asd::ParamError);
}

TEST_CASE("design cost on the four-singleton fixture is zero for the 1-4 vs 2-3 split") {
  CandidatePartition p = Singletons(4);
  CovariateSet cov;
  cov.baseline = {1.0, 2.0, 3.0, 4.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kControl, Arm::kControl, Arm::kTreatment};
  auto cost = asd::DesignCost(p, arms, cov);
  CHECK(cost.total == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cost.terms.size() == 1);
}

TEST_CASE("design cost with zero lambdas reduces to the baseline term") {
  CandidatePartition p = Singletons(6);
  CovariateSet cov;
  cov.baseline = {5.0, 1.0, 4.0, 2.0, 6.0, 3.0};
  Covariate mod;
  mod.name = "spend";
  mod.values = {0.5, 0.1, 0.9, 0.2, 0.7, 0.3};
  cov.modifiers = {mod};
  cov.lambdas = {0.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kTreatment, Arm::kTreatment,
              Arm::kControl, Arm::kControl, Arm::kControl};
  auto cost = asd::DesignCost(p, arms, cov);
  std::vector<double> t = {5.0, 1.0, 4.0};
  std::vector<double> c = {2.0, 6.0, 3.0};
  CHECK(cost.total == doctest::Approx(std::fabs(asd::Smd(t, c))).epsilon(1e-12));
  CHECK(cost.terms.size() == 2);
  CHECK(cost.terms[1].contribution == doctest::Approx(0.0));
}

TEST_CASE("design cost breakdown sums to the total and weights modifiers") {
  CandidatePartition p = Singletons(6);
  CovariateSet cov;
  cov.baseline = {5.0, 1.0, 4.0, 2.0, 6.0, 3.3};
  Covariate m1{"spend", {0.5, 0.1, 0.9, 0.2, 0.7, 0.3}, Aggregation::kExtensiveSum};
  Covariate m2{"density", {1.5, 2.1, 0.9, 1.2, 0.7, 1.3},
               Aggregation::kIntensiveWeightedMean};
  cov.modifiers = {m1, m2};
  cov.lambdas = {0.5, 0.25};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kControl, Arm::kTreatment,
              Arm::kControl, Arm::kTreatment, Arm::kControl};
  auto cost = asd::DesignCost(p, arms, cov);
  double acc = 0.0;
  for (const auto& term : cost.terms) acc += term.contribution;
  CHECK(cost.total == doctest::Approx(acc).epsilon(1e-12));
  CHECK(cost.terms[1].contribution ==
        doctest::Approx(0.5 * std::fabs(cost.terms[1].smd)));
}

TEST_CASE("design cost is invariant under swapping arm labels") {
  CandidatePartition p = Singletons(5);
  CovariateSet cov;
  cov.baseline = {5.0, 1.0, 4.0, 2.0, 6.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kControl, Arm::kTreatment, Arm::kControl,
              Arm::kControl};
  ArmAssignment flipped;
  for (Arm a : arms.arm)
    flipped.arm.push_back(a == Arm::kTreatment ? Arm::kControl : Arm::kTreatment);
  CHECK(asd::DesignCost(p, arms, cov).total ==
        doctest::Approx(asd::DesignCost(p, flipped, cov).total).epsilon(1e-12));
}

TEST_CASE("design cost requires both arms populated") {
  CandidatePartition p = Singletons(3);
  CovariateSet cov;
  cov.baseline = {1.0, 2.0, 3.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kTreatment, Arm::kTreatment};
  CHECK_THROWS_AS(asd::DesignCost(p, arms, cov), asd::ParamError);
}

TEST_CASE("masmd averages absolute modifier smds and needs a modifier") {
  CandidatePartition p = Singletons(4);
  CovariateSet cov;
  cov.baseline = {1.0, 2.0, 3.0, 4.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kControl, Arm::kTreatment, Arm::kControl};

  CHECK_THROWS_AS(asd::Masmd(p, arms, cov), asd::ParamError);

  Covariate m1{"a", {2.0, 1.0, 4.0, 3.0}, Aggregation::kExtensiveSum};
  Covariate m2{"b", {0.1, 0.4, 0.2, 0.3}, Aggregation::kExtensiveSum};
  cov.modifiers = {m1, m2};
  cov.lambdas = {0.5, 0.5};
  double expect = 0.5 * (std::fabs(asd::Smd({2.0, 4.0}, {1.0, 3.0})) +
                         std::fabs(asd::Smd({0.1, 0.2}, {0.4, 0.3})));
  CHECK(asd::Masmd(p, arms, cov) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("masmd of a perfectly mirrored design is zero") {
  CandidatePartition p = Singletons(4);
  CovariateSet cov;
  cov.baseline = {1.0, 1.0, 1.0, 1.0};
  Covariate m{"a", {2.0, 3.0, 2.0, 3.0}, Aggregation::kExtensiveSum};
  cov.modifiers = {m};
  cov.lambdas = {1.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kTreatment, Arm::kControl, Arm::kControl};
  CHECK(asd::Masmd(p, arms, cov) == doctest::Approx(0.0));
}

TEST_CASE("arm revenue gap is the absolute treatment-control total difference") {
  CandidatePartition p;
  p.supergeos = {{0, 1}, {2}, {3}};
  std::vector<double> base = {10.0, 5.0, 12.0, 2.0};
  ArmAssignment arms;
  arms.arm = {Arm::kTreatment, Arm::kControl, Arm::kControl};
  // T total 15, C total 14
  CHECK(asd::ArmRevenueGap(p, arms, base) == doctest::Approx(1.0));
}

TEST_CASE("covariate set validation catches shape errors") {
  CovariateSet cov;
  cov.baseline = {1.0, 2.0};
  CHECK_NOTHROW(asd::ValidateCovariateSet(cov, 2));
  CHECK_THROWS_AS(asd::ValidateCovariateSet(cov, 3), asd::ParamError);

  Covariate m{"a", {1.0, 2.0}, Aggregation::kExtensiveSum};
  cov.modifiers = {m};
  cov.lambdas = {-0.5};
  CHECK_THROWS_AS(asd::ValidateCovariateSet(cov, 2), asd::ParamError);
  cov.lambdas = {0.5};
  CHECK_NOTHROW(asd::ValidateCovariateSet(cov, 2));

  cov.modifiers.push_back(m);
  cov.lambdas = {0.5, 0.5};
  CHECK_THROWS_AS(asd::ValidateCovariateSet(cov, 2), asd::ParamError);
}

}  // TEST_SUITE("balance")
