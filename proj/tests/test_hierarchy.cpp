#include "asd/hierarchy.hpp"

#include <cmath>
#include <vector>

#include "asd/errors.hpp"
#include "doctest.h"

namespace {

// Reference merge list for the 8-point fixture below, computed with an
// independent Ward implementation. Heights here are sum-of-squares
// increases (the reference reported sqrt(2 * increase), converted once).
struct RefMerge {
  int a, b;
  double height;
  int size;
};

const double kFixture[8][2] = {
    {2.041, -2.556}, {0.418, -0.568}, {-0.453, -0.216}, {-2.02, -0.232},
    {-0.865, 3.323}, {0.226, -0.353}, {-0.281, -0.668}, {-1.055, -0.391},
};

const RefMerge kRef[7] = {
    {1, 5, 0.04154449999999999, 2},   {2, 6, 0.11694400000000005, 2},
    {7, 9, 0.31729666666666656, 3},   {8, 10, 1.0135156333333333, 5},
    {3, 11, 2.7088440333333335, 6},   {0, 12, 9.62179488095238, 7},
    {4, 13, 14.680264035714288, 8},
};

asd::Matrix FixtureMatrix() {
  asd::Matrix m(8, 2);
  for (int i = 0; i < 8; ++i) {
    m(i, 0) = kFixture[i][0];
    m(i, 1) = kFixture[i][1];
  }
  return m;
}

}  // namespace

TEST_SUITE("hierarchy") {

TEST_CASE("two points merge at half their squared distance") {
  asd::Matrix m(2, 2);
  m << 0.0, 0.0, 3.0, 4.0;
  asd::Dendrogram d = asd::WardHac(m);
  REQUIRE(d.merges.size() == 1);
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[0].height == doctest::Approx(12.5).epsilon(1e-12));
  CHECK(d.merges[0].size == 2);
}

TEST_CASE("two tight far-apart pairs merge pairs first") {
  asd::Matrix m(4, 1);
  m << 0.0, 1.0, 100.0, 101.0;
  asd::Dendrogram d = asd::WardHac(m);
  REQUIRE(d.merges.size() == 3);
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[1].a == 2);
  CHECK(d.merges[1].b == 3);
  CHECK(d.merges[2].height > 100.0 * d.merges[1].height);
}

TEST_CASE("duplicate points produce a zero-height first merge") {
  asd::Matrix m(3, 2);
  m << 1.0, 2.0, 1.0, 2.0, 5.0, 5.0;
  asd::Dendrogram d = asd::WardHac(m);
  CHECK(d.merges[0].height == doctest::Approx(0.0));
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
}

TEST_CASE("merge list matches the independent reference on the 8-point fixture") {
  asd::Dendrogram d = asd::WardHac(FixtureMatrix());
  REQUIRE(d.merges.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CAPTURE(i);
    CHECK(d.merges[static_cast<size_t>(i)].a == kRef[i].a);
    CHECK(d.merges[static_cast<size_t>(i)].b == kRef[i].b);
    CHECK(d.merges[static_cast<size_t>(i)].height ==
          doctest::Approx(kRef[i].height).epsilon(1e-9));
    CHECK(d.merges[static_cast<size_t>(i)].size == kRef[i].size);
  }
}

TEST_CASE("merge heights are monotone non-decreasing") {
  asd::Matrix m(40, 3);
  std::uint64_t state = 99;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      m(i, j) = static_cast<double>(state >> 11) * 0x1.0p-53 * 10.0 - 5.0;
    }
  asd::Dendrogram d = asd::WardHac(m);
  for (size_t i = 1; i < d.merges.size(); ++i)
    CHECK(d.merges[i].height >= d.merges[i - 1].height - 1e-9);
}

TEST_CASE("clustering rejects tiny or non-finite input") {
  asd::Matrix one(1, 2);
  one << 0.0, 0.0;
  CHECK_THROWS_AS(asd::WardHac(one), asd::ParamError);
  asd::Matrix bad(3, 1);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN(), 1.0;
  CHECK_THROWS_AS(asd::WardHac(bad), asd::ParamError);
}

TEST_CASE("finest cut yields singletons, coarsest yields one supergeo") {
  asd::Dendrogram d = asd::WardHac(FixtureMatrix());
  auto parts = asd::CutDendrogram(d, {8, 1});
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].num_supergeos() == 8);
  for (int s = 0; s < 8; ++s) {
    CHECK(parts[0].supergeos[static_cast<size_t>(s)].size() == 1);
    CHECK(parts[0].supergeos[static_cast<size_t>(s)][0] == s);
  }
  CHECK(parts[1].num_supergeos() == 1);
  CHECK(parts[1].supergeos[0].size() == 8);
}

TEST_CASE("cut at two recovers planted clusters") {
  asd::Matrix m(6, 1);
  m << 0.0, 0.4, 0.8, 100.0, 100.3, 100.9;
  asd::Dendrogram d = asd::WardHac(m);
  auto parts = asd::CutDendrogram(d, {2});
  REQUIRE(parts[0].num_supergeos() == 2);
  CHECK(parts[0].supergeos[0] == std::vector<int>{0, 1, 2});
  CHECK(parts[0].supergeos[1] == std::vector<int>{3, 4, 5});
}

TEST_CASE("every cut level yields exactly that many supergeos") {
  asd::Dendrogram d = asd::WardHac(FixtureMatrix());
  for (int k = 1; k <= 8; ++k) {
    auto parts = asd::CutDendrogram(d, {k});
    CHECK(parts[0].num_supergeos() == k);
  }
}

TEST_CASE("out-of-range cut level is rejected") {
  asd::Dendrogram d = asd::WardHac(FixtureMatrix());
  CHECK_THROWS_AS(asd::CutDendrogram(d, {0}), asd::ParamError);
  CHECK_THROWS_AS(asd::CutDendrogram(d, {9}), asd::ParamError);
}

TEST_CASE("default level schedule stays inside its range") {
  auto levels = asd::DefaultCandidateLevels(200, 100);
  CHECK(levels.size() <= 100);
  CHECK(levels.front() >= 10);
  CHECK(levels.back() <= 100);
  for (size_t i = 1; i < levels.size(); ++i) CHECK(levels[i] > levels[i - 1]);

  auto small = asd::DefaultCandidateLevels(8, 3);
  for (int k : small) {
    CHECK(k >= 2);
    CHECK(k <= 4);
  }

  auto single = asd::DefaultCandidateLevels(100, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0] >= 5);
  CHECK(single[0] <= 50);
}

TEST_CASE("level schedule validates its arguments") {
  CHECK_THROWS_AS(asd::DefaultCandidateLevels(3, 5), asd::ParamError);
  CHECK_THROWS_AS(asd::DefaultCandidateLevels(100, 0), asd::ParamError);
}

TEST_CASE("extreme block model is a union of cliques") {
  asd::SbmConfig cfg;
  cfg.communities = 3;
  cfg.nodes_per_community = 4;
  cfg.rho_in = 1.0;
  cfg.rho_out = 0.0;
  cfg.seed = 5;
  asd::SbmGraph sbm = asd::GenerateSbmGraph(cfg);
  CHECK(sbm.graph.n == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(sbm.graph.degree(i) == 3);
    for (const auto& [j, w] : sbm.graph.neighbors[static_cast<size_t>(i)]) {
      CHECK(sbm.labels[static_cast<size_t>(i)] == sbm.labels[static_cast<size_t>(j)]);
      CHECK(w == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("equal edge probabilities are rejected") {
  asd::SbmConfig cfg;
  cfg.rho_in = 0.3;
  cfg.rho_out = 0.3;
  CHECK_THROWS_AS(asd::GenerateSbmGraph(cfg), asd::ParamError);
}

TEST_CASE("block-model degrees match their binomial expectations") {
  // 4 communities x 25 nodes, rho_in 0.5, rho_out 0.05: expected within
  // degree 12, cross degree 3.75. Sample means over 20 seeds within 25%.
  double within_total = 0.0, cross_total = 0.0;
  int nodes_total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    asd::SbmConfig cfg;
    cfg.communities = 4;
    cfg.nodes_per_community = 25;
    cfg.rho_in = 0.5;
    cfg.rho_out = 0.05;
    cfg.seed = seed;
    asd::SbmGraph sbm = asd::GenerateSbmGraph(cfg);
    for (int i = 0; i < sbm.graph.n; ++i) {
      for (const auto& [j, w] : sbm.graph.neighbors[static_cast<size_t>(i)]) {
        if (sbm.labels[static_cast<size_t>(i)] == sbm.labels[static_cast<size_t>(j)])
          within_total += 1.0;
        else
          cross_total += 1.0;
      }
      ++nodes_total;
    }
  }
  double mean_within = within_total / nodes_total;
  double mean_cross = cross_total / nodes_total;
  CHECK(mean_within > 12.0 * 0.75);
  CHECK(mean_within < 12.0 * 1.25);
  CHECK(mean_cross > 3.75 * 0.75);
  CHECK(mean_cross < 3.75 * 1.25);
}

TEST_CASE("block model is deterministic per seed") {
  asd::SbmConfig cfg;
  cfg.seed = 77;
  asd::SbmGraph a = asd::GenerateSbmGraph(cfg);
  asd::SbmGraph b = asd::GenerateSbmGraph(cfg);
  REQUIRE(a.graph.n == b.graph.n);
  for (int i = 0; i < a.graph.n; ++i)
    CHECK(a.graph.neighbors[static_cast<size_t>(i)] ==
          b.graph.neighbors[static_cast<size_t>(i)]);
}

TEST_CASE("rand index: identical and relabeled partitions score one") {
  std::vector<int> a = {0, 0, 1, 1, 2};
  CHECK(asd::AdjustedRandIndex(a, a) == doctest::Approx(1.0));
  std::vector<int> b = {7, 7, 3, 3, 9};
  CHECK(asd::AdjustedRandIndex(a, b) == doctest::Approx(1.0));
}

TEST_CASE("rand index matches the reference value on a mixed fixture") {
  std::vector<int> a = {0, 0, 1, 1, 2, 2, 2, 0, 1, 2};
  std::vector<int> b = {1, 1, 0, 0, 2, 2, 0, 1, 2, 2};
  CHECK(asd::AdjustedRandIndex(a, b) ==
        doctest::Approx(0.4318181818181818).epsilon(1e-12));
}

TEST_CASE("rand index of a split against a merge is below one") {
  std::vector<int> fine = {0, 1, 2, 3};
  std::vector<int> coarse = {0, 0, 1, 1};
  CHECK(asd::AdjustedRandIndex(fine, coarse) < 1.0);
}

}  // TEST_SUITE("hierarchy")
