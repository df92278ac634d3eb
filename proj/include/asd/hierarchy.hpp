#ifndef ASD_HIERARCHY_HPP_
#define ASD_HIERARCHY_HPP_

#include <cstdint>
#include <vector>

#include "asd/balance.hpp"
#include "asd/data.hpp"

namespace asd {

// Agglomerative merge tree. Leaves are clusters 0..n-1; the k-th merge
// creates cluster n+k. Heights are the increase in total within-cluster sum
// of squares at each merge, so they are non-decreasing for Ward linkage.
struct Dendrogram {
  struct Merge {
    int a = 0;        // smaller cluster id
    int b = 0;        // larger cluster id
    double height = 0.0;
    int size = 0;     // members of the resulting cluster
  };
  int n_leaves = 0;
  std::vector<Merge> merges;  // n_leaves - 1 entries
};

// Ward-linkage hierarchical clustering of embedding rows. Deterministic:
// distance ties are broken by the smallest (then second-smallest) cluster id.
// Throws ParamError for fewer than 2 rows or non-finite entries.
Dendrogram WardHac(const Matrix& embeddings);

// Cuts the tree at each requested cluster count. Level k yields exactly k
// supergeos, each listed in ascending geo order, supergeos ordered by their
// smallest member. Throws ParamError for levels outside [1, n_leaves].
std::vector<CandidatePartition> CutDendrogram(const Dendrogram& dendrogram,
                                              const std::vector<int>& levels);

// Up to m distinct cluster counts geometrically spaced between
// max(2, n/20) and n/2, rounded, deduplicated, ascending.
std::vector<int> DefaultCandidateLevels(int n_geos, int m);

// Planted-community random graph configuration.
struct SbmConfig {
  int communities = 4;
  int nodes_per_community = 25;
  double rho_in = 0.5;    // within-community edge probability
  double rho_out = 0.05;  // cross-community edge probability
  std::uint64_t seed = 0;
};

struct SbmGraph {
  GeoGraph graph;           // unit edge weights
  std::vector<int> labels;  // true community per node
};

// Bernoulli edges: probability rho_in within a community, rho_out across.
// Throws ParamError unless 0 <= rho_out < rho_in <= 1.
SbmGraph GenerateSbmGraph(const SbmConfig& cfg);

// Adjusted Rand index between two labelings of the same items; 1 for
// identical partitions, ~0 for independent ones.
double AdjustedRandIndex(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace asd

#endif  // ASD_HIERARCHY_HPP_
