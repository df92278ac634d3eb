#include "asd/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "asd/errors.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Candidate merge under the deterministic order: distance first, then the
// smaller cluster-id pair.
struct Best {
  double d2 = kInf;
  int id_lo = -1, id_hi = -1;
  int slot_a = -1, slot_b = -1;

  bool Beats(const Best& o) const {
    if (d2 != o.d2) return d2 < o.d2;
    if (id_lo != o.id_lo) return id_lo < o.id_lo;
    return id_hi < o.id_hi;
  }
};

}  // namespace

Dendrogram WardHac(const Matrix& embeddings) {
  int n = static_cast<int>(embeddings.rows());
  if (n < 2) throw ParamError("clustering needs at least 2 rows");
  if (!embeddings.allFinite())
    throw ParamError("embeddings contain non-finite values");

  // Slot-compacted working state. dist2(i, j) holds 2x the within-cluster
  // variance increase of merging the clusters in slots i and j, which for
  // singletons is the squared Euclidean distance.
  std::vector<int> id(static_cast<size_t>(n));
  std::iota(id.begin(), id.end(), 0);
  std::vector<int> size(static_cast<size_t>(n), 1);
  std::vector<char> active(static_cast<size_t>(n), 1);
  Matrix dist2(n, n);
  for (int i = 0; i < n; ++i) {
    dist2(i, i) = kInf;
    for (int j = i + 1; j < n; ++j) {
      double d = (embeddings.row(i) - embeddings.row(j)).squaredNorm();
      dist2(i, j) = d;
      dist2(j, i) = d;
    }
  }

  // Per-slot cached best partner, kept exact under merges.
  std::vector<Best> nn(static_cast<size_t>(n));
  auto recompute_nn = [&](int i) {
    Best best;
    for (int j = 0; j < n; ++j) {
      if (j == i || !active[static_cast<size_t>(j)]) continue;
      Best cand;
      cand.d2 = dist2(i, j);
      cand.id_lo = std::min(id[static_cast<size_t>(i)], id[static_cast<size_t>(j)]);
      cand.id_hi = std::max(id[static_cast<size_t>(i)], id[static_cast<size_t>(j)]);
      cand.slot_a = i;
      cand.slot_b = j;
      if (cand.Beats(best)) best = cand;
    }
    nn[static_cast<size_t>(i)] = best;
  };
  for (int i = 0; i < n; ++i) recompute_nn(i);

  Dendrogram out;
  out.n_leaves = n;
  out.merges.reserve(static_cast<size_t>(n - 1));

  for (int step = 0; step < n - 1; ++step) {
    Best best;
    for (int i = 0; i < n; ++i)
      if (active[static_cast<size_t>(i)] && nn[static_cast<size_t>(i)].Beats(best))
        best = nn[static_cast<size_t>(i)];

    int sa = best.slot_a, sb = best.slot_b;
    int na = size[static_cast<size_t>(sa)], nb = size[static_cast<size_t>(sb)];
    Dendrogram::Merge merge;
    merge.a = best.id_lo;
    merge.b = best.id_hi;
    merge.height = 0.5 * best.d2;
    merge.size = na + nb;
    out.merges.push_back(merge);

    // Lance-Williams update for Ward: the merged cluster lands in slot sa.
    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<size_t>(k)] || k == sa || k == sb) continue;
      int nk = size[static_cast<size_t>(k)];
      double d = ((na + nk) * dist2(sa, k) + (nb + nk) * dist2(sb, k) -
                  nk * best.d2) /
                 static_cast<double>(na + nb + nk);
      dist2(sa, k) = d;
      dist2(k, sa) = d;
    }
    active[static_cast<size_t>(sb)] = 0;
    size[static_cast<size_t>(sa)] = na + nb;
    id[static_cast<size_t>(sa)] = n + step;

    // Refresh caches: the new cluster from scratch; other slots only if
    // their cached partner vanished or the new cluster is now closer.
    recompute_nn(sa);
    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<size_t>(k)] || k == sa) continue;
      Best& cached = nn[static_cast<size_t>(k)];
      if (cached.slot_b == sa || cached.slot_b == sb) {
        recompute_nn(k);
      } else {
        Best cand;
        cand.d2 = dist2(k, sa);
        cand.id_lo = std::min(id[static_cast<size_t>(k)], id[static_cast<size_t>(sa)]);
        cand.id_hi = std::max(id[static_cast<size_t>(k)], id[static_cast<size_t>(sa)]);
        cand.slot_a = k;
        cand.slot_b = sa;
        if (cand.Beats(cached)) cached = cand;
      }
    }
  }
  return out;
}

std::vector<CandidatePartition> CutDendrogram(const Dendrogram& dendrogram,
                                              const std::vector<int>& levels) {
  int n = dendrogram.n_leaves;
  for (int k : levels)
    if (k < 1 || k > n)
      throw ParamError("cut level " + std::to_string(k) +
                       " outside [1, " + std::to_string(n) + "]");

  std::vector<CandidatePartition> out;
  out.reserve(levels.size());
  for (int k : levels) {
    // Apply the first n-k merges through a union-find over cluster ids.
    std::vector<int> parent(static_cast<size_t>(2 * n - 1));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[static_cast<size_t>(x)] != x) {
        parent[static_cast<size_t>(x)] =
            parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
        x = parent[static_cast<size_t>(x)];
      }
      return x;
    };
    for (int m = 0; m < n - k; ++m) {
      const auto& merge = dendrogram.merges[static_cast<size_t>(m)];
      int root_a = find(merge.a);
      int root_b = find(merge.b);
      parent[static_cast<size_t>(root_a)] = n + m;
      parent[static_cast<size_t>(root_b)] = n + m;
    }

    // Group leaves by root, supergeos ordered by smallest member.
    std::vector<int> first_seen(static_cast<size_t>(2 * n - 1), -1);
    CandidatePartition part;
    part.source_cut = "k=" + std::to_string(k);
    for (int g = 0; g < n; ++g) {
      int root = find(g);
      if (first_seen[static_cast<size_t>(root)] < 0) {
        first_seen[static_cast<size_t>(root)] = part.num_supergeos();
        part.supergeos.emplace_back();
      }
      part.supergeos[static_cast<size_t>(first_seen[static_cast<size_t>(root)])]
          .push_back(g);
    }
    ValidatePartition(part, n);
    if (part.num_supergeos() != k)
      throw ParamError("cut produced " + std::to_string(part.num_supergeos()) +
                       " supergeos, expected " + std::to_string(k));
    out.push_back(std::move(part));
  }
  return out;
}

std::vector<int> DefaultCandidateLevels(int n_geos, int m) {
  if (n_geos < 4) throw ParamError("level schedule needs at least 4 geos");
  if (m < 1) throw ParamError("level count must be positive");
  double lo = std::max(2.0, n_geos / 20.0);
  double hi = std::max(lo, n_geos / 2.0);
  int lo_i = std::max(2, static_cast<int>(std::lround(lo)));
  int hi_i = std::max(lo_i, static_cast<int>(std::floor(hi + 1e-9)));

  std::vector<int> levels;
  if (m == 1) {
    levels.push_back(static_cast<int>(std::lround(std::sqrt(lo * hi))));
  } else {
    double log_lo = std::log(lo), log_hi = std::log(hi);
    for (int i = 0; i < m; ++i) {
      double x = std::exp(log_lo + (log_hi - log_lo) * i / (m - 1));
      levels.push_back(static_cast<int>(std::lround(x)));
    }
  }
  for (int& k : levels) k = std::clamp(k, lo_i, hi_i);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

SbmGraph GenerateSbmGraph(const SbmConfig& cfg) {
  if (cfg.communities < 1 || cfg.nodes_per_community < 1)
    throw ParamError("community counts must be positive");
  if (!(cfg.rho_out >= 0.0 && cfg.rho_out < cfg.rho_in && cfg.rho_in <= 1.0))
    throw ParamError("edge probabilities must satisfy 0 <= rho_out < rho_in <= 1");

  int n = cfg.communities * cfg.nodes_per_community;
  SbmGraph out;
  out.graph.n = n;
  out.graph.neighbors.assign(static_cast<size_t>(n), {});
  out.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.labels[static_cast<size_t>(i)] = i / cfg.nodes_per_community;

  Rng rng(cfg.seed);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double p = out.labels[static_cast<size_t>(i)] ==
                         out.labels[static_cast<size_t>(j)]
                     ? cfg.rho_in
                     : cfg.rho_out;
      if (rng.uniform() < p) {
        out.graph.neighbors[static_cast<size_t>(i)].emplace_back(j, 1.0);
        out.graph.neighbors[static_cast<size_t>(j)].emplace_back(i, 1.0);
      }
    }
  }
  return out;
}

double AdjustedRandIndex(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ParamError("labelings differ in length");
  if (a.empty()) throw ParamError("labelings are empty");
  size_t n = a.size();

  auto compact = [](const std::vector<int>& v) {
    std::vector<int> sorted(v);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> out(v.size());
    for (size_t i = 0; i < v.size(); ++i)
      out[i] = static_cast<int>(
          std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
    return std::pair{out, static_cast<int>(sorted.size())};
  };
  auto [la, ka] = compact(a);
  auto [lb, kb] = compact(b);

  std::vector<std::vector<long long>> table(
      static_cast<size_t>(ka), std::vector<long long>(static_cast<size_t>(kb), 0));
  for (size_t i = 0; i < n; ++i)
    table[static_cast<size_t>(la[i])][static_cast<size_t>(lb[i])]++;

  auto choose2 = [](long long x) { return 0.5 * x * (x - 1); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i) {
    long long row = 0;
    for (int j = 0; j < kb; ++j) {
      sum_ij += choose2(table[static_cast<size_t>(i)][static_cast<size_t>(j)]);
      row += table[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    sum_a += choose2(row);
  }
  for (int j = 0; j < kb; ++j) {
    long long col = 0;
    for (int i = 0; i < ka; ++i)
      col += table[static_cast<size_t>(i)][static_cast<size_t>(j)];
    sum_b += choose2(col);
  }
  double total = choose2(static_cast<long long>(n));
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace asd
