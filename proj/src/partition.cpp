#include "asd/partition.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "asd/errors.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

// Running first and second moments of one arm for one covariate.
struct ArmStats {
  double sum = 0.0;
  double sumsq = 0.0;
  int n = 0;
};

// Signed SMD from running moments; mirrors Smd() including the zero-spread
// sentinel so the final audit recomputation agrees with the search.
double StatsSmd(const ArmStats& a, const ArmStats& b) {
  double ma = a.sum / a.n;
  double mb = b.sum / b.n;
  double va =
      a.n > 1 ? std::max(0.0, (a.sumsq - a.sum * ma) / (a.n - 1)) : 0.0;
  double vb =
      b.n > 1 ? std::max(0.0, (b.sumsq - b.sum * mb) / (b.n - 1)) : 0.0;
  double pooled = std::sqrt(0.5 * (va + vb));
  double diff = ma - mb;
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return std::copysign(kInf, diff);
  }
  return diff / pooled;
}

// Supergeo-level covariate values for one candidate, covariate-major. Row 0
// is the baseline with implicit weight 1, rows 1.. are the modifiers.
struct Instance {
  std::vector<std::vector<double>> vals;
  std::vector<double> lambdas;
  int m = 0;
};

Instance BuildInstance(const CandidatePartition& cand, const CovariateSet& cov) {
  const std::vector<double>& w = cov.weights.empty() ? cov.baseline : cov.weights;
  Instance inst;
  inst.m = cand.num_supergeos();
  inst.vals.push_back(
      SupergeoCovariate(cand, cov.baseline, cov.baseline_aggregation, w));
  inst.lambdas.push_back(1.0);
  for (size_t k = 0; k < cov.modifiers.size(); ++k) {
    inst.vals.push_back(SupergeoCovariate(cand, cov.modifiers[k].values,
                                          cov.modifiers[k].aggregation, w));
    inst.lambdas.push_back(cov.lambdas[k]);
  }
  return inst;
}

// Full-assignment cost from per-covariate arm stats. Stops summing once the
// running total reaches cutoff; a returned value below cutoff is exact.
double StatsCost(const Instance& inst, const std::vector<ArmStats>& t,
                 const std::vector<ArmStats>& c, double cutoff) {
  double cost = 0.0;
  for (size_t r = 0; r < inst.lambdas.size(); ++r) {
    if (inst.lambdas[r] == 0.0) continue;
    cost += inst.lambdas[r] * std::fabs(StatsSmd(t[r], c[r]));
    if (cost >= cutoff) return cost;
  }
  return cost;
}

// Cost after a hypothetical adjustment: supergeo ids added to or removed from
// each arm (-1 means none). Covers single moves and swaps without copying the
// stats vectors.
double AdjustedCost(const Instance& inst, const std::vector<ArmStats>& t,
                    const std::vector<ArmStats>& c, int t_add, int t_rem,
                    int c_add, int c_rem) {
  double cost = 0.0;
  for (size_t r = 0; r < inst.lambdas.size(); ++r) {
    if (inst.lambdas[r] == 0.0) continue;
    const std::vector<double>& v = inst.vals[r];
    ArmStats ta = t[r];
    ArmStats ca = c[r];
    if (t_add >= 0) {
      double x = v[static_cast<size_t>(t_add)];
      ta.sum += x;
      ta.sumsq += x * x;
      ++ta.n;
    }
    if (t_rem >= 0) {
      double x = v[static_cast<size_t>(t_rem)];
      ta.sum -= x;
      ta.sumsq -= x * x;
      --ta.n;
    }
    if (c_add >= 0) {
      double x = v[static_cast<size_t>(c_add)];
      ca.sum += x;
      ca.sumsq += x * x;
      ++ca.n;
    }
    if (c_rem >= 0) {
      double x = v[static_cast<size_t>(c_rem)];
      ca.sum -= x;
      ca.sumsq -= x * x;
      --ca.n;
    }
    cost += inst.lambdas[r] * std::fabs(StatsSmd(ta, ca));
  }
  return cost;
}

// Arm-count rules: per-arm floor plus the optional count-difference cap.
struct CountRule {
  std::optional<int> balance;
  int min_arm = 1;

  bool FinalOk(int n_t, int n_c) const {
    if (n_t < min_arm || n_c < min_arm) return false;
    return !balance || std::abs(n_t - n_c) <= *balance;
  }

  // Whether some completion of a node with `rest` unassigned supergeos can
  // still satisfy the final rules.
  bool Reachable(int n_t, int n_c, int rest) const {
    int need = std::max(0, min_arm - n_t) + std::max(0, min_arm - n_c);
    if (need > rest) return false;
    if (balance) {
      int d = std::abs(n_t - n_c);
      int min_final = d > rest ? d - rest : (d + rest) % 2;
      if (min_final > *balance) return false;
    }
    return true;
  }

  bool Feasible(int m) const {
    for (int n_t = 1; n_t < m; ++n_t)
      if (FinalOk(n_t, m - n_t)) return true;
    return false;
  }
};

// Lower bound on the best achievable baseline |SMD| for one candidate via an
// interval relaxation: for each allowed treatment count the reachable sum of
// baseline totals lies between the sum of the smallest and of the largest
// totals, and the SMD denominator cannot exceed range/sqrt(2).
double BaselineLowerBound(const std::vector<double>& totals,
                          const CountRule& rule) {
  int m = static_cast<int>(totals.size());
  std::vector<double> sorted(totals);
  std::sort(sorted.begin(), sorted.end());
  double range = sorted.back() - sorted.front();
  if (!(range > 0.0)) return 0.0;
  std::vector<double> prefix(static_cast<size_t>(m) + 1, 0.0);
  for (int i = 0; i < m; ++i)
    prefix[static_cast<size_t>(i) + 1] =
        prefix[static_cast<size_t>(i)] + sorted[static_cast<size_t>(i)];
  double total = prefix[static_cast<size_t>(m)];

  double best_gap = kInf;
  for (int n_t = 1; n_t < m; ++n_t) {
    if (!rule.FinalOk(n_t, m - n_t)) continue;
    double lo = prefix[static_cast<size_t>(n_t)];
    double hi = total - prefix[static_cast<size_t>(m - n_t)];
    double target = total * n_t / m;
    double dist = 0.0;
    if (target < lo) dist = lo - target;
    if (target > hi) dist = target - hi;
    double gap = dist * (1.0 / n_t + 1.0 / (m - n_t));
    best_gap = std::min(best_gap, gap);
  }
  if (!std::isfinite(best_gap)) return kInf;
  return best_gap * std::sqrt(2.0) / range;
}

// Depth-first enumeration of canonical assignments (supergeo 0 pinned to
// treatment). Count-infeasible subtrees are cut, so every visited leaf is a
// valid split.
class ExactSearch {
 public:
  ExactSearch(const Instance& inst, const CountRule& rule,
              Clock::time_point deadline)
      : inst_(inst),
        rule_(rule),
        deadline_(deadline),
        t_(inst.lambdas.size()),
        c_(inst.lambdas.size()),
        assign_(static_cast<size_t>(inst.m), Arm::kControl) {}

  void Run(bool incumbent_found, double incumbent_cost) {
    found_ = incumbent_found;
    best_cost_ = incumbent_cost;
    assign_[0] = Arm::kTreatment;
    Place(0, Arm::kTreatment);
    Recurse(1);
    Remove(0, Arm::kTreatment);
  }

  bool improved() const { return improved_; }
  bool timed_out() const { return timed_out_; }
  double best_cost() const { return best_cost_; }
  const std::vector<Arm>& best_assign() const { return best_assign_; }

 private:
  void Place(int s, Arm a) {
    std::vector<ArmStats>& arm = a == Arm::kTreatment ? t_ : c_;
    (a == Arm::kTreatment ? n_t_ : n_c_)++;
    for (size_t r = 0; r < inst_.lambdas.size(); ++r) {
      double x = inst_.vals[r][static_cast<size_t>(s)];
      arm[r].sum += x;
      arm[r].sumsq += x * x;
      ++arm[r].n;
    }
  }

  void Remove(int s, Arm a) {
    std::vector<ArmStats>& arm = a == Arm::kTreatment ? t_ : c_;
    (a == Arm::kTreatment ? n_t_ : n_c_)--;
    for (size_t r = 0; r < inst_.lambdas.size(); ++r) {
      double x = inst_.vals[r][static_cast<size_t>(s)];
      arm[r].sum -= x;
      arm[r].sumsq -= x * x;
      --arm[r].n;
    }
  }

  void Recurse(int s) {
    if (timed_out_) return;
    if (s == inst_.m) {
      Leaf();
      return;
    }
    if (!rule_.Reachable(n_t_, n_c_, inst_.m - s)) return;
    assign_[static_cast<size_t>(s)] = Arm::kTreatment;
    Place(s, Arm::kTreatment);
    Recurse(s + 1);
    Remove(s, Arm::kTreatment);
    assign_[static_cast<size_t>(s)] = Arm::kControl;
    Place(s, Arm::kControl);
    Recurse(s + 1);
    Remove(s, Arm::kControl);
  }

  void Leaf() {
    if ((++leaves_ & 8191u) == 0 && Clock::now() > deadline_) {
      timed_out_ = true;
      return;
    }
    if (!rule_.FinalOk(n_t_, n_c_)) return;
    double cutoff = found_ ? best_cost_ : kInf;
    double cost = StatsCost(inst_, t_, c_, cutoff);
    if (!found_ || cost < best_cost_) {
      found_ = true;
      improved_ = true;
      best_cost_ = cost;
      best_assign_ = assign_;
    }
  }

  const Instance& inst_;
  const CountRule& rule_;
  Clock::time_point deadline_;
  std::vector<ArmStats> t_, c_;
  std::vector<Arm> assign_;
  std::vector<Arm> best_assign_;
  int n_t_ = 0, n_c_ = 0;
  std::uint64_t leaves_ = 0;
  bool found_ = false, improved_ = false, timed_out_ = false;
  double best_cost_ = kInf;
};

struct LocalResult {
  double cost = kInf;
  std::vector<Arm> assign;
  bool timed_out = false;
};

// One search state: assignment plus the matching arm stats.
struct SearchState {
  std::vector<Arm> assign;
  std::vector<ArmStats> t, c;
  int n_t = 0, n_c = 0;
};

SearchState MakeState(const Instance& inst, std::vector<Arm> assign) {
  SearchState st;
  st.assign = std::move(assign);
  st.t.resize(inst.lambdas.size());
  st.c.resize(inst.lambdas.size());
  for (int s = 0; s < inst.m; ++s) {
    bool is_t = st.assign[static_cast<size_t>(s)] == Arm::kTreatment;
    std::vector<ArmStats>& arm = is_t ? st.t : st.c;
    (is_t ? st.n_t : st.n_c)++;
    for (size_t r = 0; r < inst.lambdas.size(); ++r) {
      double x = inst.vals[r][static_cast<size_t>(s)];
      arm[r].sum += x;
      arm[r].sumsq += x * x;
      ++arm[r].n;
    }
  }
  return st;
}

// Best-improvement descent over single moves and cross-arm swaps. Returns the
// final cost of the (locally optimal) state.
double Descend(const Instance& inst, const CountRule& rule, SearchState& st,
               Clock::time_point deadline, bool& timed_out) {
  int m = inst.m;
  auto flip = [&](int s) {
    bool from_t = st.assign[static_cast<size_t>(s)] == Arm::kTreatment;
    std::vector<ArmStats>& src = from_t ? st.t : st.c;
    std::vector<ArmStats>& dst = from_t ? st.c : st.t;
    for (size_t r = 0; r < inst.lambdas.size(); ++r) {
      double x = inst.vals[r][static_cast<size_t>(s)];
      src[r].sum -= x;
      src[r].sumsq -= x * x;
      --src[r].n;
      dst[r].sum += x;
      dst[r].sumsq += x * x;
      ++dst[r].n;
    }
    (from_t ? st.n_t : st.n_c)--;
    (from_t ? st.n_c : st.n_t)++;
    st.assign[static_cast<size_t>(s)] =
        from_t ? Arm::kControl : Arm::kTreatment;
  };

  for (int pass = 0; pass < 100000; ++pass) {
    if (Clock::now() > deadline) {
      timed_out = true;
      break;
    }
    double best = StatsCost(inst, st.t, st.c, kInf);
    int best_move = -1;            // single supergeo to flip
    int best_i = -1, best_j = -1;  // treatment/control pair to swap

    for (int s = 0; s < m; ++s) {
      bool from_t = st.assign[static_cast<size_t>(s)] == Arm::kTreatment;
      int nt = st.n_t + (from_t ? -1 : 1);
      int nc = st.n_c + (from_t ? 1 : -1);
      if (!rule.FinalOk(nt, nc)) continue;
      double cost = from_t ? AdjustedCost(inst, st.t, st.c, -1, s, s, -1)
                           : AdjustedCost(inst, st.t, st.c, s, -1, -1, s);
      if (cost < best) {
        best = cost;
        best_move = s;
        best_i = best_j = -1;
      }
    }
    for (int i = 0; i < m; ++i) {
      if (st.assign[static_cast<size_t>(i)] != Arm::kTreatment) continue;
      for (int j = 0; j < m; ++j) {
        if (st.assign[static_cast<size_t>(j)] != Arm::kControl) continue;
        double cost = AdjustedCost(inst, st.t, st.c, j, i, i, j);
        if (cost < best) {
          best = cost;
          best_move = -1;
          best_i = i;
          best_j = j;
        }
      }
    }

    if (best_move < 0 && best_i < 0) break;
    if (best_move >= 0) {
      flip(best_move);
    } else {
      flip(best_i);
      flip(best_j);
    }
  }
  return StatsCost(inst, st.t, st.c, kInf);
}

// Greedy seeding: walk supergeos by descending baseline total and drop each
// into the arm whose running baseline sum is smaller, as far as the count
// rules allow. Besides balancing the sums, the walk interleaves neighbouring
// ranks across the arms, which downstream pair-based estimators lean on.
std::vector<Arm> GreedySeed(const Instance& inst, const CountRule& rule) {
  int m = inst.m;
  std::vector<int> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return inst.vals[0][static_cast<size_t>(a)] >
           inst.vals[0][static_cast<size_t>(b)];
  });

  std::vector<Arm> assign(static_cast<size_t>(m), Arm::kControl);
  double tot_t = 0.0, tot_c = 0.0;
  int n_t = 0, n_c = 0;
  for (int i = 0; i < m; ++i) {
    int s = order[static_cast<size_t>(i)];
    int rest = m - i - 1;
    bool can_t = rule.Reachable(n_t + 1, n_c, rest);
    bool can_c = rule.Reachable(n_t, n_c + 1, rest);
    Arm pick;
    if (can_t && !can_c) {
      pick = Arm::kTreatment;
    } else if (can_c && !can_t) {
      pick = Arm::kControl;
    } else {
      pick = tot_t <= tot_c ? Arm::kTreatment : Arm::kControl;
    }
    if (pick == Arm::kTreatment) {
      tot_t += inst.vals[0][static_cast<size_t>(s)];
      ++n_t;
    } else {
      tot_c += inst.vals[0][static_cast<size_t>(s)];
      ++n_c;
    }
    assign[static_cast<size_t>(s)] = pick;
  }
  return assign;
}

// A uniformly drawn feasible assignment: pick an allowed treatment count,
// then a random subset of that size.
std::vector<Arm> RandomSeed(const Instance& inst, const CountRule& rule,
                            Rng& rng) {
  int m = inst.m;
  std::vector<int> counts;
  for (int n_t = 1; n_t < m; ++n_t)
    if (rule.FinalOk(n_t, m - n_t)) counts.push_back(n_t);
  int n_t = counts[static_cast<size_t>(
      rng.below(static_cast<std::uint64_t>(counts.size())))];
  std::vector<int> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = m - 1; i > 0; --i) {
    std::uint64_t j = rng.below(static_cast<std::uint64_t>(i) + 1);
    std::swap(perm[static_cast<size_t>(i)], perm[j]);
  }
  std::vector<Arm> assign(static_cast<size_t>(m), Arm::kControl);
  for (int i = 0; i < n_t; ++i)
    assign[static_cast<size_t>(perm[static_cast<size_t>(i)])] =
        Arm::kTreatment;
  return assign;
}

// Greedy seed plus seeded random restarts, each descended to a local optimum.
// The default restart count shrinks as instances grow so large problems stay
// cheap; callers may override it (1 = greedy descent only).
LocalResult HeuristicOne(const Instance& inst, const CountRule& rule,
                         Clock::time_point deadline, std::uint64_t seed,
                         std::optional<int> restart_override) {
  int m = inst.m;
  int restarts = restart_override.value_or(m <= 16 ? 64 : (m <= 64 ? 6 : 2));

  LocalResult out;
  bool found = false;
  for (int r = 0; r < restarts; ++r) {
    std::vector<Arm> start;
    if (r == 0) {
      start = GreedySeed(inst, rule);
    } else {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
      start = RandomSeed(inst, rule, rng);
    }
    SearchState st = MakeState(inst, std::move(start));
    bool timed_out = false;
    double cost = Descend(inst, rule, st, deadline, timed_out);
    if (!found || cost < out.cost) {
      found = true;
      out.cost = cost;
      out.assign = std::move(st.assign);
    }
    if (timed_out) {
      out.timed_out = true;
      break;
    }
  }

  // Canonical labels: the first supergeo always sits in treatment.
  if (out.assign[0] == Arm::kControl)
    for (Arm& a : out.assign)
      a = a == Arm::kControl ? Arm::kTreatment : Arm::kControl;
  return out;
}

void ValidateProblem(const DesignProblem& p) {
  if (p.candidates.empty()) throw ParamError("design problem has no candidates");
  if (!(p.time_limit_s > 0.0)) throw ParamError("time limit must be positive");
  if (p.min_supergeos_per_arm < 1)
    throw ParamError("each arm needs at least one supergeo");
  if (p.count_balance && *p.count_balance < 0)
    throw ParamError("count balance cap must be non-negative");
  if (p.restarts && *p.restarts < 1)
    throw ParamError("restart count must be at least one");
  int n_geos = static_cast<int>(p.cov.baseline.size());
  ValidateCovariateSet(p.cov, n_geos);
  for (const CandidatePartition& cand : p.candidates)
    ValidatePartition(cand, n_geos);
}

DesignAssignment RunSolve(const DesignProblem& p, bool exact) {
  ValidateProblem(p);
  auto start = Clock::now();
  auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(
                  std::chrono::duration<double>(p.time_limit_s));
  CountRule rule{p.count_balance, p.min_supergeos_per_arm};

  bool found = false;
  bool timed_out = false;
  double best_cost = kInf;
  int best_cand = -1;
  std::vector<Arm> best_assign;

  for (size_t i = 0; i < p.candidates.size(); ++i) {
    if (timed_out) break;
    const CandidatePartition& cand = p.candidates[i];
    if (!rule.Feasible(cand.num_supergeos())) {
      std::cerr << "warning: candidate " << i << " (" << cand.source_cut
                << ") admits no valid arm split; skipped\n";
      continue;
    }
    Instance inst = BuildInstance(cand, p.cov);
    if (exact) {
      if (found && std::isfinite(best_cost) &&
          BaselineLowerBound(inst.vals[0], rule) >= best_cost)
        continue;
      ExactSearch search(inst, rule, deadline);
      search.Run(found, best_cost);
      if (search.improved()) {
        found = true;
        best_cost = search.best_cost();
        best_cand = static_cast<int>(i);
        best_assign = search.best_assign();
      }
      if (search.timed_out()) timed_out = true;
    } else {
      LocalResult local =
          HeuristicOne(inst, rule, deadline, derive_seed(p.seed, i),
                       p.restarts);
      if (!found || local.cost < best_cost) {
        found = true;
        best_cost = local.cost;
        best_cand = static_cast<int>(i);
        best_assign = std::move(local.assign);
      }
      if (local.timed_out) timed_out = true;
    }
  }

  if (!found)
    throw InfeasibleError("no candidate admits a feasible arm assignment");

  DesignAssignment out;
  out.candidate_index = best_cand;
  out.arms.arm = std::move(best_assign);
  out.cost = DesignCost(p.candidates[static_cast<size_t>(best_cand)], out.arms,
                        p.cov);
  bool audit_ok =
      std::isfinite(out.cost.total) && std::isfinite(best_cost)
          ? std::fabs(out.cost.total - best_cost) <=
                1e-9 * std::max(1.0, std::fabs(out.cost.total))
          : out.cost.total == best_cost;
  if (!audit_ok)
    throw Error("internal: search cost diverged from the audit recomputation");
  out.status = timed_out ? SolveStatus::kFeasibleTimeout
                         : (exact ? SolveStatus::kOptimal
                                  : SolveStatus::kLocalOptimum);
  out.wall_time_s =
      std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

}  // namespace

std::string ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kLocalOptimum:
      return "local-optimum";
    case SolveStatus::kFeasibleTimeout:
      return "feasible-timeout";
  }
  return "unknown";
}

DesignAssignment SolveExact(const DesignProblem& problem) {
  return RunSolve(problem, true);
}

DesignAssignment SolveHeuristic(const DesignProblem& problem) {
  return RunSolve(problem, false);
}

DesignAssignment Solve(const DesignProblem& problem) {
  if (problem.mode == SolveMode::kExact) return SolveExact(problem);
  if (problem.mode == SolveMode::kHeuristic) return SolveHeuristic(problem);
  int max_m = 0;
  for (const CandidatePartition& cand : problem.candidates)
    max_m = std::max(max_m, cand.num_supergeos());
  return max_m <= 24 ? SolveExact(problem) : SolveHeuristic(problem);
}

}  // namespace asd
