#ifndef ASD_PARTITION_HPP_
#define ASD_PARTITION_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asd/balance.hpp"

namespace asd {

enum class SolveMode { kAuto, kExact, kHeuristic };

enum class SolveStatus {
  kOptimal,          // exhaustive search finished inside the time budget
  kLocalOptimum,     // heuristic search converged inside the time budget
  kFeasibleTimeout   // budget hit; best assignment found so far is returned
};

std::string ToString(SolveStatus status);

// One design instance: pick exactly one candidate partition and split its
// supergeos into two arms minimising the design cost.
struct DesignProblem {
  std::vector<CandidatePartition> candidates;
  CovariateSet cov;
  double time_limit_s = 30.0;
  SolveMode mode = SolveMode::kAuto;
  std::uint64_t seed = 0;
  // Optional cap on |#treatment - #control| supergeo counts. Unset means the
  // only arm-size rule is the per-arm floor below.
  std::optional<int> count_balance;
  int min_supergeos_per_arm = 1;
  // Heuristic starts per candidate: the first is the greedy seed, the rest
  // are randomized. Unset picks a size-based schedule. Callers that rely on
  // the greedy seed's arm structure downstream should pin this to 1.
  std::optional<int> restarts;
};

struct DesignAssignment {
  int candidate_index = -1;
  ArmAssignment arms;          // aligned with the chosen candidate's supergeos
  CostBreakdown cost;          // recomputed from the returned assignment
  SolveStatus status = SolveStatus::kOptimal;
  double wall_time_s = 0.0;
};

// Branch-and-bound over canonical arm assignments (the first supergeo is
// pinned to treatment, removing the label-swap mirror). Candidates whose
// best-possible baseline imbalance already exceeds the incumbent are skipped
// via an interval relaxation on supergeo baseline totals. Candidates with no
// feasible split are skipped with a warning; throws InfeasibleError when none
// remains.
DesignAssignment SolveExact(const DesignProblem& problem);

// Greedy seeding by descending baseline total followed by best-improvement
// single-move and swap local search, per candidate. Deterministic.
DesignAssignment SolveHeuristic(const DesignProblem& problem);

// Mode dispatch: auto runs exact when every candidate has at most 24
// supergeos, otherwise the heuristic.
DesignAssignment Solve(const DesignProblem& problem);

}  // namespace asd

#endif  // ASD_PARTITION_HPP_
