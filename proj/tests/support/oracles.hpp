#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace testsupport {

// Brute-force re-implementations of the ranking procedures, written as
// literal step-by-step transcriptions (explicit list sorts, prefix-set
// intersections, naive distance double loops). The library is required to
// match these exactly; keep them independent of the library internals.

struct OracleRanking {
  std::vector<std::size_t> order;  // least important first
  std::vector<double> scores;      // aligned to filter index
};

std::pair<double, double> oracle_sign_sums(std::span<const float> filter);

// Positional scores: positives ascending, negatives descending (signed),
// 1..J per list with index tie-breaks, total = sum, order by total.
OracleRanking oracle_dscore(const std::vector<std::pair<double, double>>& splits);

// Literal prefix growth: for k = 1,2,... a filter enters the buffer the
// first k at which both k-prefixes contain it; same-step entries append by
// ascending index. Unbuffered filters follow by ascending positional-score
// total. scores = entry steps.
OracleRanking oracle_dstep(const std::vector<std::pair<double, double>>& splits,
                           std::size_t buffer_size);

// Same prefix growth, lists ordered by ascending sum of pairwise Euclidean
// distances of the positive parts / the negative parts.
OracleRanking oracle_dstep_gm(const std::vector<std::vector<float>>& filters,
                              std::size_t buffer_size);

// Naive O(J^2) distance-sum loop, each ordered pair recomputed from scratch.
std::vector<double> oracle_gm_scores(const std::vector<std::vector<float>>& vectors);

// Largest grid ratio whose accuracy >= threshold, scanning (ratio, accuracy)
// points directly; 0 when nothing qualifies.
double oracle_threshold_ratio(const std::vector<std::pair<double, double>>& curve,
                              double threshold);

}  // namespace testsupport
