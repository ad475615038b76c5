#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// Filter-importance strategies. L1/L2 are magnitude baselines; the other
// three decompose each filter into its positive and negative weight sums
// and rank by how close both sums sit to zero.
enum class Method { L1, L2, DScore, DStep, DStepGM };

std::string_view method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

// Independent sums of a filter's strictly positive and strictly negative
// weights. Exact zeros contribute to neither, so s_pos >= 0 >= s_neg and
// s_pos + s_neg reconstructs the plain weight sum.
struct SignSplit {
  double s_pos = 0.0;
  double s_neg = 0.0;
};

SignSplit sign_sums(std::span<const float> filter);

// Per-filter p-norm, p in {1,2}. Smallest norm = least important.
std::vector<double> norm_scores(const WeightTensor& weights, int p);

// Sum of pairwise Euclidean distances per vector (medoid criterion).
// The smallest sum marks the vector nearest the geometric median of the
// set, i.e. the most redundant one. Needs at least two vectors.
std::vector<double> gm_distance_scores(const std::vector<std::vector<float>>& parts);

struct FilterRanking {
  Method method = Method::L1;
  std::string layer;
  std::vector<std::size_t> order;  // permutation of [0,J), least important first
  std::vector<double> scores;      // scores[j] belongs to filter j (method-specific scale)
};

// Magnitude baseline: order = ascending p-norm, ties by filter index.
FilterRanking rank_norm(const WeightTensor& weights, int p, std::string layer = {});

// Positional-score ranking: sort s_pos ascending and s_neg descending
// (nearest zero first on both), assign positions 1..J in each list, and
// order filters by ascending position sum. scores[j] = position sum.
FilterRanking rank_dscore(const WeightTensor& weights, std::string layer = {});

// Buffer ranking: grow the two sorted prefixes in lockstep; a filter is
// buffered at the first prefix length that contains it in BOTH lists.
// order = buffer front-first (up to buffer_size), then the unbuffered
// filters by ascending position sum. scores[j] = entry step of filter j.
FilterRanking rank_dstep(const WeightTensor& weights, std::size_t buffer_size,
                         std::string layer = {});

// Same buffer procedure, but positions come from ascending distance-sum
// order of the positive parts and of the negative parts (geometric
// redundancy instead of sign sums). Needs at least two filters.
FilterRanking rank_dstep_gm(const WeightTensor& weights, std::size_t buffer_size,
                            std::string layer = {});

// Dispatch by method; buffered methods use buffer_size = filter count,
// whose buffer order agrees with every smaller buffer on its prefix.
FilterRanking rank_filters(const WeightTensor& weights, Method method, std::string layer = {});

// JSON artifact: {"method": ..., "rankings": [{method, layer, order, scores}, ...]}.
// Serialization is deterministic (two-space indent, trailing newline).
std::string rankings_to_json(std::span<const FilterRanking> rankings);
std::vector<FilterRanking> rankings_from_json(const std::string& text);

}  // namespace prunekit
