#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace testsupport {

namespace {

// Indices listed in list order after sorting by (value, index) ascending or
// by (value descending, index ascending).
std::vector<std::size_t> sorted_index_list(const std::vector<double>& values, bool ascending) {
  std::vector<std::pair<double, std::size_t>> tagged;
  for (std::size_t i = 0; i < values.size(); ++i) tagged.emplace_back(values[i], i);
  std::sort(tagged.begin(), tagged.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return ascending ? a.first < b.first : a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> list;
  for (const auto& [value, index] : tagged) list.push_back(index);
  return list;
}

// 1-based position of each filter within a list.
std::vector<std::size_t> positions_of(const std::vector<std::size_t>& list) {
  std::vector<std::size_t> pos(list.size());
  for (std::size_t p = 0; p < list.size(); ++p) pos[list[p]] = p + 1;
  return pos;
}

// The shared buffer procedure, run to completion so every filter gets an
// entry step; the buffer itself is the first buffer_size entries.
OracleRanking prefix_buffer(const std::vector<std::size_t>& pos_list,
                            const std::vector<std::size_t>& neg_list, std::size_t buffer_size) {
  const std::size_t count = pos_list.size();
  std::vector<std::size_t> entry_step(count, 0);
  std::vector<std::size_t> entry_order;
  std::set<std::size_t> buffered;
  for (std::size_t k = 1; k <= count; ++k) {
    std::set<std::size_t> pos_prefix(pos_list.begin(), pos_list.begin() + k);
    std::set<std::size_t> neg_prefix(neg_list.begin(), neg_list.begin() + k);
    std::vector<std::size_t> entering;
    for (std::size_t j = 0; j < count; ++j) {
      if (!buffered.count(j) && pos_prefix.count(j) && neg_prefix.count(j)) entering.push_back(j);
    }
    std::sort(entering.begin(), entering.end());
    for (std::size_t j : entering) {
      buffered.insert(j);
      entry_step[j] = k;
      entry_order.push_back(j);
    }
  }

  const std::vector<std::size_t> pos_score = positions_of(pos_list);
  const std::vector<std::size_t> neg_score = positions_of(neg_list);

  OracleRanking r;
  r.order.assign(entry_order.begin(), entry_order.begin() + buffer_size);
  std::vector<std::size_t> rest(entry_order.begin() + buffer_size, entry_order.end());
  std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t ta = pos_score[a] + neg_score[a];
    const std::size_t tb = pos_score[b] + neg_score[b];
    if (ta != tb) return ta < tb;
    return a < b;
  });
  r.order.insert(r.order.end(), rest.begin(), rest.end());
  for (std::size_t j = 0; j < count; ++j) r.scores.push_back(static_cast<double>(entry_step[j]));
  return r;
}

}  // namespace

std::pair<double, double> oracle_sign_sums(std::span<const float> filter) {
  double pos = 0.0, neg = 0.0;
  for (float w : filter) {
    if (w > 0.0f) pos += static_cast<double>(w);
    if (w < 0.0f) neg += static_cast<double>(w);
  }
  return {pos, neg};
}

OracleRanking oracle_dscore(const std::vector<std::pair<double, double>>& splits) {
  std::vector<double> pos, neg;
  for (const auto& [p, n] : splits) {
    pos.push_back(p);
    neg.push_back(n);
  }
  const auto pos_score = positions_of(sorted_index_list(pos, /*ascending=*/true));
  const auto neg_score = positions_of(sorted_index_list(neg, /*ascending=*/false));

  OracleRanking r;
  for (std::size_t j = 0; j < splits.size(); ++j) {
    r.scores.push_back(static_cast<double>(pos_score[j] + neg_score[j]));
  }
  r.order = sorted_index_list(r.scores, /*ascending=*/true);
  return r;
}

OracleRanking oracle_dstep(const std::vector<std::pair<double, double>>& splits,
                           std::size_t buffer_size) {
  std::vector<double> pos, neg;
  for (const auto& [p, n] : splits) {
    pos.push_back(p);
    neg.push_back(n);
  }
  return prefix_buffer(sorted_index_list(pos, /*ascending=*/true),
                       sorted_index_list(neg, /*ascending=*/false), buffer_size);
}

OracleRanking oracle_dstep_gm(const std::vector<std::vector<float>>& filters,
                              std::size_t buffer_size) {
  std::vector<std::vector<float>> pos_parts, neg_parts;
  for (const auto& f : filters) {
    std::vector<float> p(f.size(), 0.0f), n(f.size(), 0.0f);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] > 0.0f) p[i] = f[i];
      if (f[i] < 0.0f) n[i] = f[i];
    }
    pos_parts.push_back(std::move(p));
    neg_parts.push_back(std::move(n));
  }
  return prefix_buffer(
      sorted_index_list(oracle_gm_scores(pos_parts), /*ascending=*/true),
      sorted_index_list(oracle_gm_scores(neg_parts), /*ascending=*/true), buffer_size);
}

std::vector<double> oracle_gm_scores(const std::vector<std::vector<float>>& vectors) {
  std::vector<double> scores;
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    double total = 0.0;
    for (std::size_t m = 0; m < vectors.size(); ++m) {
      if (m == j) continue;
      double sq = 0.0;
      for (std::size_t i = 0; i < vectors[j].size(); ++i) {
        const double d = static_cast<double>(vectors[j][i]) - static_cast<double>(vectors[m][i]);
        sq += d * d;
      }
      total += std::sqrt(sq);
    }
    scores.push_back(total);
  }
  return scores;
}

double oracle_threshold_ratio(const std::vector<std::pair<double, double>>& curve,
                              double threshold) {
  double best = 0.0;
  for (const auto& [ratio, accuracy] : curve) {
    if (accuracy >= threshold && ratio > best) best = ratio;
  }
  return best;
}

}  // namespace testsupport
