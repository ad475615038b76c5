#include "prunekit/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace prunekit {

namespace {

using ordered_json = nlohmann::ordered_json;

void require_weight_tensor(const WeightTensor& w) {
  if (w.rank() != 4) {
    throw Error(ErrorCode::ShapeMismatch,
                "filter ranking needs a rank-4 weight tensor, got rank " +
                    std::to_string(w.rank()));
  }
}

// Sort positions 1..J for the given keys; ties receive distinct consecutive
// positions in ascending index order.
std::vector<std::size_t> positional_ranks(const std::vector<double>& keys, bool ascending) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return ascending ? keys[a] < keys[b] : keys[a] > keys[b];
    return a < b;
  });
  std::vector<std::size_t> rank(keys.size());
  for (std::size_t pos = 0; pos < idx.size(); ++pos) rank[idx[pos]] = pos + 1;
  return rank;
}

std::vector<std::size_t> argsort_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  return order;
}

// Shared tail of rank_dstep / rank_dstep_gm: filters enter the buffer at the
// first prefix length k where both k-prefixes contain them, which is
// max(position in list 1, position in list 2). Unbuffered filters follow by
// ascending position sum.
FilterRanking buffered_ranking(Method method, std::string layer,
                               const std::vector<std::size_t>& pos_rank,
                               const std::vector<std::size_t>& neg_rank,
                               std::size_t buffer_size) {
  const std::size_t filters = pos_rank.size();
  if (buffer_size < 1 || buffer_size > filters) {
    throw Error(ErrorCode::BufferSizeOutOfRange,
                "buffer size " + std::to_string(buffer_size) + " not in [1, " +
                    std::to_string(filters) + "]");
  }

  std::vector<double> entry_step(filters);
  std::vector<double> rank_sum(filters);
  for (std::size_t j = 0; j < filters; ++j) {
    entry_step[j] = static_cast<double>(std::max(pos_rank[j], neg_rank[j]));
    rank_sum[j] = static_cast<double>(pos_rank[j] + neg_rank[j]);
  }

  const std::vector<std::size_t> by_entry = argsort_by_score(entry_step);
  FilterRanking r{method, std::move(layer), {}, std::move(entry_step)};
  r.order.assign(by_entry.begin(), by_entry.begin() + static_cast<std::ptrdiff_t>(buffer_size));

  std::vector<std::size_t> rest(by_entry.begin() + static_cast<std::ptrdiff_t>(buffer_size),
                                by_entry.end());
  std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    if (rank_sum[a] != rank_sum[b]) return rank_sum[a] < rank_sum[b];
    return a < b;
  });
  r.order.insert(r.order.end(), rest.begin(), rest.end());
  return r;
}

std::vector<SignSplit> layer_sign_sums(const WeightTensor& w) {
  std::vector<SignSplit> splits(w.shape()[0]);
  for (std::size_t j = 0; j < splits.size(); ++j) splits[j] = sign_sums(filter_span(w, j));
  return splits;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::L1: return "l1";
    case Method::L2: return "l2";
    case Method::DScore: return "dscore";
    case Method::DStep: return "dstep";
    case Method::DStepGM: return "dstepgm";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
  if (name == "l1") return Method::L1;
  if (name == "l2") return Method::L2;
  if (name == "dscore") return Method::DScore;
  if (name == "dstep") return Method::DStep;
  if (name == "dstepgm") return Method::DStepGM;
  return std::nullopt;
}

SignSplit sign_sums(std::span<const float> filter) {
  if (filter.empty()) {
    throw Error(ErrorCode::EmptyFilter, "sign sums of an empty filter");
  }
  SignSplit s;
  for (float w : filter) {
    if (w > 0.0f) s.s_pos += w;
    else if (w < 0.0f) s.s_neg += w;
  }
  return s;
}

std::vector<double> norm_scores(const WeightTensor& weights, int p) {
  require_weight_tensor(weights);
  if (p != 1 && p != 2) {
    throw Error(ErrorCode::InvalidArgument, "norm order must be 1 or 2, got " + std::to_string(p));
  }
  std::vector<double> scores(weights.shape()[0]);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    double acc = 0.0;
    for (float w : filter_span(weights, j)) {
      acc += p == 1 ? std::abs(static_cast<double>(w))
                    : static_cast<double>(w) * static_cast<double>(w);
    }
    scores[j] = p == 1 ? acc : std::sqrt(acc);
  }
  return scores;
}

std::vector<double> gm_distance_scores(const std::vector<std::vector<float>>& parts) {
  if (parts.size() < 2) {
    throw Error(ErrorCode::TooFewFilters,
                "distance scores need at least 2 vectors, got " + std::to_string(parts.size()));
  }
  std::vector<double> scores(parts.size(), 0.0);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    for (std::size_t m = j + 1; m < parts.size(); ++m) {
      const double d = euclidean_distance(parts[j], parts[m]);
      scores[j] += d;
      scores[m] += d;
    }
  }
  return scores;
}

FilterRanking rank_norm(const WeightTensor& weights, int p, std::string layer) {
  std::vector<double> scores = norm_scores(weights, p);
  FilterRanking r{p == 1 ? Method::L1 : Method::L2, std::move(layer), argsort_by_score(scores),
                  std::move(scores)};
  return r;
}

FilterRanking rank_dscore(const WeightTensor& weights, std::string layer) {
  require_weight_tensor(weights);
  const std::vector<SignSplit> splits = layer_sign_sums(weights);
  std::vector<double> pos(splits.size()), neg(splits.size());
  for (std::size_t j = 0; j < splits.size(); ++j) {
    pos[j] = splits[j].s_pos;
    neg[j] = splits[j].s_neg;
  }
  const std::vector<std::size_t> pos_rank = positional_ranks(pos, /*ascending=*/true);
  const std::vector<std::size_t> neg_rank = positional_ranks(neg, /*ascending=*/false);

  std::vector<double> totals(splits.size());
  for (std::size_t j = 0; j < splits.size(); ++j) {
    totals[j] = static_cast<double>(pos_rank[j] + neg_rank[j]);
  }
  FilterRanking r{Method::DScore, std::move(layer), argsort_by_score(totals), std::move(totals)};
  return r;
}

FilterRanking rank_dstep(const WeightTensor& weights, std::size_t buffer_size, std::string layer) {
  require_weight_tensor(weights);
  const std::vector<SignSplit> splits = layer_sign_sums(weights);
  std::vector<double> pos(splits.size()), neg(splits.size());
  for (std::size_t j = 0; j < splits.size(); ++j) {
    pos[j] = splits[j].s_pos;
    neg[j] = splits[j].s_neg;
  }
  return buffered_ranking(Method::DStep, std::move(layer),
                          positional_ranks(pos, /*ascending=*/true),
                          positional_ranks(neg, /*ascending=*/false), buffer_size);
}

FilterRanking rank_dstep_gm(const WeightTensor& weights, std::size_t buffer_size,
                            std::string layer) {
  require_weight_tensor(weights);
  const std::size_t filters = weights.shape()[0];
  if (filters < 2) {
    throw Error(ErrorCode::TooFewFilters, "geometric ranking needs at least 2 filters");
  }
  std::vector<std::vector<float>> pos_parts(filters), neg_parts(filters);
  for (std::size_t j = 0; j < filters; ++j) {
    const auto span = filter_span(weights, j);
    pos_parts[j].resize(span.size());
    neg_parts[j].resize(span.size());
    for (std::size_t i = 0; i < span.size(); ++i) {
      pos_parts[j][i] = std::max(span[i], 0.0f);
      neg_parts[j][i] = std::min(span[i], 0.0f);
    }
  }
  return buffered_ranking(Method::DStepGM, std::move(layer),
                          positional_ranks(gm_distance_scores(pos_parts), /*ascending=*/true),
                          positional_ranks(gm_distance_scores(neg_parts), /*ascending=*/true),
                          buffer_size);
}

FilterRanking rank_filters(const WeightTensor& weights, Method method, std::string layer) {
  switch (method) {
    case Method::L1: return rank_norm(weights, 1, std::move(layer));
    case Method::L2: return rank_norm(weights, 2, std::move(layer));
    case Method::DScore: return rank_dscore(weights, std::move(layer));
    case Method::DStep: return rank_dstep(weights, weights.shape()[0], std::move(layer));
    case Method::DStepGM: return rank_dstep_gm(weights, weights.shape()[0], std::move(layer));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown ranking method");
}

std::string rankings_to_json(std::span<const FilterRanking> rankings) {
  ordered_json doc;
  doc["method"] = rankings.empty() ? "" : std::string(method_name(rankings.front().method));
  ordered_json list = ordered_json::array();
  for (const FilterRanking& r : rankings) {
    ordered_json jr;
    jr["method"] = std::string(method_name(r.method));
    jr["layer"] = r.layer;
    jr["order"] = r.order;
    jr["scores"] = r.scores;
    list.push_back(std::move(jr));
  }
  doc["rankings"] = std::move(list);
  return doc.dump(2) + "\n";
}

std::vector<FilterRanking> rankings_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("rankings artifact: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rankings") || !doc["rankings"].is_array()) {
    throw Error(ErrorCode::SchemaViolation, "rankings artifact: missing 'rankings' array");
  }
  std::vector<FilterRanking> out;
  for (const auto& jr : doc["rankings"]) {
    if (!jr.is_object() || !jr.contains("method") || !jr["method"].is_string() ||
        !jr.contains("layer") || !jr["layer"].is_string() || !jr.contains("order") ||
        !jr["order"].is_array() || !jr.contains("scores") || !jr["scores"].is_array()) {
      throw Error(ErrorCode::SchemaViolation, "rankings artifact: malformed ranking entry");
    }
    FilterRanking r;
    const auto method = method_from_name(jr["method"].get<std::string>());
    if (!method) {
      throw Error(ErrorCode::SchemaViolation,
                  "rankings artifact: unknown method '" + jr["method"].get<std::string>() + "'");
    }
    r.method = *method;
    r.layer = jr["layer"].get<std::string>();
    for (const auto& v : jr["order"]) {
      if (!v.is_number_unsigned()) {
        throw Error(ErrorCode::SchemaViolation, "rankings artifact: order must hold indices");
      }
      r.order.push_back(v.get<std::size_t>());
    }
    for (const auto& v : jr["scores"]) {
      if (!v.is_number()) {
        throw Error(ErrorCode::SchemaViolation, "rankings artifact: scores must be numbers");
      }
      r.scores.push_back(v.get<double>());
    }
    if (r.scores.size() != r.order.size()) {
      throw Error(ErrorCode::SchemaViolation, "rankings artifact: order/scores length mismatch");
    }
    std::vector<bool> seen(r.order.size(), false);
    for (std::size_t j : r.order) {
      if (j >= r.order.size() || seen[j]) {
        throw Error(ErrorCode::SchemaViolation, "rankings artifact: order is not a permutation");
      }
      seen[j] = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace prunekit
