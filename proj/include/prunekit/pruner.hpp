#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prunekit/model.hpp"
#include "prunekit/ranking.hpp"

namespace prunekit {

// Explicit removal sets per layer. Plans store original filter indices
// (never ratios) so applying and reporting are exactly reproducible from
// the plan artifact alone.
struct PruningPlan {
  Method method = Method::DScore;
  std::map<std::string, std::vector<std::size_t>> layers;  // sorted original indices
  std::optional<double> threshold;                         // set when derived from a sweep
  std::map<std::string, double> ratios;                    // requested per-layer ratios
  std::vector<std::string> warnings;                       // e.g. exempted residual layers
};

// floor(ratio*filters), with a tiny epsilon so clean decimal ratios hit
// their intended count despite binary representation error.
std::size_t removal_count(double ratio, std::size_t filters);

// Select the first floor(r*J) entries of each layer's ranking order.
// Layers marked residual_last are exempt: requesting a ratio for one adds
// a warning instead of a removal set. A ratio of 1 would empty the layer
// and is rejected.
PruningPlan build_plan(const ModelGraph& g, std::span<const FilterRanking> rankings,
                       const std::map<std::string, double>& ratios);

// Structural surgery: drop the planned output filters (and bias entries),
// then walk the graph once propagating the removed channels — consumer
// convs lose input channels, dense layers lose the matching columns
// (channel-major flatten maps channel c to columns [c*H*W, (c+1)*H*W)),
// affine nodes lose scale/shift entries. Add nodes require identical
// removal sets on both operands. The result passes validation.
ModelGraph apply_plan(const ModelGraph& g, const PruningPlan& p);

// Learnable parameter count: conv Kh*Kw*Cin*Cout (+Cout bias),
// dense Din*Dout (+Dout bias), affine 2*C.
std::uint64_t count_params(const ModelGraph& g);

// Forward-pass FLOPs at the graph's input shape, counting one
// multiply-accumulate as 2 FLOPs: conv 2*Kh*Kw*Cin*Cout*Hout*Wout
// (+Cout*Hout*Wout bias), dense 2*Din*Dout (+Dout bias), affine
// 2*elements, relu/pool/add 1 per output element, flatten 0.
std::uint64_t count_flops(const ModelGraph& g);

// The counting convention string embedded in every report.
std::string_view flops_convention();

struct ReductionReport {
  std::uint64_t params_before = 0;
  std::uint64_t params_after = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  double params_reduction_pct = 0.0;  // 100*(1 - after/before)
  double flops_reduction_pct = 0.0;
  std::optional<double> acc_before;    // fractions in [0,1]
  std::optional<double> acc_after;
  std::optional<double> acc_drop_pct;  // (before-after)*100; negative = improvement
};

ReductionReport reduction_report(const ModelGraph& before, const ModelGraph& after);
ReductionReport reduction_report(const ModelGraph& before, const ModelGraph& after,
                                 double acc_before, double acc_after);

// Aligned table with columns Acc. Drop(%) / Params Reduction(%) /
// FLOPs Reduction(%), prefixed by raw counts and the FLOPs convention.
std::string report_text(const ReductionReport& r);
std::string report_json(const ReductionReport& r);

// Per-filter sign statistics for studying which filters survive pruning.
struct FilterSignStats {
  std::size_t index = 0;
  double positive_ratio = 0.0;  // strictly positive weights / total weights
  double s_pos = 0.0;
  double s_neg_abs = 0.0;
  bool positive_prone = false;  // positive_ratio >= 0.5
};

struct LayerSignReport {
  std::string layer;
  std::vector<FilterSignStats> filters;
};

std::vector<LayerSignReport> sign_ratio_report(const ModelGraph& g);
std::string sign_report_json(std::span<const LayerSignReport> layers);

std::string plan_to_json(const PruningPlan& p);
PruningPlan plan_from_json(const std::string& text);

}  // namespace prunekit
