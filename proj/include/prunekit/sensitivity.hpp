#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prunekit/model.hpp"
#include "prunekit/ranking.hpp"

namespace prunekit {

struct SensitivityEntry {
  std::string layer;
  double ratio = 0.0;
  double accuracy = 0.0;  // NaN when skipped
  bool skipped = false;   // removal would have emptied the layer
};

// Per-layer accuracy curves over a shared ratio grid, plus the unpruned
// baseline. Every sweep point is measured from the pristine model.
struct SensitivityMap {
  std::optional<Method> method;  // absent when loaded from CSV (which carries no tag)
  double baseline_accuracy = 0.0;
  std::vector<double> ratios;
  std::vector<SensitivityEntry> entries;  // grouped by layer, ratios ascending
};

// 0.1, 0.2, ..., 0.9
std::vector<double> default_ratio_grid();

// Rank `layer` once with `method`; for each grid ratio r remove the
// floor(r*J) least-important filters from this layer only, propagate, and
// evaluate. Ratios removing zero filters report the baseline accuracy;
// ratios that would empty the layer yield skipped entries. The grid must
// be strictly increasing within (0,1].
std::vector<SensitivityEntry> sweep_layer(const ModelGraph& g, const Dataset& d, Method method,
                                          const std::string& layer, std::span<const double> ratios,
                                          std::optional<double> baseline = std::nullopt,
                                          std::size_t topk = 1);

// sweep_layer over every prunable layer; the baseline is evaluated once.
SensitivityMap full_sensitivity(const ModelGraph& g, const Dataset& d, Method method,
                                std::span<const double> ratios, std::size_t topk = 1);

// Per layer, the LARGEST grid ratio whose accuracy stays at or above the
// threshold; 0 when no grid point qualifies. Skipped points never qualify.
std::map<std::string, double> ratios_for_threshold(const SensitivityMap& m, double accuracy);

// CSV: header `layer,ratio,accuracy`, baseline row first (layer
// `__baseline__`, ratio 0), skipped points as `nan`, LF line endings,
// shortest round-trip float formatting.
std::string sensitivity_csv(const SensitivityMap& m);
SensitivityMap sensitivity_from_csv(const std::string& text);

std::string sensitivity_json(const SensitivityMap& m);
SensitivityMap sensitivity_from_json(const std::string& text);

}  // namespace prunekit
