#include "prunekit/sensitivity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "prunekit/inference.hpp"
#include "prunekit/pruner.hpp"

namespace prunekit {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kBaselineRow = "__baseline__";

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::SchemaViolation, context + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

// RFC-4180-style quoting, applied only when the field needs it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

std::vector<std::string> split_csv_row(const std::string& line, const std::string& context) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::SchemaViolation, context + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

void check_grid(std::span<const double> ratios) {
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!std::isfinite(ratios[i]) || ratios[i] <= 0.0 || ratios[i] > 1.0) {
      throw Error(ErrorCode::RatioOutOfRange,
                  "grid ratio " + std::to_string(ratios[i]) + " outside (0,1]");
    }
    if (i > 0 && ratios[i] <= ratios[i - 1]) {
      throw Error(ErrorCode::RatioOutOfRange, "grid ratios must be strictly increasing");
    }
  }
}

}  // namespace

std::vector<double> default_ratio_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

std::vector<SensitivityEntry> sweep_layer(const ModelGraph& g, const Dataset& d, Method method,
                                          const std::string& layer, std::span<const double> ratios,
                                          std::optional<double> baseline, std::size_t topk) {
  const LayerNode* node = g.find(layer);
  if (node == nullptr || node->kind != LayerKind::Conv2d || node->residual_last) {
    throw Error(ErrorCode::NotPrunable, "layer '" + layer + "' cannot be swept");
  }
  check_grid(ratios);

  const WeightTensor& weights = g.tensors.at(node->weights.at("weight"));
  const std::size_t filters = weights.shape()[0];
  const FilterRanking ranking = rank_filters(weights, method, layer);
  const double base = baseline ? *baseline : evaluate(g, d, topk).accuracy();

  std::vector<SensitivityEntry> entries;
  for (double r : ratios) {
    SensitivityEntry e{layer, r, base, false};
    const std::size_t remove = removal_count(r, filters);
    if (remove >= filters) {
      e.accuracy = std::numeric_limits<double>::quiet_NaN();
      e.skipped = true;
    } else if (remove > 0) {
      const PruningPlan plan =
          build_plan(g, std::span<const FilterRanking>(&ranking, 1), {{layer, r}});
      e.accuracy = evaluate(apply_plan(g, plan), d, topk).accuracy();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

SensitivityMap full_sensitivity(const ModelGraph& g, const Dataset& d, Method method,
                                std::span<const double> ratios, std::size_t topk) {
  check_grid(ratios);
  SensitivityMap m;
  m.method = method;
  m.ratios.assign(ratios.begin(), ratios.end());
  m.baseline_accuracy = evaluate(g, d, topk).accuracy();
  for (const std::string& layer : prunable_layers(g)) {
    auto entries = sweep_layer(g, d, method, layer, ratios, m.baseline_accuracy, topk);
    m.entries.insert(m.entries.end(), entries.begin(), entries.end());
  }
  return m;
}

std::map<std::string, double> ratios_for_threshold(const SensitivityMap& m, double accuracy) {
  std::map<std::string, double> selected;
  for (const SensitivityEntry& e : m.entries) {
    auto [it, inserted] = selected.emplace(e.layer, 0.0);
    if (!e.skipped && e.accuracy >= accuracy && e.ratio > it->second) {
      it->second = e.ratio;
    }
  }
  return selected;
}

std::string sensitivity_csv(const SensitivityMap& m) {
  std::ostringstream out;
  out << "layer,ratio,accuracy\n";
  out << kBaselineRow << ",0," << format_double(m.baseline_accuracy) << "\n";
  for (const SensitivityEntry& e : m.entries) {
    out << csv_field(e.layer) << "," << format_double(e.ratio) << ","
        << format_double(e.accuracy) << "\n";
  }
  return out.str();
}

SensitivityMap sensitivity_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "layer,ratio,accuracy") {
    throw Error(ErrorCode::SchemaViolation, "sensitivity CSV: bad header");
  }

  SensitivityMap m;
  bool saw_baseline = false;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string context = "sensitivity CSV row " + std::to_string(row);
    const std::vector<std::string> fields = split_csv_row(line, context);
    if (fields.size() != 3) {
      throw Error(ErrorCode::SchemaViolation, context + ": expected 3 fields");
    }
    const double ratio = parse_double(fields[1], context);
    const double accuracy = parse_double(fields[2], context);
    if (fields[0] == kBaselineRow) {
      if (saw_baseline || ratio != 0.0) {
        throw Error(ErrorCode::SchemaViolation, context + ": bad baseline row");
      }
      m.baseline_accuracy = accuracy;
      saw_baseline = true;
      continue;
    }
    m.entries.push_back({fields[0], ratio, accuracy, std::isnan(accuracy)});
  }
  if (!saw_baseline) {
    throw Error(ErrorCode::SchemaViolation, "sensitivity CSV: missing baseline row");
  }

  // Recover the grid and insist every layer swept the same one.
  std::vector<double> grid;
  for (const SensitivityEntry& e : m.entries) grid.push_back(e.ratio);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  m.ratios = grid;
  std::map<std::string, std::vector<double>> per_layer;
  for (const SensitivityEntry& e : m.entries) per_layer[e.layer].push_back(e.ratio);
  for (auto& [layer, seen] : per_layer) {
    std::sort(seen.begin(), seen.end());
    if (seen != grid) {
      throw Error(ErrorCode::SchemaViolation,
                  "sensitivity CSV: layer '" + layer + "' sweeps a different grid");
    }
  }
  return m;
}

std::string sensitivity_json(const SensitivityMap& m) {
  ordered_json doc;
  if (m.method) doc["method"] = std::string(method_name(*m.method));
  doc["baseline_accuracy"] = m.baseline_accuracy;
  doc["ratios"] = m.ratios;
  ordered_json entries = ordered_json::array();
  for (const SensitivityEntry& e : m.entries) {
    ordered_json je;
    je["layer"] = e.layer;
    je["ratio"] = e.ratio;
    if (e.skipped) {
      je["accuracy"] = nullptr;
      je["skipped"] = true;
    } else {
      je["accuracy"] = e.accuracy;
    }
    entries.push_back(std::move(je));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

SensitivityMap sensitivity_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("sensitivity artifact: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("baseline_accuracy") ||
      !doc["baseline_accuracy"].is_number() || !doc.contains("ratios") ||
      !doc["ratios"].is_array() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: malformed map");
  }
  SensitivityMap m;
  if (doc.contains("method")) {
    if (!doc["method"].is_string()) {
      throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: method must be a string");
    }
    const auto method = method_from_name(doc["method"].get<std::string>());
    if (!method) {
      throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: unknown method '" +
                                                  doc["method"].get<std::string>() + "'");
    }
    m.method = method;
  }
  m.baseline_accuracy = doc["baseline_accuracy"].get<double>();
  for (const auto& v : doc["ratios"]) {
    if (!v.is_number()) {
      throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: ratios must be numbers");
    }
    m.ratios.push_back(v.get<double>());
  }
  for (const auto& je : doc["entries"]) {
    if (!je.is_object() || !je.contains("layer") || !je["layer"].is_string() ||
        !je.contains("ratio") || !je["ratio"].is_number() || !je.contains("accuracy")) {
      throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: malformed entry");
    }
    SensitivityEntry e;
    e.layer = je["layer"].get<std::string>();
    e.ratio = je["ratio"].get<double>();
    if (je["accuracy"].is_null()) {
      e.accuracy = std::numeric_limits<double>::quiet_NaN();
      e.skipped = true;
    } else if (je["accuracy"].is_number()) {
      e.accuracy = je["accuracy"].get<double>();
      if (je.contains("skipped") && je["skipped"].is_boolean()) {
        e.skipped = je["skipped"].get<bool>();
      }
    } else {
      throw Error(ErrorCode::SchemaViolation, "sensitivity artifact: accuracy must be a number");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace prunekit
