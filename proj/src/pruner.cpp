#include "prunekit/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

namespace prunekit {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

double reduction_pct(std::uint64_t before, std::uint64_t after) {
  if (before == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before));
}

const LayerNode& prunable_conv(const ModelGraph& g, const std::string& layer) {
  const LayerNode* node = g.find(layer);
  if (node == nullptr || node->kind != LayerKind::Conv2d) {
    throw Error(ErrorCode::NotPrunable, "layer '" + layer + "' is not a convolution");
  }
  return *node;
}

}  // namespace

std::size_t removal_count(double ratio, std::size_t filters) {
  // The epsilon absorbs decimal-representation error (0.3*10 < 3 in binary).
  return static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(filters) + 1e-9));
}

PruningPlan build_plan(const ModelGraph& g, std::span<const FilterRanking> rankings,
                       const std::map<std::string, double>& ratios) {
  PruningPlan plan;
  plan.ratios = ratios;
  bool method_set = false;
  for (const auto& [layer, ratio] : ratios) {
    const LayerNode& node = prunable_conv(g, layer);
    if (!std::isfinite(ratio) || ratio < 0.0 || ratio > 1.0) {
      throw Error(ErrorCode::RatioOutOfRange,
                  "ratio " + std::to_string(ratio) + " for layer '" + layer + "'");
    }
    if (node.residual_last) {
      plan.warnings.push_back("layer '" + layer + "' closes a residual block; exempt from pruning");
      continue;
    }
    const FilterRanking* ranking = nullptr;
    for (const FilterRanking& cand : rankings) {
      if (cand.layer == layer) {
        ranking = &cand;
        break;
      }
    }
    if (ranking == nullptr) {
      throw Error(ErrorCode::RankingMismatch, "no ranking for layer '" + layer + "'");
    }
    const std::size_t filters = g.tensors.at(node.weights.at("weight")).shape()[0];
    if (ranking->order.size() != filters) {
      throw Error(ErrorCode::RankingMismatch,
                  "ranking for layer '" + layer + "' covers " +
                      std::to_string(ranking->order.size()) + " filters, layer has " +
                      std::to_string(filters));
    }
    if (!method_set) {
      plan.method = ranking->method;
      method_set = true;
    } else if (plan.method != ranking->method) {
      throw Error(ErrorCode::RankingMismatch, "rankings mix methods");
    }
    const std::size_t remove = removal_count(ratio, filters);
    if (remove >= filters) {
      throw Error(ErrorCode::LayerEmptied,
                  "ratio " + std::to_string(ratio) + " would empty layer '" + layer + "'");
    }
    std::vector<std::size_t> selected(ranking->order.begin(),
                                      ranking->order.begin() + static_cast<std::ptrdiff_t>(remove));
    std::sort(selected.begin(), selected.end());
    plan.layers[layer] = std::move(selected);
  }
  return plan;
}

ModelGraph apply_plan(const ModelGraph& g, const PruningPlan& p) {
  const std::vector<Shape> shapes = infer_shapes(g);
  const std::map<std::string, std::size_t> index = g.name_index();

  for (const auto& [layer, indices] : p.layers) {
    const LayerNode& node = prunable_conv(g, layer);
    if (node.residual_last && !indices.empty()) {
      throw Error(ErrorCode::NotPrunable, "layer '" + layer + "' closes a residual block");
    }
  }

  ModelGraph out = g;
  // Removed output indices per node, in each node's ORIGINAL indexing.
  std::vector<std::vector<std::size_t>> removed(g.nodes.size());
  std::set<std::string> touched;
  const auto mutate = [&](const std::string& tensor_name, WeightTensor replacement) {
    if (!touched.insert(tensor_name).second) {
      throw Error(ErrorCode::GraphInvalid,
                  "tensor '" + tensor_name + "' is shared between pruned nodes");
    }
    out.tensors[tensor_name] = std::move(replacement);
  };

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& node = g.nodes[i];
    static const std::vector<std::size_t> kNone;
    const std::vector<std::size_t>& incoming =
        node.inputs.empty() ? kNone : removed[index.at(node.inputs[0])];

    switch (node.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv2d: {
        const auto plan_it = p.layers.find(node.name);
        const std::vector<std::size_t>& own = plan_it == p.layers.end() ? kNone : plan_it->second;
        if (!incoming.empty() || !own.empty()) {
          WeightTensor w = g.tensors.at(node.weights.at("weight"));
          if (!incoming.empty()) w = drop_input_channels(w, incoming);
          if (!own.empty()) w = drop_output_filters(w, own);
          mutate(node.weights.at("weight"), std::move(w));
          if (node.has_bias && !own.empty()) {
            mutate(node.weights.at("bias"),
                   drop_output_filters(g.tensors.at(node.weights.at("bias")), own));
          }
        }
        removed[i] = own;
        break;
      }
      case LayerKind::Dense: {
        if (!incoming.empty()) {
          mutate(node.weights.at("weight"),
                 drop_input_channels(g.tensors.at(node.weights.at("weight")), incoming));
        }
        break;  // dense outputs are never pruned
      }
      case LayerKind::Relu:
      case LayerKind::MaxPool2d:
      case LayerKind::GlobalAvgPool:
        // channel c maps to channel c (and to flat index c for the pool)
        removed[i] = incoming;
        break;
      case LayerKind::Flatten: {
        const Shape& in_shape = shapes[index.at(node.inputs[0])];
        const std::size_t area = in_shape.dims[1] * in_shape.dims[2];
        for (std::size_t c : incoming) {
          for (std::size_t k = 0; k < area; ++k) removed[i].push_back(c * area + k);
        }
        break;
      }
      case LayerKind::Add: {
        const std::vector<std::size_t>& other = removed[index.at(node.inputs[1])];
        if (incoming != other) {
          throw Error(ErrorCode::AddShapeConflict,
                      "node '" + node.name + "' would add mismatched channel sets");
        }
        removed[i] = incoming;
        break;
      }
      case LayerKind::Affine: {
        if (!incoming.empty()) {
          mutate(node.weights.at("scale"),
                 drop_output_filters(g.tensors.at(node.weights.at("scale")), incoming));
          mutate(node.weights.at("shift"),
                 drop_output_filters(g.tensors.at(node.weights.at("shift")), incoming));
        }
        removed[i] = incoming;
        break;
      }
    }
  }

  const std::vector<Violation> violations = validate_graph(out);
  if (!violations.empty()) {
    throw Error(ErrorCode::GraphInvalid, "pruned graph failed validation: " +
                                             violations.front().message);
  }
  return out;
}

std::uint64_t count_params(const ModelGraph& g) {
  std::uint64_t total = 0;
  for (const LayerNode& node : g.nodes) {
    switch (node.kind) {
      case LayerKind::Conv2d: {
        const auto& s = g.tensors.at(node.weights.at("weight")).shape();
        total += static_cast<std::uint64_t>(s[0]) * s[1] * s[2] * s[3];
        if (node.has_bias) total += s[0];
        break;
      }
      case LayerKind::Dense: {
        const auto& s = g.tensors.at(node.weights.at("weight")).shape();
        total += static_cast<std::uint64_t>(s[0]) * s[1];
        if (node.has_bias) total += s[0];
        break;
      }
      case LayerKind::Affine:
        total += 2 * static_cast<std::uint64_t>(
                         g.tensors.at(node.weights.at("scale")).shape()[0]);
        break;
      default:
        break;
    }
  }
  return total;
}

std::uint64_t count_flops(const ModelGraph& g) {
  const std::vector<Shape> shapes = infer_shapes(g);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& node = g.nodes[i];
    const std::uint64_t out_elems = shapes[i].elements();
    switch (node.kind) {
      case LayerKind::Conv2d: {
        const auto& s = g.tensors.at(node.weights.at("weight")).shape();
        const std::uint64_t per_output = 2 * static_cast<std::uint64_t>(s[1]) * s[2] * s[3];
        total += per_output * out_elems;  // out_elems = Cout*Hout*Wout
        if (node.has_bias) total += out_elems;
        break;
      }
      case LayerKind::Dense: {
        const auto& s = g.tensors.at(node.weights.at("weight")).shape();
        total += 2 * static_cast<std::uint64_t>(s[0]) * s[1];
        if (node.has_bias) total += s[0];
        break;
      }
      case LayerKind::Affine:
        total += 2 * out_elems;
        break;
      case LayerKind::Relu:
      case LayerKind::MaxPool2d:
      case LayerKind::GlobalAvgPool:
      case LayerKind::Add:
        total += out_elems;
        break;
      case LayerKind::Input:
      case LayerKind::Flatten:
        break;
    }
  }
  return total;
}

std::string_view flops_convention() {
  return "multiply-accumulate = 2 FLOPs; relu/pool/add = 1 FLOP per output element; flatten = 0";
}

ReductionReport reduction_report(const ModelGraph& before, const ModelGraph& after) {
  ReductionReport r;
  r.params_before = count_params(before);
  r.params_after = count_params(after);
  r.flops_before = count_flops(before);
  r.flops_after = count_flops(after);
  r.params_reduction_pct = reduction_pct(r.params_before, r.params_after);
  r.flops_reduction_pct = reduction_pct(r.flops_before, r.flops_after);
  return r;
}

ReductionReport reduction_report(const ModelGraph& before, const ModelGraph& after,
                                 double acc_before, double acc_after) {
  ReductionReport r = reduction_report(before, after);
  r.acc_before = acc_before;
  r.acc_after = acc_after;
  r.acc_drop_pct = (acc_before - acc_after) * 100.0;
  return r;
}

std::string report_text(const ReductionReport& r) {
  const std::string h1 = "Acc. Drop(%)";
  const std::string h2 = "Params Reduction(%)";
  const std::string h3 = "FLOPs Reduction(%)";
  std::ostringstream out;
  out << "FLOPs convention: " << flops_convention() << "\n";
  out << "Params: " << r.params_before << " -> " << r.params_after
      << "  FLOPs: " << r.flops_before << " -> " << r.flops_after << "\n";
  out << h1 << "  " << h2 << "  " << h3 << "\n";
  out << pad_left(r.acc_drop_pct ? fmt2(*r.acc_drop_pct) : "-", h1.size()) << "  "
      << pad_left(fmt2(r.params_reduction_pct), h2.size()) << "  "
      << pad_left(fmt2(r.flops_reduction_pct), h3.size()) << "\n";
  return out.str();
}

std::string report_json(const ReductionReport& r) {
  ordered_json doc;
  doc["convention"] = std::string(flops_convention());
  doc["params_before"] = r.params_before;
  doc["params_after"] = r.params_after;
  doc["params_reduction_pct"] = r.params_reduction_pct;
  doc["flops_before"] = r.flops_before;
  doc["flops_after"] = r.flops_after;
  doc["flops_reduction_pct"] = r.flops_reduction_pct;
  if (r.acc_before) doc["acc_before"] = *r.acc_before;
  if (r.acc_after) doc["acc_after"] = *r.acc_after;
  if (r.acc_drop_pct) doc["acc_drop_pct"] = *r.acc_drop_pct;
  return doc.dump(2) + "\n";
}

std::vector<LayerSignReport> sign_ratio_report(const ModelGraph& g) {
  std::vector<LayerSignReport> report;
  for (const LayerNode& node : g.nodes) {
    if (node.kind != LayerKind::Conv2d) continue;
    const WeightTensor& w = g.tensors.at(node.weights.at("weight"));
    LayerSignReport layer{node.name, {}};
    for (std::size_t j = 0; j < w.shape()[0]; ++j) {
      const auto span = filter_span(w, j);
      std::size_t positives = 0;
      for (float v : span) {
        if (v > 0.0f) ++positives;
      }
      const SignSplit split = sign_sums(span);
      FilterSignStats stats;
      stats.index = j;
      stats.positive_ratio = static_cast<double>(positives) / static_cast<double>(span.size());
      stats.s_pos = split.s_pos;
      stats.s_neg_abs = -split.s_neg;
      stats.positive_prone = stats.positive_ratio >= 0.5;
      layer.filters.push_back(stats);
    }
    report.push_back(std::move(layer));
  }
  return report;
}

std::string sign_report_json(std::span<const LayerSignReport> layers) {
  ordered_json doc;
  ordered_json list = ordered_json::array();
  for (const LayerSignReport& layer : layers) {
    ordered_json jl;
    jl["layer"] = layer.layer;
    ordered_json filters = ordered_json::array();
    for (const FilterSignStats& f : layer.filters) {
      ordered_json jf;
      jf["index"] = f.index;
      jf["positive_ratio"] = f.positive_ratio;
      jf["s_pos"] = f.s_pos;
      jf["s_neg_abs"] = f.s_neg_abs;
      jf["positive_prone"] = f.positive_prone;
      filters.push_back(std::move(jf));
    }
    jl["filters"] = std::move(filters);
    list.push_back(std::move(jl));
  }
  doc["layers"] = std::move(list);
  return doc.dump(2) + "\n";
}

std::string plan_to_json(const PruningPlan& p) {
  ordered_json doc;
  doc["method"] = std::string(method_name(p.method));
  ordered_json layers = ordered_json::object();
  for (const auto& [name, indices] : p.layers) layers[name] = indices;
  doc["layers"] = std::move(layers);
  if (p.threshold) doc["threshold"] = *p.threshold;
  if (!p.ratios.empty()) {
    ordered_json ratios = ordered_json::object();
    for (const auto& [name, r] : p.ratios) ratios[name] = r;
    doc["ratios"] = std::move(ratios);
  }
  if (!p.warnings.empty()) doc["warnings"] = p.warnings;
  return doc.dump(2) + "\n";
}

PruningPlan plan_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("plan artifact: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("method") || !doc["method"].is_string() ||
      !doc.contains("layers") || !doc["layers"].is_object()) {
    throw Error(ErrorCode::SchemaViolation, "plan artifact: need 'method' and 'layers'");
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "method" && it.key() != "layers" && it.key() != "threshold" &&
        it.key() != "ratios" && it.key() != "warnings") {
      throw Error(ErrorCode::SchemaViolation, "plan artifact: unknown key '" + it.key() + "'");
    }
  }
  PruningPlan p;
  const auto method = method_from_name(doc["method"].get<std::string>());
  if (!method) {
    throw Error(ErrorCode::SchemaViolation,
                "plan artifact: unknown method '" + doc["method"].get<std::string>() + "'");
  }
  p.method = *method;
  for (auto it = doc["layers"].begin(); it != doc["layers"].end(); ++it) {
    if (!it.value().is_array()) {
      throw Error(ErrorCode::SchemaViolation, "plan artifact: layer entries must be arrays");
    }
    std::vector<std::size_t> indices;
    for (const auto& v : it.value()) {
      if (!v.is_number_unsigned()) {
        throw Error(ErrorCode::SchemaViolation, "plan artifact: indices must be non-negative");
      }
      indices.push_back(v.get<std::size_t>());
    }
    p.layers[it.key()] = std::move(indices);
  }
  if (doc.contains("threshold")) {
    if (!doc["threshold"].is_number()) {
      throw Error(ErrorCode::SchemaViolation, "plan artifact: threshold must be a number");
    }
    p.threshold = doc["threshold"].get<double>();
  }
  if (doc.contains("ratios")) {
    if (!doc["ratios"].is_object()) {
      throw Error(ErrorCode::SchemaViolation, "plan artifact: ratios must be an object");
    }
    for (auto it = doc["ratios"].begin(); it != doc["ratios"].end(); ++it) {
      if (!it.value().is_number()) {
        throw Error(ErrorCode::SchemaViolation, "plan artifact: ratios must be numbers");
      }
      p.ratios[it.key()] = it.value().get<double>();
    }
  }
  if (doc.contains("warnings")) {
    if (!doc["warnings"].is_array()) {
      throw Error(ErrorCode::SchemaViolation, "plan artifact: warnings must be an array");
    }
    for (const auto& v : doc["warnings"]) {
      if (!v.is_string()) {
        throw Error(ErrorCode::SchemaViolation, "plan artifact: warnings must be strings");
      }
      p.warnings.push_back(v.get<std::string>());
    }
  }
  return p;
}

}  // namespace prunekit
