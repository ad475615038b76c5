#include "prunekit/model.hpp"

#include <algorithm>
#include <set>

namespace prunekit {

namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Input, "input"},
    {LayerKind::Conv2d, "conv2d"},
    {LayerKind::Dense, "dense"},
    {LayerKind::Relu, "relu"},
    {LayerKind::MaxPool2d, "maxpool2d"},
    {LayerKind::GlobalAvgPool, "globalavgpool"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Add, "add"},
    {LayerKind::Affine, "affine"},
};

std::size_t expected_arity(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return 0;
    case LayerKind::Add: return 2;
    default: return 1;
  }
}

// Weight roles a kind must carry; "bias" is the one optional role.
std::vector<std::string> required_roles(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::Dense: return {"weight"};
    case LayerKind::Affine: return {"scale", "shift"};
    default: return {};
  }
}

bool role_allowed(LayerKind kind, const std::string& role) {
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::Dense: return role == "weight" || role == "bias";
    case LayerKind::Affine: return role == "scale" || role == "shift";
    default: return false;
  }
}

struct Analysis {
  std::vector<Violation> violations;
  // inferred output shape per node; nullopt when inference failed upstream
  std::vector<std::optional<Shape>> shapes;
};

// Single pass computing both validation findings and output shapes.
Analysis analyze(const ModelGraph& g) {
  Analysis a;
  a.shapes.resize(g.nodes.size());

  auto flag = [&](ErrorCode code, const std::string& node, std::string msg) {
    a.violations.push_back({code, node, std::move(msg)});
  };

  std::map<std::string, std::size_t> defined;  // name -> index of first definition
  std::vector<std::size_t> consumer_count(g.nodes.size(), 0);
  std::size_t input_nodes = 0;

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& node = g.nodes[i];
    bool ok = true;

    if (node.name.empty()) {
      flag(ErrorCode::SchemaViolation, node.name, "node name must be nonempty");
      ok = false;
    }
    if (auto [it, inserted] = defined.try_emplace(node.name, i); !inserted) {
      flag(ErrorCode::DuplicateName, node.name, "duplicate node name");
      ok = false;
    }
    if (node.kind == LayerKind::Input) ++input_nodes;

    if (node.inputs.size() != expected_arity(node.kind)) {
      flag(ErrorCode::SchemaViolation, node.name,
           std::string(kind_name(node.kind)) + " takes " +
               std::to_string(expected_arity(node.kind)) + " input(s), got " +
               std::to_string(node.inputs.size()));
      ok = false;
    }

    // Producers must be defined earlier; this also rules out cycles.
    std::vector<std::optional<Shape>> in_shapes;
    for (const std::string& producer : node.inputs) {
      auto it = defined.find(producer);
      if (it == defined.end() || it->second >= i) {
        flag(ErrorCode::SchemaViolation, node.name,
             "input '" + producer + "' does not reference an earlier node");
        ok = false;
        in_shapes.emplace_back(std::nullopt);
      } else {
        consumer_count[it->second]++;
        in_shapes.push_back(a.shapes[it->second]);
      }
    }

    if (node.residual_last && node.kind != LayerKind::Conv2d) {
      flag(ErrorCode::SchemaViolation, node.name, "residual_last is only valid on conv2d");
    }
    if ((node.kind == LayerKind::Conv2d || node.kind == LayerKind::MaxPool2d) &&
        node.stride < 1) {
      flag(ErrorCode::SchemaViolation, node.name, "stride must be >= 1");
      ok = false;
    }
    if (node.kind == LayerKind::MaxPool2d && node.window < 1) {
      flag(ErrorCode::SchemaViolation, node.name, "window must be >= 1");
      ok = false;
    }

    // Weight references: required roles present, no stray roles, all resolvable, finite.
    for (const std::string& role : required_roles(node.kind)) {
      if (!node.weights.count(role)) {
        flag(ErrorCode::SchemaViolation, node.name, "missing weight role '" + role + "'");
        ok = false;
      }
    }
    for (const auto& [role, tensor_name] : node.weights) {
      if (!role_allowed(node.kind, role)) {
        flag(ErrorCode::SchemaViolation, node.name,
             "weight role '" + role + "' not valid for " + std::string(kind_name(node.kind)));
        ok = false;
      }
    }
    if ((node.kind == LayerKind::Conv2d || node.kind == LayerKind::Dense) &&
        node.has_bias != (node.weights.count("bias") > 0)) {
      flag(ErrorCode::SchemaViolation, node.name, "has_bias disagrees with bias reference");
      ok = false;
    }

    auto tensor = [&](const std::string& role) -> const WeightTensor* {
      auto ref = node.weights.find(role);
      if (ref == node.weights.end()) return nullptr;
      auto it = g.tensors.find(ref->second);
      if (it == g.tensors.end()) {
        flag(ErrorCode::DanglingTensor, node.name,
             "tensor '" + ref->second + "' not found in store");
        return nullptr;
      }
      if (!all_finite(it->second)) {
        flag(ErrorCode::NonFiniteWeight, node.name,
             "tensor '" + ref->second + "' contains NaN/Inf");
      }
      return &it->second;
    };

    if (!ok) continue;

    // Shape inference. Missing upstream shapes end the chain quietly;
    // the upstream node already carries the violation.
    auto need_in = [&](std::size_t slot) -> const Shape* {
      return (slot < in_shapes.size() && in_shapes[slot]) ? &*in_shapes[slot] : nullptr;
    };

    switch (node.kind) {
      case LayerKind::Input: {
        if (g.input_shape[0] == 0 || g.input_shape[1] == 0 || g.input_shape[2] == 0) {
          flag(ErrorCode::ShapeMismatch, node.name, "input_shape extents must be >= 1");
          break;
        }
        a.shapes[i] = Shape{{g.input_shape[0], g.input_shape[1], g.input_shape[2]}};
        break;
      }
      case LayerKind::Conv2d: {
        const WeightTensor* w = tensor("weight");
        const WeightTensor* b = tensor("bias");
        const Shape* in = need_in(0);
        if (!w || !in) break;
        if (w->rank() != 4) {
          flag(ErrorCode::ShapeMismatch, node.name,
               "conv2d weight must be rank 4, got rank " + std::to_string(w->rank()));
          break;
        }
        if (!in->spatial()) {
          flag(ErrorCode::ShapeMismatch, node.name, "conv2d needs a spatial (C,H,W) input");
          break;
        }
        const std::size_t c_out = w->shape()[0], c_in = w->shape()[1];
        const std::size_t kh = w->shape()[2], kw = w->shape()[3];
        if (in->dims[0] != c_in) {
          flag(ErrorCode::ShapeMismatch, node.name,
               "weight expects " + std::to_string(c_in) + " in-channels, input has " +
                   std::to_string(in->dims[0]));
          break;
        }
        if (b && (b->rank() != 1 || b->shape()[0] != c_out)) {
          flag(ErrorCode::ShapeMismatch, node.name, "bias length must equal out-channels");
          break;
        }
        const std::size_t h = in->dims[1], wdt = in->dims[2];
        const std::size_t s = static_cast<std::size_t>(node.stride);
        std::size_t h_out = 0, w_out = 0;
        if (node.padding == Padding::Valid) {
          if (h < kh || wdt < kw) {
            flag(ErrorCode::ShapeMismatch, node.name, "kernel larger than input under valid padding");
            break;
          }
          h_out = (h - kh) / s + 1;
          w_out = (wdt - kw) / s + 1;
        } else {
          h_out = (h + s - 1) / s;
          w_out = (wdt + s - 1) / s;
        }
        a.shapes[i] = Shape{{c_out, h_out, w_out}};
        break;
      }
      case LayerKind::Dense: {
        const WeightTensor* w = tensor("weight");
        const WeightTensor* b = tensor("bias");
        const Shape* in = need_in(0);
        if (!w || !in) break;
        if (w->rank() != 2) {
          flag(ErrorCode::ShapeMismatch, node.name,
               "dense weight must be rank 2, got rank " + std::to_string(w->rank()));
          break;
        }
        if (!in->flat()) {
          flag(ErrorCode::ShapeMismatch, node.name, "dense needs a flat input");
          break;
        }
        const std::size_t d_out = w->shape()[0], d_in = w->shape()[1];
        if (in->dims[0] != d_in) {
          flag(ErrorCode::ShapeMismatch, node.name,
               "weight expects " + std::to_string(d_in) + " inputs, got " +
                   std::to_string(in->dims[0]));
          break;
        }
        if (b && (b->rank() != 1 || b->shape()[0] != d_out)) {
          flag(ErrorCode::ShapeMismatch, node.name, "bias length must equal outputs");
          break;
        }
        a.shapes[i] = Shape{{d_out}};
        break;
      }
      case LayerKind::Relu: {
        if (const Shape* in = need_in(0)) a.shapes[i] = *in;
        break;
      }
      case LayerKind::MaxPool2d: {
        const Shape* in = need_in(0);
        if (!in) break;
        if (!in->spatial()) {
          flag(ErrorCode::ShapeMismatch, node.name, "maxpool2d needs a spatial input");
          break;
        }
        const std::size_t wnd = static_cast<std::size_t>(node.window);
        const std::size_t s = static_cast<std::size_t>(node.stride);
        if (in->dims[1] < wnd || in->dims[2] < wnd) {
          flag(ErrorCode::ShapeMismatch, node.name, "window larger than input");
          break;
        }
        a.shapes[i] = Shape{{in->dims[0], (in->dims[1] - wnd) / s + 1, (in->dims[2] - wnd) / s + 1}};
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const Shape* in = need_in(0);
        if (!in) break;
        if (!in->spatial()) {
          flag(ErrorCode::ShapeMismatch, node.name, "globalavgpool needs a spatial input");
          break;
        }
        a.shapes[i] = Shape{{in->dims[0]}};
        break;
      }
      case LayerKind::Flatten: {
        const Shape* in = need_in(0);
        if (!in) break;
        if (!in->spatial()) {
          flag(ErrorCode::ShapeMismatch, node.name, "flatten needs a spatial input");
          break;
        }
        a.shapes[i] = Shape{{in->dims[0] * in->dims[1] * in->dims[2]}};
        break;
      }
      case LayerKind::Add: {
        const Shape* lhs = need_in(0);
        const Shape* rhs = need_in(1);
        if (!lhs || !rhs) break;
        if (!(*lhs == *rhs)) {
          flag(ErrorCode::ShapeMismatch, node.name, "add inputs infer different shapes");
          break;
        }
        a.shapes[i] = *lhs;
        break;
      }
      case LayerKind::Affine: {
        const WeightTensor* scale = tensor("scale");
        const WeightTensor* shift = tensor("shift");
        const Shape* in = need_in(0);
        if (!scale || !shift || !in) break;
        const std::size_t channels = in->dims[0];
        if (scale->rank() != 1 || shift->rank() != 1 || scale->shape()[0] != channels ||
            shift->shape()[0] != channels) {
          flag(ErrorCode::ShapeMismatch, node.name,
               "scale/shift length must equal input channel count " + std::to_string(channels));
          break;
        }
        a.shapes[i] = *in;
        break;
      }
    }
  }

  // Graph-level findings.
  if (g.nodes.empty()) {
    flag(ErrorCode::SchemaViolation, "", "graph has no nodes");
  } else {
    if (input_nodes != 1) {
      flag(ErrorCode::SchemaViolation, "",
           "graph needs exactly one input placeholder, found " + std::to_string(input_nodes));
    }
    std::vector<std::string> sinks;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (consumer_count[i] == 0) sinks.push_back(g.nodes[i].name);
    }
    if (sinks.size() != 1) {
      std::string names;
      for (const auto& s : sinks) names += (names.empty() ? "" : ", ") + s;
      flag(ErrorCode::SchemaViolation, "",
           "graph needs exactly one output node, found " + std::to_string(sinks.size()) +
               (names.empty() ? "" : " (" + names + ")"));
    } else if (g.num_classes > 0) {
      auto it = g.name_index().find(sinks[0]);
      const std::optional<Shape>& out = a.shapes[it->second];
      if (out && out->flat() && out->dims[0] != g.num_classes) {
        flag(ErrorCode::ShapeMismatch, sinks[0],
             "output width " + std::to_string(out->dims[0]) + " != num_classes " +
                 std::to_string(g.num_classes));
      }
    }
  }

  return a;
}

}  // namespace

std::size_t Shape::elements() const {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string_view kind_name(LayerKind kind) {
  for (const auto& entry : kKindNames) {
    if (entry.kind == kind) return entry.name;
  }
  return "unknown";
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  for (const auto& entry : kKindNames) {
    if (entry.name == name) return entry.kind;
  }
  return std::nullopt;
}

const LayerNode* ModelGraph::find(const std::string& name) const {
  for (const LayerNode& node : nodes) {
    if (node.name == name) return &node;
  }
  return nullptr;
}

std::map<std::string, std::size_t> ModelGraph::name_index() const {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index.try_emplace(nodes[i].name, i);
  return index;
}

std::vector<Violation> validate_graph(const ModelGraph& g) { return analyze(g).violations; }

std::vector<Shape> infer_shapes(const ModelGraph& g) {
  Analysis a = analyze(g);
  if (!a.violations.empty()) {
    const Violation& v = a.violations.front();
    throw Error(ErrorCode::GraphInvalid,
                (v.node.empty() ? std::string("graph") : "node '" + v.node + "'") + ": " +
                    v.message);
  }
  std::vector<Shape> shapes;
  shapes.reserve(a.shapes.size());
  for (auto& s : a.shapes) shapes.push_back(std::move(*s));
  return shapes;
}

std::vector<std::string> prunable_layers(const ModelGraph& g) {
  std::vector<std::string> out;
  for (const LayerNode& node : g.nodes) {
    if (node.kind == LayerKind::Conv2d && !node.residual_last) out.push_back(node.name);
  }
  return out;
}

}  // namespace prunekit
