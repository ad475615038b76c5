#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

enum class LayerKind {
  Input,  // placeholder carrying the model input, exactly one per graph
  Conv2d,
  Dense,
  Relu,
  MaxPool2d,
  GlobalAvgPool,
  Flatten,
  Add,
  Affine,  // pre-folded batch norm: per-channel scale * x + shift
};

std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> kind_from_name(std::string_view name);

enum class Padding { Valid, Same };

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::Input;
  std::vector<std::string> inputs;  // producer names; 2 for add, 0 for input, 1 otherwise

  // kind-specific attributes
  int stride = 1;                    // conv2d, maxpool2d
  Padding padding = Padding::Valid;  // conv2d
  int window = 2;                    // maxpool2d
  bool has_bias = false;             // conv2d, dense

  // role -> tensor name; roles: "weight"/"bias" (conv2d, dense), "scale"/"shift" (affine)
  std::map<std::string, std::string> weights;

  // conv2d only: last convolution of a residual block, exempt from pruning
  bool residual_last = false;
};

// Output shape of a node: (C,H,W) spatial or (D) flat.
struct Shape {
  std::vector<std::size_t> dims;

  bool spatial() const { return dims.size() == 3; }
  bool flat() const { return dims.size() == 1; }
  std::size_t elements() const;

  bool operator==(const Shape&) const = default;
};

struct ModelGraph {
  std::vector<LayerNode> nodes;              // topological order
  std::array<std::size_t, 3> input_shape{};  // C,H,W
  std::size_t num_classes = 0;               // 0 = unchecked (analysis-only graphs)
  std::map<std::string, WeightTensor> tensors;

  const LayerNode* find(const std::string& name) const;
  std::map<std::string, std::size_t> name_index() const;
};

struct Violation {
  ErrorCode code;
  std::string node;  // empty for graph-level findings
  std::string message;
};

// Every invariant violation, in node order (graph-level findings last).
// Violations are data, not exceptions; an empty result means valid.
std::vector<Violation> validate_graph(const ModelGraph& g);

// Output shapes aligned with g.nodes. Throws GraphInvalid if validation fails.
std::vector<Shape> infer_shapes(const ModelGraph& g);

// conv2d layers eligible for pruning (residual_last excluded), topological order.
std::vector<std::string> prunable_layers(const ModelGraph& g);

struct Dataset {
  WeightTensor inputs;  // (N,C,H,W)
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

}  // namespace prunekit
