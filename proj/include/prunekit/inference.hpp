#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prunekit/model.hpp"

namespace prunekit {

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

// Run one sample (channel-major C*H*W floats) through the graph and return
// the sink node's activation. Deterministic: identical graph and input give
// bit-identical output. Throws GraphInvalid when validation fails and
// ShapeMismatch when x does not match input_shape.
std::vector<float> forward(const ModelGraph& g, std::span<const float> x);

// Top-k accuracy over a dataset. A sample counts as correct when fewer than
// k classes strictly beat the label's logit, ties resolved toward lower
// class indices (k=1 is argmax with lowest-index tie-breaking).
EvalResult evaluate(const ModelGraph& g, const Dataset& d, std::size_t topk = 1);

}  // namespace prunekit
