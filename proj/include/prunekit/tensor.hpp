#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prunekit/error.hpp"

namespace prunekit {

// Dense row-major float tensor. Rank-4 weights use the axis order
// (out_channels, in_channels, kernel_h, kernel_w); rank-2 dense weights
// use (out, in). Immutable after construction: every operation below
// returns a fresh tensor, so instances are safe to share across threads.
class WeightTensor {
 public:
  WeightTensor() = default;
  WeightTensor(std::vector<std::size_t> shape, std::vector<float> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::span<const float> data() const { return data_; }
  float operator[](std::size_t flat_index) const { return data_[flat_index]; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

// Zero-copy view of filter j of a rank-4 tensor (length in*kh*kw).
std::span<const float> filter_span(const WeightTensor& t, std::size_t j);

// Filter j of a rank-4 tensor as a rank-3 (in, kh, kw) tensor.
WeightTensor slice_filter(const WeightTensor& t, std::size_t j);

// Remove entries along axis 0 (filters of conv weights, rows of dense
// weights, elements of rank-1 bias vectors). Survivors keep order and
// exact values. Removing every entry is an error.
WeightTensor drop_output_filters(const WeightTensor& t, std::span<const std::size_t> indices);

// Remove entries along axis 1 (conv in-channels, dense in-columns).
WeightTensor drop_input_channels(const WeightTensor& t, std::span<const std::size_t> indices);

double euclidean_distance(std::span<const float> a, std::span<const float> b);

bool all_finite(const WeightTensor& t);

// Shape equality plus bit-exact data (distinguishes -0.0, compares NaN equal to itself).
bool bitwise_equal(const WeightTensor& a, const WeightTensor& b);

}  // namespace prunekit
