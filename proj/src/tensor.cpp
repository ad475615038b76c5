#include "prunekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace prunekit {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw Error(ErrorCode::ShapeMismatch,
                "tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw Error(ErrorCode::ShapeMismatch, "tensor extent must be >= 1");
    }
    n *= extent;
  }
  return n;
}

// Validates, sorts and dedup-checks a removal index set against an axis extent.
std::vector<std::size_t> normalize_indices(std::span<const std::size_t> indices,
                                           std::size_t extent) {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] >= extent) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "index " + std::to_string(sorted[i]) + " out of range [0, " +
                      std::to_string(extent) + ")");
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw Error(ErrorCode::DuplicateIndex, "duplicate index " + std::to_string(sorted[i]));
    }
  }
  if (sorted.size() == extent) {
    throw Error(ErrorCode::LayerEmptied, "layer would be emptied");
  }
  return sorted;
}

WeightTensor drop_along_axis(const WeightTensor& t, std::span<const std::size_t> indices,
                             std::size_t axis) {
  const auto& shape = t.shape();
  const std::vector<std::size_t> sorted = normalize_indices(indices, shape[axis]);
  if (sorted.empty()) {
    return t;
  }

  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];

  const std::size_t old_extent = shape[axis];
  const std::size_t new_extent = old_extent - sorted.size();

  std::vector<bool> removed(old_extent, false);
  for (std::size_t idx : sorted) removed[idx] = true;

  std::vector<float> out;
  out.reserve(outer * new_extent * inner);
  std::span<const float> src = t.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t e = 0; e < old_extent; ++e) {
      if (removed[e]) continue;
      const float* row = src.data() + (o * old_extent + e) * inner;
      out.insert(out.end(), row, row + inner);
    }
  }

  std::vector<std::size_t> new_shape = shape;
  new_shape[axis] = new_extent;
  return WeightTensor(std::move(new_shape), std::move(out));
}

}  // namespace

WeightTensor::WeightTensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected = checked_element_count(shape_);
  if (expected != data_.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "shape wants " + std::to_string(expected) + " elements, got " +
                    std::to_string(data_.size()));
  }
}

std::span<const float> filter_span(const WeightTensor& t, std::size_t j) {
  if (t.rank() != 4) {
    throw Error(ErrorCode::ShapeMismatch,
                "filter access needs a rank-4 tensor, got rank " + std::to_string(t.rank()));
  }
  const auto& s = t.shape();
  if (j >= s[0]) {
    throw Error(ErrorCode::IndexOutOfRange,
                "filter " + std::to_string(j) + " out of range [0, " + std::to_string(s[0]) + ")");
  }
  const std::size_t block = s[1] * s[2] * s[3];
  return t.data().subspan(j * block, block);
}

WeightTensor slice_filter(const WeightTensor& t, std::size_t j) {
  std::span<const float> row = filter_span(t, j);
  const auto& s = t.shape();
  return WeightTensor({s[1], s[2], s[3]}, std::vector<float>(row.begin(), row.end()));
}

WeightTensor drop_output_filters(const WeightTensor& t, std::span<const std::size_t> indices) {
  return drop_along_axis(t, indices, 0);
}

WeightTensor drop_input_channels(const WeightTensor& t, std::span<const std::size_t> indices) {
  if (t.rank() < 2) {
    throw Error(ErrorCode::ShapeMismatch, "input-channel removal needs rank >= 2");
  }
  return drop_along_axis(t, indices, 1);
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "vector lengths differ: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

bool all_finite(const WeightTensor& t) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const WeightTensor& a, const WeightTensor& b) {
  if (a.shape() != b.shape()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

}  // namespace prunekit
