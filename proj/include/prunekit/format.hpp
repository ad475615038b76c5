#pragma once

#include <filesystem>
#include <map>

#include "prunekit/model.hpp"

namespace prunekit {

// On-disk model = PKM manifest (JSON) + PKMT tensor blob.
//
// PKMT blob layout (all integers little-endian):
//   u32  tensor_count
//   tensor_count entries of:
//     u16 name_len | name bytes (UTF-8) | record
//   u32  CRC32 of every preceding byte (IEEE, as computed by zlib)
// record:
//   "PKMT" | u32 version (=1) | u32 rank (1..4) | rank x u64 extents |
//   product(extents) x f32 (IEEE-754 little-endian)
//
// PKM manifest (JSON):
//   { "format": "pkm-1", "input_shape": [C,H,W], "num_classes": K,
//     "nodes": [ { "name", "kind", "inputs": [...], "attrs": {...},
//                  "weights": {"weight": "...", ...}, "residual_last": bool } ] }
// Kinds: input, conv2d, dense, relu, maxpool2d, globalavgpool, flatten, add, affine.
// attrs: conv2d {stride, padding:"same"|"valid", has_bias}; maxpool2d {window, stride}.
//
// A dataset is two PKMT files: inputs holds one rank-4 (N,C,H,W) tensor,
// labels one rank-1 tensor of integral values.

std::map<std::string, WeightTensor> load_blob(const std::filesystem::path& path);
void save_blob(const std::map<std::string, WeightTensor>& tensors,
               const std::filesystem::path& path);

ModelGraph load_model(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& blob_path);

// Refuses to write a graph that fails validate_graph.
void save_model(const ModelGraph& g, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path);

Dataset load_dataset(const std::filesystem::path& inputs_path,
                     const std::filesystem::path& labels_path);
void save_dataset(const Dataset& d, const std::filesystem::path& inputs_path,
                  const std::filesystem::path& labels_path);

// Companion blob path for a manifest: x.pkm -> x.pkmt.
std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path);

}  // namespace prunekit
