#include "prunekit/format.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "PKMT serialization assumes a little-endian host");

namespace prunekit {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'P', 'K', 'M', 'T'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr std::uint16_t kMaxNameLen = 4096;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

// --- blob reading -----------------------------------------------------------

struct Cursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n) const {
    if (pos + n > size) {
      throw Error(ErrorCode::TruncatedBlob,
                  path + ": blob truncated at byte " + std::to_string(pos));
    }
  }

  template <typename T>
  T read() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data + pos, sizeof(T));
    pos += sizeof(T);
    return value;
  }

  std::string read_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw Error(ErrorCode::IoError, "read failure on '" + path.string() + "'");
  }
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::IoError, "write failure on '" + path.string() + "'");
  }
}

template <typename T>
void append(std::vector<std::uint8_t>& buf, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  buf.insert(buf.end(), p, p + sizeof(T));
}

// --- manifest helpers -------------------------------------------------------

[[noreturn]] void schema_error(const std::string& context, const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, context + ": " + what);
}

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) schema_error(context, "unknown key '" + it.key() + "'");
  }
}

std::size_t positive_size(const json& v, const std::string& context) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() > 0)) {
    schema_error(context, "expected a positive integer");
  }
  const std::int64_t n = v.get<std::int64_t>();
  if (n < 1) schema_error(context, "expected a positive integer");
  return static_cast<std::size_t>(n);
}

LayerNode parse_node(const json& jn, std::size_t position) {
  const std::string context =
      "node #" + std::to_string(position) +
      (jn.is_object() && jn.contains("name") && jn["name"].is_string()
           ? " ('" + jn["name"].get<std::string>() + "')"
           : "");
  if (!jn.is_object()) schema_error(context, "node must be an object");
  check_keys(jn, {"name", "kind", "inputs", "attrs", "weights", "residual_last"}, context);

  LayerNode node;
  if (!jn.contains("name") || !jn["name"].is_string()) schema_error(context, "missing 'name'");
  node.name = jn["name"].get<std::string>();
  if (!jn.contains("kind") || !jn["kind"].is_string()) schema_error(context, "missing 'kind'");
  auto kind = kind_from_name(jn["kind"].get<std::string>());
  if (!kind) schema_error(context, "unknown kind '" + jn["kind"].get<std::string>() + "'");
  node.kind = *kind;

  if (jn.contains("inputs")) {
    if (!jn["inputs"].is_array()) schema_error(context, "'inputs' must be an array");
    for (const auto& v : jn["inputs"]) {
      if (!v.is_string()) schema_error(context, "'inputs' entries must be strings");
      node.inputs.push_back(v.get<std::string>());
    }
  }

  if (jn.contains("attrs")) {
    const json& attrs = jn["attrs"];
    if (!attrs.is_object()) schema_error(context, "'attrs' must be an object");
    switch (node.kind) {
      case LayerKind::Conv2d: {
        check_keys(attrs, {"stride", "padding", "has_bias"}, context);
        if (attrs.contains("stride"))
          node.stride = static_cast<int>(positive_size(attrs["stride"], context + " stride"));
        if (attrs.contains("padding")) {
          const std::string p = attrs["padding"].is_string() ? attrs["padding"].get<std::string>() : "";
          if (p == "valid") node.padding = Padding::Valid;
          else if (p == "same") node.padding = Padding::Same;
          else schema_error(context, "padding must be \"same\" or \"valid\"");
        }
        break;
      }
      case LayerKind::MaxPool2d: {
        check_keys(attrs, {"window", "stride"}, context);
        if (attrs.contains("window"))
          node.window = static_cast<int>(positive_size(attrs["window"], context + " window"));
        if (attrs.contains("stride"))
          node.stride = static_cast<int>(positive_size(attrs["stride"], context + " stride"));
        break;
      }
      default:
        if (!attrs.empty()) schema_error(context, "attrs not valid for this kind");
    }
    if (node.kind == LayerKind::Conv2d && attrs.contains("has_bias")) {
      if (!attrs["has_bias"].is_boolean()) schema_error(context, "has_bias must be a bool");
      node.has_bias = attrs["has_bias"].get<bool>();
    }
  }

  if (jn.contains("weights")) {
    if (!jn["weights"].is_object()) schema_error(context, "'weights' must be an object");
    for (auto it = jn["weights"].begin(); it != jn["weights"].end(); ++it) {
      if (!it.value().is_string()) schema_error(context, "weight references must be strings");
      node.weights[it.key()] = it.value().get<std::string>();
    }
  }
  // has_bias defaults to bias presence; an explicit attr must agree (validate_graph checks).
  if (node.kind == LayerKind::Conv2d || node.kind == LayerKind::Dense) {
    if (!(jn.contains("attrs") && jn["attrs"].contains("has_bias"))) {
      node.has_bias = node.weights.count("bias") > 0;
    }
  }

  if (jn.contains("residual_last")) {
    if (!jn["residual_last"].is_boolean()) schema_error(context, "residual_last must be a bool");
    node.residual_last = jn["residual_last"].get<bool>();
  }
  return node;
}

ordered_json node_to_json(const LayerNode& node) {
  ordered_json jn;
  jn["name"] = node.name;
  jn["kind"] = std::string(kind_name(node.kind));
  jn["inputs"] = node.inputs;
  if (node.kind == LayerKind::Conv2d) {
    jn["attrs"] = {{"stride", node.stride},
                   {"padding", node.padding == Padding::Same ? "same" : "valid"},
                   {"has_bias", node.has_bias}};
  } else if (node.kind == LayerKind::MaxPool2d) {
    jn["attrs"] = {{"window", node.window}, {"stride", node.stride}};
  }
  if (!node.weights.empty()) {
    ordered_json w;
    for (const auto& [role, tensor_name] : node.weights) w[role] = tensor_name;
    jn["weights"] = w;
  }
  if (node.residual_last) jn["residual_last"] = true;
  return jn;
}

WeightTensor single_tensor(const std::filesystem::path& path, std::size_t want_rank,
                           const std::string& what) {
  auto tensors = load_blob(path);
  if (tensors.size() != 1) {
    throw Error(ErrorCode::SchemaViolation,
                path.string() + ": " + what + " blob must hold exactly one tensor, found " +
                    std::to_string(tensors.size()));
  }
  WeightTensor t = std::move(tensors.begin()->second);
  if (t.rank() != want_rank) {
    throw Error(ErrorCode::ShapeMismatch,
                path.string() + ": " + what + " tensor must be rank " +
                    std::to_string(want_rank) + ", got rank " + std::to_string(t.rank()));
  }
  if (!all_finite(t)) {
    throw Error(ErrorCode::NonFiniteWeight, path.string() + ": " + what + " contains NaN/Inf");
  }
  return t;
}

}  // namespace

std::map<std::string, WeightTensor> load_blob(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Cursor cur{bytes.data(), bytes.size(), 0, path.string()};

  std::map<std::string, WeightTensor> tensors;
  const std::uint32_t count = cur.read<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = cur.read<std::uint16_t>();
    if (name_len == 0 || name_len > kMaxNameLen) {
      throw Error(ErrorCode::MalformedBlob, path.string() + ": bad tensor name length");
    }
    const std::string name = cur.read_string(name_len);

    char magic[4];
    cur.need(4);
    std::memcpy(magic, cur.data + cur.pos, 4);
    cur.pos += 4;
    if (std::memcmp(magic, kMagic, 4) != 0) {
      throw Error(ErrorCode::BadMagic, path.string() + ": tensor '" + name + "' lacks PKMT magic");
    }
    const std::uint32_t version = cur.read<std::uint32_t>();
    if (version != kBlobVersion) {
      throw Error(ErrorCode::BadVersion,
                  path.string() + ": unsupported PKMT version " + std::to_string(version));
    }
    const std::uint32_t rank = cur.read<std::uint32_t>();
    if (rank < 1 || rank > 4) {
      throw Error(ErrorCode::MalformedBlob,
                  path.string() + ": tensor '" + name + "' has rank " + std::to_string(rank));
    }
    std::vector<std::size_t> shape(rank);
    std::uint64_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint64_t extent = cur.read<std::uint64_t>();
      if (extent == 0 || elements > kMaxElements / std::max<std::uint64_t>(extent, 1)) {
        throw Error(ErrorCode::MalformedBlob,
                    path.string() + ": tensor '" + name + "' has invalid extents");
      }
      elements *= extent;
      shape[r] = static_cast<std::size_t>(extent);
    }
    cur.need(static_cast<std::size_t>(elements) * sizeof(float));
    std::vector<float> data(static_cast<std::size_t>(elements));
    std::memcpy(data.data(), cur.data + cur.pos, data.size() * sizeof(float));
    cur.pos += data.size() * sizeof(float);

    if (!tensors.emplace(name, WeightTensor(std::move(shape), std::move(data))).second) {
      throw Error(ErrorCode::DuplicateName, path.string() + ": duplicate tensor '" + name + "'");
    }
  }

  if (cur.size - cur.pos < 4) {
    throw Error(ErrorCode::TruncatedBlob, path.string() + ": missing trailing checksum");
  }
  if (cur.size - cur.pos > 4) {
    throw Error(ErrorCode::MalformedBlob, path.string() + ": trailing bytes after checksum");
  }
  const std::uint32_t stored = cur.read<std::uint32_t>();
  const std::uint32_t actual = crc_of(bytes.data(), bytes.size() - 4);
  if (stored != actual) {
    throw Error(ErrorCode::BadChecksum, path.string() + ": blob checksum mismatch");
  }
  return tensors;
}

void save_blob(const std::map<std::string, WeightTensor>& tensors,
               const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  append(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (name.empty() || name.size() > kMaxNameLen) {
      throw Error(ErrorCode::MalformedBlob, "tensor name length out of range: '" + name + "'");
    }
    append(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.insert(buf.end(), kMagic, kMagic + 4);
    append(buf, kBlobVersion);
    append(buf, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t extent : tensor.shape()) append(buf, static_cast<std::uint64_t>(extent));
    const auto data = tensor.data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
    buf.insert(buf.end(), raw, raw + data.size() * sizeof(float));
  }
  append(buf, crc_of(buf.data(), buf.size()));
  write_file(path, buf);
}

ModelGraph load_model(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& blob_path) {
  const std::vector<std::uint8_t> text = read_file(manifest_path);
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, manifest_path.string() + ": " + e.what());
  }

  const std::string context = manifest_path.string();
  if (!doc.is_object()) schema_error(context, "manifest must be a JSON object");
  check_keys(doc, {"format", "input_shape", "num_classes", "nodes"}, context);
  if (!doc.contains("format") || doc["format"] != "pkm-1") {
    schema_error(context, "format must be \"pkm-1\"");
  }
  if (!doc.contains("input_shape") || !doc["input_shape"].is_array() ||
      doc["input_shape"].size() != 3) {
    schema_error(context, "input_shape must be [C,H,W]");
  }
  if (!doc.contains("num_classes")) schema_error(context, "missing num_classes");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    schema_error(context, "missing nodes array");
  }

  ModelGraph g;
  for (std::size_t i = 0; i < 3; ++i) {
    g.input_shape[i] = positive_size(doc["input_shape"][i], context + " input_shape");
  }
  g.num_classes = positive_size(doc["num_classes"], context + " num_classes");
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    g.nodes.push_back(parse_node(doc["nodes"][i], i));
  }
  g.tensors = load_blob(blob_path);

  const std::vector<Violation> violations = validate_graph(g);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    throw Error(v.code, (v.node.empty() ? std::string("graph") : "node '" + v.node + "'") + ": " +
                            v.message);
  }
  return g;
}

void save_model(const ModelGraph& g, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path) {
  const std::vector<Violation> violations = validate_graph(g);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    throw Error(ErrorCode::GraphInvalid,
                "refusing to save invalid graph: " +
                    (v.node.empty() ? std::string("graph") : "node '" + v.node + "'") + ": " +
                    v.message);
  }

  ordered_json doc;
  doc["format"] = "pkm-1";
  doc["input_shape"] = {g.input_shape[0], g.input_shape[1], g.input_shape[2]};
  doc["num_classes"] = g.num_classes;
  ordered_json nodes = ordered_json::array();
  for (const LayerNode& node : g.nodes) nodes.push_back(node_to_json(node));
  doc["nodes"] = std::move(nodes);

  const std::string text = doc.dump(2) + "\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file(manifest_path, bytes);
  save_blob(g.tensors, blob_path);
}

Dataset load_dataset(const std::filesystem::path& inputs_path,
                     const std::filesystem::path& labels_path) {
  Dataset d;
  d.inputs = single_tensor(inputs_path, 4, "inputs");
  const WeightTensor raw_labels = single_tensor(labels_path, 1, "labels");

  if (raw_labels.shape()[0] != d.inputs.shape()[0]) {
    throw Error(ErrorCode::CountMismatch,
                "inputs hold " + std::to_string(d.inputs.shape()[0]) + " samples but labels " +
                    std::to_string(raw_labels.shape()[0]));
  }
  d.labels.reserve(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    const float v = raw_labels[i];
    if (v != std::floor(v)) {
      throw Error(ErrorCode::NonIntegralLabel,
                  "label[" + std::to_string(i) + "] = " + std::to_string(v) + " is not integral");
    }
    if (v < 0.0f) {
      throw Error(ErrorCode::SchemaViolation, "label[" + std::to_string(i) + "] is negative");
    }
    d.labels.push_back(static_cast<std::size_t>(v));
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& inputs_path,
                  const std::filesystem::path& labels_path) {
  if (d.inputs.rank() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "dataset inputs must be rank 4");
  }
  if (d.inputs.shape()[0] != d.labels.size()) {
    throw Error(ErrorCode::CountMismatch, "inputs/labels sample counts differ");
  }
  save_blob({{"inputs", d.inputs}}, inputs_path);
  std::vector<float> labels(d.labels.size());
  for (std::size_t i = 0; i < d.labels.size(); ++i) labels[i] = static_cast<float>(d.labels[i]);
  WeightTensor label_tensor({d.labels.size()}, std::move(labels));
  save_blob({{"labels", std::move(label_tensor)}}, labels_path);
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
  std::filesystem::path p = manifest_path;
  p.replace_extension(".pkmt");
  return p;
}

}  // namespace prunekit
