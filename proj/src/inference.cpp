#include "prunekit/inference.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace prunekit {

namespace {

// Validated execution plan reused across samples of one evaluate() call.
struct Engine {
  const ModelGraph& g;
  std::vector<Shape> shapes;
  std::vector<std::vector<std::size_t>> input_ids;
  std::size_t sink = 0;

  explicit Engine(const ModelGraph& graph) : g(graph), shapes(infer_shapes(graph)) {
    std::map<std::string, std::size_t> index;
    std::vector<bool> consumed(g.nodes.size(), false);
    input_ids.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      index[g.nodes[i].name] = i;
      for (const std::string& in : g.nodes[i].inputs) {
        const std::size_t id = index.at(in);
        input_ids[i].push_back(id);
        consumed[id] = true;
      }
    }
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (!consumed[i]) sink = i;
    }
  }

  const WeightTensor& tensor(const LayerNode& node, const std::string& role) const {
    return g.tensors.at(node.weights.at(role));
  }

  std::vector<float> run(std::span<const float> x) const;
};

void conv2d(const LayerNode& node, const WeightTensor& w, const float* bias,
            const Shape& in_shape, std::span<const float> in, const Shape& out_shape,
            std::vector<float>& out) {
  const std::size_t in_c = in_shape.dims[0], in_h = in_shape.dims[1], in_w = in_shape.dims[2];
  const std::size_t out_c = out_shape.dims[0], out_h = out_shape.dims[1],
                    out_w = out_shape.dims[2];
  const std::size_t k_h = w.shape()[2], k_w = w.shape()[3];
  const std::size_t stride = static_cast<std::size_t>(node.stride);

  // "same" zero padding, split floor-left / ceil-right.
  std::size_t pad_top = 0, pad_left = 0;
  if (node.padding == Padding::Same) {
    const std::size_t need_h = (out_h - 1) * stride + k_h;
    const std::size_t need_w = (out_w - 1) * stride + k_w;
    pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
    pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  }

  const float* wd = w.data().data();
  out.resize(out_c * out_h * out_w);
  for (std::size_t oc = 0; oc < out_c; ++oc) {
    const float* filter = wd + oc * in_c * k_h * k_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = bias ? static_cast<double>(bias[oc]) : 0.0;
        for (std::size_t ic = 0; ic < in_c; ++ic) {
          const float* plane = in.data() + ic * in_h * in_w;
          const float* kernel = filter + ic * k_h * k_w;
          for (std::size_t ky = 0; ky < k_h; ++ky) {
            const std::size_t iy = oy * stride + ky;
            if (iy < pad_top || iy - pad_top >= in_h) continue;
            const float* row = plane + (iy - pad_top) * in_w;
            for (std::size_t kx = 0; kx < k_w; ++kx) {
              const std::size_t ix = ox * stride + kx;
              if (ix < pad_left || ix - pad_left >= in_w) continue;
              acc += static_cast<double>(kernel[ky * k_w + kx]) *
                     static_cast<double>(row[ix - pad_left]);
            }
          }
        }
        out[(oc * out_h + oy) * out_w + ox] = static_cast<float>(acc);
      }
    }
  }
}

void maxpool2d(const LayerNode& node, const Shape& in_shape, std::span<const float> in,
               const Shape& out_shape, std::vector<float>& out) {
  const std::size_t channels = in_shape.dims[0], in_h = in_shape.dims[1],
                    in_w = in_shape.dims[2];
  const std::size_t out_h = out_shape.dims[1], out_w = out_shape.dims[2];
  const std::size_t window = static_cast<std::size_t>(node.window);
  const std::size_t stride = static_cast<std::size_t>(node.stride);

  out.resize(channels * out_h * out_w);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = in.data() + c * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float best = plane[oy * stride * in_w + ox * stride];
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            best = std::max(best, plane[(oy * stride + wy) * in_w + (ox * stride + wx)]);
          }
        }
        out[(c * out_h + oy) * out_w + ox] = best;
      }
    }
  }
}

std::vector<float> Engine::run(std::span<const float> x) const {
  std::vector<std::vector<float>> acts(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& node = g.nodes[i];
    const Shape& out_shape = shapes[i];
    std::vector<float>& out = acts[i];
    switch (node.kind) {
      case LayerKind::Input:
        out.assign(x.begin(), x.end());
        break;
      case LayerKind::Conv2d: {
        const WeightTensor& w = tensor(node, "weight");
        const float* bias = node.has_bias ? tensor(node, "bias").data().data() : nullptr;
        conv2d(node, w, bias, shapes[input_ids[i][0]], acts[input_ids[i][0]], out_shape, out);
        break;
      }
      case LayerKind::Dense: {
        const WeightTensor& w = tensor(node, "weight");
        const float* bias = node.has_bias ? tensor(node, "bias").data().data() : nullptr;
        const std::vector<float>& in = acts[input_ids[i][0]];
        const std::size_t d_out = w.shape()[0], d_in = w.shape()[1];
        out.resize(d_out);
        for (std::size_t o = 0; o < d_out; ++o) {
          double acc = bias ? static_cast<double>(bias[o]) : 0.0;
          const float* row = w.data().data() + o * d_in;
          for (std::size_t k = 0; k < d_in; ++k) {
            acc += static_cast<double>(row[k]) * static_cast<double>(in[k]);
          }
          out[o] = static_cast<float>(acc);
        }
        break;
      }
      case LayerKind::Relu: {
        const std::vector<float>& in = acts[input_ids[i][0]];
        out.resize(in.size());
        for (std::size_t k = 0; k < in.size(); ++k) out[k] = std::max(in[k], 0.0f);
        break;
      }
      case LayerKind::MaxPool2d:
        maxpool2d(node, shapes[input_ids[i][0]], acts[input_ids[i][0]], out_shape, out);
        break;
      case LayerKind::GlobalAvgPool: {
        const Shape& in_shape = shapes[input_ids[i][0]];
        const std::vector<float>& in = acts[input_ids[i][0]];
        const std::size_t channels = in_shape.dims[0];
        const std::size_t area = in_shape.dims[1] * in_shape.dims[2];
        out.resize(channels);
        for (std::size_t c = 0; c < channels; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < area; ++k) acc += static_cast<double>(in[c * area + k]);
          out[c] = static_cast<float>(acc / static_cast<double>(area));
        }
        break;
      }
      case LayerKind::Flatten:
        // channel-major linearization == the (C,H,W) storage order
        out = acts[input_ids[i][0]];
        break;
      case LayerKind::Add: {
        const std::vector<float>& a = acts[input_ids[i][0]];
        const std::vector<float>& b = acts[input_ids[i][1]];
        out.resize(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
        break;
      }
      case LayerKind::Affine: {
        const std::vector<float>& in = acts[input_ids[i][0]];
        const Shape& in_shape = shapes[input_ids[i][0]];
        const WeightTensor& scale = tensor(node, "scale");
        const WeightTensor& shift = tensor(node, "shift");
        const std::size_t channels = scale.shape()[0];
        const std::size_t area = in.size() / channels;
        out.resize(in.size());
        for (std::size_t c = 0; c < channels; ++c) {
          const double s = scale[c], t = shift[c];
          for (std::size_t k = 0; k < area; ++k) {
            out[c * area + k] = static_cast<float>(s * static_cast<double>(in[c * area + k]) + t);
          }
        }
        (void)in_shape;
        break;
      }
    }
    if (out.size() != out_shape.elements()) {
      throw Error(ErrorCode::GraphInvalid,
                  "node '" + node.name + "' produced " + std::to_string(out.size()) +
                      " values, expected " + std::to_string(out_shape.elements()));
    }
  }
  return std::move(acts[sink]);
}

bool in_top_k(std::span<const float> logits, std::size_t label, std::size_t k) {
  const float target = logits[label];
  std::size_t beaten_by = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] > target || (logits[i] == target && i < label)) ++beaten_by;
  }
  return beaten_by < k;
}

}  // namespace

std::vector<float> forward(const ModelGraph& g, std::span<const float> x) {
  const Engine engine(g);
  const std::size_t expect = g.input_shape[0] * g.input_shape[1] * g.input_shape[2];
  if (x.size() != expect) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.size()) +
                                              " values, model expects " + std::to_string(expect));
  }
  return engine.run(x);
}

EvalResult evaluate(const ModelGraph& g, const Dataset& d, std::size_t topk) {
  if (topk < 1) {
    throw Error(ErrorCode::InvalidArgument, "topk must be at least 1");
  }
  if (d.inputs.rank() != 4) {
    throw Error(ErrorCode::ShapeMismatch, "dataset inputs must be rank 4 (N,C,H,W)");
  }
  const auto& shape = d.inputs.shape();
  if (shape[1] != g.input_shape[0] || shape[2] != g.input_shape[1] ||
      shape[3] != g.input_shape[2]) {
    throw Error(ErrorCode::ShapeMismatch, "dataset sample shape does not match model input");
  }
  if (shape[0] != d.labels.size()) {
    throw Error(ErrorCode::CountMismatch, "inputs/labels sample counts differ");
  }

  const Engine engine(g);
  const std::size_t sample_len = shape[1] * shape[2] * shape[3];
  EvalResult result;
  result.total = shape[0];
  for (std::size_t n = 0; n < shape[0]; ++n) {
    const std::vector<float> logits =
        engine.run(d.inputs.data().subspan(n * sample_len, sample_len));
    if (d.labels[n] >= logits.size()) {
      throw Error(ErrorCode::ClassCountMismatch,
                  "label " + std::to_string(d.labels[n]) + " outside the model's " +
                      std::to_string(logits.size()) + " classes");
    }
    if (in_top_k(logits, d.labels[n], topk)) ++result.correct;
  }
  return result;
}

}  // namespace prunekit
