#include "fedlab/classifier.hpp"

#include <cmath>
#include <string>

#include "fedlab/errors.hpp"

namespace fedlab {

namespace {

struct ShapeCursor {
  bool spatial = true;
  int h = 0, w = 0, c = 0;
  int flat = 0;

  int flat_dim() const { return spatial ? h * w * c : flat; }
};

}  // namespace

ClassifierSpec ClassifierSpec::small_cnn(int h, int w, int c, int classes, int c1, int c2) {
  ClassifierSpec spec;
  spec.in_h = h;
  spec.in_w = w;
  spec.in_c = c;
  spec.classes = classes;
  spec.layers = {ConvLayer{c1}, ReluLayer{}, MaxPoolLayer{},
                 ConvLayer{c2}, ReluLayer{}, MaxPoolLayer{},
                 DenseLayer{classes}};
  return spec;
}

LayoutPtr ClassifierSpec::make_layout() const {
  std::vector<std::pair<std::string, std::vector<int>>> tensors;
  ShapeCursor cur{true, in_h, in_w, in_c, 0};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string tag = std::to_string(i);
    if (const auto* conv = std::get_if<ConvLayer>(&layers[i])) {
      if (!cur.spatial)
        throw ConfigError("layer " + tag + ": conv after flatten is not supported");
      const int oh = (cur.h + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      const int ow = (cur.w + 2 * conv->pad - conv->kernel) / conv->stride + 1;
      if (oh <= 0 || ow <= 0)
        throw ConfigError("layer " + tag + ": conv output would be empty");
      tensors.emplace_back("conv" + tag + ".w",
                           std::vector<int>{conv->out_channels, conv->kernel, conv->kernel, cur.c});
      tensors.emplace_back("conv" + tag + ".b", std::vector<int>{conv->out_channels});
      cur.h = oh;
      cur.w = ow;
      cur.c = conv->out_channels;
    } else if (std::holds_alternative<MaxPoolLayer>(layers[i])) {
      if (!cur.spatial || cur.h % 2 != 0 || cur.w % 2 != 0)
        throw ConfigError("layer " + tag + ": maxpool needs even spatial dims");
      cur.h /= 2;
      cur.w /= 2;
    } else if (const auto* dense = std::get_if<DenseLayer>(&layers[i])) {
      const int d = cur.flat_dim();
      tensors.emplace_back("dense" + tag + ".w", std::vector<int>{d, dense->out});
      tensors.emplace_back("dense" + tag + ".b", std::vector<int>{dense->out});
      cur.spatial = false;
      cur.flat = dense->out;
    }
    // ReluLayer keeps the shape
  }
  if (cur.spatial || cur.flat != classes)
    throw ConfigError("classifier output dimension " + std::to_string(cur.flat_dim()) +
                      " does not equal class count " + std::to_string(classes));
  return Layout::build(std::move(tensors));
}

BoundParams bind_params(Graph& g, const ParameterVector& pv, bool trainable) {
  BoundParams bp;
  for (const Segment& seg : pv.layout->segments())
    bp.ids.push_back(g.leaf(pv.segment_tensor(seg), trainable));
  return bp;
}

Gradient collect_grads(const Graph& g, const BoundParams& bp, const LayoutPtr& layout) {
  Gradient grad = Gradient::zeros(layout);
  const auto& segs = layout->segments();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Tensor& t = g.grad(bp.ids[i]);
    std::copy(t.data.begin(), t.data.end(),
              grad.values.begin() + static_cast<std::ptrdiff_t>(segs[i].offset));
  }
  return grad;
}

int forward_classifier(Graph& g, const ClassifierSpec& spec, const BoundParams& params,
                       int x) {
  const Tensor& batch = g.value(x);
  if (batch.rank() != 4 || batch.dim(1) != spec.in_h || batch.dim(2) != spec.in_w ||
      batch.dim(3) != spec.in_c)
    throw ConfigError("classifier input " + shape_str(batch.shape) + " does not match spec [" +
                      std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) + "x" +
                      std::to_string(spec.in_c) + "]");
  int cur = x;
  bool spatial = true;
  std::size_t pidx = 0;
  for (const Layer& layer : spec.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const int w = params.ids[pidx++];
      const int b = params.ids[pidx++];
      cur = g.conv2d(cur, w, b, conv->stride, conv->pad);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      cur = g.relu(cur);
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      cur = g.maxpool2(cur);
    } else if (std::holds_alternative<DenseLayer>(layer)) {
      if (spatial) {
        cur = g.flatten(cur);
        spatial = false;
      }
      const int w = params.ids[pidx++];
      const int b = params.ids[pidx++];
      cur = g.dense(cur, w, b);
    }
  }
  return cur;
}

Tensor forward_classifier(const ParameterVector& params, const ClassifierSpec& spec,
                          const Tensor& batch) {
  Graph g;
  BoundParams bp = bind_params(g, params, false);
  int x = g.constant(batch);
  int logits = forward_classifier(g, spec, bp, x);
  return g.value(logits);
}

ParameterVector init_classifier(const ClassifierSpec& spec, std::mt19937_64& rng) {
  LayoutPtr layout = spec.make_layout();
  ParameterVector pv = ParameterVector::zeros(layout);
  for (const Segment& seg : layout->segments()) {
    if (seg.name.ends_with(".b")) continue;
    // He-uniform over the fan-in: conv [F,K,K,C] -> K*K*C, dense [D,O] -> D.
    std::int64_t fan_in = 1;
    if (seg.shape.size() == 4)
      fan_in = static_cast<std::int64_t>(seg.shape[1]) * seg.shape[2] * seg.shape[3];
    else if (seg.shape.size() == 2)
      fan_in = seg.shape[0];
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-limit, limit);
    for (std::size_t i = 0; i < seg.size; ++i) pv.values[seg.offset + i] = dist(rng);
  }
  return pv;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("argmax_rows expects [B,K]");
  const int b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(b));
  for (int n = 0; n < b; ++n) {
    const float* row = logits.data.data() + static_cast<std::int64_t>(n) * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

}  // namespace fedlab
