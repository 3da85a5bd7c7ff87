#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "fedlab/graph.hpp"
#include "fedlab/params.hpp"

namespace fedlab {

// Layer descriptors for the small image classifier.
struct ConvLayer {
  int out_channels;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};
struct ReluLayer {};
struct MaxPoolLayer {};  // 2x2, stride 2
struct DenseLayer {
  int out;
};
using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, DenseLayer>;

struct ClassifierSpec {
  int in_h = 28;
  int in_w = 28;
  int in_c = 1;
  int classes = 10;
  std::vector<Layer> layers;

  // conv(c1)-relu-pool-conv(c2)-relu-pool-dense(classes)
  static ClassifierSpec small_cnn(int h, int w, int c, int classes, int c1 = 8, int c2 = 16);

  // Validates the layer chain (shape compatibility, final dim == classes)
  // and returns the parameter layout.
  LayoutPtr make_layout() const;
};

// Leaf ids for every segment of a bound ParameterVector, in layout order.
struct BoundParams {
  std::vector<int> ids;
};

BoundParams bind_params(Graph& g, const ParameterVector& pv, bool trainable);
Gradient collect_grads(const Graph& g, const BoundParams& bp, const LayoutPtr& layout);

// Records the classifier forward pass on the graph; returns the logits node.
int forward_classifier(Graph& g, const ClassifierSpec& spec, const BoundParams& params,
                       int x);

// Eager forward pass: batch [B,H,W,C] -> logits [B,classes].
Tensor forward_classifier(const ParameterVector& params, const ClassifierSpec& spec,
                          const Tensor& batch);

// He-uniform init for conv/dense weights, zero biases.
ParameterVector init_classifier(const ClassifierSpec& spec, std::mt19937_64& rng);

std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace fedlab
