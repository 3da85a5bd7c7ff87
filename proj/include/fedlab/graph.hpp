#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "fedlab/tensor.hpp"

namespace fedlab {

// Reverse-mode tape over Tensor values. Build one graph per batch: record
// the forward pass, call backward(loss) once, read gradients off the leaves.
// Gradients flow only into nodes that (transitively) depend on a trainable
// leaf; everything else is treated as constant.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int leaf(Tensor value, bool trainable);
  int constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(int id) const { return node(id).value; }
  const Tensor& grad(int id) const;
  bool needs_grad(int id) const { return node(id).needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Elementwise (same shape unless noted).
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, float c);
  int add_scaled(int a, int b, float ca, float cb);  // ca*a + cb*b
  int relu(int a);
  int tanh_act(int a);
  int clip01(int a);

  // Neural-net building blocks (NHWC).
  int dense(int x, int w, int b);                              // [B,D]x[D,O]+[O]
  int conv2d(int x, int w, int b, int stride, int pad);        // w: [F,K,K,C]
  int conv2d_transpose(int x, int w, int b, int stride, int pad);  // w: [Cin,K,K,Cout]
  int maxpool2(int a);
  int flatten(int a);                                          // [B,...] -> [B,D]
  int gather_rows(int table, std::vector<int> rows);           // [K,E] -> [B,E]
  int broadcast_hw(int v, int h, int w);                       // [B,E] -> [B,h,w,E]
  int concat_channels(int a, int b);

  // Scalar reductions.
  int sum(int a);
  int cross_entropy(int logits, std::vector<int> labels);
  // Distillation loss: mean over rows of -sum_c p_c log softmax(z/T)_c,
  // scaled by T^2. `target_probs` rows must sum to 1.
  int soft_cross_entropy(int logits, Tensor target_probs, float temperature);
  // Mean over the batch of (1 - cosine similarity) between flattened rows.
  // Zero-norm rows contribute 0 and bump zero_norm_samples().
  int cosine_distance(int x, int ref);

  void backward(int loss);

  int zero_norm_samples() const { return zero_norm_samples_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  int push(Tensor value, bool needs_grad, std::function<void()> back = nullptr);
  void accum(int id, const Tensor& g);

  std::deque<Node> nodes_;
  int zero_norm_samples_ = 0;
};

}  // namespace fedlab
