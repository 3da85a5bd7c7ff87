#pragma once

#include <random>
#include <vector>

#include "fedlab/classifier.hpp"
#include "fedlab/graph.hpp"
#include "fedlab/optim.hpp"
#include "fedlab/params.hpp"

namespace fedlab {

// Conditional autoencoder that turns (image, target class) into additive
// noise. Two stride-2 conv encoder stages, a per-class embedding
// concatenated at the bottleneck, two stride-2 transposed-conv decoder
// stages, tanh output so the noise lives in (-1,1).
struct GeneratorSpec {
  int in_h = 28;
  int in_w = 28;
  int in_c = 1;
  int classes = 10;
  int enc1 = 8;
  int enc2 = 16;

  // Embedding width equals the class count.
  int embed_dim() const { return classes; }
  LayoutPtr make_layout() const;
};

struct GeneratorState {
  GeneratorSpec spec;
  ParameterVector params;
  AdamState opt;
};

GeneratorState init_generator(const GeneratorSpec& spec, std::mt19937_64& rng);

// Records the generator on the graph; returns the noise node (same shape
// as x). `targets` must hold one class per batch row.
int generator_forward(Graph& g, const GeneratorSpec& spec, const BoundParams& params,
                      int x, const std::vector<int>& targets);

// Eager path: noise tensor for a batch.
Tensor generator_forward(const GeneratorState& gen, const Tensor& x,
                         const std::vector<int>& targets);

// clip(x + noise, 0, 1), the trigger application.
Tensor apply_trigger(const Tensor& x, const Tensor& noise);

}  // namespace fedlab
