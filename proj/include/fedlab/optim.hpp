#pragma once

#include <cstdint>
#include <vector>

#include "fedlab/params.hpp"

namespace fedlab {

// Plain SGD: params <- params - lr * grad. Throws NumericError on
// non-finite gradients.
void sgd_step(ParameterVector& params, const Gradient& grad, float lr);

// Bias-corrected Adam moments, aligned to one ParameterVector.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t step = 0;

  static AdamState zeros(std::size_t n);
};

struct AdamOptions {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

void adam_step(AdamState& state, ParameterVector& params, const Gradient& grad, float lr,
               const AdamOptions& opt = {});

}  // namespace fedlab
