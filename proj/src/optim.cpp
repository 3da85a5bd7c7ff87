#include "fedlab/optim.hpp"

#include <cmath>
#include <string>

#include "fedlab/errors.hpp"

namespace fedlab {

namespace {

void check_aligned(const ParameterVector& params, const Gradient& grad) {
  if (!same_layout(params.layout, grad.layout))
    throw ConfigError("gradient layout does not match parameter layout");
  if (!grad.all_finite()) throw NumericError("non-finite gradient");
}

}  // namespace

void sgd_step(ParameterVector& params, const Gradient& grad, float lr) {
  if (lr <= 0.0f) throw ConfigError("sgd_step: lr must be positive, got " + std::to_string(lr));
  check_aligned(params, grad);
  for (std::size_t i = 0; i < params.values.size(); ++i)
    params.values[i] -= lr * grad.values[i];
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0f);
  s.v.assign(n, 0.0f);
  return s;
}

void adam_step(AdamState& state, ParameterVector& params, const Gradient& grad, float lr,
               const AdamOptions& opt) {
  check_aligned(params, grad);
  if (state.m.size() != params.values.size())
    throw ConfigError("adam state size does not match parameters");
  state.step += 1;
  const double b1t = 1.0 - std::pow(static_cast<double>(opt.beta1), static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(static_cast<double>(opt.beta2), static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const float g = grad.values[i];
    state.m[i] = opt.beta1 * state.m[i] + (1.0f - opt.beta1) * g;
    state.v[i] = opt.beta2 * state.v[i] + (1.0f - opt.beta2) * g * g;
    const double mh = state.m[i] / b1t;
    const double vh = state.v[i] / b2t;
    params.values[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + opt.eps));
  }
}

}  // namespace fedlab
