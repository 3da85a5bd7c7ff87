#include "fedlab/generator.hpp"

#include <cmath>
#include <string>

#include "fedlab/errors.hpp"

namespace fedlab {

LayoutPtr GeneratorSpec::make_layout() const {
  if (in_h % 4 != 0 || in_w % 4 != 0)
    throw ConfigError("generator input dims must be divisible by 4, got " +
                      std::to_string(in_h) + "x" + std::to_string(in_w));
  if (classes < 2) throw ConfigError("generator needs at least 2 classes");
  const int bottleneck_in = enc2 + embed_dim();
  return Layout::build({
      {"enc0.w", {enc1, 3, 3, in_c}},
      {"enc0.b", {enc1}},
      {"enc1.w", {enc2, 3, 3, enc1}},
      {"enc1.b", {enc2}},
      {"embed", {classes, embed_dim()}},
      {"dec0.w", {bottleneck_in, 4, 4, enc1}},
      {"dec0.b", {enc1}},
      {"dec1.w", {enc1, 4, 4, in_c}},
      {"dec1.b", {in_c}},
  });
}

GeneratorState init_generator(const GeneratorSpec& spec, std::mt19937_64& rng) {
  GeneratorState gen;
  gen.spec = spec;
  LayoutPtr layout = spec.make_layout();
  gen.params = ParameterVector::zeros(layout);
  for (const Segment& seg : layout->segments()) {
    if (seg.name.ends_with(".b")) continue;
    if (seg.name == "embed") {
      std::normal_distribution<float> dist(0.0f, 0.5f);
      for (std::size_t i = 0; i < seg.size; ++i)
        gen.params.values[seg.offset + i] = dist(rng);
      continue;
    }
    std::int64_t fan_in = static_cast<std::int64_t>(seg.shape[1]) * seg.shape[2] * seg.shape[3];
    if (seg.name.starts_with("dec"))
      fan_in = static_cast<std::int64_t>(seg.shape[0]) * seg.shape[1] * seg.shape[2];
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-limit, limit);
    for (std::size_t i = 0; i < seg.size; ++i)
      gen.params.values[seg.offset + i] = dist(rng);
  }
  gen.opt = AdamState::zeros(layout->total());
  return gen;
}

int generator_forward(Graph& g, const GeneratorSpec& spec, const BoundParams& params,
                      int x, const std::vector<int>& targets) {
  const Tensor& batch = g.value(x);
  if (batch.rank() != 4 || batch.dim(1) != spec.in_h || batch.dim(2) != spec.in_w ||
      batch.dim(3) != spec.in_c)
    throw ConfigError("generator input " + shape_str(batch.shape) + " does not match spec");
  if (static_cast<int>(targets.size()) != batch.dim(0))
    throw InputError("generator: target count " + std::to_string(targets.size()) +
                     " does not match batch " + std::to_string(batch.dim(0)));
  for (int t : targets)
    if (t < 0 || t >= spec.classes)
      throw InputError("generator target " + std::to_string(t) + " out of range [0," +
                       std::to_string(spec.classes) + ")");

  // Segment order: enc0.w enc0.b enc1.w enc1.b embed dec0.w dec0.b dec1.w dec1.b
  const auto& p = params.ids;
  int h1 = g.relu(g.conv2d(x, p[0], p[1], 2, 1));
  int h2 = g.relu(g.conv2d(h1, p[2], p[3], 2, 1));
  int emb = g.gather_rows(p[4], targets);
  int embmap = g.broadcast_hw(emb, g.value(h2).dim(1), g.value(h2).dim(2));
  int cat = g.concat_channels(h2, embmap);
  int d1 = g.relu(g.conv2d_transpose(cat, p[5], p[6], 2, 1));
  return g.tanh_act(g.conv2d_transpose(d1, p[7], p[8], 2, 1));
}

Tensor generator_forward(const GeneratorState& gen, const Tensor& x,
                         const std::vector<int>& targets) {
  Graph g;
  BoundParams bp = bind_params(g, gen.params, false);
  int xid = g.constant(x);
  int noise = generator_forward(g, gen.spec, bp, xid, targets);
  return g.value(noise);
}

Tensor apply_trigger(const Tensor& x, const Tensor& noise) {
  if (!x.same_shape(noise))
    throw ConfigError("apply_trigger: shape mismatch " + shape_str(x.shape) + " vs " +
                      shape_str(noise.shape));
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    float v = out.data[i] + noise.data[i];
    out.data[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

}  // namespace fedlab
