#include "fedlab/graph.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "fedlab/errors.hpp"
#include "fedlab/kernels.hpp"

namespace fedlab {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(b.shape));
}

}  // namespace

int Graph::push(Tensor value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad = Tensor::zeros(n.value.shape);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::accum(int id, const Tensor& g) {
  Node& n = node(id);
  if (!n.needs_grad) return;
  for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

const Tensor& Graph::grad(int id) const {
  const Node& n = node(id);
  if (!n.needs_grad) throw ConfigError("node has no gradient (constant subgraph)");
  return n.grad;
}

int Graph::leaf(Tensor value, bool trainable) {
  return push(std::move(value), trainable);
}

int Graph::add(int a, int b) {
  check_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += value(b).data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, b] {
    accum(a, node(id).grad);
    accum(b, node(id).grad);
  };
  return id;
}

int Graph::sub(int a, int b) {
  check_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= value(b).data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, b] {
    const Tensor& g = node(id).grad;
    accum(a, g);
    if (needs_grad(b)) {
      Tensor neg = g;
      for (auto& v : neg.data) v = -v;
      accum(b, neg);
    }
  };
  return id;
}

int Graph::mul(int a, int b) {
  check_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, b] {
    const Tensor& g = node(id).grad;
    if (needs_grad(a)) {
      Tensor da = g;
      for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] *= value(b).data[i];
      accum(a, da);
    }
    if (needs_grad(b)) {
      Tensor db = g;
      for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] *= value(a).data[i];
      accum(b, db);
    }
  };
  return id;
}

int Graph::scale(int a, float c) {
  Tensor out = value(a);
  for (auto& v : out.data) v *= c;
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, c] {
    Tensor g = node(id).grad;
    for (auto& v : g.data) v *= c;
    accum(a, g);
  };
  return id;
}

int Graph::add_scaled(int a, int b, float ca, float cb) {
  check_same_shape(value(a), value(b), "add_scaled");
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = ca * out.data[i] + cb * value(b).data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, b, ca, cb] {
    const Tensor& g = node(id).grad;
    if (needs_grad(a)) {
      Tensor da = g;
      for (auto& v : da.data) v *= ca;
      accum(a, da);
    }
    if (needs_grad(b)) {
      Tensor db = g;
      for (auto& v : db.data) v *= cb;
      accum(b, db);
    }
  };
  return id;
}

int Graph::relu(int a) {
  Tensor out = value(a);
  for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a] {
    Tensor g = node(id).grad;
    const Tensor& x = value(a);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] <= 0.0f) g.data[i] = 0.0f;
    accum(a, g);
  };
  return id;
}

int Graph::tanh_act(int a) {
  Tensor out = value(a);
  for (auto& v : out.data) v = std::tanh(v);
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a] {
    Tensor g = node(id).grad;
    const Tensor& y = node(id).value;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      g.data[i] *= 1.0f - y.data[i] * y.data[i];
    accum(a, g);
  };
  return id;
}

int Graph::clip01(int a) {
  Tensor out = value(a);
  for (auto& v : out.data) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a] {
    Tensor g = node(id).grad;
    const Tensor& x = value(a);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] < 0.0f || x.data[i] > 1.0f) g.data[i] = 0.0f;
    accum(a, g);
  };
  return id;
}

int Graph::dense(int x, int w, int b) {
  Tensor out = dense_forward(value(x), value(w), value(b));
  const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, x, w, b] {
    Tensor dx, dw, db;
    dense_backward(value(x), value(w), node(id).grad, needs_grad(x) ? &dx : nullptr,
                   needs_grad(w) ? &dw : nullptr, needs_grad(b) ? &db : nullptr);
    if (needs_grad(x)) accum(x, dx);
    if (needs_grad(w)) accum(w, dw);
    if (needs_grad(b)) accum(b, db);
  };
  return id;
}

int Graph::conv2d(int x, int w, int b, int stride, int pad) {
  auto cols = std::make_shared<std::vector<float>>();
  Tensor out = conv2d_forward(value(x), value(w), value(b), stride, pad, cols.get());
  const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, x, w, b, stride, pad, cols] {
    Tensor dx, dw, db;
    conv2d_backward(value(x), value(w), node(id).grad, stride, pad, *cols,
                    needs_grad(x) ? &dx : nullptr, needs_grad(w) ? &dw : nullptr,
                    needs_grad(b) ? &db : nullptr);
    if (needs_grad(x)) accum(x, dx);
    if (needs_grad(w)) accum(w, dw);
    if (needs_grad(b)) accum(b, db);
  };
  return id;
}

int Graph::conv2d_transpose(int x, int w, int b, int stride, int pad) {
  Tensor out = conv2d_transpose_forward(value(x), value(w), value(b), stride, pad);
  const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, x, w, b, stride, pad] {
    Tensor dx, dw, db;
    conv2d_transpose_backward(value(x), value(w), node(id).grad, stride, pad,
                              needs_grad(x) ? &dx : nullptr, needs_grad(w) ? &dw : nullptr,
                              needs_grad(b) ? &db : nullptr);
    if (needs_grad(x)) accum(x, dx);
    if (needs_grad(w)) accum(w, dw);
    if (needs_grad(b)) accum(b, db);
  };
  return id;
}

int Graph::maxpool2(int a) {
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  Tensor out = maxpool2_forward(value(a), argmax.get());
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, argmax] {
    accum(a, maxpool2_backward(value(a), node(id).grad, *argmax));
  };
  return id;
}

int Graph::flatten(int a) {
  const Tensor& x = value(a);
  if (x.rank() < 2) throw ConfigError("flatten expects a batched tensor");
  const int batch = x.dim(0);
  const int rest = static_cast<int>(x.size() / batch);
  Tensor out({batch, rest}, x.data);
  const bool ng = needs_grad(a);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a] {
    Tensor g(value(a).shape, node(id).grad.data);
    accum(a, g);
  };
  return id;
}

int Graph::gather_rows(int table, std::vector<int> rows) {
  const Tensor& t = value(table);
  if (t.rank() != 2) throw ConfigError("gather_rows table must be [K,E]");
  const int k = t.dim(0), e = t.dim(1);
  for (int r : rows)
    if (r < 0 || r >= k)
      throw InputError("gather_rows index " + std::to_string(r) + " out of range [0," +
                       std::to_string(k) + ")");
  const int batch = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({batch, e});
  for (int n = 0; n < batch; ++n)
    std::copy_n(t.data.begin() + static_cast<std::int64_t>(rows[static_cast<std::size_t>(n)]) * e,
                e, out.data.begin() + static_cast<std::int64_t>(n) * e);
  const bool ng = needs_grad(table);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, table, rows = std::move(rows), e] {
    Tensor dt = Tensor::zeros(value(table).shape);
    const Tensor& g = node(id).grad;
    for (std::size_t n = 0; n < rows.size(); ++n)
      for (int j = 0; j < e; ++j)
        dt.data[static_cast<std::size_t>(rows[n]) * e + j] +=
            g.data[n * static_cast<std::size_t>(e) + j];
    accum(table, dt);
  };
  return id;
}

int Graph::broadcast_hw(int v, int h, int w) {
  const Tensor& x = value(v);
  if (x.rank() != 2) throw ConfigError("broadcast_hw expects [B,E]");
  const int batch = x.dim(0), e = x.dim(1);
  Tensor out = Tensor::zeros({batch, h, w, e});
  for (int n = 0; n < batch; ++n) {
    const float* src = x.data.data() + static_cast<std::int64_t>(n) * e;
    float* dst = out.data.data() + static_cast<std::int64_t>(n) * h * w * e;
    for (int i = 0; i < h * w; ++i) std::copy_n(src, e, dst + static_cast<std::int64_t>(i) * e);
  }
  const bool ng = needs_grad(v);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, v, h, w, e] {
    const Tensor& g = node(id).grad;
    const int batch = value(v).dim(0);
    Tensor dv = Tensor::zeros({batch, e});
    for (int n = 0; n < batch; ++n) {
      const float* src = g.data.data() + static_cast<std::int64_t>(n) * h * w * e;
      float* dst = dv.data.data() + static_cast<std::int64_t>(n) * e;
      for (int i = 0; i < h * w; ++i)
        for (int j = 0; j < e; ++j) dst[j] += src[static_cast<std::int64_t>(i) * e + j];
    }
    accum(v, dv);
  };
  return id;
}

int Graph::concat_channels(int a, int b) {
  const Tensor& xa = value(a);
  const Tensor& xb = value(b);
  if (xa.rank() != 4 || xb.rank() != 4 || xa.dim(0) != xb.dim(0) || xa.dim(1) != xb.dim(1) ||
      xa.dim(2) != xb.dim(2))
    throw ConfigError("concat_channels: incompatible shapes " + shape_str(xa.shape) + " vs " +
                      shape_str(xb.shape));
  const int batch = xa.dim(0), h = xa.dim(1), w = xa.dim(2);
  const int ca = xa.dim(3), cb = xb.dim(3);
  Tensor out = Tensor::zeros({batch, h, w, ca + cb});
  const std::int64_t cells = static_cast<std::int64_t>(batch) * h * w;
  for (std::int64_t i = 0; i < cells; ++i) {
    std::copy_n(xa.data.begin() + i * ca, ca, out.data.begin() + i * (ca + cb));
    std::copy_n(xb.data.begin() + i * cb, cb, out.data.begin() + i * (ca + cb) + ca);
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  int id = push(std::move(out), ng);
  if (ng) node(id).back = [this, id, a, b, ca, cb, cells] {
    const Tensor& g = node(id).grad;
    if (needs_grad(a)) {
      Tensor da = Tensor::zeros(value(a).shape);
      for (std::int64_t i = 0; i < cells; ++i)
        std::copy_n(g.data.begin() + i * (ca + cb), ca, da.data.begin() + i * ca);
      accum(a, da);
    }
    if (needs_grad(b)) {
      Tensor db = Tensor::zeros(value(b).shape);
      for (std::int64_t i = 0; i < cells; ++i)
        std::copy_n(g.data.begin() + i * (ca + cb) + ca, cb, db.data.begin() + i * cb);
      accum(b, db);
    }
  };
  return id;
}

int Graph::sum(int a) {
  double acc = 0.0;
  for (float v : value(a).data) acc += v;
  const bool ng = needs_grad(a);
  int id = push(Tensor::scalar(static_cast<float>(acc)), ng);
  if (ng) node(id).back = [this, id, a] {
    const float g = node(id).grad.data[0];
    Tensor da = Tensor::full(value(a).shape, g);
    accum(a, da);
  };
  return id;
}

int Graph::cross_entropy(int logits, std::vector<int> labels) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw ConfigError("cross_entropy expects [B,K] logits");
  const int batch = z.dim(0), k = z.dim(1);
  if (static_cast<int>(labels.size()) != batch)
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  for (int y : labels)
    if (y < 0 || y >= k)
      throw InputError("cross_entropy label " + std::to_string(y) + " out of range [0," +
                       std::to_string(k) + ")");

  auto logp = std::make_shared<std::vector<double>>();
  log_softmax_rows(z, logp.get());
  double acc = 0.0;
  for (int n = 0; n < batch; ++n)
    acc -= (*logp)[static_cast<std::size_t>(n) * k + labels[static_cast<std::size_t>(n)]];
  acc /= batch;

  const bool ng = needs_grad(logits);
  int id = push(Tensor::scalar(static_cast<float>(acc)), ng);
  if (ng) node(id).back = [this, id, logits, labels = std::move(labels), logp, batch, k] {
    const float g = node(id).grad.data[0];
    Tensor dz = Tensor::zeros(value(logits).shape);
    for (int n = 0; n < batch; ++n) {
      for (int j = 0; j < k; ++j) {
        double p = std::exp((*logp)[static_cast<std::size_t>(n) * k + j]);
        if (j == labels[static_cast<std::size_t>(n)]) p -= 1.0;
        dz.data[static_cast<std::size_t>(n) * k + j] = static_cast<float>(p / batch * g);
      }
    }
    accum(logits, dz);
  };
  return id;
}

int Graph::soft_cross_entropy(int logits, Tensor target_probs, float temperature) {
  const Tensor& z = value(logits);
  if (z.rank() != 2) throw ConfigError("soft_cross_entropy expects [B,K] logits");
  if (!z.same_shape(target_probs))
    throw ConfigError("soft_cross_entropy: target shape mismatch");
  if (temperature <= 0.0f) throw ConfigError("soft_cross_entropy: temperature must be > 0");
  const int batch = z.dim(0), k = z.dim(1);

  Tensor scaled = z;
  for (auto& v : scaled.data) v /= temperature;
  auto logp = std::make_shared<std::vector<double>>();
  log_softmax_rows(scaled, logp.get());

  double acc = 0.0;
  for (int n = 0; n < batch; ++n)
    for (int j = 0; j < k; ++j)
      acc -= static_cast<double>(target_probs.data[static_cast<std::size_t>(n) * k + j]) *
             (*logp)[static_cast<std::size_t>(n) * k + j];
  acc = acc / batch * temperature * temperature;

  const bool ng = needs_grad(logits);
  int id = push(Tensor::scalar(static_cast<float>(acc)), ng);
  if (ng) node(id).back = [this, id, logits, probs = std::move(target_probs), logp, batch, k,
                           temperature] {
    const float g = node(id).grad.data[0];
    Tensor dz = Tensor::zeros(value(logits).shape);
    // d/dz of T^2 * CE(p, softmax(z/T)) = T * (softmax(z/T) - p)
    for (int n = 0; n < batch; ++n) {
      for (int j = 0; j < k; ++j) {
        const double s = std::exp((*logp)[static_cast<std::size_t>(n) * k + j]);
        const double p = probs.data[static_cast<std::size_t>(n) * k + j];
        dz.data[static_cast<std::size_t>(n) * k + j] =
            static_cast<float>(temperature * (s - p) / batch * g);
      }
    }
    accum(logits, dz);
  };
  return id;
}

int Graph::cosine_distance(int x, int ref) {
  const Tensor& u = value(x);
  const Tensor& v = value(ref);
  check_same_shape(u, v, "cosine_distance");
  if (u.rank() < 2) throw ConfigError("cosine_distance expects batched tensors");
  const int batch = u.dim(0);
  const std::int64_t d = u.size() / batch;

  auto stats = std::make_shared<std::vector<double>>();  // su, sv, uv per sample
  stats->resize(static_cast<std::size_t>(batch) * 3);
  double acc = 0.0;
  for (int n = 0; n < batch; ++n) {
    const float* up = u.data.data() + n * d;
    const float* vp = v.data.data() + n * d;
    double su = 0.0, sv = 0.0, uv = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      su += static_cast<double>(up[i]) * up[i];
      sv += static_cast<double>(vp[i]) * vp[i];
      uv += static_cast<double>(up[i]) * vp[i];
    }
    (*stats)[static_cast<std::size_t>(n) * 3 + 0] = su;
    (*stats)[static_cast<std::size_t>(n) * 3 + 1] = sv;
    (*stats)[static_cast<std::size_t>(n) * 3 + 2] = uv;
    if (su == 0.0 || sv == 0.0) {
      ++zero_norm_samples_;  // treat as identical, contribute zero distance
    } else {
      acc += 1.0 - uv / (std::sqrt(su) * std::sqrt(sv));
    }
  }
  acc /= batch;

  const bool ng = needs_grad(x) || needs_grad(ref);
  int id = push(Tensor::scalar(static_cast<float>(acc)), ng);
  if (ng) node(id).back = [this, id, x, ref, stats, batch, d] {
    const double g = node(id).grad.data[0] / batch;
    const Tensor& u = value(x);
    const Tensor& v = value(ref);
    for (int side = 0; side < 2; ++side) {
      const int target = side == 0 ? x : ref;
      if (!needs_grad(target)) continue;
      const Tensor& a = side == 0 ? u : v;
      const Tensor& b = side == 0 ? v : u;
      Tensor da = Tensor::zeros(a.shape);
      for (int n = 0; n < batch; ++n) {
        double sa = (*stats)[static_cast<std::size_t>(n) * 3 + side];
        double sb = (*stats)[static_cast<std::size_t>(n) * 3 + (1 - side)];
        double ab = (*stats)[static_cast<std::size_t>(n) * 3 + 2];
        if (sa == 0.0 || sb == 0.0) continue;
        const double na = std::sqrt(sa), nb = std::sqrt(sb);
        const float* ap = a.data.data() + n * d;
        const float* bp = b.data.data() + n * d;
        float* dp = da.data.data() + n * d;
        for (std::int64_t i = 0; i < d; ++i) {
          const double dcos = bp[i] / (na * nb) - ab * ap[i] / (sa * na * nb);
          dp[i] = static_cast<float>(-g * dcos);
        }
      }
      accum(target, da);
    }
  };
  return id;
}

void Graph::backward(int loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1) throw ConfigError("backward: loss must be scalar");
  if (!ln.needs_grad)
    throw ConfigError("backward: loss does not depend on any trainable leaf");
  ln.grad.data[0] = 1.0f;
  for (int id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.back) n.back();
  }
}

}  // namespace fedlab
