#pragma once

// Test-only oracles, kept independent of the library's compute paths:
// naive scalar-loop forwards, central finite differences, brute-force
// scoring. These check the optimized implementations, so nothing here may
// call into the code paths under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fedlab/classifier.hpp"
#include "fedlab/fl.hpp"
#include "fedlab/params.hpp"
#include "fedlab/tensor.hpp"

namespace oracle {

inline fedlab::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                                    float lo = -1.0f, float hi = 1.0f) {
  fedlab::Tensor t = fedlab::Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

// Central differences of a scalar function, one coordinate at a time.
inline std::vector<double> central_diff(
    const std::function<double(const std::vector<float>&)>& f, std::vector<float> x,
    double h = 1e-3) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = x[i];
    x[i] = static_cast<float>(keep + h);
    const double up = f(x);
    x[i] = static_cast<float>(keep - h);
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// max_i |fd_i - an_i| / (max_i |an_i| + eps)
inline double max_rel_error(const std::vector<double>& fd, const std::vector<float>& an) {
  double scale = 0.0;
  for (float v : an) scale = std::max(scale, static_cast<double>(std::abs(v)));
  for (double v : fd) scale = std::max(scale, std::abs(v));
  scale += 1e-8;
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::abs(fd[i] - static_cast<double>(an[i])) / scale);
  return worst;
}

// Plain nested-loop classifier forward (NHWC), double accumulators.
inline fedlab::Tensor scalar_forward(const fedlab::ParameterVector& params,
                                     const fedlab::ClassifierSpec& spec,
                                     const fedlab::Tensor& batch) {
  using namespace fedlab;
  Tensor cur = batch;
  std::size_t pidx = 0;
  const auto& segs = params.layout->segments();
  auto seg_data = [&](std::size_t i) { return params.values.data() + segs[i].offset; };

  for (const Layer& layer : spec.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const int b = cur.dim(0), h = cur.dim(1), w = cur.dim(2), c = cur.dim(3);
      const int k = conv->kernel, s = conv->stride, p = conv->pad, f = conv->out_channels;
      const int oh = (h + 2 * p - k) / s + 1;
      const int ow = (w + 2 * p - k) / s + 1;
      const float* wts = seg_data(pidx++);
      const float* bias = seg_data(pidx++);
      Tensor out = Tensor::zeros({b, oh, ow, f});
      for (int n = 0; n < b; ++n)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int fc = 0; fc < f; ++fc) {
              double acc = bias[fc];
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                  for (int ch = 0; ch < c; ++ch) {
                    const int iy = oy * s + ky - p;
                    const int ix = ox * s + kx - p;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    const double xv =
                        cur.data[((static_cast<std::size_t>(n) * h + iy) * w + ix) * c + ch];
                    const double wv =
                        wts[((static_cast<std::size_t>(fc) * k + ky) * k + kx) * c + ch];
                    acc += xv * wv;
                  }
              out.data[((static_cast<std::size_t>(n) * oh + oy) * ow + ox) * f + fc] =
                  static_cast<float>(acc);
            }
      cur = std::move(out);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (auto& v : cur.data) v = std::max(0.0f, v);
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      const int b = cur.dim(0), h = cur.dim(1), w = cur.dim(2), c = cur.dim(3);
      Tensor out = Tensor::zeros({b, h / 2, w / 2, c});
      for (int n = 0; n < b; ++n)
        for (int oy = 0; oy < h / 2; ++oy)
          for (int ox = 0; ox < w / 2; ++ox)
            for (int ch = 0; ch < c; ++ch) {
              float best = -1e30f;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                  best = std::max(
                      best, cur.data[((static_cast<std::size_t>(n) * h + oy * 2 + dy) * w +
                                      ox * 2 + dx) * c + ch]);
              out.data[((static_cast<std::size_t>(n) * (h / 2) + oy) * (w / 2) + ox) * c + ch] =
                  best;
            }
      cur = std::move(out);
    } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      const int b = cur.dim(0);
      const int d = static_cast<int>(cur.size() / b);
      const float* wts = seg_data(pidx++);
      const float* bias = seg_data(pidx++);
      Tensor out = Tensor::zeros({b, dense->out});
      for (int n = 0; n < b; ++n)
        for (int o = 0; o < dense->out; ++o) {
          double acc = bias[o];
          for (int j = 0; j < d; ++j)
            acc += static_cast<double>(cur.data[static_cast<std::size_t>(n) * d + j]) *
                   wts[static_cast<std::size_t>(j) * dense->out + o];
          out.data[static_cast<std::size_t>(n) * dense->out + o] = static_cast<float>(acc);
        }
      cur = std::move(out);
    }
  }
  return cur;
}

// Exhaustive scoring with a full sort, independent of the library's
// nth_element implementation.
inline int brute_krum(const std::vector<fedlab::ClientUpdate>& updates, int f) {
  const int m = static_cast<int>(updates.size());
  const int neighbours = m - f - 2;
  std::vector<double> scores(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    std::vector<double> dists;
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      double acc = 0.0;
      for (std::size_t t = 0; t < updates[static_cast<std::size_t>(i)].delta.size(); ++t) {
        const double diff =
            static_cast<double>(updates[static_cast<std::size_t>(i)].delta[t]) -
            static_cast<double>(updates[static_cast<std::size_t>(j)].delta[t]);
        acc += diff * diff;
      }
      dists.push_back(acc);
    }
    std::sort(dists.begin(), dists.end());
    for (int t = 0; t < neighbours; ++t) scores[static_cast<std::size_t>(i)] += dists[static_cast<std::size_t>(t)];
  }
  int best = 0;
  for (int i = 1; i < m; ++i) {
    if (scores[static_cast<std::size_t>(i)] < scores[static_cast<std::size_t>(best)] ||
        (scores[static_cast<std::size_t>(i)] == scores[static_cast<std::size_t>(best)] &&
         updates[static_cast<std::size_t>(i)].client_id <
             updates[static_cast<std::size_t>(best)].client_id))
      best = i;
  }
  return best;
}

}  // namespace oracle
