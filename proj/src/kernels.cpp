#include "fedlab/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "fedlab/errors.hpp"

namespace fedlab {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ConvDims conv_dims(const std::vector<int>& x_shape, const std::vector<int>& w_shape,
                   int stride, int pad) {
  require(x_shape.size() == 4, "conv2d input must be [B,H,W,C], got " + shape_str(x_shape));
  require(w_shape.size() == 4, "conv2d weight must be [F,K,K,C], got " + shape_str(w_shape));
  ConvDims d;
  d.batch = x_shape[0];
  d.in_h = x_shape[1];
  d.in_w = x_shape[2];
  d.in_c = x_shape[3];
  d.out_c = w_shape[0];
  d.kernel = w_shape[1];
  d.stride = stride;
  d.pad = pad;
  require(w_shape[1] == w_shape[2], "conv2d kernel must be square");
  require(w_shape[3] == d.in_c, "conv2d weight channels " + std::to_string(w_shape[3]) +
                                    " do not match input channels " + std::to_string(d.in_c));
  require(stride >= 1 && pad >= 0, "conv2d needs stride >= 1 and pad >= 0");
  d.out_h = (d.in_h + 2 * pad - d.kernel) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.kernel) / stride + 1;
  require(d.out_h > 0 && d.out_w > 0, "conv2d output would be empty");
  return d;
}

ConvDims conv_transpose_dims(const std::vector<int>& x_shape,
                             const std::vector<int>& w_shape, int stride, int pad) {
  require(x_shape.size() == 4, "conv2d_transpose input must be [B,H,W,C]");
  require(w_shape.size() == 4, "conv2d_transpose weight must be [Cin,K,K,Cout]");
  require(w_shape[1] == w_shape[2], "conv2d_transpose kernel must be square");
  require(w_shape[0] == x_shape[3], "conv2d_transpose weight Cin " + std::to_string(w_shape[0]) +
                                        " does not match input channels " +
                                        std::to_string(x_shape[3]));
  ConvDims d;
  d.batch = x_shape[0];
  d.in_h = x_shape[1];
  d.in_w = x_shape[2];
  d.in_c = x_shape[3];
  d.kernel = w_shape[1];
  d.out_c = w_shape[3];
  d.stride = stride;
  d.pad = pad;
  d.out_h = (d.in_h - 1) * stride + d.kernel - 2 * pad;
  d.out_w = (d.in_w - 1) * stride + d.kernel - 2 * pad;
  require(d.out_h > 0 && d.out_w > 0, "conv2d_transpose output would be empty");
  return d;
}

void gemm(const float* a, int a_rows, int a_cols, bool trans_a,
          const float* b, int b_rows, int b_cols, bool trans_b,
          float* c, bool accumulate) {
  CMapMat ma(a, a_rows, a_cols);
  CMapMat mb(b, b_rows, b_cols);
  const int m = trans_a ? a_cols : a_rows;
  const int n = trans_b ? b_rows : b_cols;
  MapMat mc(c, m, n);
  if (trans_a && trans_b) {
    if (accumulate) mc.noalias() += ma.transpose() * mb.transpose();
    else mc.noalias() = ma.transpose() * mb.transpose();
  } else if (trans_a) {
    if (accumulate) mc.noalias() += ma.transpose() * mb;
    else mc.noalias() = ma.transpose() * mb;
  } else if (trans_b) {
    if (accumulate) mc.noalias() += ma * mb.transpose();
    else mc.noalias() = ma * mb.transpose();
  } else {
    if (accumulate) mc.noalias() += ma * mb;
    else mc.noalias() = ma * mb;
  }
}

void im2col(const float* img, int h, int w, int c, int kernel, int stride, int pad,
            int out_h, int out_w, float* cols) {
  const int patch = kernel * kernel * c;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float* row = cols + (static_cast<std::int64_t>(oy) * out_w + ox) * patch;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) {
          std::memset(row + ky * kernel * c, 0, sizeof(float) * static_cast<std::size_t>(kernel * c));
          continue;
        }
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          float* dst = row + (ky * kernel + kx) * c;
          if (ix < 0 || ix >= w) {
            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(c));
          } else {
            const float* src = img + (static_cast<std::int64_t>(iy) * w + ix) * c;
            std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(c));
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int h, int w, int c, int kernel, int stride, int pad,
            int out_h, int out_w, float* img) {
  const int patch = kernel * kernel * c;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const float* row = cols + (static_cast<std::int64_t>(oy) * out_w + ox) * patch;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          float* dst = img + (static_cast<std::int64_t>(iy) * w + ix) * c;
          const float* src = row + (ky * kernel + kx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      int stride, int pad, std::vector<float>* cols_cache) {
  const ConvDims d = conv_dims(x.shape, w.shape, stride, pad);
  require(b.size() == d.out_c, "conv2d bias size mismatch");
  const int patch = d.kernel * d.kernel * d.in_c;
  const std::int64_t cols_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * patch;
  const std::int64_t out_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * d.out_c;

  std::vector<float> local_cols;
  std::vector<float>* cols = cols_cache ? cols_cache : &local_cols;
  cols->assign(static_cast<std::size_t>(cols_per_img) * d.batch, 0.0f);

  Tensor y = Tensor::zeros({d.batch, d.out_h, d.out_w, d.out_c});
  for (int n = 0; n < d.batch; ++n) {
    float* cb = cols->data() + n * cols_per_img;
    im2col(x.data.data() + static_cast<std::int64_t>(n) * d.in_h * d.in_w * d.in_c,
           d.in_h, d.in_w, d.in_c, d.kernel, d.stride, d.pad, d.out_h, d.out_w, cb);
    // [OH*OW, patch] x [F, patch]^T -> [OH*OW, F]
    gemm(cb, d.out_h * d.out_w, patch, false, w.data.data(), d.out_c, patch, true,
         y.data.data() + n * out_per_img, false);
  }
  for (int n = 0; n < d.batch; ++n) {
    float* yb = y.data.data() + n * out_per_img;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.out_h) * d.out_w; ++i)
      for (int f = 0; f < d.out_c; ++f) yb[i * d.out_c + f] += b.data[static_cast<std::size_t>(f)];
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                     int stride, int pad, const std::vector<float>& cols_cache,
                     Tensor* dx, Tensor* dw, Tensor* db) {
  const ConvDims d = conv_dims(x.shape, w.shape, stride, pad);
  const int patch = d.kernel * d.kernel * d.in_c;
  const std::int64_t cols_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * patch;
  const std::int64_t out_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * d.out_c;

  if (dw) *dw = Tensor::zeros(w.shape);
  if (db) *db = Tensor::zeros({d.out_c});
  if (dx) *dx = Tensor::zeros(x.shape);

  std::vector<float> dcols(static_cast<std::size_t>(cols_per_img), 0.0f);
  for (int n = 0; n < d.batch; ++n) {
    const float* dyb = dout.data.data() + n * out_per_img;
    const float* cb = cols_cache.data() + n * cols_per_img;
    if (dw) {
      // [F, OH*OW] x [OH*OW, patch] accumulated over the batch
      gemm(dyb, d.out_h * d.out_w, d.out_c, true, cb, d.out_h * d.out_w, patch, false,
           dw->data.data(), true);
    }
    if (db) {
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.out_h) * d.out_w; ++i)
        for (int f = 0; f < d.out_c; ++f) db->data[static_cast<std::size_t>(f)] += dyb[i * d.out_c + f];
    }
    if (dx) {
      gemm(dyb, d.out_h * d.out_w, d.out_c, false, w.data.data(), d.out_c, patch, false,
           dcols.data(), false);
      col2im(dcols.data(), d.in_h, d.in_w, d.in_c, d.kernel, d.stride, d.pad, d.out_h,
             d.out_w, dx->data.data() + static_cast<std::int64_t>(n) * d.in_h * d.in_w * d.in_c);
    }
  }
}

Tensor conv2d_transpose_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                                int stride, int pad) {
  const ConvDims d = conv_transpose_dims(x.shape, w.shape, stride, pad);
  require(b.size() == d.out_c, "conv2d_transpose bias size mismatch");
  const int patch = d.kernel * d.kernel * d.out_c;
  const std::int64_t in_per_img = static_cast<std::int64_t>(d.in_h) * d.in_w * d.in_c;
  const std::int64_t out_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * d.out_c;

  Tensor y = Tensor::zeros({d.batch, d.out_h, d.out_w, d.out_c});
  std::vector<float> cols(static_cast<std::size_t>(d.in_h) * d.in_w * patch);
  for (int n = 0; n < d.batch; ++n) {
    // [H*W, Cin] x [Cin, patch] -> columns of the adjoint convolution
    gemm(x.data.data() + n * in_per_img, d.in_h * d.in_w, d.in_c, false,
         w.data.data(), d.in_c, patch, false, cols.data(), false);
    col2im(cols.data(), d.out_h, d.out_w, d.out_c, d.kernel, d.stride, d.pad,
           d.in_h, d.in_w, y.data.data() + n * out_per_img);
  }
  for (int n = 0; n < d.batch; ++n) {
    float* yb = y.data.data() + n * out_per_img;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.out_h) * d.out_w; ++i)
      for (int f = 0; f < d.out_c; ++f) yb[i * d.out_c + f] += b.data[static_cast<std::size_t>(f)];
  }
  return y;
}

void conv2d_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                               int stride, int pad, Tensor* dx, Tensor* dw, Tensor* db) {
  const ConvDims d = conv_transpose_dims(x.shape, w.shape, stride, pad);
  const int patch = d.kernel * d.kernel * d.out_c;
  const std::int64_t in_per_img = static_cast<std::int64_t>(d.in_h) * d.in_w * d.in_c;
  const std::int64_t out_per_img = static_cast<std::int64_t>(d.out_h) * d.out_w * d.out_c;

  if (dx) *dx = Tensor::zeros(x.shape);
  if (dw) *dw = Tensor::zeros(w.shape);
  if (db) *db = Tensor::zeros({d.out_c});

  std::vector<float> dcols(static_cast<std::size_t>(d.in_h) * d.in_w * patch);
  for (int n = 0; n < d.batch; ++n) {
    const float* dyb = dout.data.data() + n * out_per_img;
    im2col(dyb, d.out_h, d.out_w, d.out_c, d.kernel, d.stride, d.pad, d.in_h, d.in_w,
           dcols.data());
    if (dx) {
      // [H*W, patch] x [Cin, patch]^T -> [H*W, Cin]
      gemm(dcols.data(), d.in_h * d.in_w, patch, false, w.data.data(), d.in_c, patch, true,
           dx->data.data() + n * in_per_img, false);
    }
    if (dw) {
      // [Cin, H*W] x [H*W, patch]
      gemm(x.data.data() + n * in_per_img, d.in_h * d.in_w, d.in_c, true, dcols.data(),
           d.in_h * d.in_w, patch, false, dw->data.data(), true);
    }
    if (db) {
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.out_h) * d.out_w; ++i)
        for (int f = 0; f < d.out_c; ++f) db->data[static_cast<std::size_t>(f)] += dyb[i * d.out_c + f];
    }
  }
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2, "dense input must be [B,D], got " + shape_str(x.shape));
  require(w.rank() == 2 && w.dim(0) == x.dim(1),
          "dense weight must be [D,O] with D=" + std::to_string(x.dim(1)));
  require(b.size() == w.dim(1), "dense bias size mismatch");
  Tensor y = Tensor::zeros({x.dim(0), w.dim(1)});
  gemm(x.data.data(), x.dim(0), x.dim(1), false, w.data.data(), w.dim(0), w.dim(1), false,
       y.data.data(), false);
  for (int n = 0; n < x.dim(0); ++n)
    for (int o = 0; o < w.dim(1); ++o)
      y.data[static_cast<std::size_t>(n) * w.dim(1) + o] += b.data[static_cast<std::size_t>(o)];
  return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                    Tensor* dx, Tensor* dw, Tensor* db) {
  if (dx) {
    *dx = Tensor::zeros(x.shape);
    gemm(dout.data.data(), x.dim(0), w.dim(1), false, w.data.data(), w.dim(0), w.dim(1),
         true, dx->data.data(), false);
  }
  if (dw) {
    *dw = Tensor::zeros(w.shape);
    gemm(x.data.data(), x.dim(0), x.dim(1), true, dout.data.data(), x.dim(0), w.dim(1),
         false, dw->data.data(), false);
  }
  if (db) {
    *db = Tensor::zeros({w.dim(1)});
    for (int n = 0; n < x.dim(0); ++n)
      for (int o = 0; o < w.dim(1); ++o)
        db->data[static_cast<std::size_t>(o)] += dout.data[static_cast<std::size_t>(n) * w.dim(1) + o];
  }
}

Tensor maxpool2_forward(const Tensor& x, std::vector<std::int64_t>* argmax) {
  require(x.rank() == 4, "maxpool input must be [B,H,W,C]");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool needs even spatial dims, got " + shape_str(x.shape));
  const int oh = h / 2, ow = w / 2;
  Tensor y = Tensor::zeros({b, oh, ow, c});
  if (argmax) argmax->assign(y.data.size(), 0);
  for (int n = 0; n < b; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ch = 0; ch < c; ++ch) {
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dxp = 0; dxp < 2; ++dxp) {
              const std::int64_t idx =
                  ((static_cast<std::int64_t>(n) * h + (oy * 2 + dy)) * w + (ox * 2 + dxp)) * c + ch;
              const float v = x.data[static_cast<std::size_t>(idx)];
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const std::int64_t oidx =
              ((static_cast<std::int64_t>(n) * oh + oy) * ow + ox) * c + ch;
          y.data[static_cast<std::size_t>(oidx)] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(oidx)] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& x, const Tensor& dout,
                         const std::vector<std::int64_t>& argmax) {
  Tensor dx = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < dout.data.size(); ++i)
    dx.data[static_cast<std::size_t>(argmax[i])] += dout.data[i];
  return dx;
}

void log_softmax_rows(const Tensor& logits, std::vector<double>* out) {
  require(logits.rank() == 2, "log_softmax expects [B,K] logits");
  const int b = logits.dim(0), k = logits.dim(1);
  out->assign(static_cast<std::size_t>(b) * k, 0.0);
  for (int n = 0; n < b; ++n) {
    const float* row = logits.data.data() + static_cast<std::int64_t>(n) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < k; ++j)
      (*out)[static_cast<std::size_t>(n) * k + j] = static_cast<double>(row[j]) - lse;
  }
}

}  // namespace fedlab
