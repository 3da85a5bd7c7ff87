#pragma once

#include <cstdint>
#include <vector>

#include "fedlab/tensor.hpp"

namespace fedlab {

// Low-level NHWC kernels shared by the autodiff graph and the eager
// forward paths. Convolution weights are [F,K,K,Cin]; transposed
// convolution weights are [Cin,K,K,Cout]; dense weights are [D,O].

struct ConvDims {
  int batch, in_h, in_w, in_c;
  int out_h, out_w, out_c;
  int kernel, stride, pad;
};

ConvDims conv_dims(const std::vector<int>& x_shape, const std::vector<int>& w_shape,
                   int stride, int pad);
ConvDims conv_transpose_dims(const std::vector<int>& x_shape,
                             const std::vector<int>& w_shape, int stride, int pad);

// C = op(A) * op(B), row-major buffers. Accumulates into C when requested.
void gemm(const float* a, int a_rows, int a_cols, bool trans_a,
          const float* b, int b_rows, int b_cols, bool trans_b,
          float* c, bool accumulate);

void im2col(const float* img, int h, int w, int c, int kernel, int stride, int pad,
            int out_h, int out_w, float* cols);
void col2im(const float* cols, int h, int w, int c, int kernel, int stride, int pad,
            int out_h, int out_w, float* img);

// Forward passes. conv2d_forward optionally stores the im2col buffers of
// every batch element for reuse in the backward pass.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      int stride, int pad, std::vector<float>* cols_cache);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                     int stride, int pad, const std::vector<float>& cols_cache,
                     Tensor* dx, Tensor* dw, Tensor* db);

Tensor conv2d_transpose_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                                int stride, int pad);
void conv2d_transpose_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                               int stride, int pad, Tensor* dx, Tensor* dw, Tensor* db);

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                    Tensor* dx, Tensor* dw, Tensor* db);

Tensor maxpool2_forward(const Tensor& x, std::vector<std::int64_t>* argmax);
Tensor maxpool2_backward(const Tensor& x, const Tensor& dout,
                         const std::vector<std::int64_t>& argmax);

// Row-wise log-softmax over [B,K] with double accumulators.
void log_softmax_rows(const Tensor& logits, std::vector<double>* out);

}  // namespace fedlab
