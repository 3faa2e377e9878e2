#pragma once

#include <vector>

#include "condense/tensor.hpp"

// Raw tensor math. Everything here is single-threaded with a fixed
// accumulation order so identical inputs give bit-identical outputs.
namespace condense::kernels {

enum class Act { none, relu, leaky_relu, tanh, sigmoid };

struct ConvDims {
  int batch, in_ch, in_h, in_w;
  int out_ch, kernel, stride, pad;
  int out_h, out_w;
};

// Validates shapes and computes output sizes. weight is (out_ch,in_ch,k,k)
// for conv2d and (in_ch,out_ch,k,k) for conv_transpose2d.
ConvDims conv2d_dims(const std::vector<int>& x_shape, const std::vector<int>& w_shape,
                     int stride, int pad);
ConvDims conv_transpose2d_dims(const std::vector<int>& x_shape, const std::vector<int>& w_shape,
                               int stride, int pad);

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& w, const ConvDims& d);
Tensor conv2d_grad_weight(const Tensor& x, const Tensor& grad_out, const ConvDims& d);

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor conv_transpose2d_grad_input(const Tensor& grad_out, const Tensor& w, const ConvDims& d);
Tensor conv_transpose2d_grad_weight(const Tensor& x, const Tensor& grad_out, const ConvDims& d);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int from, int to);  // [from, to)

Tensor activation(const Tensor& x, Act kind, float leaky_slope = 0.2f);
// x is the op input, y its output; relu/leaky read x, tanh/sigmoid read y.
Tensor activation_grad(const Tensor& grad_out, const Tensor& x, const Tensor& y,
                       Act kind, float leaky_slope = 0.2f);

// Parameter-free per-(sample,channel) normalization over H*W.
Tensor instance_norm(const Tensor& x, float eps = 1e-5f);
Tensor instance_norm_grad(const Tensor& grad_out, const Tensor& x, const Tensor& y, float eps = 1e-5f);

// Losses return rank-0 tensors. bce clamps predictions to [1e-7, 1-1e-7].
Tensor l1_loss(const Tensor& pred, const Tensor& target);
Tensor l1_loss_grad_pred(const Tensor& pred, const Tensor& target, float upstream);
Tensor bce_loss(const Tensor& pred, const Tensor& target);
Tensor bce_loss_grad_pred(const Tensor& pred, const Tensor& target, float upstream);

Tensor sum(const Tensor& x);

// Gathers index slices along axis 0 or 1 of a rank-4 tensor (weight surgery).
Tensor take_channels(const Tensor& x, int axis, const std::vector<int>& indices);

// Stacks rank-4 single-sample tensors (batch dim 1 each) into one batch.
Tensor stack_batch(const std::vector<const Tensor*>& samples);

// C[m x n] = (or +=) A[m x k] * B[k x n]
void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);
// C[m x n] = (or +=) A[k x m]^T * B[k x n]
void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);
// C[m x n] = (or +=) A[m x k] * B[n x k]^T
void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);

}  // namespace condense::kernels
