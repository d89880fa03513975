#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet::ops {

/// Every op is a pure function of its inputs. When `tape` is non-null and any
/// input requires a gradient, the op marks its output as gradient-tracked and
/// records a backward closure; otherwise it is a plain forward evaluation.
/// Index order is row-major throughout, matching Tensor storage.

// -- structure -------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape, GradTape* tape = nullptr);
Tensor transpose(const Tensor& x, GradTape* tape = nullptr);  // rank 2
Tensor concat(std::span<const Tensor> xs, std::size_t axis, GradTape* tape = nullptr);

// -- elementwise, same shape -----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

// -- elementwise, unary ----------------------------------------------------

Tensor scale(const Tensor& x, double c, GradTape* tape = nullptr);
Tensor add_scalar(const Tensor& x, double c, GradTape* tape = nullptr);
Tensor exp(const Tensor& x, GradTape* tape = nullptr);
Tensor log(const Tensor& x, GradTape* tape = nullptr);
Tensor sigmoid(const Tensor& x, GradTape* tape = nullptr);
Tensor relu(const Tensor& x, GradTape* tape = nullptr);

// -- broadcasts --------------------------------------------------------------

/// y[l,c] = x[l,c] + v[c] / y[l,c] = x[l,c] * v[c] for x of shape [L,C].
Tensor add_rowvec(const Tensor& x, const Tensor& v, GradTape* tape = nullptr);
Tensor mul_rowvec(const Tensor& x, const Tensor& v, GradTape* tape = nullptr);

/// Elementwise combination with a single-element tensor (differentiable in
/// both operands): y = x (+,-,*,/) s.
Tensor add_bcast(const Tensor& x, const Tensor& s, GradTape* tape = nullptr);
Tensor sub_bcast(const Tensor& x, const Tensor& s, GradTape* tape = nullptr);
Tensor mul_bcast(const Tensor& x, const Tensor& s, GradTape* tape = nullptr);
Tensor div_bcast(const Tensor& x, const Tensor& s, GradTape* tape = nullptr);

// -- reductions --------------------------------------------------------------

Tensor reduce_sum(const Tensor& x, GradTape* tape = nullptr);   // -> {1}
Tensor reduce_mean(const Tensor& x, GradTape* tape = nullptr);  // -> {1}
/// Mean over axis 0 of a [L,C] tensor -> [C].
Tensor mean_axis0(const Tensor& x, GradTape* tape = nullptr);

// -- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

/// x.W + b with x of shape [in] or [n,in], W of shape [in,out], b of shape
/// [out] (pass a default-constructed Tensor for no bias).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, GradTape* tape = nullptr);

// -- neural-net blocks -------------------------------------------------------

/// Numerically stable softmax along `axis` (max is subtracted per slice).
/// Supports rank-1 (axis 0) and rank-2 (axis 0 or 1) tensors.
Tensor softmax(const Tensor& x, std::size_t axis, GradTape* tape = nullptr);

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  bool depthwise = false;
};

/// Cross-correlation (no kernel flip) of x[c_in,H,W] with
/// kernel[c_out,c_in,k,k], or kernel[c,1,k,k] when depthwise. k must be odd.
/// Output dims follow floor((H + 2p - d(k-1) - 1)/s) + 1 per axis.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dSpec& spec = {},
              GradTape* tape = nullptr);

/// y[c,h,w] = x[c,h,w] + b[c].
Tensor add_channel_bias(const Tensor& x, const Tensor& b, GradTape* tape = nullptr);

/// y[c,h,w] = x[c,h,w] * z[c].
Tensor scale_channels(const Tensor& x, const Tensor& z, GradTape* tape = nullptr);

Tensor global_avg_pool(const Tensor& x, GradTape* tape = nullptr);  // [c,H,W] -> [c]

/// Output cell (i,j) averages input window
/// [floor(i*H/out_h), ceil((i+1)*H/out_h)) x [floor(j*W/out_w), ceil((j+1)*W/out_w)).
Tensor adaptive_avg_pool(const Tensor& x, std::size_t out_h, std::size_t out_w,
                         GradTape* tape = nullptr);

/// -log(probs[label] + 1e-12) for a probability vector of shape [N].
Tensor cross_entropy(const Tensor& probs, std::size_t label, GradTape* tape = nullptr);

// -- non-differentiable helpers ---------------------------------------------

std::size_t argmax(const Tensor& x);

}  // namespace mainet::ops
