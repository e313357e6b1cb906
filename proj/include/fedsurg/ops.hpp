#pragma once

// Forward-only tensor operations. The differentiable versions in
// autograd.hpp reuse these for their forward values.

#include <cstddef>

#include "fedsurg/kernels.hpp"
#include "fedsurg/tensor.hpp"

namespace fedsurg::ops {

/// Direct 2-D convolution. `input` is [h,w,c_in] or [n,h,w,c_in]; the
/// result has the same rank.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              Padding padding = Padding::same);

/// output[j] = sum_i input[i] * weight[i,j] + bias[j]
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& scores);

/// Per-channel mean over every leading position of a [..., c] tensor.
Tensor global_avg_pool(const Tensor& input);
/// Mean over the channel axis of [l,h,w,c] -> [l,h,w].
Tensor channel_mean(const Tensor& input);

Tensor concat(const Tensor& a, const Tensor& b);
/// Nearest-neighbour x2 upsampling of [n,h,w,c].
Tensor upsample2x(const Tensor& input);

}  // namespace fedsurg::ops
