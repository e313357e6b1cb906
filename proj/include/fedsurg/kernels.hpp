#pragma once

// Convolution kernels over frame batches laid out [n, h, w, c] with kernels
// [kh, kw, c_in, c_out]. The default kernels are OpenMP-parallel over output
// rows; every output element is reduced by exactly one thread in a fixed
// order, so results do not depend on the thread count. The `reference`
// namespace holds plain serial loops kept as the test oracle.

#include <cstddef>
#include <span>

#include "fedsurg/tensor.hpp"

namespace fedsurg {

enum class Padding { same, valid };

struct ConvGeometry {
  std::size_t frames = 0, in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0, out_c = 0;
  std::size_t stride = 1;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;

  std::size_t input_size() const { return frames * in_h * in_w * in_c; }
  std::size_t output_size() const { return frames * out_h * out_w * out_c; }
  std::size_t kernel_size() const { return k_h * k_w * in_c * out_c; }
};

/// Validates shapes and derives output geometry. `input` must be rank 4.
/// Same padding follows the usual split: out = ceil(in / stride), the extra
/// row/column of zero padding goes to the bottom/right.
ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, Padding padding);

namespace kernels {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out);
/// Overwrites `din` with dL/dinput.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> din);
/// Overwrites `dkernel` and `dbias`.
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dkernel, std::span<double> dbias);

namespace reference {
void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> din);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dkernel, std::span<double> dbias);
}  // namespace reference

}  // namespace kernels
}  // namespace fedsurg
