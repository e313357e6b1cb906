#include "fedsurg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "fedsurg/errors.hpp"

namespace fedsurg::ops {

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, Padding padding) {
  const bool single = input.rank() == 3;
  if (!single && input.rank() != 4) throw DimensionError("conv2d: input must be rank 3 or 4");
  Shape in_shape = input.shape();
  if (single) in_shape.insert(in_shape.begin(), 1);
  const ConvGeometry g = conv_geometry(in_shape, kernel.shape(), stride, padding);
  if (bias.rank() != 1 || bias.dim(0) != g.out_c) throw DimensionError("conv2d: bias must be [c_out]");
  Shape out_shape{g.frames, g.out_h, g.out_w, g.out_c};
  Tensor out(out_shape);
  kernels::conv2d_forward(g, input.data(), kernel.data(), bias.data(), out.data());
  if (single) return out.reshaped({g.out_h, g.out_w, g.out_c});
  return out;
}

Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("affine: expected input [n], weight [n,m], bias [m]");
  }
  const std::size_t n = input.dim(0), m = weight.dim(1);
  if (weight.dim(0) != n || bias.dim(0) != m) {
    throw DimensionError("affine: input " + shape_str(input.shape()) + " weight " + shape_str(weight.shape()) +
                         " bias " + shape_str(bias.shape()));
  }
  Tensor out = bias;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = input[i];
    for (std::size_t j = 0; j < m; ++j) out[j] += v * weight[i * m + j];
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax(const Tensor& scores) {
  if (scores.rank() != 1 || scores.size() == 0) throw DimensionError("softmax: expected non-empty vector");
  const double m = *std::max_element(scores.data().begin(), scores.data().end());
  Tensor out = scores;
  double total = 0.0;
  for (auto& v : out.data()) {
    v = std::exp(v - m);
    total += v;
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() < 2) throw DimensionError("global_avg_pool: expected [..., c]");
  const std::size_t c = input.shape().back();
  const std::size_t positions = input.size() / c;
  Tensor out(Shape{c});
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += input[p * c + ch];
  for (auto& v : out.data()) v /= static_cast<double>(positions);
  return out;
}

Tensor channel_mean(const Tensor& input) {
  if (input.rank() != 4) throw DimensionError("channel_mean: expected [l,h,w,c]");
  const std::size_t c = input.dim(3);
  Tensor out(Shape{input.dim(0), input.dim(1), input.dim(2)});
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += input[p * c + ch];
    out[p] = s / static_cast<double>(c);
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) throw DimensionError("concat: expected vectors");
  std::vector<double> v(a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor upsample2x(const Tensor& input) {
  if (input.rank() != 4) throw DimensionError("upsample2x: expected [n,h,w,c]");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  Tensor out(Shape{n, 2 * h, 2 * w, c});
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t x = 0; x < 2 * w; ++x) {
        const double* src = input.data().data() + ((f * h + y / 2) * w + x / 2) * c;
        std::copy(src, src + c, out.data().begin() + static_cast<long>(((f * 2 * h + y) * 2 * w + x) * c));
      }
  return out;
}

}  // namespace fedsurg::ops
