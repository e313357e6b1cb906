#include "fedsurg/kernels.hpp"

#include <algorithm>
#include <vector>

#include "fedsurg/errors.hpp"

namespace fedsurg {

namespace {
constexpr std::size_t kParallelThreshold = 1 << 14;

inline long long as_ll(std::size_t v) { return static_cast<long long>(v); }
}  // namespace

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, Padding padding) {
  if (input.size() != 4) throw DimensionError("conv2d: input must be [n,h,w,c], got " + shape_str(input));
  if (kernel.size() != 4) throw DimensionError("conv2d: kernel must be [kh,kw,cin,cout], got " + shape_str(kernel));
  if (input[3] != kernel[2]) {
    throw DimensionError("conv2d: input channels " + std::to_string(input[3]) + " != kernel c_in " +
                         std::to_string(kernel[2]));
  }
  if (kernel[0] % 2 == 0 || kernel[1] % 2 == 0) throw InputError("conv2d: kernel extents must be odd");
  if (stride != 1 && stride != 2) throw InputError("conv2d: stride must be 1 or 2");

  ConvGeometry g;
  g.frames = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  g.k_h = kernel[0];
  g.k_w = kernel[1];
  g.out_c = kernel[3];
  g.stride = stride;
  if (padding == Padding::same) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const long long pad_h = std::max<long long>(as_ll((g.out_h - 1) * stride + g.k_h) - as_ll(g.in_h), 0);
    const long long pad_w = std::max<long long>(as_ll((g.out_w - 1) * stride + g.k_w) - as_ll(g.in_w), 0);
    g.pad_top = static_cast<std::size_t>(pad_h / 2);
    g.pad_left = static_cast<std::size_t>(pad_w / 2);
  } else {
    if (g.in_h < g.k_h || g.in_w < g.k_w) throw DimensionError("conv2d: valid padding with kernel larger than input");
    g.out_h = (g.in_h - g.k_h) / stride + 1;
    g.out_w = (g.in_w - g.k_w) / stride + 1;
  }
  return g;
}

namespace kernels {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out) {
  const long long rows = as_ll(g.frames * g.out_h);
  const bool parallel = g.output_size() * g.k_h * g.k_w * g.in_c > kParallelThreshold;
#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(g.out_c);
#pragma omp for schedule(static)
    for (long long r = 0; r < rows; ++r) {
      const std::size_t n = static_cast<std::size_t>(r) / g.out_h;
      const std::size_t oy = static_cast<std::size_t>(r) % g.out_h;
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::copy(bias.begin(), bias.end(), acc.begin());
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const long long iy = as_ll(oy * g.stride + ky) - as_ll(g.pad_top);
          if (iy < 0 || iy >= as_ll(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            const long long ix = as_ll(ox * g.stride + kx) - as_ll(g.pad_left);
            if (ix < 0 || ix >= as_ll(g.in_w)) continue;
            const double* px = in.data() + ((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                            static_cast<std::size_t>(ix)) * g.in_c;
            const double* krow = kernel.data() + (ky * g.k_w + kx) * g.in_c * g.out_c;
            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
              const double v = px[ci];
              const double* kc = krow + ci * g.out_c;
              for (std::size_t co = 0; co < g.out_c; ++co) acc[co] += v * kc[co];
            }
          }
        }
        std::copy(acc.begin(), acc.end(), out.begin() + as_ll(((n * g.out_h + oy) * g.out_w + ox) * g.out_c));
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> din) {
  const long long rows = as_ll(g.frames * g.in_h);
  const bool parallel = g.input_size() * g.k_h * g.k_w * g.out_c > kParallelThreshold;
#pragma omp parallel for schedule(static) if (parallel)
  for (long long r = 0; r < rows; ++r) {
    const std::size_t n = static_cast<std::size_t>(r) / g.in_h;
    const std::size_t iy = static_cast<std::size_t>(r) % g.in_h;
    for (std::size_t ix = 0; ix < g.in_w; ++ix) {
      double* dpx = din.data() + ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
      std::fill(dpx, dpx + g.in_c, 0.0);
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const long long ty = as_ll(iy + g.pad_top) - as_ll(ky);
        if (ty < 0 || ty % as_ll(g.stride) != 0) continue;
        const std::size_t oy = static_cast<std::size_t>(ty) / g.stride;
        if (oy >= g.out_h) continue;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const long long tx = as_ll(ix + g.pad_left) - as_ll(kx);
          if (tx < 0 || tx % as_ll(g.stride) != 0) continue;
          const std::size_t ox = static_cast<std::size_t>(tx) / g.stride;
          if (ox >= g.out_w) continue;
          const double* go = dout.data() + ((n * g.out_h + oy) * g.out_w + ox) * g.out_c;
          const double* krow = kernel.data() + (ky * g.k_w + kx) * g.in_c * g.out_c;
          for (std::size_t ci = 0; ci < g.in_c; ++ci) {
            const double* kc = krow + ci * g.out_c;
            double s = 0.0;
            for (std::size_t co = 0; co < g.out_c; ++co) s += go[co] * kc[co];
            dpx[ci] += s;
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dkernel, std::span<double> dbias) {
  const long long taps = as_ll(g.k_h * g.k_w * g.in_c);
  const bool parallel = g.output_size() * g.k_h * g.k_w * g.in_c > kParallelThreshold;
#pragma omp parallel for schedule(static) if (parallel)
  for (long long t = 0; t < taps; ++t) {
    const std::size_t ci = static_cast<std::size_t>(t) % g.in_c;
    const std::size_t kx = (static_cast<std::size_t>(t) / g.in_c) % g.k_w;
    const std::size_t ky = static_cast<std::size_t>(t) / (g.in_c * g.k_w);
    double* dk = dkernel.data() + static_cast<std::size_t>(t) * g.out_c;
    std::fill(dk, dk + g.out_c, 0.0);
    for (std::size_t n = 0; n < g.frames; ++n) {
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const long long iy = as_ll(oy * g.stride + ky) - as_ll(g.pad_top);
        if (iy < 0 || iy >= as_ll(g.in_h)) continue;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const long long ix = as_ll(ox * g.stride + kx) - as_ll(g.pad_left);
          if (ix < 0 || ix >= as_ll(g.in_w)) continue;
          const double v = in[((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) *
                                  g.in_c +
                              ci];
          const double* go = dout.data() + ((n * g.out_h + oy) * g.out_w + ox) * g.out_c;
          for (std::size_t co = 0; co < g.out_c; ++co) dk[co] += v * go[co];
        }
      }
    }
  }
  std::fill(dbias.begin(), dbias.end(), 0.0);
  const std::size_t pixels = g.frames * g.out_h * g.out_w;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* go = dout.data() + p * g.out_c;
    for (std::size_t co = 0; co < g.out_c; ++co) dbias[co] += go[co];
  }
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> kernel,
                    std::span<const double> bias, std::span<double> out) {
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          double s = bias[co];
          for (std::size_t ky = 0; ky < g.k_h; ++ky)
            for (std::size_t kx = 0; kx < g.k_w; ++kx) {
              const long long iy = as_ll(oy * g.stride + ky) - as_ll(g.pad_top);
              const long long ix = as_ll(ox * g.stride + kx) - as_ll(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= as_ll(g.in_h) || ix >= as_ll(g.in_w)) continue;
              for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                s += in[((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) *
                            g.in_c +
                        ci] *
                     kernel[((ky * g.k_w + kx) * g.in_c + ci) * g.out_c + co];
              }
            }
          out[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = s;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernel,
                           std::span<double> din) {
  std::fill(din.begin(), din.end(), 0.0);
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const double go = dout[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
          for (std::size_t ky = 0; ky < g.k_h; ++ky)
            for (std::size_t kx = 0; kx < g.k_w; ++kx) {
              const long long iy = as_ll(oy * g.stride + ky) - as_ll(g.pad_top);
              const long long ix = as_ll(ox * g.stride + kx) - as_ll(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= as_ll(g.in_h) || ix >= as_ll(g.in_w)) continue;
              for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                din[((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c +
                    ci] += go * kernel[((ky * g.k_w + kx) * g.in_c + ci) * g.out_c + co];
              }
            }
        }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> in, std::span<const double> dout,
                            std::span<double> dkernel, std::span<double> dbias) {
  std::fill(dkernel.begin(), dkernel.end(), 0.0);
  std::fill(dbias.begin(), dbias.end(), 0.0);
  for (std::size_t n = 0; n < g.frames; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const double go = dout[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
          dbias[co] += go;
          for (std::size_t ky = 0; ky < g.k_h; ++ky)
            for (std::size_t kx = 0; kx < g.k_w; ++kx) {
              const long long iy = as_ll(oy * g.stride + ky) - as_ll(g.pad_top);
              const long long ix = as_ll(ox * g.stride + kx) - as_ll(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= as_ll(g.in_h) || ix >= as_ll(g.in_w)) continue;
              for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                dkernel[((ky * g.k_w + kx) * g.in_c + ci) * g.out_c + co] +=
                    go * in[((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) *
                                g.in_c +
                            ci];
              }
            }
        }
}

}  // namespace reference
}  // namespace kernels
}  // namespace fedsurg
