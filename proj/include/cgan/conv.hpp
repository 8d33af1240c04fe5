#pragma once

#include <cstddef>
#include <string>

#include "error.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan::ops {

// Geometry of a "same"-padded 2-D convolution from a large map (conv input)
// to a small map (conv output). Transposed convolution runs the same
// geometry backwards. Kernels are laid out [k, k, large_channels,
// small_channels]. When the total padding is odd the extra row/column goes on
// the bottom/right.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t large_h = 0, large_w = 0, large_c = 0;
  std::size_t small_h = 0, small_w = 0, small_c = 0;
  std::size_t kernel = 0, stride = 1;
  std::size_t pad_top = 0, pad_left = 0;

  static ConvGeometry same(std::size_t batch, std::size_t large_h, std::size_t large_w, std::size_t large_c,
                           std::size_t small_c, std::size_t kernel, std::size_t stride) {
    if (stride == 0 || kernel == 0) throw ContractError("convolution kernel and stride must be positive");
    ConvGeometry g;
    g.batch = batch;
    g.large_h = large_h;
    g.large_w = large_w;
    g.large_c = large_c;
    g.small_c = small_c;
    g.kernel = kernel;
    g.stride = stride;
    g.small_h = (large_h + stride - 1) / stride;
    g.small_w = (large_w + stride - 1) / stride;
    const auto total = [&](std::size_t in, std::size_t out) {
      const std::size_t need = (out - 1) * stride + kernel;
      return need > in ? need - in : std::size_t{0};
    };
    g.pad_top = total(large_h, g.small_h) / 2;
    g.pad_left = total(large_w, g.small_w) / 2;
    return g;
  }

  Shape large_shape() const { return {batch, large_h, large_w, large_c}; }
  Shape small_shape() const { return {batch, small_h, small_w, small_c}; }
  Shape kernel_shape() const { return {kernel, kernel, large_c, small_c}; }

  // Calls fn(large_pixel_offset, small_pixel_offset, tap_index) for every
  // kernel tap that lands inside the large map. Offsets are in pixels, i.e.
  // multiply by the channel count to index a tensor.
  template <typename Fn>
  void for_each_tap(Fn&& fn) const {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t sy = 0; sy < small_h; ++sy) {
        for (std::size_t sx = 0; sx < small_w; ++sx) {
          const std::size_t small_px = (n * small_h + sy) * small_w + sx;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t ly = static_cast<std::ptrdiff_t>(sy * stride + ky) - static_cast<std::ptrdiff_t>(pad_top);
            if (ly < 0 || ly >= static_cast<std::ptrdiff_t>(large_h)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::ptrdiff_t lx =
                  static_cast<std::ptrdiff_t>(sx * stride + kx) - static_cast<std::ptrdiff_t>(pad_left);
              if (lx < 0 || lx >= static_cast<std::ptrdiff_t>(large_w)) continue;
              const std::size_t large_px =
                  (n * large_h + static_cast<std::size_t>(ly)) * large_w + static_cast<std::size_t>(lx);
              fn(large_px, small_px, ky * kernel + kx);
            }
          }
        }
      }
    }
  }
};

namespace detail {

// small += conv(large, kernel)
template <typename T>
void conv_large_to_small(const ConvGeometry& g, const T* large, const T* kernel, T* small) {
  const std::size_t lc = g.large_c, sc = g.small_c;
  g.for_each_tap([&](std::size_t lp, std::size_t sp, std::size_t tap) {
    const T* in = large + lp * lc;
    const T* k = kernel + tap * lc * sc;
    T* out = small + sp * sc;
    for (std::size_t ci = 0; ci < lc; ++ci) {
      const T v = in[ci];
      if (v == T{0}) continue;
      const T* krow = k + ci * sc;
      for (std::size_t co = 0; co < sc; ++co) out[co] += v * krow[co];
    }
  });
}

// large += convᵀ(small, kernel)
template <typename T>
void conv_small_to_large(const ConvGeometry& g, const T* small, const T* kernel, T* large) {
  const std::size_t lc = g.large_c, sc = g.small_c;
  g.for_each_tap([&](std::size_t lp, std::size_t sp, std::size_t tap) {
    const T* in = small + sp * sc;
    const T* k = kernel + tap * lc * sc;
    T* out = large + lp * lc;
    for (std::size_t ci = 0; ci < lc; ++ci) {
      const T* krow = k + ci * sc;
      T acc{0};
      for (std::size_t co = 0; co < sc; ++co) acc += in[co] * krow[co];
      out[ci] += acc;
    }
  });
}

// kernel_grad += Σ large ⊗ small over taps
template <typename T>
void conv_kernel_grad(const ConvGeometry& g, const T* large, const T* small, T* kernel_grad) {
  const std::size_t lc = g.large_c, sc = g.small_c;
  g.for_each_tap([&](std::size_t lp, std::size_t sp, std::size_t tap) {
    const T* a = large + lp * lc;
    const T* b = small + sp * sc;
    T* k = kernel_grad + tap * lc * sc;
    for (std::size_t ci = 0; ci < lc; ++ci) {
      const T v = a[ci];
      if (v == T{0}) continue;
      T* krow = k + ci * sc;
      for (std::size_t co = 0; co < sc; ++co) krow[co] += v * b[co];
    }
  });
}

template <typename T>
void add_channel_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const std::size_t c = bias.size();
  auto o = out.data();
  auto b = bias.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i % c];
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& g, std::size_t channels) {
  Tensor<T> out({channels});
  auto d = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) out[i % channels] += d[i];
  return out;
}

template <typename T>
void check_conv_operands(const char* op, const Shape& x, const Shape& kernel, const Shape& bias,
                         std::size_t x_channel_slot) {
  if (x.size() != 4) throw DimensionError(std::string(op) + ": input must be (N, H, W, C), got " + to_string(x));
  if (kernel.size() != 4 || kernel[0] != kernel[1]) {
    throw DimensionError(std::string(op) + ": kernel must be square (k, k, a, b), got " + to_string(kernel));
  }
  if (kernel[x_channel_slot] != x[3]) {
    throw DimensionError(std::string(op) + ": input channels of " + to_string(x) + " do not match kernel " +
                         to_string(kernel));
  }
  const std::size_t out_c = kernel[x_channel_slot == 2 ? 3 : 2];
  if (bias.size() != 1 || bias[0] != out_c) {
    throw DimensionError(std::string(op) + ": bias " + to_string(bias) + " does not match kernel " +
                         to_string(kernel));
  }
}

}  // namespace detail

// Cross-correlation with same padding.
// x: (N, H, W, C_in), kernel: (k, k, C_in, C_out), bias: (C_out,)
// -> (N, ceil(H/s), ceil(W/s), C_out)
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var kernel, Var bias, std::size_t stride) {
  const Shape& xs = tape.shape(x);
  const Shape& ks = tape.shape(kernel);
  detail::check_conv_operands<T>("conv2d", xs, ks, tape.shape(bias), 2);
  const auto geo = ConvGeometry::same(xs[0], xs[1], xs[2], xs[3], ks[3], ks[0], stride);
  Tensor<T> out(geo.small_shape());
  detail::conv_large_to_small(geo, tape.value(x).data().data(), tape.value(kernel).data().data(), out.data().data());
  detail::add_channel_bias(out, tape.value(bias));
  return tape.record(std::move(out), {x, kernel, bias}, [geo, x, kernel, bias](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(x)) {
      Tensor<T> gx(geo.large_shape());
      detail::conv_small_to_large(geo, g.data().data(), t.value(kernel).data().data(), gx.data().data());
      t.accumulate(x, std::move(gx));
    }
    if (t.requires_grad(kernel)) {
      Tensor<T> gk(geo.kernel_shape());
      detail::conv_kernel_grad(geo, t.value(x).data().data(), g.data().data(), gk.data().data());
      t.accumulate(kernel, std::move(gk));
    }
    if (t.requires_grad(bias)) t.accumulate(bias, detail::channel_sum(g, geo.small_c));
  });
}

// Transposed convolution (the input-gradient of conv2d) with same padding.
// x: (N, H, W, C_in), kernel: (k, k, C_out, C_in), bias: (C_out,)
// -> (N, H·s, W·s, C_out)
template <typename T>
Var conv2d_transpose(Tape<T>& tape, Var x, Var kernel, Var bias, std::size_t stride) {
  const Shape& xs = tape.shape(x);
  const Shape& ks = tape.shape(kernel);
  detail::check_conv_operands<T>("conv2d_transpose", xs, ks, tape.shape(bias), 3);
  const auto geo = ConvGeometry::same(xs[0], xs[1] * stride, xs[2] * stride, ks[2], xs[3], ks[0], stride);
  Tensor<T> out(geo.large_shape());
  detail::conv_small_to_large(geo, tape.value(x).data().data(), tape.value(kernel).data().data(), out.data().data());
  detail::add_channel_bias(out, tape.value(bias));
  return tape.record(std::move(out), {x, kernel, bias}, [geo, x, kernel, bias](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(x)) {
      Tensor<T> gx(geo.small_shape());
      detail::conv_large_to_small(geo, g.data().data(), t.value(kernel).data().data(), gx.data().data());
      t.accumulate(x, std::move(gx));
    }
    if (t.requires_grad(kernel)) {
      Tensor<T> gk(geo.kernel_shape());
      detail::conv_kernel_grad(geo, g.data().data(), t.value(x).data().data(), gk.data().data());
      t.accumulate(kernel, std::move(gk));
    }
    if (t.requires_grad(bias)) t.accumulate(bias, detail::channel_sum(g, geo.large_c));
  });
}

}  // namespace cgan::ops
