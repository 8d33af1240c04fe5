#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "conv.hpp"
#include "error.hpp"
#include "ops.hpp"
#include "random.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan {

enum class Mode { train, infer };

// Zero-mean normal initializer used for every kernel.
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

namespace ops {

// Per-channel batch normalization over (N, H, W) using batch statistics.
// Writes the biased batch mean and variance to the out-parameters.
template <typename T>
Var batch_norm_train(Tape<T>& tape, Var x, Var gamma, Var beta, T epsilon, Tensor<T>* batch_mean = nullptr,
                     Tensor<T>* batch_var = nullptr) {
  const Shape& xs = tape.shape(x);
  const std::size_t c = xs.back();
  const std::size_t count = tape.value(x).size() / c;
  if (count < 2) throw ContractError("batch_norm: degenerate batch, need at least 2 values per channel");
  if (tape.shape(gamma) != Shape{c} || tape.shape(beta) != Shape{c}) {
    throw DimensionError("batch_norm: gamma/beta must have shape (" + std::to_string(c) + ",)");
  }
  auto xd = tape.value(x).data();
  std::vector<T> mean(c, T{0}), var(c, T{0});
  for (std::size_t i = 0; i < xd.size(); ++i) mean[i % c] += xd[i];
  for (auto& m : mean) m /= static_cast<T>(count);
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const T d = xd[i] - mean[i % c];
    var[i % c] += d * d;
  }
  for (auto& v : var) v /= static_cast<T>(count);
  std::vector<T> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = T{1} / std::sqrt(var[j] + epsilon);

  Tensor<T> xhat(xs);
  Tensor<T> out(xs);
  auto gd = tape.value(gamma).data();
  auto bd = tape.value(beta).data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const std::size_t j = i % c;
    xhat[i] = (xd[i] - mean[j]) * inv_std[j];
    out[i] = gd[j] * xhat[i] + bd[j];
  }
  if (batch_mean) *batch_mean = Tensor<T>({c}, mean);
  if (batch_var) *batch_var = Tensor<T>({c}, var);

  return tape.record(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, c, count, xhat = std::move(xhat), inv_std](Tape<T>& t, const Tensor<T>& g) {
                       auto gdata = g.data();
                       std::vector<T> sum_g(c, T{0}), sum_gx(c, T{0});
                       for (std::size_t i = 0; i < gdata.size(); ++i) {
                         sum_g[i % c] += gdata[i];
                         sum_gx[i % c] += gdata[i] * xhat[i];
                       }
                       if (t.requires_grad(x)) {
                         auto gam = t.value(gamma).data();
                         const T m = static_cast<T>(count);
                         Tensor<T> gx(g.shape());
                         for (std::size_t i = 0; i < gdata.size(); ++i) {
                           const std::size_t j = i % c;
                           gx[i] = gam[j] * inv_std[j] / m * (m * gdata[i] - sum_g[j] - xhat[i] * sum_gx[j]);
                         }
                         t.accumulate(x, std::move(gx));
                       }
                       if (t.requires_grad(gamma)) t.accumulate(gamma, Tensor<T>({c}, sum_gx));
                       if (t.requires_grad(beta)) t.accumulate(beta, Tensor<T>({c}, sum_g));
                     });
}

// Normalization by fixed statistics: gamma·(x − mean)/√(var + ε) + beta.
template <typename T>
Var batch_norm_infer(Tape<T>& tape, Var x, Var gamma, Var beta, const Tensor<T>& mean, const Tensor<T>& var,
                     T epsilon) {
  const std::size_t c = tape.shape(x).back();
  if (mean.size() != c || var.size() != c) throw DimensionError("batch_norm: running stats do not match channels");
  std::vector<T> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = T{1} / std::sqrt(var[j] + epsilon);
  std::vector<T> mu(mean.data().begin(), mean.data().end());
  auto xd = tape.value(x).data();
  auto gd = tape.value(gamma).data();
  auto bd = tape.value(beta).data();
  Tensor<T> out(tape.shape(x));
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const std::size_t j = i % c;
    out[i] = gd[j] * (xd[i] - mu[j]) * inv_std[j] + bd[j];
  }
  return tape.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, c, mu, inv_std](Tape<T>& t, const Tensor<T>& g) {
    auto gdata = g.data();
    auto xd = t.value(x).data();
    auto gam = t.value(gamma).data();
    Tensor<T> gx(g.shape()), gg({c}), gb({c});
    for (std::size_t i = 0; i < gdata.size(); ++i) {
      const std::size_t j = i % c;
      gx[i] = gdata[i] * gam[j] * inv_std[j];
      gg[j] += gdata[i] * (xd[i] - mu[j]) * inv_std[j];
      gb[j] += gdata[i];
    }
    t.accumulate(x, std::move(gx));
    t.accumulate(gamma, std::move(gg));
    t.accumulate(beta, std::move(gb));
  });
}

// Inverted dropout: in train mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1 − rate). Identity in infer mode.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::infer || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(tape.shape(x));
  for (auto& m : mask.data()) m = rng.bernoulli(rate) ? T{0} : keep_scale;
  return mul(tape, x, tape.constant(std::move(mask)));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Spectral normalization
//
// The kernel (k, k, C_in, C_out) is viewed as a matrix W with one row per
// output channel, W = Kᵀ where K is the row-major (k·k·C_in) × C_out buffer.
// u (length C_out) persists across steps. One power-iteration step is
//   v ← Wᵀu / ‖Wᵀu‖,  u ← Wv / ‖Wv‖
// and the estimate is σ̂ = uᵀWv with v = Wᵀu/‖Wᵀu‖, i.e. σ̂ = ‖Wᵀu‖.

template <typename T>
struct SpectralState {
  Tensor<T> u;
  std::size_t power_iterations = 1;
};

namespace spectral {

template <typename T>
std::vector<double> kernel_times_u(const Tensor<T>& kernel, const Tensor<T>& u) {
  const std::size_t cols = kernel.shape().back();
  const std::size_t rows = kernel.size() / cols;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(kernel[r * cols + c]) * u[c];
    out[r] = acc;
  }
  return out;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

template <typename T>
SpectralState<T> make_state(std::size_t out_channels, Rng& rng) {
  Tensor<T> u({out_channels});
  double n2 = 0.0;
  std::vector<double> raw(out_channels);
  for (auto& r : raw) {
    r = rng.normal();
    n2 += r * r;
  }
  const double n = n2 > 0.0 ? std::sqrt(n2) : 1.0;
  for (std::size_t i = 0; i < out_channels; ++i) u[i] = static_cast<T>(raw[i] / n);
  return SpectralState<T>{std::move(u), 1};
}

// Runs `iterations` power-iteration steps on u. Returns false (u untouched)
// for a zero kernel.
template <typename T>
bool power_iterate(const Tensor<T>& kernel, SpectralState<T>& state, std::size_t iterations) {
  const std::size_t cols = kernel.shape().back();
  const std::size_t rows = kernel.size() / cols;
  if (state.u.size() != cols) throw DimensionError("spectral state length does not match kernel output channels");
  for (std::size_t it = 0; it < iterations; ++it) {
    auto v = kernel_times_u(kernel, state.u);
    const double vn = norm(v);
    if (!(vn > 0.0)) return false;
    for (auto& x : v) x /= vn;
    std::vector<double> wu(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double vr = v[r];
      for (std::size_t c = 0; c < cols; ++c) wu[c] += static_cast<double>(kernel[r * cols + c]) * vr;
    }
    const double un = norm(wu);
    if (!(un > 0.0)) return false;
    for (std::size_t c = 0; c < cols; ++c) state.u[c] = static_cast<T>(wu[c] / un);
  }
  return true;
}

// σ̂ = ‖Wᵀu‖ for the current u; 0 for a zero kernel.
template <typename T>
double sigma(const Tensor<T>& kernel, const SpectralState<T>& state) {
  return norm(kernel_times_u(kernel, state.u));
}

}  // namespace spectral

template <typename T>
struct SpectralResult {
  Tensor<T> kernel;  // W / σ̂, or the input kernel when degenerate
  double sigma = 0.0;
  bool degenerate = false;
};

// Power-iterates state.power_iterations times, then divides the kernel by σ̂.
// A zero kernel is returned unchanged with degenerate = true.
template <typename T>
SpectralResult<T> spectral_normalize(const Tensor<T>& kernel, SpectralState<T>& state) {
  SpectralResult<T> r;
  const bool ok = spectral::power_iterate(kernel, state, state.power_iterations);
  r.sigma = spectral::sigma(kernel, state);
  r.kernel = kernel;
  if (!ok || !(r.sigma > 0.0)) {
    r.degenerate = true;
    return r;
  }
  const T inv = static_cast<T>(1.0 / r.sigma);
  for (auto& v : r.kernel.data()) v *= inv;
  return r;
}

// ---------------------------------------------------------------------------
// Layers

template <typename T>
struct DenseLayer {
  Parameter<T> kernel;  // (in, out)
  Parameter<T> bias;    // (out,)

  static DenseLayer make(const std::string& name, std::size_t in, std::size_t out, double stddev, Rng& rng) {
    return DenseLayer{Parameter<T>(name + ".kernel", normal_tensor<T>({in, out}, stddev, rng)),
                      Parameter<T>(name + ".bias", Tensor<T>({out}))};
  }

  // x: (N, in) -> (N, out)
  Var forward(Tape<T>& tape, Var x, bool track = true) {
    if (tape.shape(x).size() != 2 || tape.shape(x)[1] != kernel.value.dim(0)) {
      throw DimensionError("dense: input " + to_string(tape.shape(x)) + " does not match kernel " +
                           to_string(kernel.value.shape()));
    }
    Var y = ops::matmul(tape, x, tape.param(kernel, track));
    return ops::add(tape, y, tape.param(bias, track));
  }

  std::vector<Parameter<T>*> parameters() { return {&kernel, &bias}; }
};

template <typename T>
struct Conv2DLayer {
  Parameter<T> kernel;  // (k, k, C_in, C_out)
  Parameter<T> bias;    // (C_out,)
  std::size_t stride = 2;
  std::optional<SpectralState<T>> spectral;
  bool degenerate_kernel = false;  // set when spectral normalization met a zero kernel

  static Conv2DLayer make(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t k,
                          std::size_t stride, bool spectral_norm, double stddev, Rng& rng) {
    Conv2DLayer layer{Parameter<T>(name + ".kernel", normal_tensor<T>({k, k, in_c, out_c}, stddev, rng)),
                      Parameter<T>(name + ".bias", Tensor<T>({out_c})), stride, std::nullopt, false};
    if (spectral_norm) layer.spectral = spectral::make_state<T>(out_c, rng);
    return layer;
  }

  // Advances the persistent power iteration by state.power_iterations steps.
  void update_spectral() {
    if (spectral) degenerate_kernel = !spectral::power_iterate(kernel.value, *spectral, spectral->power_iterations);
  }

  // Uses W/σ̂ for the current u when spectral normalization is on; σ̂ is a
  // constant of the tape, so the kernel gradient is (∂L/∂Ŵ)/σ̂.
  Var forward(Tape<T>& tape, Var x, bool track = true) {
    Var k = tape.param(kernel, track);
    if (spectral) {
      const double s = spectral::sigma(kernel.value, *spectral);
      degenerate_kernel = !(s > 0.0);
      if (!degenerate_kernel) k = ops::scale(tape, k, static_cast<T>(1.0 / s));
    }
    return ops::conv2d(tape, x, k, tape.param(bias, track), stride);
  }

  std::vector<Parameter<T>*> parameters() { return {&kernel, &bias}; }
};

template <typename T>
struct Deconv2DLayer {
  Parameter<T> kernel;  // (k, k, C_out, C_in)
  Parameter<T> bias;    // (C_out,)
  std::size_t stride = 2;

  static Deconv2DLayer make(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t k,
                            std::size_t stride, double stddev, Rng& rng) {
    if (stride != 1 && stride != 2) throw ContractError("deconv stride must be 1 or 2");
    return Deconv2DLayer{Parameter<T>(name + ".kernel", normal_tensor<T>({k, k, out_c, in_c}, stddev, rng)),
                         Parameter<T>(name + ".bias", Tensor<T>({out_c})), stride};
  }

  Var forward(Tape<T>& tape, Var x, bool track = true) {
    return ops::conv2d_transpose(tape, x, tape.param(kernel, track), tape.param(bias, track), stride);
  }

  std::vector<Parameter<T>*> parameters() { return {&kernel, &bias}; }
};

template <typename T>
struct BatchNormLayer {
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.9);
  T epsilon = T(1e-5);

  static BatchNormLayer make(const std::string& name, std::size_t channels) {
    return BatchNormLayer{Parameter<T>(name + ".gamma", Tensor<T>({channels}, T{1})),
                          Parameter<T>(name + ".beta", Tensor<T>({channels})), Tensor<T>({channels}),
                          Tensor<T>({channels}, T{1})};
  }

  // Train mode normalizes by batch statistics and folds them into the
  // running averages: r ← momentum·r + (1 − momentum)·batch.
  Var forward(Tape<T>& tape, Var x, Mode mode, bool track = true) {
    Var g = tape.param(gamma, track);
    Var b = tape.param(beta, track);
    if (mode == Mode::infer) return ops::batch_norm_infer(tape, x, g, b, running_mean, running_var, epsilon);
    Tensor<T> mean, var;
    Var y = ops::batch_norm_train(tape, x, g, b, epsilon, &mean, &var);
    for (std::size_t j = 0; j < mean.size(); ++j) {
      running_mean[j] = momentum * running_mean[j] + (T{1} - momentum) * mean[j];
      running_var[j] = momentum * running_var[j] + (T{1} - momentum) * var[j];
    }
    return y;
  }

  std::vector<Parameter<T>*> parameters() { return {&gamma, &beta}; }
};

}  // namespace cgan
