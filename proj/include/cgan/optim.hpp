#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ops.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan {

inline constexpr double kProbabilityClamp = 1e-7;

enum class Target { fake = 0, real = 1 };

namespace ops {

// Mean binary cross-entropy of probabilities p against a constant target.
// p is clamped to [ε, 1 − ε] (ε = 1e-7); the gradient is zero where the clamp
// is active.
template <typename T>
Var bce(Tape<T>& tape, Var p, Target target) {
  const T lo = static_cast<T>(kProbabilityClamp);
  const T hi = T{1} - lo;
  const T t = target == Target::real ? T{1} : T{0};
  const auto pd = tape.value(p).data();
  const T n = static_cast<T>(pd.size());
  T total{0};
  for (T v : pd) {
    const T c = std::clamp(v, lo, hi);
    total -= t * std::log(c) + (T{1} - t) * std::log(T{1} - c);
  }
  return tape.record(Tensor<T>::scalar(total / n), {p}, [p, t, lo, hi, n](Tape<T>& tp, const Tensor<T>& g) {
    const T up = g.item() / n;
    const auto pd = tp.value(p).data();
    Tensor<T> gp(tp.shape(p));
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const T v = pd[i];
      if (v < lo || v > hi) continue;
      gp[i] = up * (-(t / v) + (T{1} - t) / (T{1} - v));
    }
    tp.accumulate(p, std::move(gp));
  });
}

}  // namespace ops

// −E[log D(x|y)] − E[log(1 − D(G(z|y)|y))]
template <typename T>
Var d_loss(Tape<T>& tape, Var real_p, Var fake_p) {
  return ops::add(tape, ops::bce(tape, real_p, Target::real), ops::bce(tape, fake_p, Target::fake));
}

// −E[log D(G(z|y)|y)]
template <typename T>
Var g_loss(Tape<T>& tape, Var fake_p) {
  return ops::bce(tape, fake_p, Target::real);
}

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam moments for one network, in the same order as its parameter list.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  static AdamState make(std::span<Parameter<T>* const> params, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    for (auto* p : params) {
      s.m.emplace_back(p->value.shape());
      s.v.emplace_back(p->value.shape());
    }
    return s;
  }
};

//   m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²
//   θ ← θ − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (params.size() != state.m.size()) {
    throw ContractError("adam: " + std::to_string(params.size()) + " parameters but state holds " +
                        std::to_string(state.m.size()));
  }
  ++state.step;
  const auto& h = state.hyper;
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(h.beta1, static_cast<double>(state.step)));
  const T correction2 = static_cast<T>(1.0 - std::pow(h.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = *params[k];
    if (p.grad.shape() != p.value.shape() || state.m[k].shape() != p.value.shape()) {
      throw ContractError("adam: shape mismatch for parameter " + p.name);
    }
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state) {
  adam_step(std::span<Parameter<T>* const>(params.data(), params.size()), state);
}

}  // namespace cgan
