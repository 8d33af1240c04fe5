#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan::ops {

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {

// c[m×n] += a[m×k] · b[k×n], all row-major.
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m×k] += a[m×n] · b[k×n]ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

}  // namespace detail

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(av.shape()) + " by " + to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  detail::gemm_nn(m, k, n, av.data().data(), bv.data().data(), out.data().data());
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      Tensor<T> ga({m, k});
      detail::gemm_nt(m, n, k, g.data().data(), t.value(b).data().data(), ga.data().data());
      t.accumulate(a, std::move(ga));
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb({k, n});
      detail::gemm_tn(m, k, n, t.value(a).data().data(), g.data().data(), gb.data().data());
      t.accumulate(b, std::move(gb));
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
//
// Binary ops accept equal shapes, or a right operand whose shape is a suffix
// of the left operand's (broadcast along leading axes). The broadcast operand
// receives the upstream gradient summed over the broadcast axes.

enum class Binary { add, sub, mul };

namespace detail {

template <typename T>
Var binary(Tape<T>& tape, Binary kind, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (!is_suffix(av.shape(), bv.shape())) {
    throw DimensionError("elementwise: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) +
                         " are not broadcastable");
  }
  const std::size_t inner = bv.size();
  Tensor<T> out(av.shape());
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T r = y[i % inner];
    switch (kind) {
      case Binary::add: o[i] = x[i] + r; break;
      case Binary::sub: o[i] = x[i] - r; break;
      case Binary::mul: o[i] = x[i] * r; break;
    }
  }
  return tape.record(std::move(out), {a, b}, [kind, a, b, inner](Tape<T>& t, const Tensor<T>& g) {
    auto gd = g.data();
    if (t.requires_grad(a)) {
      if (kind == Binary::mul) {
        Tensor<T> ga(g.shape());
        auto y = t.value(b).data();
        for (std::size_t i = 0; i < gd.size(); ++i) ga[i] = gd[i] * y[i % inner];
        t.accumulate(a, std::move(ga));
      } else {
        t.accumulate(a, g);
      }
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb(t.value(b).shape());
      auto x = t.value(a).data();
      for (std::size_t i = 0; i < gd.size(); ++i) {
        switch (kind) {
          case Binary::add: gb[i % inner] += gd[i]; break;
          case Binary::sub: gb[i % inner] -= gd[i]; break;
          case Binary::mul: gb[i % inner] += gd[i] * x[i]; break;
        }
      }
      t.accumulate(b, std::move(gb));
    }
  });
}

}  // namespace detail

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) { return detail::binary(tape, Binary::add, a, b); }

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) { return detail::binary(tape, Binary::sub, a, b); }

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) { return detail::binary(tape, Binary::mul, a, b); }

// a·factor + offset with constant scalars.
template <typename T>
Var affine(Tape<T>& tape, Var a, T factor, T offset = T{0}) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data()) v = v * factor + offset;
  return tape.record(std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> ga = g;
    for (auto& v : ga.data()) v *= factor;
    t.accumulate(a, std::move(ga));
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) { return affine(tape, a, factor); }

template <typename T>
Var add_scalar(Tape<T>& tape, Var a, T offset) { return affine(tape, a, T{1}, offset); }

template <typename T>
Var negate(Tape<T>& tape, Var a) { return affine(tape, a, T{-1}); }

// ---------------------------------------------------------------------------
// Activations

enum class Activation { leaky_relu, relu, tanh, sigmoid };

template <typename T>
T sigmoid_value(T x) {
  // Split by sign so exp() never overflows.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Var activation(Tape<T>& tape, Activation kind, Var x, T slope = T{0.4}) {
  if (kind == Activation::leaky_relu && !(slope > T{0} && slope < T{1})) {
    throw ContractError("leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
  }
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) {
    switch (kind) {
      case Activation::leaky_relu: v = v > T{0} ? v : v * slope; break;
      case Activation::relu: v = v > T{0} ? v : T{0}; break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = sigmoid_value(v); break;
    }
  }
  const Var y = tape.next();
  return tape.record(std::move(out), {x}, [kind, x, y, slope](Tape<T>& t, const Tensor<T>& g) {
    const auto in = t.value(x).data();
    const auto out = t.value(y).data();
    Tensor<T> gx(g.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) {
      T d{1};
      switch (kind) {
        case Activation::leaky_relu: d = in[i] > T{0} ? T{1} : slope; break;
        case Activation::relu: d = in[i] > T{0} ? T{1} : T{0}; break;
        case Activation::tanh: d = T{1} - out[i] * out[i]; break;
        case Activation::sigmoid: d = out[i] * (T{1} - out[i]); break;
      }
      gx[i] = g[i] * d;
    }
    t.accumulate(x, std::move(gx));
  });
}

template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) { return activation(tape, Activation::leaky_relu, x, slope); }
template <typename T>
Var relu(Tape<T>& tape, Var x) { return activation(tape, Activation::relu, x); }
template <typename T>
Var tanh(Tape<T>& tape, Var x) { return activation(tape, Activation::tanh, x); }
template <typename T>
Var sigmoid(Tape<T>& tape, Var x) { return activation(tape, Activation::sigmoid, x); }

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  const Shape original = tape.shape(x);
  Tensor<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [x, original](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g.reshaped(original));
  });
}

// (N, ...) -> (N, prod(...))
template <typename T>
Var flatten(Tape<T>& tape, Var x) {
  const Shape& s = tape.shape(x);
  if (s.empty()) throw DimensionError("flatten: scalar input");
  return reshape(tape, x, Shape{s[0], element_count(s) / s[0]});
}

template <typename T>
Var concat(Tape<T>& tape, std::span<const Var> inputs, std::size_t axis) {
  if (inputs.empty()) throw ContractError("concat: no inputs");
  Shape out_shape = tape.shape(inputs[0]);
  if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range for " + to_string(out_shape));
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;  // extent along axis × trailing size
  for (Var v : inputs) {
    const Shape& s = tape.shape(v);
    const Shape& ref = tape.shape(inputs[0]);
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) throw DimensionError("concat: " + to_string(s) + " does not match " + to_string(ref) + " off axis");
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, trailing = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d) trailing *= out_shape[d];
  for (Var v : inputs) widths.push_back(tape.shape(v)[axis] * trailing);
  const std::size_t row = out_shape[axis] * trailing;

  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto src = tape.value(inputs[i]).data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * widths[i]), widths[i],
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    offset += widths[i];
  }

  std::vector<Var> saved(inputs.begin(), inputs.end());
  return tape.record(std::move(out), inputs, [saved, widths, outer, row](Tape<T>& t, const Tensor<T>& g) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < saved.size(); ++i) {
      if (t.requires_grad(saved[i])) {
        Tensor<T> gi(t.shape(saved[i]));
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(o * row + offset), widths[i],
                      gi.data().begin() + static_cast<std::ptrdiff_t>(o * widths[i]));
        }
        t.accumulate(saved[i], std::move(gi));
      }
      offset += widths[i];
    }
  });
}

template <typename T>
Var concat(Tape<T>& tape, std::initializer_list<Var> inputs, std::size_t axis) {
  return concat(tape, std::span<const Var>(inputs.begin(), inputs.size()), axis);
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T total{0};
  for (T v : tape.value(x).data()) total += v;
  return tape.record(Tensor<T>::scalar(total), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.shape(x), g.item()));
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
  const T n = static_cast<T>(tape.value(x).size());
  return scale(tape, sum(tape, x), T{1} / n);
}

}  // namespace cgan::ops
