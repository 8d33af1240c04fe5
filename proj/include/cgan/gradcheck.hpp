#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "error.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan {

// A scalar-valued function built on a tape from a single leaf input.
template <typename T>
using TapeFunction = std::function<Var(Tape<T>&, Var)>;

template <typename T>
T evaluate(const TapeFunction<T>& f, const Tensor<T>& x) {
  Tape<T> tape;
  Var out = f(tape, tape.leaf(x, false));
  const T v = tape.value(out).item();
  if (!std::isfinite(v)) throw NumericError("finite-difference oracle: function is not finite at probe point");
  return v;
}

template <typename T>
Tensor<T> analytic_gradient(const TapeFunction<T>& f, const Tensor<T>& x) {
  Tape<T> tape;
  Var in = tape.leaf(x, true);
  Var out = f(tape, in);
  tape.backward(out);
  return tape.grad(in);
}

// Compares the tape gradient of f at x against central differences
// (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h. Returns maxᵢ |analyticᵢ − centralᵢ| / max(1, |centralᵢ|).
template <typename T>
double finite_diff_check(const TapeFunction<T>& f, const Tensor<T>& x, T h) {
  const Tensor<T> analytic = analytic_gradient(f, x);
  Tensor<T> probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double plus = evaluate(f, probe);
    probe[i] = x[i] - h;
    const double minus = evaluate(f, probe);
    probe[i] = x[i];
    const double central = (plus - minus) / (2.0 * static_cast<double>(h));
    const double err = std::abs(static_cast<double>(analytic[i]) - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cgan

namespace cgan {

// Finite-difference check of a parameter: `loss` evaluates the scalar at the
// parameter's current value, `analytic` fills p.grad for that value.
template <typename T>
double finite_diff_check_parameter(Parameter<T>& p, const std::function<double()>& loss,
                                   const std::function<void()>& analytic, T h) {
  p.zero_grad();
  analytic();
  const Tensor<T> grad = p.grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const T saved = p.value[i];
    p.value[i] = saved + h;
    const double plus = loss();
    p.value[i] = saved - h;
    const double minus = loss();
    p.value[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) throw NumericError("finite-difference oracle: non-finite loss");
    const double central = (plus - minus) / (2.0 * static_cast<double>(h));
    worst = std::max(worst, std::abs(static_cast<double>(grad[i]) - central) / std::max(1.0, std::abs(central)));
  }
  return worst;
}

}  // namespace cgan
