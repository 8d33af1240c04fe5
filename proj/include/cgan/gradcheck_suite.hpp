#pragma once

#include <functional>
#include <string>
#include <vector>

#include "conv.hpp"
#include "gradcheck.hpp"
#include "layers.hpp"
#include "models.hpp"
#include "ops.hpp"
#include "optim.hpp"
#include "random.hpp"

namespace cgan {

struct GradcheckResult {
  std::string op;
  double max_error = 0.0;
};

inline constexpr double kGradcheckTolerance = 1e-6;
inline constexpr double kGradcheckStep = 1e-6;

namespace detail {

inline Tensor<double> uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Σ y ⊙ w with fixed weights, so every output element carries its own gradient.
inline Var weighted(Tape<double>& tape, Var y, const Tensor<double>& w) {
  return ops::sum(tape, ops::mul(tape, y, tape.constant(w)));
}

}  // namespace detail

// Central finite-difference checks, in double precision, of every
// differentiable operation on random tensors with spatial extents ≤ 4, plus
// the two adversarial losses through tiny full networks.
inline std::vector<GradcheckResult> run_gradient_suite(std::uint64_t seed = 2024) {
  using detail::uniform_tensor;
  using detail::weighted;
  using TF = TapeFunction<double>;
  Rng rng(seed);
  std::vector<GradcheckResult> out;
  const double h = kGradcheckStep;
  auto check = [&](const std::string& name, const TF& f, const Tensor<double>& x) {
    out.push_back({name, finite_diff_check(f, x, h)});
  };
  auto worst_of = [&](const std::string& name, std::initializer_list<std::pair<TF, Tensor<double>>> cases) {
    double worst = 0.0;
    for (const auto& [f, x] : cases) worst = std::max(worst, finite_diff_check(f, x, h));
    out.push_back({name, worst});
  };

  {
    const auto a = uniform_tensor({3, 4}, rng), b = uniform_tensor({4, 2}, rng), w = uniform_tensor({3, 2}, rng);
    worst_of("matmul", {{[&](Tape<double>& t, Var x) { return weighted(t, ops::matmul(t, x, t.constant(b)), w); }, a},
                        {[&](Tape<double>& t, Var x) { return weighted(t, ops::matmul(t, t.constant(a), x), w); }, b}});
  }
  {
    const auto a = uniform_tensor({2, 3, 3, 2}, rng), b = uniform_tensor({3, 2}, rng), w = uniform_tensor({2, 3, 3, 2}, rng);
    const auto full = uniform_tensor({2, 3, 3, 2}, rng);
    worst_of("elementwise",
             {{[&](Tape<double>& t, Var x) { return weighted(t, ops::add(t, t.constant(a), x), w); }, b},
              {[&](Tape<double>& t, Var x) { return weighted(t, ops::sub(t, x, t.constant(full)), w); }, a},
              {[&](Tape<double>& t, Var x) { return weighted(t, ops::mul(t, t.constant(a), x), w); }, b},
              {[&](Tape<double>& t, Var x) { return weighted(t, ops::mul(t, x, t.constant(full)), w); }, a},
              {[&](Tape<double>& t, Var x) { return weighted(t, ops::affine(t, x, -1.5, 0.25), w); }, a}});
  }
  for (auto [kind, name] : {std::pair{ops::Activation::leaky_relu, "leaky_relu"}, std::pair{ops::Activation::relu, "relu"},
                            std::pair{ops::Activation::tanh, "tanh"}, std::pair{ops::Activation::sigmoid, "sigmoid"}}) {
    const auto x = uniform_tensor({2, 3, 3, 2}, rng, -2.0, 2.0), w = uniform_tensor({2, 3, 3, 2}, rng);
    check(name, [&, kind](Tape<double>& t, Var v) { return weighted(t, ops::activation(t, kind, v, 0.4), w); }, x);
  }
  {
    const auto x = uniform_tensor({2, 3, 4}, rng), other = uniform_tensor({2, 3, 1}, rng);
    const auto w1 = uniform_tensor({2, 12}, rng), w2 = uniform_tensor({2, 3, 9}, rng);
    worst_of("reshape_concat",
             {{[&](Tape<double>& t, Var v) { return weighted(t, ops::flatten(t, v), w1); }, x},
              {[&](Tape<double>& t, Var v) { return weighted(t, ops::concat(t, {v, t.constant(other), v}, 2), w2); }, x}});
  }
  {
    auto dense = DenseLayer<double>::make("d", 5, 3, 0.5, rng);
    const auto x = uniform_tensor({2, 5}, rng), w = uniform_tensor({2, 3}, rng);
    worst_of("dense",
             {{[&](Tape<double>& t, Var v) { return weighted(t, dense.forward(t, v, false), w); }, x},
              {[&](Tape<double>& t, Var v) { return weighted(t, ops::add(t, ops::matmul(t, t.constant(x), v), t.constant(dense.bias.value)), w); }, dense.kernel.value}});
  }
  for (std::size_t stride : {1u, 2u}) {
    const auto x = uniform_tensor({2, 4, 4, 3}, rng), k = uniform_tensor({4, 4, 3, 2}, rng), b = uniform_tensor({2}, rng);
    const auto w = uniform_tensor({2, 4 / stride, 4 / stride, 2}, rng);
    worst_of("conv2d_s" + std::to_string(stride),
             {{[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d(t, v, t.constant(k), t.constant(b), stride), w); }, x},
              {[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d(t, t.constant(x), v, t.constant(b), stride), w); }, k},
              {[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d(t, t.constant(x), t.constant(k), v, stride), w); }, b}});
  }
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t in = 4 / stride;
    const auto x = uniform_tensor({2, in, in, 3}, rng), k = uniform_tensor({4, 4, 2, 3}, rng), b = uniform_tensor({2}, rng);
    const auto w = uniform_tensor({2, 4, 4, 2}, rng);
    worst_of("conv2d_transpose_s" + std::to_string(stride),
             {{[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d_transpose(t, v, t.constant(k), t.constant(b), stride), w); }, x},
              {[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d_transpose(t, t.constant(x), v, t.constant(b), stride), w); }, k},
              {[&, stride](Tape<double>& t, Var v) { return weighted(t, ops::conv2d_transpose(t, t.constant(x), t.constant(k), v, stride), w); }, b}});
  }
  {
    const auto x = uniform_tensor({4, 2, 2, 3}, rng), g = uniform_tensor({3}, rng, 0.5, 1.5), b = uniform_tensor({3}, rng);
    const auto mean = uniform_tensor({3}, rng), var = uniform_tensor({3}, rng, 0.5, 2.0), w = uniform_tensor({4, 2, 2, 3}, rng);
    worst_of("batchnorm_train",
             {{[&](Tape<double>& t, Var v) { return weighted(t, ops::batch_norm_train(t, v, t.constant(g), t.constant(b), 1e-5), w); }, x},
              {[&](Tape<double>& t, Var v) { return weighted(t, ops::batch_norm_train(t, t.constant(x), v, t.constant(b), 1e-5), w); }, g},
              {[&](Tape<double>& t, Var v) { return weighted(t, ops::batch_norm_train(t, t.constant(x), t.constant(g), v, 1e-5), w); }, b}});
    worst_of("batchnorm_infer",
             {{[&](Tape<double>& t, Var v) { return weighted(t, ops::batch_norm_infer(t, v, t.constant(g), t.constant(b), mean, var, 1e-5), w); }, x},
              {[&](Tape<double>& t, Var v) { return weighted(t, ops::batch_norm_infer(t, t.constant(x), v, t.constant(b), mean, var, 1e-5), w); }, g}});
  }
  {
    // σ̂ is a per-step constant: the input gradient is exact, the kernel
    // gradient is checked with σ̂ held at its step value.
    auto conv = Conv2DLayer<double>::make("sn", 3, 2, 4, 2, true, 0.5, rng);
    conv.update_spectral();
    const double sigma = spectral::sigma(conv.kernel.value, *conv.spectral);
    const auto x = uniform_tensor({2, 4, 4, 3}, rng), w = uniform_tensor({2, 2, 2, 2}, rng);
    worst_of("spectral_conv2d",
             {{[&](Tape<double>& t, Var v) { return weighted(t, conv.forward(t, v, false), w); }, x},
              {[&](Tape<double>& t, Var v) {
                 return weighted(t, ops::conv2d(t, t.constant(x), ops::scale(t, v, 1.0 / sigma), t.constant(conv.bias.value), 2), w);
               }, conv.kernel.value}});
  }
  {
    const auto p = uniform_tensor({5, 1}, rng, 0.05, 0.95), q = uniform_tensor({5, 1}, rng, 0.05, 0.95);
    worst_of("bce", {{[](Tape<double>& t, Var v) { return ops::bce(t, v, Target::real); }, p},
                     {[](Tape<double>& t, Var v) { return ops::bce(t, v, Target::fake); }, p}});
    worst_of("d_loss", {{[&](Tape<double>& t, Var v) { return d_loss(t, v, t.constant(q)); }, p},
                        {[&](Tape<double>& t, Var v) { return d_loss(t, t.constant(p), v); }, q}});
    check("g_loss", [](Tape<double>& t, Var v) { return g_loss(t, v); }, q);
  }
  {
    // Adversarial losses through tiny full networks, w.r.t. every generator
    // parameter (g_loss) and every discriminator bias/head parameter (d_loss).
    ArchConfig arch;
    arch.latent_dim = 3;
    arch.base_filters = 1;
    arch.image_size = 16;
    arch.init_stddev = 0.3;
    Generator<double> gen(arch, rng.bits());
    Discriminator<double> disc(arch, rng.bits());
    disc.update_spectral();
    const std::vector<int> labels{1, 4, 6};
    const auto z = uniform_tensor({3, arch.latent_dim}, rng);
    const auto real = uniform_tensor({3, 16, 16, 1}, rng);
    const Tensor<double> fake = gen.generate(z, labels, Mode::train);

    auto g_value = [&](bool backward) {
      Tape<double> t;
      Var p = disc.forward(t, gen.forward(t, t.constant(z), labels, Mode::train), labels, Mode::train, nullptr, false);
      Var l = g_loss(t, p);
      if (backward) t.backward(l);
      return t.value(l).item();
    };
    double worst = 0.0;
    for (auto* p : gen.parameters()) {
      worst = std::max(worst, finite_diff_check_parameter<double>(*p, [&] { return g_value(false); }, [&] { g_value(true); }, h));
    }
    out.push_back({"gan.g_loss", worst});

    auto d_value = [&](bool backward) {
      Tape<double> t;
      Var rp = disc.forward(t, t.constant(real), labels, Mode::train);
      Var fp = disc.forward(t, t.constant(fake), labels, Mode::train);
      Var l = d_loss(t, rp, fp);
      if (backward) t.backward(l);
      return t.value(l).item();
    };
    worst = 0.0;
    for (auto* p : disc.parameters()) {
      if (p->name.find(".kernel") != std::string::npos && p->name.find("conv") != std::string::npos) continue;
      worst = std::max(worst, finite_diff_check_parameter<double>(*p, [&] { return d_value(false); }, [&] { d_value(true); }, h));
    }
    out.push_back({"gan.d_loss", worst});
  }
  return out;
}

}  // namespace cgan
