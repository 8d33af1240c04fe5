#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "layers.hpp"
#include "ops.hpp"
#include "random.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace cgan {

inline constexpr std::size_t kNumClasses = 7;

inline constexpr const char* kEmotionNames[kNumClasses] = {"Angry", "Disgust", "Fear", "Happy",
                                                           "Neutral", "Sad", "Surprise"};

enum class GenActivation { leaky_relu, relu };

// Architecture knobs. Defaults give the full 64×64 networks; the scaled test
// networks change latent_dim, base_filters and image_size only, keeping the
// block pattern (3 upsampling blocks, 4 downsampling blocks).
struct ArchConfig {
  std::size_t latent_dim = 150;
  std::size_t base_filters = 64;
  std::size_t image_size = 64;
  std::size_t kernel = 4;
  double leaky_slope = 0.4;
  double dropout = 0.0;
  double init_stddev = 0.02;
  GenActivation gen_activation = GenActivation::leaky_relu;
  bool zero_disc_head = false;

  std::size_t gen_input() const { return latent_dim + kNumClasses; }
  std::size_t seed_extent() const { return image_size / 8; }
  std::size_t disc_final_extent() const { return image_size / 16; }
  std::size_t flatten_width() const {
    return disc_final_extent() * disc_final_extent() * base_filters * 8;
  }

  void validate() const {
    if (latent_dim == 0 || base_filters == 0 || kernel == 0) {
      throw ConfigError("architecture dimensions must be positive");
    }
    if (image_size == 0 || image_size % 16 != 0) {
      throw ConfigError("image_size must be a positive multiple of 16, got " + std::to_string(image_size));
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0, 1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(init_stddev > 0.0)) throw ConfigError("init_stddev must be positive");
  }

  // key=value lines; stored in checkpoints so networks can be rebuilt.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "latent_dim=" << latent_dim << '\n'
        << "base_filters=" << base_filters << '\n'
        << "image_size=" << image_size << '\n'
        << "kernel=" << kernel << '\n'
        << "leaky_slope=" << leaky_slope << '\n'
        << "dropout=" << dropout << '\n'
        << "init_stddev=" << init_stddev << '\n'
        << "gen_activation=" << (gen_activation == GenActivation::relu ? "relu" : "leaky_relu") << '\n'
        << "zero_disc_head=" << (zero_disc_head ? 1 : 0) << '\n';
    return out.str();
  }

  static ArchConfig from_text(const std::string& text) {
    ArchConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("bad architecture line: " + line);
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      try {
        if (key == "latent_dim") c.latent_dim = std::stoul(value);
        else if (key == "base_filters") c.base_filters = std::stoul(value);
        else if (key == "image_size") c.image_size = std::stoul(value);
        else if (key == "kernel") c.kernel = std::stoul(value);
        else if (key == "leaky_slope") c.leaky_slope = std::stod(value);
        else if (key == "dropout") c.dropout = std::stod(value);
        else if (key == "init_stddev") c.init_stddev = std::stod(value);
        else if (key == "gen_activation") c.gen_activation = value == "relu" ? GenActivation::relu : GenActivation::leaky_relu;
        else if (key == "zero_disc_head") c.zero_disc_head = value == "1";
        else throw ConfigError("unknown architecture key: " + key);
      } catch (const std::logic_error&) {
        throw ConfigError("bad architecture value for " + key + ": " + value);
      }
    }
    c.validate();
    return c;
  }
};

inline void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw LabelError("label " + std::to_string(label) + " outside 0.." + std::to_string(kNumClasses - 1));
  }
}

template <typename T>
Tensor<T> one_hot(int label) {
  check_label(label);
  Tensor<T> t({kNumClasses});
  t[static_cast<std::size_t>(label)] = T{1};
  return t;
}

// (N, 7) one-hot rows.
template <typename T>
Tensor<T> one_hot_batch(std::span<const int> labels) {
  if (labels.empty()) throw ContractError("empty label batch");
  Tensor<T> t({labels.size(), kNumClasses});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_label(labels[i]);
    t[i * kNumClasses + static_cast<std::size_t>(labels[i])] = T{1};
  }
  return t;
}

// (H, W, 7): channel c is the constant plane one_hot[c].
template <typename T>
Tensor<T> broadcast_label(int label, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ContractError("broadcast_label: extents must be positive");
  check_label(label);
  Tensor<T> t({height, width, kNumClasses});
  for (std::size_t p = 0; p < height * width; ++p) t[p * kNumClasses + static_cast<std::size_t>(label)] = T{1};
  return t;
}

// (N, H, W, 7) label planes for a batch.
template <typename T>
Tensor<T> broadcast_labels(std::span<const int> labels, std::size_t height, std::size_t width) {
  if (labels.empty()) throw ContractError("empty label batch");
  Tensor<T> t({labels.size(), height, width, kNumClasses});
  const std::size_t plane = height * width;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    check_label(labels[n]);
    for (std::size_t p = 0; p < plane; ++p) {
      t[(n * plane + p) * kNumClasses + static_cast<std::size_t>(labels[n])] = T{1};
    }
  }
  return t;
}

// dense(latent+7 → s·s·8b) → reshape(s, s, 8b) → 3 × [deconv s=2, batch norm,
// activation] halving channels → deconv(b → 1, s=1) → tanh, with s = image/8.
template <typename T>
class Generator {
 public:
  Generator(const ArchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t b = cfg_.base_filters, k = cfg_.kernel, s0 = cfg_.seed_extent();
    const double sd = cfg_.init_stddev;
    dense_ = DenseLayer<T>::make("gen.dense", cfg_.gen_input(), s0 * s0 * b * 8, sd, rng);
    const std::size_t widths[4] = {b * 8, b * 4, b * 2, b};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string idx = std::to_string(i + 1);
      blocks_.push_back(Block{Deconv2DLayer<T>::make("gen.deconv" + idx, widths[i], widths[i + 1], k, 2, sd, rng),
                              BatchNormLayer<T>::make("gen.bn" + idx, widths[i + 1])});
    }
    out_ = Deconv2DLayer<T>::make("gen.out", b, 1, k, 1, sd, rng);
  }

  const ArchConfig& config() const { return cfg_; }

  // z: (N, latent) -> image (N, S, S, 1) in [−1, 1]. With track=false the
  // parameters enter the tape as constants.
  Var forward(Tape<T>& tape, Var z, std::span<const int> labels, Mode mode, bool track = true) {
    const Shape& zs = tape.shape(z);
    if (zs.size() != 2 || zs[1] != cfg_.latent_dim) {
      throw DimensionError("generator: latent input must be (N, " + std::to_string(cfg_.latent_dim) + "), got " +
                           to_string(zs));
    }
    if (labels.size() != zs[0]) throw DimensionError("generator: label count does not match batch");
    Var y = tape.constant(one_hot_batch<T>(labels));
    Var h = ops::concat(tape, {z, y}, 1);
    h = dense_.forward(tape, h, track);
    const std::size_t s0 = cfg_.seed_extent();
    h = ops::reshape(tape, h, Shape{zs[0], s0, s0, cfg_.base_filters * 8});
    for (auto& block : blocks_) {
      h = block.deconv.forward(tape, h, track);
      h = block.norm.forward(tape, h, mode, track);
      h = cfg_.gen_activation == GenActivation::relu ? ops::relu(tape, h)
                                                     : ops::leaky_relu(tape, h, static_cast<T>(cfg_.leaky_slope));
    }
    h = out_.forward(tape, h, track);
    return ops::tanh(tape, h);
  }

  Tensor<T> generate(const Tensor<T>& z, std::span<const int> labels, Mode mode) {
    Tape<T> tape;
    Var out = forward(tape, tape.constant(z), labels, mode, false);
    return tape.value(out);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps = dense_.parameters();
    for (auto& block : blocks_) {
      for (auto* p : block.deconv.parameters()) ps.push_back(p);
      for (auto* p : block.norm.parameters()) ps.push_back(p);
    }
    for (auto* p : out_.parameters()) ps.push_back(p);
    return ps;
  }

  // Non-trainable state, by name: batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string base = "gen.bn" + std::to_string(i + 1);
      out.emplace_back(base + ".running_mean", &blocks_[i].norm.running_mean);
      out.emplace_back(base + ".running_var", &blocks_[i].norm.running_var);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  DenseLayer<T>& dense() { return dense_; }
  Deconv2DLayer<T>& deconv(std::size_t i) { return blocks_.at(i).deconv; }
  BatchNormLayer<T>& norm(std::size_t i) { return blocks_.at(i).norm; }
  Deconv2DLayer<T>& output_layer() { return out_; }

 private:
  struct Block {
    Deconv2DLayer<T> deconv;
    BatchNormLayer<T> norm;
  };

  ArchConfig cfg_;
  DenseLayer<T> dense_;
  std::vector<Block> blocks_;
  Deconv2DLayer<T> out_;
};

// concat(image, label planes) (N, S, S, 8) → 4 × [spectral-normalized conv
// s=2, leaky ReLU, optional dropout] with b, 2b, 4b, 8b filters → flatten →
// dense(→ 1) → sigmoid.
template <typename T>
class Discriminator {
 public:
  Discriminator(const ArchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t b = cfg_.base_filters, k = cfg_.kernel;
    const std::size_t widths[5] = {1 + kNumClasses, b, b * 2, b * 4, b * 8};
    for (std::size_t i = 0; i < 4; ++i) {
      convs_.push_back(Conv2DLayer<T>::make("disc.conv" + std::to_string(i + 1), widths[i], widths[i + 1], k, 2, true,
                                            cfg_.init_stddev, rng));
    }
    head_ = DenseLayer<T>::make("disc.dense", cfg_.flatten_width(), 1, cfg_.init_stddev, rng);
    if (cfg_.zero_disc_head) head_.kernel.value.fill(T{0});
  }

  const ArchConfig& config() const { return cfg_; }

  // Pre-sigmoid score (N, 1). dropout_rng is required only when dropout is
  // enabled in train mode.
  Var logit(Tape<T>& tape, Var image, std::span<const int> labels, Mode mode, Rng* dropout_rng = nullptr,
            bool track = true) {
    const Shape& is = tape.shape(image);
    const std::size_t s = cfg_.image_size;
    if (is.size() != 4 || is[1] != s || is[2] != s || is[3] != 1) {
      throw DimensionError("discriminator: image must be (N, " + std::to_string(s) + ", " + std::to_string(s) +
                           ", 1), got " + to_string(is));
    }
    if (labels.size() != is[0]) throw DimensionError("discriminator: label count does not match batch");
    Var planes = tape.constant(broadcast_labels<T>(labels, s, s));
    Var h = ops::concat(tape, {image, planes}, 3);
    for (auto& conv : convs_) {
      h = conv.forward(tape, h, track);
      h = ops::leaky_relu(tape, h, static_cast<T>(cfg_.leaky_slope));
      if (cfg_.dropout > 0.0 && mode == Mode::train) {
        if (!dropout_rng) throw ContractError("discriminator: dropout enabled but no random stream given");
        h = ops::dropout(tape, h, cfg_.dropout, mode, *dropout_rng);
      }
    }
    h = ops::flatten(tape, h);
    return head_.forward(tape, h, track);
  }

  // Probability (N, 1) that each image is real for its label.
  Var forward(Tape<T>& tape, Var image, std::span<const int> labels, Mode mode, Rng* dropout_rng = nullptr,
              bool track = true) {
    return ops::sigmoid(tape, logit(tape, image, labels, mode, dropout_rng, track));
  }

  Tensor<T> score(const Tensor<T>& images, std::span<const int> labels) {
    Tape<T> tape;
    Var p = forward(tape, tape.constant(images), labels, Mode::infer, nullptr, false);
    return tape.value(p);
  }

  // One power-iteration update on every conv layer.
  void update_spectral() {
    for (auto& conv : convs_) conv.update_spectral();
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> ps;
    for (auto& conv : convs_) {
      for (auto* p : conv.parameters()) ps.push_back(p);
    }
    for (auto* p : head_.parameters()) ps.push_back(p);
    return ps;
  }

  // Non-trainable state, by name: spectral-norm u vectors.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      out.emplace_back("disc.conv" + std::to_string(i + 1) + ".spectral_u", &convs_[i].spectral->u);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  Conv2DLayer<T>& conv(std::size_t i) { return convs_.at(i); }
  DenseLayer<T>& head() { return head_; }

 private:
  ArchConfig cfg_;
  std::vector<Conv2DLayer<T>> convs_;
  DenseLayer<T> head_;
};

}  // namespace cgan
