#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "models.hpp"
#include "random.hpp"
#include "text.hpp"

namespace cgan {

enum class BalancePolicy { match_max, explicit_targets };

struct AugmentPlan {
  std::array<std::size_t, kNumClasses> deficits{};
  BalancePolicy policy = BalancePolicy::match_max;
  double tau = 0.5;
  double oversample = 50.0;  // max draws per needed sample

  std::size_t total_deficit() const {
    std::size_t n = 0;
    for (auto d : deficits) n += d;
    return n;
  }

  std::size_t max_draws(std::size_t c) const {
    return static_cast<std::size_t>(std::ceil(oversample * static_cast<double>(deficits[c])));
  }
};

// match-max: every class is topped up to the largest class count.
// explicit: per-class targets, which may not be below the current counts.
inline AugmentPlan plan_balance(const ClassStats& stats, BalancePolicy policy,
                                const std::optional<std::array<std::size_t, kNumClasses>>& targets = std::nullopt,
                                double tau = 0.5, double oversample = 50.0) {
  if (stats.total == 0) throw ContractError("cannot plan augmentation for an empty dataset");
  if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("tau must lie in [0, 1)");
  if (!(oversample >= 1.0)) throw ConfigError("max_draws_factor must be at least 1");
  AugmentPlan plan;
  plan.policy = policy;
  plan.tau = tau;
  plan.oversample = oversample;
  if (policy == BalancePolicy::match_max) {
    const auto max_count = *std::max_element(stats.counts.begin(), stats.counts.end());
    for (std::size_t c = 0; c < kNumClasses; ++c) plan.deficits[c] = max_count - stats.counts[c];
    return plan;
  }
  if (!targets) throw ConfigError("explicit balance policy needs per-class targets");
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if ((*targets)[c] < stats.counts[c]) {
      throw ConfigError("target " + std::to_string((*targets)[c]) + " for class " + std::to_string(c) +
                        " is below its current count " + std::to_string(stats.counts[c]) + "; samples are never removed");
    }
    plan.deficits[c] = (*targets)[c] - stats.counts[c];
  }
  return plan;
}

template <typename T>
struct FilterResult {
  std::vector<std::uint8_t> pixels;  // accepted images as bytes, row-major, back to back
  std::vector<double> scores;        // D(image | class) at acceptance
  std::size_t accepted = 0;
  std::size_t drawn = 0;

  double acceptance_rate() const { return drawn ? static_cast<double>(accepted) / static_cast<double>(drawn) : 0.0; }
};

// Draws G(z | c) in infer mode and keeps images with D(image | c) ≥ τ until
// n_needed are accepted or max_draws candidates have been scored. Accepting
// nothing at all is an ExhaustionError; a partial result is returned as is.
template <typename T>
FilterResult<T> generate_filtered(Generator<T>& gen, Discriminator<T>& disc, int label, std::size_t n_needed,
                                  double tau, Rng& rng, std::size_t max_draws, std::size_t batch = 64) {
  check_label(label);
  if (!(tau >= 0.0 && tau < 1.0)) throw ContractError("tau must lie in [0, 1)");
  if (gen.config().image_size != disc.config().image_size) throw ContractError("generator and discriminator sizes differ");
  FilterResult<T> out;
  if (n_needed == 0) return out;
  const std::size_t latent = gen.config().latent_dim;
  const std::size_t ppi = gen.config().image_size * gen.config().image_size;
  while (out.accepted < n_needed && out.drawn < max_draws) {
    const std::size_t b = std::min(batch, max_draws - out.drawn);
    Tensor<T> z({b, latent});
    for (auto& v : z.data()) v = static_cast<T>(rng.normal());
    const std::vector<int> labels(b, label);
    const Tensor<T> images = gen.generate(z, labels, Mode::infer);
    const Tensor<T> scores = disc.score(images, labels);
    for (std::size_t i = 0; i < b && out.accepted < n_needed; ++i) {
      ++out.drawn;
      if (static_cast<double>(scores[i]) < tau) continue;
      ++out.accepted;
      out.scores.push_back(static_cast<double>(scores[i]));
      for (std::size_t p = 0; p < ppi; ++p) out.pixels.push_back(denormalize_pixel(images[i * ppi + p]));
    }
  }
  if (out.accepted == 0) {
    throw ExhaustionError("class " + std::to_string(label) + ": accepted 0 of " + std::to_string(out.drawn) +
                          " draws at tau " + text::format_double(tau) + " (acceptance rate 0)");
  }
  return out;
}

// Synthetic images per class, already in byte range.
struct SyntheticSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<std::vector<std::uint8_t>, kNumClasses> pixels;

  std::size_t count(std::size_t c) const { return (height * width != 0) ? pixels[c].size() / (height * width) : 0; }
};

struct ExportInfo {
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::string policy = "match-max";
  std::string generator;       // checkpoint path
  std::uint64_t generator_fingerprint = 0;
  std::string discriminator;
  std::array<double, kNumClasses> acceptance{};
};

// Real rows first, unchanged, then synthetic rows grouped by class.
inline LabeledDataset merge(const LabeledDataset& real, const SyntheticSet& synthetic) {
  if (real.normalized) throw ContractError("merge needs the real dataset in byte form");
  LabeledDataset out = real;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto n = synthetic.count(c);
    if (n == 0) continue;
    if (synthetic.height != real.height || synthetic.width != real.width) {
      throw ContractError("synthetic images are " + std::to_string(synthetic.height) + "x" +
                          std::to_string(synthetic.width) + " but real images are " + std::to_string(real.height) +
                          "x" + std::to_string(real.width));
    }
    if (synthetic.pixels[c].size() % real.pixels_per_image() != 0) throw ContractError("ragged synthetic pixel buffer");
    out.bytes.insert(out.bytes.end(), synthetic.pixels[c].begin(), synthetic.pixels[c].end());
    out.labels.insert(out.labels.end(), n, static_cast<std::uint8_t>(c));
  }
  return out;
}

inline std::string format_manifest(const LabeledDataset& real, const SyntheticSet& synthetic, const ExportInfo& info) {
  const auto real_stats = class_distribution(real);
  std::ostringstream out;
  std::size_t synthetic_total = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << "class" << c << ".real=" << real_stats.counts[c] << '\n';
    out << "class" << c << ".synthetic=" << synthetic.count(c) << '\n';
    out << "class" << c << ".acceptance=" << text::format_double(info.acceptance[c]) << '\n';
    synthetic_total += synthetic.count(c);
  }
  out << "real_total=" << real.size() << '\n';
  out << "synthetic_total=" << synthetic_total << '\n';
  out << "total=" << real.size() + synthetic_total << '\n';
  out << "tau=" << text::format_double(info.tau) << '\n';
  out << "seed=" << info.seed << '\n';
  out << "policy=" << info.policy << '\n';
  out << "generator=" << info.generator << '\n';
  std::ostringstream fp;
  fp << std::hex << info.generator_fingerprint;
  out << "generator_fnv1a=" << fp.str() << '\n';
  out << "discriminator=" << info.discriminator << '\n';
  return out.str();
}

inline std::map<std::string, std::string> parse_manifest(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// Writes the merged CGDS archive to out_path and the manifest next to it
// (out_path + ".manifest"). Returns the merged dataset.
inline LabeledDataset merge_export(const LabeledDataset& real, const SyntheticSet& synthetic, const std::string& out_path,
                                   const ExportInfo& info) {
  LabeledDataset merged = merge(real, synthetic);
  save_archive(merged, out_path);
  const std::string manifest_path = out_path + ".manifest";
  std::ofstream m(manifest_path, std::ios::trunc);
  if (!m) throw IoError("cannot open " + manifest_path);
  m << format_manifest(real, synthetic, info);
  if (!m) throw IoError("write failed for " + manifest_path);
  return merged;
}

}  // namespace cgan
