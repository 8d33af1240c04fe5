#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <cgan/data.hpp>
#include <cgan/random.hpp>

namespace fixtures {

// Per-class image counts of the FER-2013 training split, labels 0..6.
inline constexpr std::array<std::size_t, 7> kTable1Counts = {2983, 436, 2945, 6411, 3657, 4649, 3171};

// Labels with the given per-class counts in a seeded random order.
inline std::vector<std::uint8_t> shuffled_labels(const std::array<std::size_t, 7>& counts, std::uint64_t seed) {
  std::vector<std::uint8_t> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<std::uint8_t>(c));
  cgan::Rng rng(seed);
  rng.shuffle(labels);
  return labels;
}

// Byte dataset with random pixels and the given class counts.
inline cgan::LabeledDataset random_dataset(const std::array<std::size_t, 7>& counts, std::size_t side,
                                           std::uint64_t seed) {
  cgan::LabeledDataset ds;
  ds.height = ds.width = side;
  ds.labels = shuffled_labels(counts, seed);
  cgan::Rng rng(seed + 1);
  ds.bytes.resize(ds.labels.size() * side * side);
  for (auto& b : ds.bytes) b = static_cast<std::uint8_t>(rng.below(256));
  return ds;
}

inline cgan::LabeledDataset table1_dataset(std::size_t side, std::uint64_t seed = 7) {
  return random_dataset(kTable1Counts, side, seed);
}

// Two classes of side×side images around a mid-grey background: class 0 has
// a bright disc at the centre, class 1 a dark one. Radius, position and
// pixel noise are jittered per sample.
inline cgan::LabeledDataset blob_dataset(std::size_t n, std::size_t side, std::uint64_t seed) {
  cgan::LabeledDataset ds;
  ds.height = ds.width = side;
  cgan::Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(i % 2);
    ds.labels.push_back(label);
    const double c = 0.5 * static_cast<double>(side - 1);
    const double cy = c + rng.uniform(-1.0, 1.0), cx = c + rng.uniform(-1.0, 1.0);
    const double radius = static_cast<double>(side) * rng.uniform(0.2, 0.3);
    const double inside = label == 0 ? 225.0 : 30.0;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double d = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
        const double w = 1.0 / (1.0 + std::exp((d - radius) * 1.5));  // soft disc edge
        const double v = w * inside + (1.0 - w) * 128.0 + rng.normal() * 8.0;
        ds.bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
      }
    }
  }
  return ds;
}

// Mean value of the central (side/2)² patch of image i, in the tensor's units.
template <typename T>
double center_patch_mean(const cgan::Tensor<T>& images, std::size_t i) {
  const std::size_t side = images.dim(1);
  const std::size_t lo = side / 4, hi = side - side / 4;
  double sum = 0.0;
  for (std::size_t y = lo; y < hi; ++y) {
    for (std::size_t x = lo; x < hi; ++x) sum += static_cast<double>(images[(i * side + y) * side + x]);
  }
  return sum / static_cast<double>((hi - lo) * (hi - lo));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cgan_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
