#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"
#include "models.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace cgan {

// Grayscale images (N, H, W, 1) with labels in 0..6. Pixels are held either
// as raw bytes or, after normalize(), as floats in [−1, 1].
struct LabeledDataset {
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> bytes;  // raw pixels, when !normalized
  std::vector<float> values;        // normalized pixels, when normalized
  bool normalized = false;

  std::size_t size() const { return labels.size(); }
  std::size_t pixels_per_image() const { return height * width; }
  Shape shape() const { return {size(), height, width, 1}; }

  void validate() const {
    const std::size_t expected = size() * pixels_per_image();
    if ((normalized ? values.size() : bytes.size()) != expected) {
      throw ContractError("dataset pixel buffer does not match " + std::to_string(size()) + " images of " +
                          std::to_string(height) + "x" + std::to_string(width));
    }
    for (auto l : labels) {
      if (l >= kNumClasses) throw LabelError("dataset label " + std::to_string(l) + " outside 0..6");
    }
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

// ---------------------------------------------------------------------------
// CSV: header `emotion,pixels`, then `label,p0 p1 ... p(H·W−1)` per row.
// Extra trailing columns (the public file's `Usage`) are ignored.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline int parse_int(std::string_view token, std::size_t row, const char* what) {
  int v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end || token.empty()) {
    throw ParseError("row " + std::to_string(row) + ": non-integer " + what + " token '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace detail

inline LabeledDataset parse_csv(std::istream& in, std::size_t image_side = 64) {
  LabeledDataset ds;
  ds.height = ds.width = image_side;
  const std::size_t expected = image_side * image_side;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV: missing `emotion,pixels` header");
  {
    const auto header = detail::trim(line);
    if (header.rfind("emotion,pixels", 0) != 0) {
      throw ParseError("CSV header must start with `emotion,pixels`, got '" + std::string(header) + "'");
    }
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    ++row;
    const auto comma = view.find(',');
    if (comma == std::string_view::npos) throw ParseError("row " + std::to_string(row) + ": missing pixel column");
    const int label = detail::parse_int(detail::trim(view.substr(0, comma)), row, "label");
    if (label < 0 || label >= static_cast<int>(kNumClasses)) {
      throw ParseError("row " + std::to_string(row) + ": label " + std::to_string(label) + " outside 0..6");
    }
    std::string_view pixels = view.substr(comma + 1);
    if (const auto extra = pixels.find(','); extra != std::string_view::npos) pixels = pixels.substr(0, extra);
    pixels = detail::trim(pixels);
    std::size_t count = 0;
    const std::size_t start = ds.bytes.size();
    std::size_t pos = 0;
    while (pos < pixels.size()) {
      while (pos < pixels.size() && pixels[pos] == ' ') ++pos;
      if (pos >= pixels.size()) break;
      std::size_t end = pixels.find(' ', pos);
      if (end == std::string_view::npos) end = pixels.size();
      const int v = detail::parse_int(pixels.substr(pos, end - pos), row, "pixel");
      if (v < 0 || v > 255) {
        throw ParseError("row " + std::to_string(row) + ": pixel value " + std::to_string(v) + " outside 0..255");
      }
      ds.bytes.push_back(static_cast<std::uint8_t>(v));
      ++count;
      pos = end;
    }
    if (count != expected) {
      ds.bytes.resize(start);
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(expected) + " pixels, got " +
                       std::to_string(count));
    }
    ds.labels.push_back(static_cast<std::uint8_t>(label));
  }
  return ds;
}

inline LabeledDataset load_csv(const std::string& path, std::size_t image_side = 64) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_csv(in, image_side);
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) {
  if (ds.normalized) throw ContractError("save_csv needs raw byte images");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "emotion,pixels\n";
  const std::size_t ppi = ds.pixels_per_image();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << static_cast<int>(ds.labels[i]) << ',';
    for (std::size_t p = 0; p < ppi; ++p) {
      if (p) out << ' ';
      out << static_cast<int>(ds.bytes[i * ppi + p]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// CGDS archive, little-endian:
//   "CGDS" | version u16 | dtype u8 (0 = u8, 1 = f32) | label count u32 |
//   rank u8 | extents u32 × rank | labels u8 × N | pixels

inline constexpr std::uint16_t kArchiveVersion = 1;

inline std::vector<std::uint8_t> encode_archive(const LabeledDataset& ds) {
  ds.validate();
  io::Writer w;
  w.text("CGDS");
  w.le<std::uint16_t>(kArchiveVersion);
  w.le<std::uint8_t>(ds.normalized ? 1 : 0);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  const Shape shape = ds.shape();
  w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(e));
  w.le_array(ds.labels.data(), ds.labels.size());
  if (ds.normalized) {
    w.le_array(ds.values.data(), ds.values.size());
  } else {
    w.le_array(ds.bytes.data(), ds.bytes.size());
  }
  return w.buffer();
}

inline LabeledDataset decode_archive(const std::vector<std::uint8_t>& data) {
  io::Reader r(data.data(), data.size(), "CGDS archive");
  if (data.size() < 4 || r.text(4) != "CGDS") throw FormatError("CGDS archive: bad magic");
  const auto version = r.le<std::uint16_t>();
  if (version != kArchiveVersion) throw FormatError("CGDS archive: unknown version " + std::to_string(version));
  const auto dtype = r.le<std::uint8_t>();
  if (dtype > 1) throw FormatError("CGDS archive: unknown dtype code " + std::to_string(dtype));
  const auto count = r.le<std::uint32_t>();
  const auto rank = r.le<std::uint8_t>();
  if (rank != 4) throw FormatError("CGDS archive: expected rank 4, got " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = r.le<std::uint32_t>();
  if (shape[0] != count || shape[3] != 1) throw FormatError("CGDS archive: shape does not match label count");
  LabeledDataset ds;
  ds.height = shape[1];
  ds.width = shape[2];
  ds.normalized = dtype == 1;
  ds.labels.resize(count);
  r.le_array(ds.labels.data(), count);
  const std::size_t n = count * ds.height * ds.width;
  if (ds.normalized) {
    ds.values.resize(n);
    r.le_array(ds.values.data(), n);
  } else {
    ds.bytes.resize(n);
    r.le_array(ds.bytes.data(), n);
  }
  if (r.remaining() != 0) throw FormatError("CGDS archive: trailing bytes");
  for (auto l : ds.labels) {
    if (l >= kNumClasses) throw FormatError("CGDS archive: label " + std::to_string(l) + " outside 0..6");
  }
  return ds;
}

inline void save_archive(const LabeledDataset& ds, const std::string& path) { io::write_file(path, encode_archive(ds)); }

inline LabeledDataset load_archive(const std::string& path) { return decode_archive(io::read_file(path)); }

inline bool is_archive_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::string_view(magic, 4) == "CGDS";
}

// CGDS or CSV, by magic.
inline LabeledDataset load_dataset(const std::string& path, std::size_t image_side = 64) {
  return is_archive_file(path) ? load_archive(path) : load_csv(path, image_side);
}

// ---------------------------------------------------------------------------
// Pixel scaling: byte b ↦ b/127.5 − 1, and back by round((x + 1)·127.5)
// clamped to [0, 255].

inline float normalize_pixel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

template <typename T>
std::uint8_t denormalize_pixel(T x) {
  const double v = std::round((static_cast<double>(x) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

inline LabeledDataset normalize(const LabeledDataset& raw) {
  if (raw.normalized) throw ContractError("dataset is already normalized");
  LabeledDataset ds = raw;
  ds.values.resize(raw.bytes.size());
  std::transform(raw.bytes.begin(), raw.bytes.end(), ds.values.begin(), normalize_pixel);
  ds.bytes.clear();
  ds.normalized = true;
  return ds;
}

inline LabeledDataset denormalize(const LabeledDataset& ds) {
  if (!ds.normalized) throw ContractError("dataset is not normalized");
  LabeledDataset raw = ds;
  raw.bytes.resize(ds.values.size());
  std::transform(ds.values.begin(), ds.values.end(), raw.bytes.begin(), denormalize_pixel<float>);
  raw.values.clear();
  raw.normalized = false;
  return raw;
}

// ---------------------------------------------------------------------------
// Batching

// One epoch: a seeded Fisher-Yates permutation of 0..n−1 cut into chunks of
// batch_size; the last chunk may be short.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (n == 0) throw ContractError("cannot batch an empty dataset");
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> batches(const LabeledDataset& ds, std::size_t batch_size,
                                                     std::uint64_t seed) {
  return batches(ds.size(), batch_size, seed);
}

template <typename T>
struct Batch {
  Tensor<T> images;  // (B, H, W, 1)
  std::vector<int> labels;
};

template <typename T>
Batch<T> gather(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  if (!ds.normalized) throw ContractError("gather needs a normalized dataset");
  if (indices.empty()) throw ContractError("empty batch");
  const std::size_t ppi = ds.pixels_per_image();
  Batch<T> b{Tensor<T>({indices.size(), ds.height, ds.width, 1}), {}};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= ds.size()) throw ContractError("batch index out of range");
    std::copy_n(ds.values.begin() + static_cast<std::ptrdiff_t>(src * ppi), ppi,
                b.images.data().begin() + static_cast<std::ptrdiff_t>(i * ppi));
    b.labels.push_back(ds.labels[src]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Class statistics

struct ClassStats {
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t total = 0;
  double imbalance_ratio = 0.0;  // max/min over non-empty classes
  bool has_empty_class = false;
};

inline ClassStats class_distribution(std::span<const std::uint8_t> labels) {
  ClassStats s;
  for (auto l : labels) {
    if (l >= kNumClasses) throw LabelError("label " + std::to_string(l) + " outside 0..6");
    ++s.counts[l];
  }
  s.total = labels.size();
  std::size_t lo = 0, hi = 0;
  for (auto c : s.counts) {
    if (c == 0) {
      s.has_empty_class = true;
      continue;
    }
    lo = lo == 0 ? c : std::min(lo, c);
    hi = std::max(hi, c);
  }
  s.imbalance_ratio = lo ? static_cast<double>(hi) / static_cast<double>(lo) : 0.0;
  return s;
}

inline ClassStats class_distribution(const LabeledDataset& ds) { return class_distribution(ds.labels); }

// Label | Emotion | Number of Images, one class per row.
inline std::string format_class_table(const ClassStats& s) {
  std::ostringstream out;
  out << "Label Emotion Count\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) out << c << ' ' << kEmotionNames[c] << ' ' << s.counts[c] << '\n';
  out << "total " << s.total << '\n';
  out << "imbalance_ratio " << std::fixed << std::setprecision(2) << s.imbalance_ratio
      << (s.has_empty_class ? " (empty classes excluded)" : "") << '\n';
  return out.str();
}

}  // namespace cgan
