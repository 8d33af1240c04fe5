#pragma once

#include <algorithm>
#include <iterator>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace cgan {

// Named-tensor archive, little-endian:
//   "CGCK" | version u16 | entry count u32 |
//   per entry: name length u16 | name | dtype u8 | rank u8 | extents u32 × rank | raw data
// dtype codes: 0 = u8, 1 = f32, 2 = f64, 3 = u64. Text is stored as a rank-1 u8 entry.
class TensorArchive {
 public:
  enum class Dtype : std::uint8_t { u8 = 0, f32 = 1, f64 = 2, u64 = 3 };

  struct Entry {
    Dtype dtype = Dtype::u8;
    std::vector<std::uint32_t> extents;
    std::vector<std::uint8_t> raw;  // little-endian payload
  };

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    Entry e;
    e.dtype = dtype_of<T>();
    for (auto d : t.shape()) e.extents.push_back(static_cast<std::uint32_t>(d));
    io::Writer w;
    w.le_array(t.data().data(), t.size());
    e.raw = w.buffer();
    entries_[name] = std::move(e);
  }

  void put_text(const std::string& name, const std::string& text) {
    Entry e;
    e.dtype = Dtype::u8;
    e.extents = {static_cast<std::uint32_t>(text.size())};
    e.raw.assign(text.begin(), text.end());
    entries_[name] = std::move(e);
  }

  void put_u64(const std::string& name, std::uint64_t value) {
    Entry e;
    e.dtype = Dtype::u64;
    e.extents = {1};
    io::Writer w;
    w.le(value);
    e.raw = w.buffer();
    entries_[name] = std::move(e);
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  bool erase(const std::string& name) { return entries_.erase(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw CheckpointError("checkpoint has no entry '" + name + "'");
    return it->second;
  }

  // Reads an entry into a tensor of the expected shape.
  template <typename T>
  void get(const std::string& name, Tensor<T>& out) const {
    const Entry& e = entry(name);
    if (e.dtype != dtype_of<T>()) throw CheckpointError("entry '" + name + "' has a different dtype");
    Shape shape(e.extents.begin(), e.extents.end());
    if (shape != out.shape()) {
      throw CheckpointError("entry '" + name + "' has shape " + to_string(shape) + ", expected " +
                            to_string(out.shape()));
    }
    io::Reader r(e.raw.data(), e.raw.size(), "checkpoint entry " + name);
    r.le_array(out.data().data(), out.size());
  }

  std::string get_text(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != Dtype::u8) throw CheckpointError("entry '" + name + "' is not text");
    return std::string(e.raw.begin(), e.raw.end());
  }

  std::uint64_t get_u64(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != Dtype::u64 || e.raw.size() != 8) throw CheckpointError("entry '" + name + "' is not a u64");
    io::Reader r(e.raw.data(), e.raw.size(), "checkpoint entry " + name);
    return r.le<std::uint64_t>();
  }

  Shape shape_of(const std::string& name) const {
    const Entry& e = entry(name);
    return Shape(e.extents.begin(), e.extents.end());
  }

  std::set<std::string> names_with_prefix(const std::string& prefix) const {
    std::set<std::string> out;
    for (const auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0) out.insert(name);
    }
    return out;
  }

  std::vector<std::uint8_t> encode() const {
    io::Writer w;
    w.text("CGCK");
    w.le<std::uint16_t>(kVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
      w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
      w.text(name);
      w.le<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
      w.le<std::uint8_t>(static_cast<std::uint8_t>(e.extents.size()));
      for (auto x : e.extents) w.le(x);
      w.bytes(e.raw.data(), e.raw.size());
    }
    return w.buffer();
  }

  static TensorArchive decode(const std::vector<std::uint8_t>& data) {
    io::Reader r(data.data(), data.size(), "checkpoint");
    if (data.size() < 4 || r.text(4) != "CGCK") throw FormatError("checkpoint: bad magic");
    const auto version = r.le<std::uint16_t>();
    if (version != kVersion) throw FormatError("checkpoint: unknown version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>();
    TensorArchive a;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto name = r.text(r.le<std::uint16_t>());
      Entry e;
      const auto code = r.le<std::uint8_t>();
      if (code > 3) throw FormatError("checkpoint: unknown dtype code in entry " + name);
      e.dtype = static_cast<Dtype>(code);
      e.extents.resize(r.le<std::uint8_t>());
      std::size_t n = 1;
      for (auto& x : e.extents) {
        x = r.le<std::uint32_t>();
        n *= x;
      }
      e.raw.resize(n * width_of(e.dtype));
      r.bytes(e.raw.data(), e.raw.size());
      a.entries_[name] = std::move(e);
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
    return a;
  }

  void save(const std::string& path) const { io::write_file(path, encode()); }
  static TensorArchive load(const std::string& path) { return decode(io::read_file(path)); }

 private:
  static constexpr std::uint16_t kVersion = 1;

  template <typename T>
  static constexpr Dtype dtype_of() {
    if constexpr (std::is_same_v<T, float>) return Dtype::f32;
    else if constexpr (std::is_same_v<T, double>) return Dtype::f64;
    else if constexpr (std::is_same_v<T, std::uint8_t>) return Dtype::u8;
    else return Dtype::u64;
  }

  static std::size_t width_of(Dtype d) {
    switch (d) {
      case Dtype::u8: return 1;
      case Dtype::f32: return 4;
      case Dtype::f64: return 8;
      case Dtype::u64: return 8;
    }
    return 1;
  }

  std::map<std::string, Entry> entries_;
};

// Verifies that the entries under `prefix` are exactly `expected`, listing
// missing and unexpected names otherwise.
inline void check_name_set(const TensorArchive& archive, const std::string& prefix,
                           const std::set<std::string>& expected, const std::string& what) {
  const auto present = archive.names_with_prefix(prefix);
  std::vector<std::string> missing, extra;
  std::set_difference(expected.begin(), expected.end(), present.begin(), present.end(), std::back_inserter(missing));
  std::set_difference(present.begin(), present.end(), expected.begin(), expected.end(), std::back_inserter(extra));
  if (missing.empty() && extra.empty()) return;
  std::string msg = what + " checkpoint name mismatch;";
  auto list = [&](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    msg += std::string(" ") + label + ":";
    for (std::size_t i = 0; i < names.size() && i < 8; ++i) msg += " " + names[i];
    if (names.size() > 8) msg += " ... (" + std::to_string(names.size()) + " total)";
  };
  list("missing", missing);
  list("extra", extra);
  throw CheckpointError(msg);
}

}  // namespace cgan
