#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "tensor.hpp"

namespace cgan {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Binary PGM: "P5\n<w> <h>\n255\n" followed by w·h bytes.
inline void write_pgm(const std::string& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw ContractError("PGM pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto next_token = [&]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P5") throw FormatError(path + ": not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoul(next_token());
    img.height = std::stoul(next_token());
    if (std::stoul(next_token()) != 255) throw FormatError(path + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw FormatError(path + ": malformed PGM header");
  }
  img.pixels.resize(img.width * img.height);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw FormatError(path + ": truncated PGM payload");
  }
  return img;
}

// Image n of a (N, H, W, 1) tensor in [−1, 1], mapped by round((x + 1)·127.5).
template <typename T>
GrayImage to_gray_image(const Tensor<T>& images, std::size_t n) {
  if (images.rank() != 4 || images.dim(3) != 1) throw DimensionError("expected (N, H, W, 1) images");
  GrayImage img{images.dim(2), images.dim(1), {}};
  const std::size_t ppi = img.width * img.height;
  img.pixels.resize(ppi);
  for (std::size_t p = 0; p < ppi; ++p) img.pixels[p] = denormalize_pixel(images[n * ppi + p]);
  return img;
}

}  // namespace cgan
