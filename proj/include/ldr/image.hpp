#pragma once

#include <filesystem>

#include "ldr/tensor.hpp"

namespace ldr {

/// Channel-planar image with values in [0, 1].
struct Image {
  Index channels = 1;
  Index height = 0;
  Index width = 0;
  Eigen::ArrayXd pixels;

  Image() = default;
  Image(Index channels, Index height, Index width, Scalar fill = 0.0);

  Index plane() const { return height * width; }
  Scalar& at(Index c, Index y, Index x) { return pixels[(c * height + y) * width + x]; }
  Scalar at(Index c, Index y, Index x) const { return pixels[(c * height + y) * width + x]; }

  bool same_dims(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }

  Image clamped() const;
  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& t);
};

/// Reads binary PGM (P5) or PPM (P6) with maxval 255. Pixels become byte / 255.
Image load_pnm(const std::filesystem::path& path);
Image decode_pnm(std::span<const unsigned char> bytes);

/// Writes P5 for one channel, P6 for three; byte = round(255 · clamp(v, 0, 1)).
void save_pnm(const Image& img, const std::filesystem::path& path);
std::vector<unsigned char> encode_pnm(const Image& img);

unsigned char quantize_pixel(Scalar v);

}  // namespace ldr
