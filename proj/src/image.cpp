#include "ldr/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace ldr {

Image::Image(Index channels, Index height, Index width, Scalar fill)
    : channels(channels), height(height), width(width), pixels(Eigen::ArrayXd::Constant(channels * height * width, fill)) {
  if (channels != 1 && channels != 3) throw DimensionError("image must have 1 or 3 channels");
  if (height <= 0 || width <= 0) throw DimensionError("image dimensions must be positive");
}

Image Image::clamped() const {
  Image out = *this;
  out.pixels = pixels.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

Tensor Image::to_tensor() const { return Tensor::from({channels, height, width}, Vec(pixels.matrix())); }

Image Image::from_tensor(const Tensor& t) {
  if (t.ndim() != 3) throw DimensionError("image tensor must be c×h×w, got " + shape_str(t.shape()));
  Image img(t.dim(0), t.dim(1), t.dim(2));
  img.pixels = t.data().array();
  return img;
}

unsigned char quantize_pixel(Scalar v) {
  const Scalar c = std::clamp(v, 0.0, 1.0);
  // Round half up: 0.5 → 127.5 → 128.
  return static_cast<unsigned char>(std::floor(255.0 * c + 0.5));
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(std::string("PNM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PNM header: expected ") + what, start);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("PNM header: expected whitespace before payload", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("bad magic number, expected P5 or P6", 0);
  }
  const Index channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes.subspan(2));
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const std::size_t maxval_pos = reader.pos() + 2;
  const long maxval = reader.read_uint("maxval");
  if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + ", need 255", maxval_pos);
  reader.single_whitespace();
  if (width <= 0 || height <= 0) throw FormatError("PNM dimensions must be positive", 2);

  const std::size_t offset = reader.pos() + 2;
  const std::size_t count = static_cast<std::size_t>(channels * width * height);
  if (bytes.size() - offset < count) {
    throw FormatError("truncated payload: need " + std::to_string(count) + " bytes, have " +
                          std::to_string(bytes.size() - offset),
                      bytes.size());
  }
  Image img(channels, height, width);
  // PPM interleaves RGB; Image is channel-planar.
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      for (Index c = 0; c < channels; ++c) {
        const std::size_t i = offset + static_cast<std::size_t>((y * width + x) * channels + c);
        img.at(c, y, x) = bytes[i] / 255.0;
      }
    }
  }
  return img;
}

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<unsigned char> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DimensionError("PNM needs 1 or 3 channels");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + static_cast<std::size_t>(img.pixels.size()));
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x)
      for (Index c = 0; c < img.channels; ++c) out.push_back(quantize_pixel(img.at(c, y, x)));
  return out;
}

void save_pnm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace ldr
