#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ldr/image.hpp"

namespace ldr {

struct Blur {
  Scalar sigma;
  bool operator==(const Blur&) const = default;
};
struct Downsample {
  Index factor;
  bool operator==(const Downsample&) const = default;
};
/// Gaussian noise with standard deviation given on the 0–255 scale.
struct Noise {
  Scalar sigma255;
  bool operator==(const Noise&) const = default;
};

using DegradationStep = std::variant<Blur, Downsample, Noise>;

/// Ordered list of degradation operators, canonical form "blur:2.0+sr:4+noise:1.0".
struct DegradationSpec {
  std::vector<DegradationStep> steps;

  static DegradationSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;

  bool operator==(const DegradationSpec&) const = default;
};

/// The four recipes of the restoration benchmark, in table order.
const std::vector<DegradationSpec>& benchmark_recipes();

/// k×k kernel with k = 2·ceil(3σ)+1, normalized to unit sum.
RowMat gaussian_kernel(Scalar sigma);

Image blur(const Image& img, Scalar sigma);

enum class Upsample { Bilinear, Nearest };

/// Box-average by `factor`, then resize back to the original size.
Image downsample_up(const Image& img, Index factor, Upsample mode = Upsample::Bilinear);
/// The pooled stage of downsample_up on its own.
Image box_downsample(const Image& img, Index factor);

Image add_noise(const Image& img, Scalar sigma255, std::uint64_t seed);

Image apply(const DegradationSpec& spec, const Image& img, std::uint64_t seed);

}  // namespace ldr
