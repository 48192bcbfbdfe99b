#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ldr/tensor.hpp"

namespace ldr {

/// Seedable generator with named, order-independent substreams.
///
/// `split` derives a child from (seed, name, index) only, so streams for
/// init/noise/data never perturb each other and a training step's draws
/// depend on the step index alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view name, std::uint64_t index = 0) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  Scalar uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; no cached second variate.
  Scalar normal();

  Tensor randn(const Shape& shape, Scalar stddev = 1.0);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ldr
