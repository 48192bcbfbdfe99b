#include "ldr/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ldr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::string_view name, std::uint64_t index) const {
  return Rng(splitmix64(seed_ ^ splitmix64(fnv1a(name) + splitmix64(index))));
}

Scalar Rng::uniform() { return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased for any n.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

Scalar Rng::normal() {
  Scalar u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const Scalar u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::randn(const Shape& shape, Scalar stddev) {
  Tensor t = Tensor::zeros(shape);
  for (Index i = 0; i < t.size(); ++i) t.mutable_data()[i] = stddev * normal();
  return t;
}

}  // namespace ldr
