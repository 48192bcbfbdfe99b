#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldr/params.hpp"

namespace ldr {

struct LoraConfig {
  int rank = 4;
  std::vector<std::string> targets{"den.*.w", "ctrl.*.w"};
  Scalar reg_lambda = 1e-4;
  Scalar lr = 1e-3;
};

/// Low-rank delta ΔW = A×B on one weight W viewed as d×k.
///
/// Convolution kernels [c_out, c_in, kh, kw] are adapted as d = c_out,
/// k = c_in·kh·kw. While merged, `original` holds the exact base values.
struct LoraAdapter {
  std::string target;
  Shape target_shape;
  Index d = 0;
  Index k = 0;
  int rank = 0;
  Tensor A;  // d×r, Gaussian init
  Tensor B;  // r×k, zero init
  bool enabled = true;
  std::optional<Tensor> original;

  Index trainable_count() const { return static_cast<Index>(rank) * (d + k); }
  Index frozen_count() const { return d * k; }
};

/// One adapter per 2-D (or reshaped conv) weight matching a target pattern.
/// Matched base weights are frozen. A ~ N(0, 1/r), B = 0.
std::vector<LoraAdapter> attach(NetParams& params, const LoraConfig& config, std::uint64_t seed);

LoraAdapter make_adapter(const std::string& target, const Shape& target_shape, int rank, std::uint64_t seed);

/// x[n×k] → x·Wᵀ + (x·Bᵀ)·Aᵀ, never forming W + A×B.
Tensor effective_forward(const Tensor& x, const Tensor& W, const LoraAdapter& adapter);

/// Column layout used inside the network: W·X + Σ A·(B·X) over enabled adapters.
Tensor project(const Tensor& W2d, const Tensor& X, std::span<const LoraAdapter* const> adapters);

/// λ·Σ(‖A‖²_F + ‖B‖²_F).
Tensor reg_loss(std::span<const LoraAdapter> adapters, Scalar lambda);

/// W ← W + A×B for every adapter, in order. Adapters become disabled.
NetParams merge(const NetParams& params, std::span<LoraAdapter> adapters);
/// Restores the stored originals in reverse order and re-enables the adapters.
NetParams unmerge(const NetParams& params, std::span<LoraAdapter> adapters);

/// Plain gradient step A ← A − η∂L/∂A, B ← B − η∂L/∂B.
void lora_step(std::span<LoraAdapter> adapters, Scalar lr);

Index trainable_count(std::span<const LoraAdapter> adapters);

}  // namespace ldr
