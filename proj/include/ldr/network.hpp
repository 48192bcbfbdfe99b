#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldr/conditioning.hpp"
#include "ldr/diffusion.hpp"
#include "ldr/image.hpp"
#include "ldr/lora.hpp"
#include "ldr/params.hpp"

namespace ldr {

/// Widths of the encoder / control branch / denoiser / decoder stack.
struct NetConfig {
  Index image_channels = 1;
  Index latent_channels = 8;
  Index hidden = 24;
  Index hidden_mid = 32;
  Index prompt_dim = 16;
  Index time_dim = 16;
  Index emb_dim = 32;
  /// Constant factor between encoder latents and the diffusion space.
  Scalar latent_scale = 1.0;

  /// Spatial reduction of the encoder; fixed by the architecture.
  static constexpr Index downscale = 2;

  bool operator==(const NetConfig&) const = default;
};

struct Model {
  NetConfig config;
  NetParams params;
};

/// Fresh parameters. "ctrl.zero.*", "den.sft.w", "den.scale*.w" and "den.skip.w" start at zero.
NetParams init_params(const NetConfig& config, std::uint64_t seed);

/// Sinusoidal embedding of a time index.
Tensor time_embedding(int t, Index dim);

/// Read-only view of a model plus any LoRA adapters acting on its weights.
///
/// The view holds the parameter tensors by handle, so optimizer updates to
/// the underlying model are visible on the next call.
class Network {
 public:
  explicit Network(const Model& model, std::span<const LoraAdapter> adapters = {});

  const NetConfig& config() const { return config_; }
  const NetParams& params() const { return params_; }

  /// Image tensor [c×h×w] → latent [c_lat×h/2×w/2].
  Tensor encode(const Tensor& img) const;
  /// Encoder activations used for perceptual comparison: first hidden block and latent.
  std::vector<Tensor> encoder_features(const Tensor& img) const;
  /// Latent → image tensor in (0, 1).
  Tensor decode(const Tensor& z) const;

  Tensor prompt_embedding(std::span<const PromptId> prompts) const;
  /// Conv(z_enc) + ZeroConv([z_enc-features, prompt]).
  Tensor control_features(const Tensor& z_enc, const Tensor& prompt_embedding) const;
  /// Same as control_features with the zero-initialized path removed entirely.
  Tensor control_features_plain(const Tensor& z_enc) const;

  ConditioningBundle condition(const Tensor& z_lq, std::vector<PromptId> prompt) const;

  /// Predicted noise ε̂(z_t, t | cond), same shape as z_t.
  Tensor denoise(const Tensor& z_t, int t, const ConditioningBundle& cond) const;

  Denoiser denoiser() const;

 private:
  const Tensor& param(const std::string& name) const;
  Tensor conv(const std::string& block, const Tensor& x, Index padding) const;
  Tensor dense(const std::string& name, const Tensor& v) const;
  std::vector<const LoraAdapter*> adapters_for(const std::string& name) const;
  Tensor control_hidden(const Tensor& z_enc) const;
  /// x·(1 + scale(e)) + shift(e), per channel.
  Tensor modulate(const Tensor& x, const std::string& scale_name, const std::string& shift_name,
                  const Tensor& e) const;

  NetConfig config_;
  NetParams params_;
  std::vector<const LoraAdapter*> adapters_;
};

/// Free-function forms over a model without adapters.
Tensor encode(const Image& img, const Model& model);
Tensor control_features(const Tensor& z_enc, const Tensor& prompt_embedding, const Model& model);
Tensor denoise(const Tensor& z_t, int t, const ConditioningBundle& cond, const Model& model);
Image decode(const Tensor& z, const Model& model);

}  // namespace ldr
