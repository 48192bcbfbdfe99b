#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ldr/diffusion.hpp"
#include "ldr/image.hpp"
#include "ldr/network.hpp"

namespace ldr {

struct GuidanceConfig {
  Scalar lambda_cfg = 0.1;
  std::vector<PromptId> pos{PromptId::HighQuality};
  std::vector<PromptId> neg{PromptId::LowQuality};
  int steps = 50;
  bool deterministic = true;
  std::uint64_t seed = 0;
  /// Fuse ε-predictions instead of step outputs (conventional CFG). Off by default.
  bool fuse_noise_predictions = false;
  /// Start the chain from the forward marginal of the encoded input instead of unit noise.
  bool start_from_lq = true;

  void validate() const;
};

/// z_pos + λ·(z_pos − z_neg).
Tensor fuse_guidance(const Tensor& z_pos, const Tensor& z_neg, Scalar lambda_cfg);

/// One guided reverse step: two reverse steps under pos / neg sharing `noise`, then fusion.
Tensor cfg_step(const Network& net, const Tensor& z_t, int t, const Tensor& z_lq, const GuidanceConfig& cfg,
                const NoiseSchedule& sched, const Tensor* noise);

/// encode → control features → guided reverse chain over cfg.steps → decode → clamp.
Image restore(const Image& lq, const Model& model, std::span<const LoraAdapter> adapters, const GuidanceConfig& cfg,
              const NoiseSchedule& sched);

/// Guided chain returning the final latent (before decoding).
Tensor restore_latent(const Network& net, const Tensor& lq, const GuidanceConfig& cfg, const NoiseSchedule& sched);

}  // namespace ldr
