#include "ldr/guidance.hpp"

#include <algorithm>

#include "ldr/rng.hpp"

namespace ldr {

void GuidanceConfig::validate() const {
  if (steps < 1) throw ConfigError("guidance: steps must be >= 1");
  if (pos.empty() || neg.empty()) throw ConfigError("guidance: pos and neg prompts must be non-empty");
}

Tensor fuse_guidance(const Tensor& z_pos, const Tensor& z_neg, Scalar lambda_cfg) {
  return add(z_pos, scale(sub(z_pos, z_neg), lambda_cfg));
}

Tensor cfg_step(const Network& net, const Tensor& z_t, int t, const Tensor& z_lq, const GuidanceConfig& cfg,
                const NoiseSchedule& sched, const Tensor* noise) {
  const Sampler sampler = cfg.deterministic ? Sampler::Deterministic : Sampler::Ancestral;
  const Denoiser den = net.denoiser();
  const ConditioningBundle pos = net.condition(z_lq, cfg.pos);
  if (cfg.fuse_noise_predictions) {
    const int time = sched.timestep.at(static_cast<std::size_t>(t));
    const Tensor eps_pos = den(z_t, time, pos);
    Tensor eps = eps_pos;
    if (cfg.lambda_cfg != 0.0) eps = fuse_guidance(eps_pos, den(z_t, time, net.condition(z_lq, cfg.neg)), cfg.lambda_cfg);
    return step_from_eps(z_t, eps, t, sched, sampler, noise);
  }
  const Tensor z_pos = reverse_step(den, z_t, t, pos, sched, sampler, noise);
  // With λ = 0 the negative branch is multiplied by zero; skip evaluating it.
  if (cfg.lambda_cfg == 0.0) return z_pos;
  const Tensor z_neg = reverse_step(den, z_t, t, net.condition(z_lq, cfg.neg), sched, sampler, noise);
  return fuse_guidance(z_pos, z_neg, cfg.lambda_cfg);
}

Tensor restore_latent(const Network& net, const Tensor& lq, const GuidanceConfig& cfg, const NoiseSchedule& sched) {
  cfg.validate();
  NoGradGuard no_grad;
  const NoiseSchedule steps = sched.respaced(cfg.steps);

  // The control branch sees the content tags of the positive prompt.
  std::vector<PromptId> content;
  std::copy_if(cfg.pos.begin(), cfg.pos.end(), std::back_inserter(content), is_family);
  content.push_back(PromptId::HighQuality);
  const Tensor z_enc = net.encode(lq);
  const Tensor z_lq = net.control_features(z_enc, net.prompt_embedding(content));

  Rng rng = Rng(cfg.seed).split("restore");
  Tensor z = rng.randn(z_enc.shape());
  const Scalar k = net.config().latent_scale;
  if (cfg.start_from_lq) z = forward_diffuse(scale(z_enc, k), steps.T - 1, z, steps);
  for (int t = steps.T - 1; t >= 0; --t) {
    if (!cfg.deterministic && t > 0) {
      const Tensor noise = rng.randn(z.shape());
      z = cfg_step(net, z, t, z_lq, cfg, steps, &noise);
    } else {
      z = cfg_step(net, z, t, z_lq, cfg, steps, nullptr);
    }
  }
  return scale(z, 1.0 / k);
}

Image restore(const Image& lq, const Model& model, std::span<const LoraAdapter> adapters, const GuidanceConfig& cfg,
              const NoiseSchedule& sched) {
  if (lq.channels != model.config.image_channels || lq.height % 4 != 0 || lq.width % 4 != 0) {
    throw ConfigError("restore: unsupported image dimensions " + std::to_string(lq.channels) + "x" +
                      std::to_string(lq.height) + "x" + std::to_string(lq.width));
  }
  const Network net(model, adapters);
  NoGradGuard no_grad;
  const Tensor z = restore_latent(net, lq.to_tensor(), cfg, sched);
  return Image::from_tensor(net.decode(z)).clamped();
}

}  // namespace ldr
