#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ldr/conditioning.hpp"
#include "ldr/tensor.hpp"

namespace ldr {

/// Per-step coefficients of a discrete Gaussian diffusion.
///
/// `timestep[i]` is the time index fed to the network at step i; it is the
/// identity for a freshly made schedule and a strided subset after respacing.
struct NoiseSchedule {
  int T = 0;
  Scalar beta_start = 0;
  Scalar beta_end = 0;
  std::vector<Scalar> beta;
  std::vector<Scalar> alpha;
  std::vector<Scalar> alpha_bar;
  std::vector<Scalar> sigma;
  std::vector<int> timestep;

  /// Schedule over `steps` evenly spaced timesteps of this one (first 0, last T−1),
  /// with betas recomputed so the cumulative products match at the kept steps.
  NoiseSchedule respaced(int steps) const;
};

/// Linear beta ramp from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int T, Scalar beta_start, Scalar beta_end);

/// ε-predicting network: (z_t, network time, conditioning) → ε̂.
using Denoiser = std::function<Tensor(const Tensor& z_t, int t, const ConditioningBundle& cond)>;

enum class Sampler { Ancestral, Deterministic };

/// Closed-form marginal x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// Mean squared error between ε and the network's prediction at z_t.
Tensor ldm_loss(const Denoiser& net, const Tensor& x0_latent, int t, const Tensor& eps, const ConditioningBundle& cond,
                const NoiseSchedule& sched);

/// μ = (z_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t.
Tensor posterior_mean(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched);

/// μ + σ_t·noise for ancestral steps with t > 0, μ otherwise.
Tensor step_from_eps(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched, Sampler sampler,
                     const Tensor* noise);

/// One reverse transition z_t → z_{t−1}. Ancestral steps with t > 0 need `noise`.
Tensor reverse_step(const Denoiser& net, const Tensor& z_t, int t, const ConditioningBundle& cond,
                    const NoiseSchedule& sched, Sampler sampler, const Tensor* noise);

/// Full reverse chain from seeded unit noise at t = T−1 down to t = 0.
Tensor sample(const Denoiser& net, const Shape& shape, const ConditioningBundle& cond, const NoiseSchedule& sched,
              std::uint64_t seed, Sampler sampler);

}  // namespace ldr
