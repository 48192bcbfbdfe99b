#include "ldr/diffusion.hpp"

#include <cmath>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

void fill_sigma(NoiseSchedule& s) {
  s.sigma.assign(static_cast<std::size_t>(s.T), 0.0);
  for (int t = 1; t < s.T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    s.sigma[i] = std::sqrt(s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]));
  }
}

void check_step(int t, const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.T) {
    throw ContractViolation("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + ")");
  }
}

}  // namespace

NoiseSchedule make_schedule(int T, Scalar beta_start, Scalar beta_end) {
  if (T < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  const auto n = static_cast<std::size_t>(T);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.timestep.resize(n);
  Scalar cumulative = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    s.beta[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<Scalar>(t) / (T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    cumulative *= s.alpha[t];
    s.alpha_bar[t] = cumulative;
    s.timestep[t] = static_cast<int>(t);
  }
  fill_sigma(s);
  return s;
}

NoiseSchedule NoiseSchedule::respaced(int steps) const {
  if (steps < 1 || steps > T) {
    throw ConfigError("respaced: steps must be in [1, " + std::to_string(T) + "], got " + std::to_string(steps));
  }
  if (steps == T) return *this;
  NoiseSchedule s;
  s.T = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  Scalar previous = 1.0;
  for (int i = 0; i < steps; ++i) {
    const int t = steps == 1 ? T - 1
                             : static_cast<int>(std::lround(static_cast<double>(i) * (T - 1) / (steps - 1)));
    const Scalar ab = alpha_bar[static_cast<std::size_t>(t)];
    s.timestep.push_back(timestep[static_cast<std::size_t>(t)]);
    s.alpha_bar.push_back(ab);
    s.alpha.push_back(ab / previous);
    s.beta.push_back(1.0 - ab / previous);
    previous = ab;
  }
  fill_sigma(s);
  return s;
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_step(t, sched);
  if (x0.shape() != eps.shape()) {
    throw DimensionError("forward_diffuse: x0 " + shape_str(x0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  const Scalar ab = sched.alpha_bar[static_cast<std::size_t>(t)];
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor ldm_loss(const Denoiser& net, const Tensor& x0_latent, int t, const Tensor& eps, const ConditioningBundle& cond,
                const NoiseSchedule& sched) {
  const Tensor z_t = forward_diffuse(x0_latent, t, eps, sched);
  const Tensor pred = net(z_t, sched.timestep[static_cast<std::size_t>(t)], cond);
  return mse(pred, eps);
}

Tensor posterior_mean(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched) {
  check_step(t, sched);
  const auto i = static_cast<std::size_t>(t);
  const Scalar coef = sched.beta[i] / std::sqrt(1.0 - sched.alpha_bar[i]);
  return scale(sub(z_t, scale(eps_pred, coef)), 1.0 / std::sqrt(sched.alpha[i]));
}

Tensor step_from_eps(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched, Sampler sampler,
                     const Tensor* noise) {
  Tensor mu = posterior_mean(z_t, eps_pred, t, sched);
  if (sampler == Sampler::Deterministic || t == 0) return mu;
  if (noise == nullptr) throw ContractViolation("reverse_step: ancestral step " + std::to_string(t) + " needs noise");
  if (noise->shape() != z_t.shape()) {
    throw DimensionError("reverse_step: noise " + shape_str(noise->shape()) + " vs z_t " + shape_str(z_t.shape()));
  }
  return add(mu, scale(*noise, sched.sigma[static_cast<std::size_t>(t)]));
}

Tensor reverse_step(const Denoiser& net, const Tensor& z_t, int t, const ConditioningBundle& cond,
                    const NoiseSchedule& sched, Sampler sampler, const Tensor* noise) {
  check_step(t, sched);
  if (sampler == Sampler::Ancestral && t > 0 && noise == nullptr) {
    throw ContractViolation("reverse_step: ancestral step " + std::to_string(t) + " needs noise");
  }
  const Tensor eps = net(z_t, sched.timestep[static_cast<std::size_t>(t)], cond);
  return step_from_eps(z_t, eps, t, sched, sampler, noise);
}

Tensor sample(const Denoiser& net, const Shape& shape, const ConditioningBundle& cond, const NoiseSchedule& sched,
              std::uint64_t seed, Sampler sampler) {
  NoGradGuard no_grad;
  Rng rng = Rng(seed).split("sample");
  Tensor z = rng.randn(shape);
  for (int t = sched.T - 1; t >= 0; --t) {
    if (sampler == Sampler::Ancestral && t > 0) {
      const Tensor noise = rng.randn(shape);
      z = reverse_step(net, z, t, cond, sched, sampler, &noise);
    } else {
      z = reverse_step(net, z, t, cond, sched, sampler, nullptr);
    }
  }
  return z;
}

}  // namespace ldr
