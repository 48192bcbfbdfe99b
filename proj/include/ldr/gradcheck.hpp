#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ldr/tensor.hpp"

namespace ldr {

/// Max over coordinates of |analytic − numeric| / max(1e-8, |analytic| + |numeric|),
/// numeric by central differences. Throws OracleError if f is not deterministic.
Scalar finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Scalar eps);

/// Same check for a closure over several leaves; each leaf is perturbed in place and restored.
Scalar finite_diff_check(const std::function<Tensor()>& f, std::span<const Tensor> leaves, Scalar eps);

struct GradcheckResult {
  std::string name;
  Index coordinates = 0;
  Scalar max_rel_error = 0;
};

/// Every differentiable op plus the composed denoiser and LoRA objectives on 8×8 latents.
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, Scalar eps = 1e-5);

}  // namespace ldr
