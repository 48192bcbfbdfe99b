#pragma once

#include <vector>

#include "ldr/prompt.hpp"
#include "ldr/tensor.hpp"

namespace ldr {

/// Everything the denoiser is conditioned on besides z_t and t.
struct ConditioningBundle {
  Tensor z_lq;                  // control-branch features of the degraded image
  std::vector<PromptId> prompt;
  Tensor prompt_embedding;      // mean embedding of `prompt`
};

}  // namespace ldr
