#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldr/checkpoint.hpp"
#include "ldr/dataset.hpp"
#include "ldr/degradation.hpp"
#include "ldr/guidance.hpp"
#include "ldr/lora.hpp"
#include "ldr/network.hpp"

namespace ldr {

struct AdamWConfig {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 1e-2;
};

/// Moments are created on the first step and keyed by parameter name.
struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<Vec> m;
  std::vector<Vec> v;
};

using ParamList = std::vector<std::pair<std::string, Tensor>>;

/// θ ← θ − lr·wd·θ, then θ ← θ − lr·m̂/(√v̂ + eps). Every parameter must carry a grad.
void adamw_step(const ParamList& params, AdamWState& state);

ParamList param_list(const NetParams& params);
ParamList adapter_param_list(std::span<LoraAdapter> adapters);

struct TrainConfig {
  int steps = 2000;
  std::size_t batch = 16;
  AdamWConfig optim{1e-3};
  int T = 200;
  Scalar beta_start = 1e-4;
  Scalar beta_end = 0.02;
  NetConfig net;
  /// Weight of the autoencoder reconstruction term in base training.
  Scalar recon_weight = 0.1;
  /// Fraction of batches trained under the low-quality prompt with the degraded latent as target.
  Scalar lq_prompt_rate = 0.1;
  /// Used round-robin by batch in base training; LoRA training uses the first entry.
  std::vector<DegradationSpec> recipes = benchmark_recipes();
  /// Record real wall-clock in the metrics log; otherwise wall_ms is written as 0.
  bool wall_clock = false;
};

struct MetricsRow {
  std::uint64_t step = 0;
  Scalar loss = 0;
  Scalar reg_loss = 0;
  Scalar wall_ms = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  /// Columns step, loss, reg_loss, wall_ms.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Everything needed to continue base training bit-exactly.
struct TrainState {
  Model model;
  NoiseSchedule schedule;
  AdamWState optim;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

TrainState init_training(const TrainConfig& config, std::uint64_t seed);

/// Runs `steps` more base steps from state.step.
MetricsLog train_base_steps(TrainState& state, const Dataset& data, const TrainConfig& config, std::uint64_t steps);

/// Fresh model trained for config.steps.
std::pair<Model, MetricsLog> train_base(const Dataset& data, const TrainConfig& config, std::uint64_t seed);

/// Optimizes only the adapters on ldm_loss + reg_loss; base parameters are never written.
MetricsLog train_lora(const Model& base, std::vector<LoraAdapter>& adapters, const Dataset& data,
                      const TrainConfig& config, const LoraConfig& lora, std::uint64_t seed);

void save_training(const std::filesystem::path& path, const TrainState& state);
TrainState load_training(const std::filesystem::path& path);
/// Base model only (no optimizer state is required).
Model load_model(const std::filesystem::path& path);
NoiseSchedule load_schedule(const std::filesystem::path& path);

/// Mean diffusion loss under the positive prompt with fixed (t, ε) draws per item.
Scalar diffusion_loss(const Model& model, std::span<const LoraAdapter> adapters, const Dataset& data,
                      const DegradationSpec& spec, const NoiseSchedule& sched, std::uint64_t seed, int draws);

/// restore() with the wall-clock of the full pipeline.
std::pair<Image, double> timed_restore(const Image& lq, const Model& model, std::span<const LoraAdapter> adapters,
                                       const GuidanceConfig& cfg, const NoiseSchedule& sched);

}  // namespace ldr
