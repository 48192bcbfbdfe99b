#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ldr/image.hpp"
#include "ldr/prompt.hpp"

namespace ldr {

struct DatasetItem {
  Image clean;
  PromptId prompt = PromptId::Gradient;
  std::vector<PromptId> tags{PromptId::HighQuality};
};

using Dataset = std::vector<DatasetItem>;

/// Procedural square grayscale images, family of item i = i mod 8.
/// Pure function of (seed, n, size); size must be 16, 32 or 64.
Dataset synth_dataset(std::uint64_t seed, std::size_t n, Index size);

Image synth_image(PromptId family, Index size, std::uint64_t seed);

Dataset filter_family(const Dataset& data, PromptId family, bool keep);

/// Seeded per-epoch shuffles; the last batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(std::size_t dataset_size, std::size_t batch, std::uint64_t seed);

  std::vector<std::size_t> next();
  /// Batch number `step` counted from the first epoch; independent of iteration state.
  std::vector<std::size_t> batch_at(std::uint64_t step) const;

  std::size_t batches_per_epoch() const { return per_epoch_; }

 private:
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t per_epoch_;
  std::uint64_t step_ = 0;
};

/// Writes `<dir>/<index>.pgm` per item plus `<dir>/manifest.json` ({file, prompt, tags}).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_manifest(const std::filesystem::path& manifest);

}  // namespace ldr
