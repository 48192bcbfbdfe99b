#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "ldr/image.hpp"
#include "ldr/network.hpp"

namespace ldr {

inline constexpr Scalar kPsnrIdentical = std::numeric_limits<Scalar>::infinity();

/// 10·log10(1 / mse) with peak 1. Identical images give +inf.
Scalar psnr(const Image& a, const Image& b);

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), valid positions only, channels averaged.
Scalar ssim(const Image& a, const Image& b);

/// Encoder-feature distance standing in for LPIPS ("pproxy"). Each feature map is
/// unit-normalized across channels per position; the score is the mean squared
/// difference, averaged over layers and over the image and its mirror.
Scalar perceptual_proxy(const Image& a, const Image& b, const Model& model);

struct EvalPair {
  std::string id;
  std::string spec;
  Image clean;
  Image restored;
  Scalar wall_ms = 0;
};

struct MetricRow {
  std::string id;
  std::string spec;
  Scalar psnr_db = 0;
  Scalar ssim = 0;
  Scalar pproxy = 0;
  Scalar wall_ms = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean;

  /// `id,spec,psnr_db,ssim,pproxy,wall_ms`, one line per row, then MEAN.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Per-pair metrics plus arithmetic means (PSNR averaged in dB).
MetricReport evaluate(const std::vector<EvalPair>& pairs, const Model& model);

std::string format_metric(Scalar value);

}  // namespace ldr
