#include "ldr/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

constexpr std::array<std::string_view, kVocabSize> kTokens = {
    "gradient", "checkerboard", "blobs", "stripes", "rings",
    "texture",  "disk",         "cross", "high-quality", "low-quality",
};

constexpr Scalar kTwoPi = 2.0 * std::numbers::pi;

Scalar uniform_in(Rng& rng, Scalar lo, Scalar hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

std::string_view to_string(PromptId id) { return kTokens.at(static_cast<std::size_t>(id)); }

PromptId parse_prompt(std::string_view token) {
  for (std::size_t i = 0; i < kTokens.size(); ++i) {
    if (kTokens[i] == token) return static_cast<PromptId>(i);
  }
  throw ConfigError("unknown prompt token '" + std::string(token) + "'");
}

std::vector<PromptId> parse_prompt_list(std::string_view text) {
  std::vector<PromptId> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view token = text.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) out.push_back(parse_prompt(token));
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("empty prompt list");
  return out;
}

std::string join_prompts(const std::vector<PromptId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += to_string(ids[i]);
  }
  return out;
}

Image synth_image(PromptId fam, Index size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(1, size, size);
  const auto s = static_cast<Scalar>(size);
  auto coord = [s](Index i) { return (static_cast<Scalar>(i) + 0.5) / s; };

  switch (fam) {
    case PromptId::Gradient: {
      const Scalar lo = uniform_in(rng, 0.1, 0.4), hi = uniform_in(rng, 0.6, 0.9);
      const Scalar theta = uniform_in(rng, 0.0, kTwoPi);
      const Scalar c = std::cos(theta), sn = std::sin(theta), span = std::abs(c) + std::abs(sn);
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          const Scalar t = ((coord(x) - 0.5) * c + (coord(y) - 0.5) * sn) / span + 0.5;
          img.at(0, y, x) = lo + (hi - lo) * t;
        }
      break;
    }
    case PromptId::Checkerboard: {
      const Index cell = rng.below(2) == 0 ? size / 8 : size / 4;
      const auto ox = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cell)));
      const auto oy = static_cast<Index>(rng.below(static_cast<std::uint64_t>(cell)));
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) img.at(0, y, x) = (((x + ox) / cell + (y + oy) / cell) % 2) ? 0.9 : 0.1;
      break;
    }
    case PromptId::Blobs: {
      const Scalar base = uniform_in(rng, 0.15, 0.3);
      struct Blob {
        Scalar cx, cy, sigma, amp;
      };
      std::array<Blob, 3> blobs{};
      for (auto& b : blobs) {
        b = {uniform_in(rng, 0.2, 0.8), uniform_in(rng, 0.2, 0.8), uniform_in(rng, 0.08, 0.2), uniform_in(rng, 0.25, 0.45)};
      }
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          Scalar v = base;
          for (const auto& b : blobs) {
            const Scalar dx = coord(x) - b.cx, dy = coord(y) - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
          }
          img.at(0, y, x) = std::min(v, 0.9);
        }
      break;
    }
    case PromptId::Stripes: {
      const Scalar theta = uniform_in(rng, 0.0, std::numbers::pi), freq = uniform_in(rng, 2.0, 5.0);
      const Scalar phase = uniform_in(rng, 0.0, kTwoPi);
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          const Scalar p = coord(x) * std::cos(theta) + coord(y) * std::sin(theta);
          img.at(0, y, x) = 0.5 + 0.35 * std::sin(kTwoPi * freq * p + phase);
        }
      break;
    }
    case PromptId::Rings: {
      const Scalar cx = uniform_in(rng, 0.35, 0.65), cy = uniform_in(rng, 0.35, 0.65);
      const Scalar freq = uniform_in(rng, 2.0, 5.0), phase = uniform_in(rng, 0.0, kTwoPi);
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          const Scalar r = std::hypot(coord(x) - cx, coord(y) - cy);
          img.at(0, y, x) = 0.5 + 0.35 * std::cos(kTwoPi * freq * r + phase);
        }
      break;
    }
    case PromptId::Texture: {
      struct Wave {
        Scalar kx, ky, phase;
      };
      std::array<Wave, 3> waves{};
      for (auto& w : waves) {
        const Scalar theta = uniform_in(rng, 0.0, kTwoPi), freq = uniform_in(rng, 1.0, 4.0);
        w = {kTwoPi * freq * std::cos(theta), kTwoPi * freq * std::sin(theta), uniform_in(rng, 0.0, kTwoPi)};
      }
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          Scalar v = 0.0;
          for (const auto& w : waves) v += std::sin(w.kx * coord(x) + w.ky * coord(y) + w.phase);
          img.at(0, y, x) = 0.5 + 0.35 * v / 3.0;
        }
      break;
    }
    case PromptId::Disk: {
      const bool bright = rng.below(2) == 0;
      const Scalar bg = bright ? 0.2 : 0.8, fg = bright ? 0.85 : 0.15;
      const Scalar cx = uniform_in(rng, 0.35, 0.65) * s, cy = uniform_in(rng, 0.35, 0.65) * s;
      const Scalar radius = uniform_in(rng, 0.15, 0.35) * s;
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          const Scalar d = std::hypot(static_cast<Scalar>(x) + 0.5 - cx, static_cast<Scalar>(y) + 0.5 - cy);
          const Scalar cover = std::clamp(radius - d + 0.5, 0.0, 1.0);
          img.at(0, y, x) = bg + (fg - bg) * cover;
        }
      break;
    }
    case PromptId::Cross: {
      const Scalar bg = uniform_in(rng, 0.1, 0.3), fg = uniform_in(rng, 0.7, 0.9);
      const Scalar cx = uniform_in(rng, 0.4, 0.6) * s, cy = uniform_in(rng, 0.4, 0.6) * s;
      const Scalar half = uniform_in(rng, 0.05, 0.1) * s;
      for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
          const Scalar dx = std::abs(static_cast<Scalar>(x) + 0.5 - cx);
          const Scalar dy = std::abs(static_cast<Scalar>(y) + 0.5 - cy);
          const Scalar cover = std::max(std::clamp(half - dx + 0.5, 0.0, 1.0), std::clamp(half - dy + 0.5, 0.0, 1.0));
          img.at(0, y, x) = bg + (fg - bg) * cover;
        }
      break;
    }
    default:
      throw ConfigError("synth_image: '" + std::string(to_string(fam)) + "' is not a content family");
  }
  return img;
}

Dataset synth_dataset(std::uint64_t seed, std::size_t n, Index size) {
  if (size != 16 && size != 32 && size != 64) throw ConfigError("synth_dataset: size must be 16, 32 or 64");
  if (n == 0) throw ConfigError("synth_dataset: n must be at least 1");
  const Rng root = Rng(seed).split("data");
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetItem item;
    item.prompt = family(i);
    item.clean = synth_image(item.prompt, size, root.split("item", i).next_u64());
    out.push_back(std::move(item));
  }
  return out;
}

Dataset filter_family(const Dataset& data, PromptId fam, bool keep) {
  Dataset out;
  std::copy_if(data.begin(), data.end(), std::back_inserter(out),
               [&](const DatasetItem& it) { return (it.prompt == fam) == keep; });
  return out;
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch, std::uint64_t seed)
    : size_(dataset_size), batch_(batch), seed_(seed) {
  if (dataset_size == 0) throw ConfigError("batches: empty dataset");
  if (batch == 0 || batch > dataset_size) {
    throw ConfigError("batches: batch size " + std::to_string(batch) + " must be in [1, " +
                      std::to_string(dataset_size) + "]");
  }
  per_epoch_ = (size_ + batch_ - 1) / batch_;
}

std::vector<std::size_t> BatchIterator::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(size_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed_).split("epoch", epoch);
  for (std::size_t i = size_ - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  return order;
}

std::vector<std::size_t> BatchIterator::batch_at(std::uint64_t step) const {
  const std::uint64_t epoch = step / per_epoch_;
  const std::size_t b = step % per_epoch_;
  const auto order = epoch_order(epoch);
  const std::size_t begin = b * batch_, end = std::min(size_, begin + batch_);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<std::size_t> BatchIterator::next() { return batch_at(step_++); }

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["items"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.pgm", i);
    save_pnm(data[i].clean, dir / name);
    nlohmann::ordered_json tags = nlohmann::ordered_json::array();
    for (PromptId t : data[i].tags) tags.push_back(std::string(to_string(t)));
    manifest["items"].push_back({{"file", name}, {"prompt", std::string(to_string(data[i].prompt))}, {"tags", tags}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest: ") + e.what(), e.byte);
  }
  Dataset out;
  for (const auto& item : j.at("items")) {
    DatasetItem d;
    d.clean = load_pnm(manifest.parent_path() / item.at("file").get<std::string>());
    d.prompt = parse_prompt(item.at("prompt").get<std::string>());
    d.tags.clear();
    for (const auto& t : item.at("tags")) d.tags.push_back(parse_prompt(t.get<std::string>()));
    out.push_back(std::move(d));
  }
  if (out.empty()) throw ConfigError("manifest lists no items: " + manifest.string());
  return out;
}

}  // namespace ldr
