#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ldr {

/// Closed conditioning vocabulary: eight content families plus two quality tags.
enum class PromptId : std::uint8_t {
  Gradient = 0,
  Checkerboard,
  Blobs,
  Stripes,
  Rings,
  Texture,
  Disk,
  Cross,
  HighQuality,
  LowQuality,
};

inline constexpr std::size_t kFamilyCount = 8;
inline constexpr std::size_t kVocabSize = 10;

std::string_view to_string(PromptId id);
/// Throws ConfigError for tokens outside the vocabulary.
PromptId parse_prompt(std::string_view token);
/// Comma-separated token list, e.g. "checkerboard,high-quality".
std::vector<PromptId> parse_prompt_list(std::string_view text);
std::string join_prompts(const std::vector<PromptId>& ids);

inline PromptId family(std::size_t i) { return static_cast<PromptId>(i % kFamilyCount); }
inline bool is_family(PromptId id) { return static_cast<std::size_t>(id) < kFamilyCount; }

}  // namespace ldr
