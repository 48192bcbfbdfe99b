#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldr/diffusion.hpp"
#include "ldr/lora.hpp"
#include "ldr/network.hpp"

namespace ldr {

inline constexpr char kCheckpointMagic[4] = {'L', 'D', 'R', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raw container: "LDRS", u32 version, u64 header length, JSON header, then
/// little-endian f64 payloads in the order of header["tensors"].
struct CheckpointFile {
  nlohmann::ordered_json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(std::span<const unsigned char> bytes);
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const NetConfig& config);
NetConfig net_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json schedule_to_json(const NoiseSchedule& sched);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

/// Adapter file: same container with header "kind": "lora" and one {target, rank} entry per adapter.
void save_adapters(const std::filesystem::path& path, std::span<const LoraAdapter> adapters);
std::vector<LoraAdapter> load_adapters(const std::filesystem::path& path, const NetParams& base);

}  // namespace ldr
