#include "ldr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ldr {

namespace {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get_le(std::span<const unsigned char> bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("checkpoint truncated", bytes.size());
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file) {
  nlohmann::ordered_json header = file.header;
  header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : file.tensors) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : file.tensors) {
    for (Index i = 0; i < t.size(); ++i) put_le<double>(out, t[i]);
  }
  return out;
}

CheckpointFile decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic", 0);
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto length = get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < length) throw FormatError("checkpoint header truncated", bytes.size());

  CheckpointFile file;
  try {
    file.header = nlohmann::ordered_json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + length));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what(), pos + e.byte);
  }
  pos += length;
  for (const auto& entry : file.header.at("tensors")) {
    const Shape shape = entry.at("shape").get<Shape>();
    Vec values(numel(shape));
    for (Index i = 0; i < values.size(); ++i) values[i] = get_le<double>(bytes, pos);
    file.tensors.emplace_back(entry.at("name").get<std::string>(), Tensor::from(shape, std::move(values)));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload", pos);
  return file;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  const auto bytes = encode_checkpoint(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

nlohmann::ordered_json to_json(const NetConfig& c) {
  return {{"image_channels", c.image_channels}, {"latent_channels", c.latent_channels},
          {"hidden", c.hidden},                 {"hidden_mid", c.hidden_mid},
          {"prompt_dim", c.prompt_dim},         {"time_dim", c.time_dim},
          {"emb_dim", c.emb_dim},                 {"latent_scale", c.latent_scale}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.image_channels = j.at("image_channels").get<Index>();
  c.latent_channels = j.at("latent_channels").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.hidden_mid = j.at("hidden_mid").get<Index>();
  c.prompt_dim = j.at("prompt_dim").get<Index>();
  c.time_dim = j.at("time_dim").get<Index>();
  c.emb_dim = j.at("emb_dim").get<Index>();
  c.latent_scale = j.at("latent_scale").get<Scalar>();
  return c;
}

nlohmann::ordered_json schedule_to_json(const NoiseSchedule& s) {
  return {{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return make_schedule(j.at("T").get<int>(), j.at("beta_start").get<Scalar>(), j.at("beta_end").get<Scalar>());
}

void save_adapters(const std::filesystem::path& path, std::span<const LoraAdapter> adapters) {
  CheckpointFile file;
  file.header["kind"] = "lora";
  file.header["lora"] = true;
  file.header["adapters"] = nlohmann::ordered_json::array();
  for (const auto& a : adapters) {
    file.header["adapters"].push_back({{"target", a.target}, {"rank", a.rank}, {"shape", a.target_shape}});
    file.tensors.emplace_back("lora/" + a.target + "/A", a.A);
    file.tensors.emplace_back("lora/" + a.target + "/B", a.B);
  }
  write_checkpoint(path, file);
}

std::vector<LoraAdapter> load_adapters(const std::filesystem::path& path, const NetParams& base) {
  const CheckpointFile file = read_checkpoint(path);
  if (file.header.value("kind", "") != "lora") throw FormatError("not an adapter checkpoint: " + path.string(), 0);
  std::vector<LoraAdapter> out;
  std::size_t next = 0;
  for (const auto& entry : file.header.at("adapters")) {
    const std::string target = entry.at("target").get<std::string>();
    auto it = base.find(target);
    if (it == base.end()) throw ConfigError("adapter targets unknown parameter '" + target + "'");
    LoraAdapter a = make_adapter(target, it->second.shape(), entry.at("rank").get<int>(), 0);
    const Tensor& A = file.tensors.at(next++).second;
    const Tensor& B = file.tensors.at(next++).second;
    if (A.shape() != a.A.shape() || B.shape() != a.B.shape()) {
      throw DimensionError("adapter '" + target + "' tensors do not match the base weight");
    }
    a.A.mutable_data() = A.data();
    a.B.mutable_data() = B.data();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace ldr
