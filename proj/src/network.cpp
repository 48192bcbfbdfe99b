#include "ldr/network.hpp"

#include <cmath>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  enum class Init { Fan, Zero, Unit } init;
};

std::vector<ParamSpec> param_layout(const NetConfig& c) {
  using I = ParamSpec::Init;
  const Index L = c.latent_channels, H = c.hidden, M = c.hidden_mid, E = c.emb_dim;
  return {
      {"prompt.embed.table", {static_cast<Index>(kVocabSize), c.prompt_dim}, I::Unit},
      {"enc.conv1.w", {H, c.image_channels, 3, 3}, I::Fan},
      {"enc.conv1.b", {H}, I::Zero},
      {"enc.conv2.w", {H, H, 3, 3}, I::Fan},
      {"enc.conv2.b", {H}, I::Zero},
      {"enc.out.w", {L, H, 1, 1}, I::Fan},
      {"enc.out.b", {L}, I::Zero},
      {"dec.conv1.w", {H, L, 3, 3}, I::Fan},
      {"dec.conv1.b", {H}, I::Zero},
      {"dec.conv2.w", {H, H, 3, 3}, I::Fan},
      {"dec.conv2.b", {H}, I::Zero},
      {"dec.out.w", {c.image_channels, H, 3, 3}, I::Fan},
      {"dec.out.b", {c.image_channels}, I::Zero},
      {"ctrl.block.w", {H, L, 3, 3}, I::Fan},
      {"ctrl.block.b", {H}, I::Zero},
      {"ctrl.conv.w", {L, H, 1, 1}, I::Fan},
      {"ctrl.conv.b", {L}, I::Zero},
      {"ctrl.zero.w", {L, H + c.prompt_dim, 1, 1}, I::Zero},
      {"ctrl.zero.b", {L}, I::Zero},
      {"den.emb.w", {E, c.time_dim + c.prompt_dim}, I::Fan},
      {"den.emb.b", {E}, I::Zero},
      {"den.in.w", {H, 2 * L, 3, 3}, I::Fan},
      {"den.in.b", {H}, I::Zero},
      {"den.emb1.w", {H, E}, I::Fan},
      {"den.scale1.w", {H, E}, I::Zero},
      {"den.b1.w", {H, H, 3, 3}, I::Fan},
      {"den.b1.b", {H}, I::Zero},
      {"den.mid1.w", {M, H, 3, 3}, I::Fan},
      {"den.mid1.b", {M}, I::Zero},
      {"den.emb2.w", {M, E}, I::Fan},
      {"den.scale2.w", {M, E}, I::Zero},
      {"den.sft.w", {M, L, 1, 1}, I::Zero},
      {"den.mid2.w", {M, M, 3, 3}, I::Fan},
      {"den.mid2.b", {M}, I::Zero},
      {"den.up1.w", {H, M + H, 3, 3}, I::Fan},
      {"den.up1.b", {H}, I::Zero},
      {"den.out.w", {L, H, 3, 3}, I::Fan},
      {"den.out.b", {L}, I::Zero},
      {"den.skip.w", {L, E}, I::Zero},
  };
}

}  // namespace

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
  const Rng root = Rng(seed).split("init");
  NetParams params;
  for (const auto& spec : param_layout(config)) {
    Tensor t;
    switch (spec.init) {
      case ParamSpec::Init::Zero:
        t = Tensor::zeros(spec.shape);
        break;
      case ParamSpec::Init::Unit: {
        Rng rng = root.split(spec.name);
        t = rng.randn(spec.shape);
        break;
      }
      case ParamSpec::Init::Fan: {
        Rng rng = root.split(spec.name);
        const Index fan_in = numel(spec.shape) / spec.shape[0];
        t = rng.randn(spec.shape, 1.0 / std::sqrt(static_cast<Scalar>(fan_in)));
        break;
      }
    }
    t.set_requires_grad(true);
    params.emplace(spec.name, t);
  }
  return params;
}

Tensor time_embedding(int t, Index dim) {
  const Index half = dim / 2;
  Vec v = Vec::Zero(dim);
  for (Index i = 0; i < half; ++i) {
    const Scalar freq = std::exp(-std::log(10000.0) * static_cast<Scalar>(i) / static_cast<Scalar>(half));
    v[i] = std::sin(t * freq);
    v[half + i] = std::cos(t * freq);
  }
  return Tensor::from({dim}, std::move(v));
}

Network::Network(const Model& model, std::span<const LoraAdapter> adapters)
    : config_(model.config), params_(model.params) {
  for (const auto& a : adapters) {
    if (!params_.contains(a.target)) throw ConfigError("adapter targets unknown parameter '" + a.target + "'");
    adapters_.push_back(&a);
  }
}

const Tensor& Network::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing network parameter '" + name + "'");
  return it->second;
}

std::vector<const LoraAdapter*> Network::adapters_for(const std::string& name) const {
  std::vector<const LoraAdapter*> out;
  for (const LoraAdapter* a : adapters_) {
    if (a->enabled && a->target == name) out.push_back(a);
  }
  return out;
}

Tensor Network::conv(const std::string& block, const Tensor& x, Index padding) const {
  const Tensor& w = param(block + ".w");
  const auto active = adapters_for(block + ".w");
  Tensor out;
  if (active.empty()) {
    out = conv2d(x, w, padding);
  } else {
    const Index cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const Tensor cols = im2col(x, kh, kw, padding);
    const Tensor y = project(reshape(w, {cout, w.size() / cout}), cols, active);
    out = reshape(y, {cout, x.dim(1) + 2 * padding - kh + 1, x.dim(2) + 2 * padding - kw + 1});
  }
  auto bias = params_.find(block + ".b");
  return bias == params_.end() ? out : add_channel_bias(out, bias->second);
}

Tensor Network::dense(const std::string& name, const Tensor& v) const {
  const Tensor& w = param(name);
  const Tensor col = reshape(v, {v.size(), 1});
  return reshape(project(w, col, adapters_for(name)), {w.dim(0)});
}

std::vector<Tensor> Network::encoder_features(const Tensor& img) const {
  if (img.ndim() != 3 || img.dim(0) != config_.image_channels) {
    throw DimensionError("encode: expected " + std::to_string(config_.image_channels) + "×h×w image, got " +
                         shape_str(img.shape()));
  }
  if (img.dim(1) % NetConfig::downscale != 0 || img.dim(2) % NetConfig::downscale != 0) {
    throw ConfigError("encode: image " + shape_str(img.shape()) + " not divisible by the latent downscale factor");
  }
  const Tensor h1 = silu(conv("enc.conv1", img, 1));
  const Tensor h2 = silu(conv("enc.conv2", avg_pool2(h1), 1));
  return {h1, conv("enc.out", h2, 0)};
}

Tensor Network::encode(const Tensor& img) const { return encoder_features(img).back(); }

Tensor Network::decode(const Tensor& z) const {
  if (z.ndim() != 3 || z.dim(0) != config_.latent_channels) {
    throw DimensionError("decode: expected latent with " + std::to_string(config_.latent_channels) +
                         " channels, got " + shape_str(z.shape()));
  }
  const Tensor h1 = silu(conv("dec.conv1", z, 1));
  const Tensor h2 = silu(conv("dec.conv2", upsample_nearest2(h1), 1));
  return sigmoid(conv("dec.out", h2, 1));
}

Tensor Network::prompt_embedding(std::span<const PromptId> prompts) const {
  if (prompts.empty()) throw ConfigError("prompt_embedding: empty prompt");
  const Tensor& table = param("prompt.embed.table");
  Tensor acc = row(table, static_cast<Index>(prompts[0]));
  for (std::size_t i = 1; i < prompts.size(); ++i) acc = add(acc, row(table, static_cast<Index>(prompts[i])));
  return prompts.size() == 1 ? acc : scale(acc, 1.0 / static_cast<Scalar>(prompts.size()));
}

Tensor Network::control_hidden(const Tensor& z_enc) const {
  if (z_enc.ndim() != 3 || z_enc.dim(0) != config_.latent_channels) {
    throw DimensionError("control_features: expected latent with " + std::to_string(config_.latent_channels) +
                         " channels, got " + shape_str(z_enc.shape()));
  }
  return silu(conv("ctrl.block", z_enc, 1));
}

Tensor Network::control_features_plain(const Tensor& z_enc) const {
  return conv("ctrl.conv", control_hidden(z_enc), 0);
}

Tensor Network::control_features(const Tensor& z_enc, const Tensor& prompt_embedding) const {
  if (prompt_embedding.ndim() != 1 || prompt_embedding.dim(0) != config_.prompt_dim) {
    throw DimensionError("control_features: prompt embedding " + shape_str(prompt_embedding.shape()));
  }
  const Tensor h = control_hidden(z_enc);
  const Tensor plain = conv("ctrl.conv", h, 0);
  const Tensor with_prompt = concat(h, broadcast_spatial(prompt_embedding, h.dim(1), h.dim(2)));
  return add(plain, conv("ctrl.zero", with_prompt, 0));
}

ConditioningBundle Network::condition(const Tensor& z_lq, std::vector<PromptId> prompt) const {
  ConditioningBundle cond;
  cond.z_lq = z_lq;
  cond.prompt_embedding = prompt_embedding(prompt);
  cond.prompt = std::move(prompt);
  return cond;
}

Tensor Network::denoise(const Tensor& z_t, int t, const ConditioningBundle& cond) const {
  if (z_t.ndim() != 3 || z_t.dim(0) != config_.latent_channels || z_t.dim(1) % 2 != 0 || z_t.dim(2) % 2 != 0) {
    throw DimensionError("denoise: latent " + shape_str(z_t.shape()) + " does not match the network");
  }
  if (cond.z_lq.shape() != z_t.shape()) {
    throw DimensionError("denoise: z_lq " + shape_str(cond.z_lq.shape()) + " vs z_t " + shape_str(z_t.shape()));
  }
  const Tensor e = silu(add(dense("den.emb.w", concat(time_embedding(t, config_.time_dim), cond.prompt_embedding)),
                            param("den.emb.b")));

  Tensor h1 = conv("den.in", concat(z_t, cond.z_lq), 1);
  h1 = silu(modulate(h1, "den.scale1.w", "den.emb1.w", e));
  h1 = silu(conv("den.b1", h1, 1));

  Tensor m = conv("den.mid1", avg_pool2(h1), 1);
  m = modulate(m, "den.scale2.w", "den.emb2.w", e);
  m = silu(add(m, conv("den.sft", avg_pool2(cond.z_lq), 0)));
  m = silu(conv("den.mid2", m, 1));

  Tensor u = concat(upsample_nearest2(m), h1);
  u = silu(conv("den.up1", u, 1));
  const Tensor skip = mul(z_t, broadcast_spatial(dense("den.skip.w", e), z_t.dim(1), z_t.dim(2)));
  return add(conv("den.out", u, 1), skip);
}

Tensor Network::modulate(const Tensor& x, const std::string& scale_name, const std::string& shift_name,
                         const Tensor& e) const {
  const Tensor gain = add_scalar(dense(scale_name, e), 1.0);
  const Tensor scaled = mul(x, broadcast_spatial(gain, x.dim(1), x.dim(2)));
  return add_channel_bias(scaled, dense(shift_name, e));
}

Denoiser Network::denoiser() const {
  return [this](const Tensor& z_t, int t, const ConditioningBundle& cond) { return denoise(z_t, t, cond); };
}

Tensor encode(const Image& img, const Model& model) { return Network(model).encode(img.to_tensor()); }

Tensor control_features(const Tensor& z_enc, const Tensor& prompt_embedding, const Model& model) {
  return Network(model).control_features(z_enc, prompt_embedding);
}

Tensor denoise(const Tensor& z_t, int t, const ConditioningBundle& cond, const Model& model) {
  return Network(model).denoise(z_t, t, cond);
}

Image decode(const Tensor& z, const Model& model) {
  NoGradGuard no_grad;
  return Image::from_tensor(Network(model).decode(z)).clamped();
}

}  // namespace ldr
