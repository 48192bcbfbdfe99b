#include "ldr/lora.hpp"

#include <cmath>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

std::pair<Index, Index> as_matrix(const Shape& shape) {
  if (shape.size() < 2) return {0, 0};
  Index k = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) k *= shape[i];
  return {shape[0], k};
}

}  // namespace

LoraAdapter make_adapter(const std::string& target, const Shape& target_shape, int rank, std::uint64_t seed) {
  const auto [d, k] = as_matrix(target_shape);
  if (d == 0) throw ConfigError("LoRA target '" + target + "' is not 2-D: " + shape_str(target_shape));
  if (rank < 1 || rank > std::min(d, k)) {
    throw ConfigError("LoRA rank " + std::to_string(rank) + " invalid for " + std::to_string(d) + "x" +
                      std::to_string(k) + " target '" + target + "'");
  }
  LoraAdapter a;
  a.target = target;
  a.target_shape = target_shape;
  a.d = d;
  a.k = k;
  a.rank = rank;
  Rng rng = Rng(seed).split("lora").split(target);
  a.A = rng.randn({d, rank}, 1.0 / std::sqrt(static_cast<Scalar>(rank)));
  a.B = Tensor::zeros({rank, k});
  a.A.set_requires_grad(true);
  a.B.set_requires_grad(true);
  return a;
}

std::vector<LoraAdapter> attach(NetParams& params, const LoraConfig& config, std::uint64_t seed) {
  if (config.targets.empty()) throw ConfigError("LoRA config has no target patterns");
  std::vector<LoraAdapter> out;
  for (const auto& pattern : config.targets) {
    bool matched = false;
    for (auto& [name, w] : params) {
      if (!glob_match(pattern, name)) continue;
      matched = true;
      if (w.ndim() < 2) throw ConfigError("LoRA target '" + name + "' is not 2-D: " + shape_str(w.shape()));
      const bool seen = std::any_of(out.begin(), out.end(), [&](const LoraAdapter& a) { return a.target == name; });
      if (seen) continue;
      out.push_back(make_adapter(name, w.shape(), config.rank, seed));
    }
    if (!matched) throw ConfigError("LoRA target pattern '" + pattern + "' matches no parameter");
  }
  set_requires_grad(params, false);
  return out;
}

Tensor effective_forward(const Tensor& x, const Tensor& W, const LoraAdapter& adapter) {
  const auto [d, k] = as_matrix(W.shape());
  if (x.ndim() != 2 || x.dim(1) != k || d != adapter.d || k != adapter.k) {
    throw DimensionError("effective_forward: x " + shape_str(x.shape()) + ", W " + shape_str(W.shape()) +
                         ", adapter " + std::to_string(adapter.d) + "x" + std::to_string(adapter.k));
  }
  // W is frozen: the base product is taken on a detached copy so no gradient reaches it.
  const Tensor W2d = reshape(detach(W), {d, k});
  Tensor out = matmul(x, transpose(W2d));
  if (!adapter.enabled) return out;
  return add(out, matmul(matmul(x, transpose(adapter.B)), transpose(adapter.A)));
}

Tensor project(const Tensor& W2d, const Tensor& X, std::span<const LoraAdapter* const> adapters) {
  Tensor out = matmul(W2d, X);
  for (const LoraAdapter* a : adapters) {
    if (!a->enabled) continue;
    if (a->d != W2d.dim(0) || a->k != W2d.dim(1)) {
      throw DimensionError("LoRA adapter for '" + a->target + "' does not fit weight " + shape_str(W2d.shape()));
    }
    out = add(out, matmul(a->A, matmul(a->B, X)));
  }
  return out;
}

Tensor reg_loss(std::span<const LoraAdapter> adapters, Scalar lambda) {
  if (lambda < 0) throw ConfigError("reg_loss: lambda must be >= 0");
  Tensor total = Tensor::scalar(0.0);
  for (const auto& a : adapters) total = add(total, add(frobenius_norm_sq(a.A), frobenius_norm_sq(a.B)));
  return scale(total, lambda);
}

NetParams merge(const NetParams& params, std::span<LoraAdapter> adapters) {
  NetParams out = params;
  for (auto& a : adapters) {
    if (!a.enabled || a.original) throw ContractViolation("merge: adapter for '" + a.target + "' is already merged");
  }
  NoGradGuard no_grad;
  for (auto& a : adapters) {
    auto it = out.find(a.target);
    if (it == out.end()) throw ConfigError("merge: no parameter named '" + a.target + "'");
    a.original = it->second.clone();
    Tensor merged = it->second.clone();
    MatMap(merged.mutable_data().data(), a.d, a.k) +=
        ConstMatMap(a.A.data().data(), a.d, a.rank) * ConstMatMap(a.B.data().data(), a.rank, a.k);
    it->second = merged;
    a.enabled = false;
  }
  return out;
}

NetParams unmerge(const NetParams& params, std::span<LoraAdapter> adapters) {
  NetParams out = params;
  for (auto it = adapters.rbegin(); it != adapters.rend(); ++it) {
    if (!it->original) throw ContractViolation("unmerge: adapter for '" + it->target + "' is not merged");
    out.at(it->target) = *it->original;
    it->original.reset();
    it->enabled = true;
  }
  return out;
}

void lora_step(std::span<LoraAdapter> adapters, Scalar lr) {
  for (auto& a : adapters) {
    if (!a.A.has_grad() || !a.B.has_grad()) {
      throw ContractViolation("lora_step: adapter for '" + a.target + "' has no gradient");
    }
  }
  for (auto& a : adapters) {
    a.A.mutable_data() -= lr * a.A.grad();
    a.B.mutable_data() -= lr * a.B.grad();
  }
}

Index trainable_count(std::span<const LoraAdapter> adapters) {
  Index n = 0;
  for (const auto& a : adapters) n += a.trainable_count();
  return n;
}

}  // namespace ldr
