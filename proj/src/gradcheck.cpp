#include "ldr/gradcheck.hpp"

#include <cmath>
#include <cstring>

#include "ldr/diffusion.hpp"
#include "ldr/lora.hpp"
#include "ldr/network.hpp"
#include "ldr/rng.hpp"

namespace ldr {

namespace {

bool same_bits(Scalar a, Scalar b) { return std::memcmp(&a, &b, sizeof(Scalar)) == 0; }

Scalar eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  const Tensor out = f();
  if (out.size() != 1) throw ContractViolation("finite_diff_check: f must return a scalar, got " + shape_str(out.shape()));
  return out.item();
}

// Values bounded away from zero so relu kinks stay out of reach of ±eps.
Tensor away_from_zero(Rng& rng, const Shape& shape) {
  Tensor t = rng.randn(shape);
  for (Index i = 0; i < t.size(); ++i) {
    Scalar& v = t.mutable_data()[i];
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
  }
  return t;
}

NetConfig small_config() {
  NetConfig c;
  c.latent_channels = 2;
  c.hidden = 4;
  c.hidden_mid = 4;
  c.prompt_dim = 4;
  c.time_dim = 4;
  c.emb_dim = 4;
  return c;
}

}  // namespace

Scalar finite_diff_check(const std::function<Tensor()>& f, std::span<const Tensor> leaves, Scalar eps) {
  if (!(eps > 0)) throw ContractViolation("finite_diff_check: eps must be positive");
  std::vector<Tensor> xs(leaves.begin(), leaves.end());
  for (auto& x : xs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  const Tensor loss = f();
  if (loss.size() != 1) throw ContractViolation("finite_diff_check: f must return a scalar");
  backward(loss);
  std::vector<Vec> analytic;
  for (const auto& x : xs) analytic.push_back(x.has_grad() ? x.grad() : Vec::Zero(x.size()));

  const Scalar first = eval_scalar(f);
  const Scalar second = eval_scalar(f);
  if (!same_bits(first, second) || !same_bits(first, loss.item())) {
    throw OracleError("finite_diff_check: f is not deterministic (" + std::to_string(first) + " vs " +
                      std::to_string(second) + ")");
  }

  Scalar worst = 0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    Vec& data = xs[j].mutable_data();
    for (Index i = 0; i < data.size(); ++i) {
      const Scalar orig = data[i];
      data[i] = orig + eps;
      const Scalar fp = eval_scalar(f);
      data[i] = orig - eps;
      const Scalar fm = eval_scalar(f);
      data[i] = orig;
      const Scalar numeric = (fp - fm) / (2 * eps);
      const Scalar a = analytic[j][i];
      const Scalar err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Scalar finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Scalar eps) {
  const Tensor leaf = x.clone();
  const Tensor leaves[] = {leaf};
  return finite_diff_check([&] { return f(leaf); }, leaves, eps);
}

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, Scalar eps) {
  Rng rng = Rng(seed).split("gradcheck");
  std::vector<GradcheckResult> results;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
    Index coords = 0;
    for (const auto& l : leaves) coords += l.size();
    results.push_back({name, coords, finite_diff_check(f, leaves, eps)});
  };

  {
    const Tensor a = rng.randn({3, 4}), b = rng.randn({4, 5}), t = rng.randn({3, 5});
    check("matmul+mse", [=] { return mse(matmul(a, b), t); }, {a, b});
  }
  {
    const Tensor a = rng.randn({4, 3});
    check("transpose+frobenius_norm_sq", [=] { return frobenius_norm_sq(transpose(a)); }, {a});
  }
  {
    const Tensor a = away_from_zero(rng, {12}), b = rng.randn({12});
    check("add/sub/mul/scale/add_scalar", [=] { return sum(mul(add_scalar(scale(add(a, b), 0.7), 0.3), sub(a, b))); },
          {a, b});
    check("relu", [=] { return sum(mul(relu(a), b)); }, {a, b});
    check("silu", [=] { return sum(mul(silu(a), b)); }, {a, b});
    check("tanh", [=] { return sum(mul(tanh(a), b)); }, {a, b});
    check("sigmoid", [=] { return sum(mul(sigmoid(a), b)); }, {a, b});
    check("mean", [=] { return mean(mul(a, a)); }, {a});
  }
  {
    const Tensor a = rng.randn({2, 3, 2}), b = rng.randn({1, 3, 2}), w = rng.randn({3, 3, 2});
    check("reshape+concat", [=] { return sum(mul(reshape(concat(a, b), {3, 3, 2}), w)); }, {a, b});
  }
  {
    const Tensor x = rng.randn({2, 5, 5}), k = rng.randn({3, 2, 3, 3}), t = rng.randn({3, 5, 5});
    check("conv2d", [=] { return mse(conv2d(x, k, 1), t); }, {x, k});
    const Tensor k2 = rng.randn({3, 18}), t2 = rng.randn({3, 25});
    check("im2col", [=] { return mse(matmul(k2, im2col(x, 3, 3, 1)), t2); }, {x, k2});
  }
  {
    const Tensor x = rng.randn({2, 4, 4}), b = rng.randn({2}), w = rng.randn({2, 4, 4}), w2 = rng.randn({2, 2, 2});
    check("avg_pool2", [=] { return sum(mul(avg_pool2(x), w2)); }, {x});
    check("upsample_nearest2", [=] { return sum(mul(upsample_nearest2(w2), w)); }, {w2});
    check("add_channel_bias", [=] { return sum(mul(tanh(add_channel_bias(x, b)), w)); }, {x, b});
    check("broadcast_spatial", [=] { return sum(mul(broadcast_spatial(b, 4, 4), w)); }, {b});
    const Tensor table = rng.randn({3, 2});
    check("row", [=] { return sum(mul(row(table, 1), b)); }, {table});
  }

  // Composed objectives on 16×16 images, hence 8×8 latents.
  const NetConfig config = small_config();
  Model model{config, init_params(config, seed)};
  for (auto& [name, p] : model.params) {
    // Zero-initialized branches get small values so their gradients flow everywhere.
    if (name.starts_with("ctrl.zero.") || name.starts_with("den.sft.")) {
      p.mutable_data() = rng.randn(p.shape(), 0.1).data();
    }
  }
  const NoiseSchedule sched = make_schedule(10, 1e-4, 0.2);
  const Tensor img = rng.randn({1, 16, 16}, 0.3);
  const Tensor lq = rng.randn({1, 16, 16}, 0.3);
  const Tensor eps_noise = rng.randn({config.latent_channels, 8, 8});
  const std::vector<PromptId> prompt{PromptId::Rings, PromptId::HighQuality};
  const int t = 6;

  auto composed = [&](const Network& net, bool recon) {
    const Tensor z = net.encode(img);
    const Tensor ctrl = net.control_features(net.encode(lq), net.prompt_embedding(prompt));
    Tensor loss = ldm_loss(net.denoiser(), z, t, eps_noise, net.condition(ctrl, prompt), sched);
    if (recon) loss = add(loss, scale(mse(net.decode(z), img), 0.1));
    return loss;
  };

  {
    const Network net(model);
    std::vector<Tensor> leaves;
    for (const auto& [name, p] : model.params) leaves.push_back(p);
    check("denoiser+autoencoder loss", [&] { return composed(net, true); }, leaves);
  }
  {
    NetParams frozen = clone_params(model.params);
    LoraConfig lc;
    lc.rank = 2;
    auto adapters = attach(frozen, lc, seed);
    for (auto& a : adapters) a.B.mutable_data() = rng.randn(a.B.shape(), 0.1).data();
    const Model base{config, frozen};
    const Network net(base, adapters);
    std::vector<Tensor> leaves;
    for (const auto& a : adapters) {
      leaves.push_back(a.A);
      leaves.push_back(a.B);
    }
    check("lora loss+reg", [&] { return add(composed(net, false), reg_loss(adapters, 0.01)); }, leaves);
  }
  return results;
}

}  // namespace ldr
