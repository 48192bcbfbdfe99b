#include "ldr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

using Clock = std::chrono::steady_clock;

struct SampleOptions {
  bool lq_target = false;
  Scalar family_drop_rate = 0;
  bool recon = false;
  Scalar recon_weight = 0;
};

constexpr Scalar kFamilyDropRate = 0.5;

// Loss of one example; every random draw comes from `rng` in a fixed order.
Tensor sample_loss(const Network& net, const DatasetItem& item, const DegradationSpec& spec, Rng& rng,
                   const NoiseSchedule& sched, const SampleOptions& opt) {
  const Image lq_img = apply(spec, item.clean, rng.next_u64());
  const bool drop_family = rng.uniform() < opt.family_drop_rate;

  const Tensor clean = item.clean.to_tensor();
  const Tensor z_clean = net.encode(clean);
  const Tensor z_lq_enc = net.encode(lq_img.to_tensor());

  std::vector<PromptId> content;
  if (!drop_family) content.push_back(item.prompt);
  content.push_back(PromptId::HighQuality);
  const Tensor ctrl = net.control_features(z_lq_enc, net.prompt_embedding(content));

  const Scalar k = net.config().latent_scale;
  const Tensor target = scale(opt.lq_target ? detach(z_lq_enc) : detach(z_clean), k);
  std::vector<PromptId> prompt = opt.lq_target ? std::vector<PromptId>{PromptId::LowQuality} : content;
  const ConditioningBundle cond = net.condition(ctrl, std::move(prompt));

  const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
  const Tensor eps = rng.randn(target.shape());
  Tensor loss = ldm_loss(net.denoiser(), target, t, eps, cond, sched);
  if (opt.recon) loss = add(loss, scale(mse(net.decode(z_clean), clean), opt.recon_weight));
  return loss;
}

Tensor batch_loss(const Network& net, const Dataset& data, const std::vector<std::size_t>& batch,
                  const DegradationSpec& spec, const Rng& step_rng, const NoiseSchedule& sched,
                  SampleOptions opt, Scalar lq_batch_rate) {
  // A fraction of whole batches is trained under the low-quality prompt.
  Rng batch_rng = step_rng.split("batch");
  opt.lq_target = batch_rng.uniform() < lq_batch_rate;
  Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng = step_rng.split("item", i);
    const Tensor l = sample_loss(net, data[batch[i]], spec, rng, sched, opt);
    total = i == 0 ? l : add(total, l);
  }
  return scale(total, 1.0 / static_cast<Scalar>(batch.size()));
}

std::string diverged_message(std::uint64_t step, Scalar lr, Scalar loss, const std::deque<Scalar>& history) {
  std::string msg = "non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step) +
                    " (lr " + std::to_string(lr) + "); recent losses:";
  for (Scalar h : history) msg += " " + std::to_string(h);
  return msg;
}

void check_finite(Scalar loss, std::uint64_t step, Scalar lr, std::deque<Scalar>& history) {
  if (!std::isfinite(loss)) throw TrainingDiverged(diverged_message(step, lr, loss, history));
  history.push_back(loss);
  if (history.size() > 10) history.pop_front();
}

Scalar elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<Scalar, std::milli>(Clock::now() - start).count();
}

std::string fmt(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void adamw_step(const ParamList& params, AdamWState& state) {
  if (state.names.empty() && state.step == 0) {
    for (const auto& [name, p] : params) {
      state.names.push_back(name);
      state.m.push_back(Vec::Zero(p.size()));
      state.v.push_back(Vec::Zero(p.size()));
    }
  }
  if (state.names.size() != params.size()) {
    throw ContractViolation("adamw_step: optimizer tracks " + std::to_string(state.names.size()) +
                            " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (state.names[i] != name || state.m[i].size() != p.size()) {
      throw ContractViolation("adamw_step: parameter '" + name + "' does not match optimizer slot '" +
                              state.names[i] + "'");
    }
    if (!p.has_grad()) throw ContractViolation("adamw_step: parameter '" + name + "' has no gradient");
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar bc1 = 1.0 - std::pow(c.beta1, t);
  const Scalar bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    const Vec& g = p.grad();
    Vec& m = state.m[i];
    Vec& v = state.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    Vec& theta = p.mutable_data();
    theta *= 1.0 - c.lr * c.weight_decay;
    theta.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

ParamList param_list(const NetParams& params) {
  ParamList out;
  for (const auto& [name, t] : params) out.emplace_back(name, t);
  return out;
}

ParamList adapter_param_list(std::span<LoraAdapter> adapters) {
  ParamList out;
  for (const auto& a : adapters) {
    out.emplace_back("lora/" + a.target + "/A", a.A);
    out.emplace_back("lora/" + a.target + "/B", a.B);
  }
  return out;
}

std::string MetricsLog::to_csv() const {
  std::string out = "step,loss,reg_loss,wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.reg_loss) + "," + fmt(r.wall_ms) + "\n";
  }
  return out;
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

TrainState init_training(const TrainConfig& config, std::uint64_t seed) {
  if (config.recipes.empty()) throw ConfigError("training needs at least one degradation recipe");
  for (const auto& r : config.recipes) r.validate();
  TrainState state;
  state.model.config = config.net;
  state.model.params = init_params(config.net, seed);
  state.schedule = make_schedule(config.T, config.beta_start, config.beta_end);
  state.optim.config = config.optim;
  state.seed = seed;
  return state;
}

MetricsLog train_base_steps(TrainState& state, const Dataset& data, const TrainConfig& config, std::uint64_t steps) {
  if (data.empty()) throw ConfigError("train_base: empty dataset");
  if (config.recipes.empty()) throw ConfigError("train_base: no degradation recipes");
  const BatchIterator batches(data.size(), config.batch, state.seed);
  const Network net(state.model);
  const ParamList params = param_list(state.model.params);
  const SampleOptions opt{false, kFamilyDropRate, true, config.recon_weight};

  MetricsLog log;
  std::deque<Scalar> history;
  const auto start = Clock::now();
  for (std::uint64_t i = 0; i < steps; ++i) {
    const std::uint64_t s = state.step;
    const Rng step_rng = Rng(state.seed).split("train-step", s);
    const DegradationSpec& spec = config.recipes[s % config.recipes.size()];

    for (const auto& [name, p] : params) Tensor(p).zero_grad();
    const Tensor loss = batch_loss(net, data, batches.batch_at(s), spec, step_rng, state.schedule, opt,
                                   config.lq_prompt_rate);
    check_finite(loss.item(), s, state.optim.config.lr, history);
    backward(loss);
    adamw_step(params, state.optim);

    state.step += 1;
    log.rows.push_back({state.step, loss.item(), 0.0, config.wall_clock ? elapsed_ms(start) : 0.0});
  }
  return log;
}

std::pair<Model, MetricsLog> train_base(const Dataset& data, const TrainConfig& config, std::uint64_t seed) {
  TrainState state = init_training(config, seed);
  MetricsLog log = train_base_steps(state, data, config, static_cast<std::uint64_t>(config.steps));
  return {std::move(state.model), std::move(log)};
}

MetricsLog train_lora(const Model& base, std::vector<LoraAdapter>& adapters, const Dataset& data,
                      const TrainConfig& config, const LoraConfig& lora, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("train_lora: empty dataset");
  if (adapters.empty()) throw ConfigError("train_lora: no adapters attached");
  if (config.recipes.empty()) throw ConfigError("train_lora: no degradation recipe");
  for (const auto& [name, p] : base.params) {
    if (p.requires_grad()) throw ContractViolation("train_lora: base parameter '" + name + "' is not frozen");
  }
  const NoiseSchedule sched = make_schedule(config.T, config.beta_start, config.beta_end);
  const BatchIterator batches(data.size(), config.batch, seed);
  const Network net(base, adapters);
  const ParamList params = adapter_param_list(adapters);
  for (const auto& [name, p] : params) Tensor(p).set_requires_grad(true);
  AdamWState optim;
  optim.config = config.optim;
  optim.config.lr = lora.lr;
  const SampleOptions opt{false, kFamilyDropRate, false, 0.0};

  MetricsLog log;
  std::deque<Scalar> history;
  const auto start = Clock::now();
  for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(config.steps); ++s) {
    const Rng step_rng = Rng(seed).split("lora-step", s);
    for (const auto& [name, p] : params) Tensor(p).zero_grad();
    const Tensor data_loss = batch_loss(net, data, batches.batch_at(s), config.recipes.front(), step_rng, sched, opt,
                                          config.lq_prompt_rate);
    const Tensor reg = reg_loss(adapters, lora.reg_lambda);
    const Tensor loss = add(data_loss, reg);
    check_finite(loss.item(), s, optim.config.lr, history);
    backward(loss);
    adamw_step(params, optim);
    log.rows.push_back({s + 1, data_loss.item(), reg.item(), config.wall_clock ? elapsed_ms(start) : 0.0});
  }
  return log;
}

void save_training(const std::filesystem::path& path, const TrainState& state) {
  CheckpointFile file;
  file.header["kind"] = "base";
  file.header["schedule"] = schedule_to_json(state.schedule);
  file.header["net"] = to_json(state.model.config);
  file.header["rng"] = {{"seed", state.seed}, {"next_step", state.step}};
  file.header["step"] = state.step;
  const AdamWConfig& c = state.optim.config;
  file.header["optimizer"] = {{"lr", c.lr},
                              {"beta1", c.beta1},
                              {"beta2", c.beta2},
                              {"eps", c.eps},
                              {"weight_decay", c.weight_decay},
                              {"step", state.optim.step},
                              {"slots", state.optim.names}};
  for (const auto& [name, t] : state.model.params) file.tensors.emplace_back(name, t);
  for (std::size_t i = 0; i < state.optim.names.size(); ++i) {
    const Shape shape{state.optim.m[i].size()};
    file.tensors.emplace_back("adam/m/" + state.optim.names[i], Tensor::from(shape, state.optim.m[i]));
    file.tensors.emplace_back("adam/v/" + state.optim.names[i], Tensor::from(shape, state.optim.v[i]));
  }
  write_checkpoint(path, file);
}

TrainState load_training(const std::filesystem::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  if (file.header.value("kind", "") != "base") throw FormatError("not a base checkpoint: " + path.string(), 0);
  TrainState state;
  state.model.config = net_config_from_json(file.header.at("net"));
  state.schedule = schedule_from_json(file.header.at("schedule"));
  state.seed = file.header.at("rng").at("seed").get<std::uint64_t>();
  state.step = file.header.at("step").get<std::uint64_t>();

  const auto& o = file.header.at("optimizer");
  state.optim.config = {o.at("lr").get<Scalar>(), o.at("beta1").get<Scalar>(), o.at("beta2").get<Scalar>(),
                        o.at("eps").get<Scalar>(), o.at("weight_decay").get<Scalar>()};
  state.optim.step = o.at("step").get<std::uint64_t>();
  state.optim.names = o.at("slots").get<std::vector<std::string>>();

  std::map<std::string, Tensor> moments;
  for (const auto& [name, t] : file.tensors) {
    if (name.starts_with("adam/")) {
      moments.emplace(name, t);
    } else {
      Tensor p = t;
      p.set_requires_grad(true);
      state.model.params.emplace(name, p);
    }
  }
  const NetParams expected = init_params(state.model.config, 0);
  for (const auto& [name, t] : expected) {
    auto it = state.model.params.find(name);
    if (it == state.model.params.end()) throw FormatError("checkpoint lacks parameter '" + name + "'", 0);
    if (it->second.shape() != t.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_str(it->second.shape()), 0);
    }
  }
  for (const auto& name : state.optim.names) {
    state.optim.m.push_back(moments.at("adam/m/" + name).data());
    state.optim.v.push_back(moments.at("adam/v/" + name).data());
  }
  return state;
}

Model load_model(const std::filesystem::path& path) { return load_training(path).model; }

NoiseSchedule load_schedule(const std::filesystem::path& path) {
  return schedule_from_json(read_checkpoint(path).header.at("schedule"));
}

Scalar diffusion_loss(const Model& model, std::span<const LoraAdapter> adapters, const Dataset& data,
                      const DegradationSpec& spec, const NoiseSchedule& sched, std::uint64_t seed, int draws) {
  if (data.empty() || draws < 1) throw ConfigError("diffusion_loss: need items and draws >= 1");
  NoGradGuard no_grad;
  const Network net(model, adapters);
  const Rng root = Rng(seed).split("eval-loss");
  const SampleOptions opt{false, 0.0, false, 0.0};
  Scalar total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int d = 0; d < draws; ++d) {
      Rng rng = root.split("item", i * static_cast<std::size_t>(draws) + static_cast<std::size_t>(d));
      total += sample_loss(net, data[i], spec, rng, sched, opt).item();
    }
  }
  return total / static_cast<Scalar>(data.size() * static_cast<std::size_t>(draws));
}

std::pair<Image, double> timed_restore(const Image& lq, const Model& model, std::span<const LoraAdapter> adapters,
                                       const GuidanceConfig& cfg, const NoiseSchedule& sched) {
  const auto start = Clock::now();
  Image out = restore(lq, model, adapters, cfg, sched);
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return {std::move(out), seconds};
}

}  // namespace ldr
