// ldr: command-line driver for data synthesis, degradation, training, restoration and evaluation.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ldr/checkpoint.hpp"
#include "ldr/dataset.hpp"
#include "ldr/degradation.hpp"
#include "ldr/gradcheck.hpp"
#include "ldr/guidance.hpp"
#include "ldr/metrics.hpp"
#include "ldr/rng.hpp"
#include "ldr/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ldr;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config files: JSON objects keyed by long flag names. Values are turned into
// extra arguments for every flag not already given on the command line.

std::vector<std::string> config_arguments(const CLI::App& sub, const fs::path& path,
                                          const std::set<std::string>& given) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");

  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "command" || key == "config") continue;
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("config file: unknown option '" + key + "' for " + sub.get_name());
    if (given.contains(key)) continue;
    auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (opt->get_expected_min() == 0) {
      if (as_text(value) == "true") args.push_back("--" + key);
      continue;
    }
    if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back("--" + key);
        args.push_back(as_text(v));
      }
    } else {
      args.push_back("--" + key);
      args.push_back(as_text(value));
    }
  }
  return args;
}

json resolved_config(const CLI::App& sub) {
  // Numbers print as numbers; anything else stays text.
  auto typed = [](const std::string& text) {
    const json v = json::parse(text, nullptr, false);
    return v.is_number() ? v : json(text);
  };
  json out;
  out["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_expected_max() > 1) {
        out[name] = json::array();
        for (const auto& v : r) out[name].push_back(typed(v));
      } else {
        out[name] = typed(r.front());
      }
    } else if (opt->get_expected_max() > 1) {
      out[name] = json::array();
    } else {
      out[name] = typed(opt->get_default_str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string item_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

std::vector<PromptId> prompt_list(const std::string& text) {
  try {
    return parse_prompt_list(text);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

DegradationSpec spec_arg(const std::string& text) {
  try {
    auto spec = DegradationSpec::parse(text);
    spec.validate();
    return spec;
  } catch (const std::exception& e) {
    throw UsageError(std::string("--spec: ") + e.what());
  }
}

// Options shared by commands that build a schedule or a training config.
struct ScheduleArgs {
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  void add(CLI::App* app) {
    app->add_option("--T", T, "Diffusion steps");
    app->add_option("--beta-start", beta_start, "First beta");
    app->add_option("--beta-end", beta_end, "Last beta");
  }
};

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 512;
  Index size = 32;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  const Dataset data = synth_dataset(a.seed, a.n, a.size);
  write_dataset(data, a.out);
  std::cout << "wrote " << data.size() << " images to " << a.out << "\n";
}

struct DegradeArgs {
  std::string in, out, spec, manifest, out_dir;
  std::uint64_t seed = 0;
};

void run_degrade(const DegradeArgs& a) {
  const DegradationSpec spec = spec_arg(a.spec);
  if (!a.in.empty()) {
    if (a.out.empty()) throw UsageError("degrade: --in requires --out");
    save_pnm(apply(spec, load_pnm(a.in), a.seed), a.out);
    std::cout << "wrote " << a.out << "\n";
    return;
  }
  if (a.manifest.empty() || a.out_dir.empty()) {
    throw UsageError("degrade: give --in/--out or --manifest/--out-dir");
  }
  const Dataset data = read_manifest(a.manifest);
  ensure_dir(a.out_dir);
  const Rng root = Rng(a.seed).split("degrade");
  json pairs;
  pairs["spec"] = spec.to_string();
  pairs["seed"] = a.seed;
  pairs["items"] = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string id = item_id(i);
    Rng rng = root.split("item", i);
    save_pnm(data[i].clean, fs::path(a.out_dir) / (id + ".clean.pgm"));
    save_pnm(apply(spec, data[i].clean, rng.next_u64()), fs::path(a.out_dir) / (id + ".lq.pgm"));
    pairs["items"].push_back({{"id", id}, {"prompt", to_string(data[i].prompt)}});
  }
  write_text(fs::path(a.out_dir) / "pairs.json", pairs.dump(2) + "\n");
  std::cout << "wrote " << data.size() << " pairs to " << a.out_dir << "\n";
}

struct TrainArgs {
  std::string data, out, log, resume, exclude;
  int steps = 2000;
  std::size_t batch = 16;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double recon_weight = 0.1;
  double lq_rate = 0.1;
  double latent_scale = 1.0;
  bool wall_clock = false;
  ScheduleArgs sched;
  std::uint64_t seed = 0;
};

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig c;
  c.steps = a.steps;
  c.batch = a.batch;
  c.optim.lr = a.lr;
  c.optim.weight_decay = a.weight_decay;
  c.recon_weight = a.recon_weight;
  c.lq_prompt_rate = a.lq_rate;
  c.T = a.sched.T;
  c.beta_start = a.sched.beta_start;
  c.beta_end = a.sched.beta_end;
  c.net.latent_scale = a.latent_scale;
  c.wall_clock = a.wall_clock;
  return c;
}

Dataset training_data(const std::string& manifest, const std::string& exclude, bool keep) {
  Dataset data = read_manifest(manifest);
  if (!exclude.empty()) data = filter_family(data, parse_prompt(exclude), keep);
  if (data.empty()) throw ConfigError("no training images left after filtering");
  return data;
}

void run_train_base(const TrainArgs& a) {
  const TrainConfig config = train_config(a);
  const Dataset data = training_data(a.data, a.exclude, false);
  TrainState state = a.resume.empty() ? init_training(config, a.seed) : load_training(a.resume);
  if (!a.resume.empty() && state.seed != a.seed) {
    throw ConfigError("--seed " + std::to_string(a.seed) + " differs from the checkpoint seed " +
                      std::to_string(state.seed));
  }
  const auto target = static_cast<std::uint64_t>(config.steps);
  if (state.step > target) throw ConfigError("checkpoint is already past --steps");
  const MetricsLog log = train_base_steps(state, data, config, target - state.step);
  save_training(a.out, state);
  if (!a.log.empty()) log.write_csv(a.log);
  if (!log.rows.empty()) std::cout << "step " << state.step << " loss " << log.rows.back().loss << "\n";
  std::cout << "wrote " << a.out << "\n";
}

struct LoraArgs {
  std::string base, data, out, log, family, spec = "blur:2.0+sr:4";
  std::vector<std::string> targets{"den.*.w", "ctrl.*.w"};
  int steps = 500;
  std::size_t batch = 16;
  int rank = 4;
  double lr = 1e-3;
  double reg_lambda = 1e-4;
  double lq_rate = 0.1;
  bool wall_clock = false;
  std::uint64_t seed = 0;
};

void run_train_lora(const LoraArgs& a) {
  TrainState base = load_training(a.base);
  const Dataset data = training_data(a.data, a.family, true);
  TrainConfig config;
  config.steps = a.steps;
  config.batch = a.batch;
  config.T = base.schedule.T;
  config.beta_start = base.schedule.beta_start;
  config.beta_end = base.schedule.beta_end;
  config.lq_prompt_rate = a.lq_rate;
  config.recipes = {spec_arg(a.spec)};
  config.wall_clock = a.wall_clock;
  LoraConfig lc;
  lc.rank = a.rank;
  lc.targets = a.targets;
  lc.lr = a.lr;
  lc.reg_lambda = a.reg_lambda;
  auto adapters = attach(base.model.params, lc, a.seed);
  const MetricsLog log = train_lora(base.model, adapters, data, config, lc, a.seed);
  save_adapters(a.out, adapters);
  if (!a.log.empty()) log.write_csv(a.log);
  std::cout << adapters.size() << " adapters, " << trainable_count(adapters) << " trainable values; wrote " << a.out
            << "\n";
}

struct RestoreArgs {
  std::string ckpt, in, out, batch, out_dir;
  std::vector<std::string> adapters;
  std::string pos = "high-quality", neg = "low-quality";
  double cfg = 0.1;
  int steps = 50;
  bool ancestral = false;
  bool fuse_eps = false;
  bool wall_clock = false;
  std::uint64_t seed = 0;
};

void run_restore(const RestoreArgs& a) {
  TrainState state = load_training(a.ckpt);
  std::vector<LoraAdapter> adapters;
  for (const auto& path : a.adapters) {
    auto loaded = load_adapters(path, state.model.params);
    adapters.insert(adapters.end(), loaded.begin(), loaded.end());
  }
  GuidanceConfig g;
  g.lambda_cfg = a.cfg;
  g.pos = prompt_list(a.pos);
  g.neg = prompt_list(a.neg);
  g.steps = a.steps;
  g.deterministic = !a.ancestral;
  g.seed = a.seed;
  g.fuse_noise_predictions = a.fuse_eps;

  if (!a.in.empty()) {
    if (a.out.empty()) throw UsageError("restore: --in requires --out");
    const auto [img, seconds] = timed_restore(load_pnm(a.in), state.model, adapters, g, state.schedule);
    save_pnm(img, a.out);
    std::cout << "wrote " << a.out;
    if (a.wall_clock) std::cout << " in " << seconds * 1e3 << " ms";
    std::cout << "\n";
    return;
  }
  if (a.batch.empty() || a.out_dir.empty()) throw UsageError("restore: give --in/--out or --batch/--out-dir");
  const json pairs = read_json(fs::path(a.batch) / "pairs.json");
  ensure_dir(a.out_dir);
  std::string times = "id,wall_ms\n";
  const bool same_dir = fs::weakly_canonical(a.batch) == fs::weakly_canonical(a.out_dir);
  for (const auto& item : pairs.at("items")) {
    const std::string id = item.at("id").get<std::string>();
    const auto [img, seconds] =
        timed_restore(load_pnm(fs::path(a.batch) / (id + ".lq.pgm")), state.model, adapters, g, state.schedule);
    save_pnm(img, fs::path(a.out_dir) / (id + ".restored.pgm"));
    if (!same_dir) save_pnm(load_pnm(fs::path(a.batch) / (id + ".clean.pgm")), fs::path(a.out_dir) / (id + ".clean.pgm"));
    times += id + "," + format_metric(a.wall_clock ? seconds * 1e3 : 0.0) + "\n";
  }
  if (!same_dir) write_text(fs::path(a.out_dir) / "pairs.json", pairs.dump(2) + "\n");
  write_text(fs::path(a.out_dir) / "restore_times.csv", times);
  std::cout << "restored " << pairs.at("items").size() << " images into " << a.out_dir << "\n";
}

struct EvalArgs {
  std::string dir, ckpt, out, target = "restored", spec;
  std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& a) {
  if (a.target != "restored" && a.target != "lq") throw UsageError("eval: --target must be 'restored' or 'lq'");
  const Model model = load_model(a.ckpt);
  std::string spec = a.spec;
  if (spec.empty() && fs::exists(fs::path(a.dir) / "pairs.json")) {
    spec = read_json(fs::path(a.dir) / "pairs.json").value("spec", "");
  }
  std::map<std::string, Scalar> times;
  if (a.target == "restored" && fs::exists(fs::path(a.dir) / "restore_times.csv")) {
    std::ifstream in(fs::path(a.dir) / "restore_times.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma != std::string::npos) times[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
    }
  }
  const std::string suffix = "." + a.target + ".pgm";
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(a.dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw ConfigError("eval: no *" + suffix + " files in " + a.dir);
  std::vector<EvalPair> pairs;
  for (const auto& id : ids) {
    EvalPair p;
    p.id = id;
    p.spec = spec.empty() ? "unknown" : spec;
    p.clean = load_pnm(fs::path(a.dir) / (id + ".clean.pgm"));
    p.restored = load_pnm(fs::path(a.dir) / (id + suffix));
    p.wall_ms = times.contains(id) ? times[id] : 0.0;
    pairs.push_back(std::move(p));
  }
  const MetricReport report = evaluate(pairs, model);
  if (!a.out.empty()) report.write_csv(a.out);
  std::cout << "MEAN psnr_db " << format_metric(report.mean.psnr_db) << " ssim " << format_metric(report.mean.ssim)
            << " pproxy " << format_metric(report.mean.pproxy) << " over " << report.rows.size() << " images\n";
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

int run_gradcheck_cmd(const GradcheckArgs& a) {
  Scalar worst = 0;
  for (const auto& r : run_gradcheck(a.seed, a.eps)) {
    std::printf("%-32s %7ld coords  max rel err %.3e\n", r.name.c_str(), static_cast<long>(r.coordinates),
                r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", worst, a.tolerance);
  return worst < a.tolerance ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent diffusion restoration with prompt guidance and LoRA adapters", "ldr"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  auto add_common = [&](CLI::App* sub, std::uint64_t& seed) {
    sub->add_option("--config", config_path, "JSON file of option values; command-line flags take precedence");
    sub->add_option("--seed", seed, "Random seed");
  };

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth-data", "Generate the procedural image set");
  add_common(s_synth, synth.seed);
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--n", synth.n, "Number of images");
  s_synth->add_option("--size", synth.size, "Image side (16, 32 or 64)");

  DegradeArgs degrade;
  auto* s_degrade = app.add_subcommand("degrade", "Apply a degradation spec to one image or a dataset");
  add_common(s_degrade, degrade.seed);
  s_degrade->add_option("--in", degrade.in, "Input image (.pgm/.ppm)");
  s_degrade->add_option("--out", degrade.out, "Output image");
  s_degrade->add_option("--manifest", degrade.manifest, "Dataset manifest.json for batch mode");
  s_degrade->add_option("--out-dir", degrade.out_dir, "Batch output directory");
  s_degrade->add_option("--spec", degrade.spec, "Degradation, e.g. blur:2.0+sr:4")->required();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train-base", "Train encoder, control branch, denoiser and decoder");
  add_common(s_train, train.seed);
  s_train->add_option("--data", train.data, "Dataset manifest.json")->required();
  s_train->add_option("--out", train.out, "Checkpoint path")->required();
  s_train->add_option("--log", train.log, "Metrics CSV path");
  s_train->add_option("--resume", train.resume, "Continue from this checkpoint");
  s_train->add_option("--exclude-family", train.exclude, "Leave one image family out");
  s_train->add_option("--steps", train.steps, "Total optimizer steps");
  s_train->add_option("--batch", train.batch, "Batch size");
  s_train->add_option("--lr", train.lr, "AdamW learning rate");
  s_train->add_option("--weight-decay", train.weight_decay, "AdamW decoupled weight decay");
  s_train->add_option("--recon-weight", train.recon_weight, "Autoencoder reconstruction weight");
  s_train->add_option("--lq-rate", train.lq_rate, "Fraction of batches under the low-quality prompt");
  s_train->add_option("--latent-scale", train.latent_scale, "Latent scale factor for diffusion");
  s_train->add_flag("--wall-clock", train.wall_clock, "Record wall-clock in the metrics log");
  train.sched.add(s_train);

  LoraArgs lora;
  auto* s_lora = app.add_subcommand("train-lora", "Fine-tune LoRA adapters on a frozen base");
  add_common(s_lora, lora.seed);
  s_lora->add_option("--base", lora.base, "Base checkpoint")->required();
  s_lora->add_option("--data", lora.data, "Dataset manifest.json")->required();
  s_lora->add_option("--out", lora.out, "Adapter file")->required();
  s_lora->add_option("--log", lora.log, "Metrics CSV path");
  s_lora->add_option("--family", lora.family, "Train only on this family");
  s_lora->add_option("--spec", lora.spec, "Degradation used for fine-tuning");
  s_lora->add_option("--target", lora.targets, "Parameter name patterns to adapt");
  s_lora->add_option("--steps", lora.steps, "Optimizer steps");
  s_lora->add_option("--batch", lora.batch, "Batch size");
  s_lora->add_option("--rank", lora.rank, "Adapter rank r");
  s_lora->add_option("--lr", lora.lr, "AdamW learning rate");
  s_lora->add_option("--reg-lambda", lora.reg_lambda, "Frobenius regularization weight");
  s_lora->add_option("--lq-rate", lora.lq_rate, "Fraction of batches under the low-quality prompt");
  s_lora->add_flag("--wall-clock", lora.wall_clock, "Record wall-clock in the metrics log");

  RestoreArgs restore_args;
  auto* s_restore = app.add_subcommand("restore", "Guided restoration of one image or a degraded batch");
  add_common(s_restore, restore_args.seed);
  s_restore->add_option("--ckpt", restore_args.ckpt, "Base checkpoint")->required();
  s_restore->add_option("--adapters", restore_args.adapters, "Adapter files; deltas of all files are summed");
  s_restore->add_option("--in", restore_args.in, "Degraded input image");
  s_restore->add_option("--out", restore_args.out, "Restored output image");
  s_restore->add_option("--batch", restore_args.batch, "Directory written by degrade --manifest");
  s_restore->add_option("--out-dir", restore_args.out_dir, "Batch output directory");
  s_restore->add_option("--pos", restore_args.pos, "Positive prompt tags");
  s_restore->add_option("--neg", restore_args.neg, "Negative prompt tags");
  s_restore->add_option("--cfg", restore_args.cfg, "Guidance weight lambda_cfg");
  s_restore->add_option("--steps", restore_args.steps, "Sampling steps");
  s_restore->add_flag("--ancestral", restore_args.ancestral, "Stochastic sampler instead of the deterministic one");
  s_restore->add_flag("--fuse-eps", restore_args.fuse_eps, "Fuse noise predictions instead of step outputs");
  s_restore->add_flag("--wall-clock", restore_args.wall_clock, "Report measured restoration times");

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("eval", "PSNR / SSIM / pproxy report over <id>.clean.pgm pairs");
  add_common(s_eval, eval.seed);
  s_eval->add_option("--dir", eval.dir, "Directory of image pairs")->required();
  s_eval->add_option("--ckpt", eval.ckpt, "Checkpoint whose encoder drives pproxy")->required();
  s_eval->add_option("--out", eval.out, "Report CSV path");
  s_eval->add_option("--target", eval.target, "Compare 'restored' or 'lq' images against clean");
  s_eval->add_option("--spec", eval.spec, "Degradation label for the report");

  GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and composed loss");
  add_common(s_gc, gc.seed);
  s_gc->add_option("--eps", gc.eps, "Central-difference step");
  s_gc->add_option("--tolerance", gc.tolerance, "Maximum accepted relative error");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config values become extra arguments for every flag absent from the command line.
    if (!args.empty()) {
      std::string config_file;
      std::set<std::string> given;
      for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (!a.starts_with("--")) continue;
        const std::string key = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
        given.insert(key);
        if (key != "config") continue;
        if (a.find('=') != std::string::npos) {
          config_file = a.substr(a.find('=') + 1);
        } else if (i + 1 < args.size()) {
          config_file = args[i + 1];
        }
      }
      const CLI::App* sub = nullptr;
      for (const CLI::App* s : app.get_subcommands({})) {
        if (s->get_name() == args.front()) sub = s;
      }
      if (!config_file.empty() && sub != nullptr) {
        auto extra = config_arguments(*sub, config_file, given);
        args.insert(args.end(), extra.begin(), extra.end());
      }
    }
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::cout << resolved_config(*sub).dump() << "\n";
  try {
    const std::string name = sub->get_name();
    if (name == "synth-data") run_synth(synth);
    if (name == "degrade") run_degrade(degrade);
    if (name == "train-base") run_train_base(train);
    if (name == "train-lora") run_train_lora(lora);
    if (name == "restore") run_restore(restore_args);
    if (name == "eval") run_eval(eval);
    if (name == "gradcheck") return run_gradcheck_cmd(gc);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
