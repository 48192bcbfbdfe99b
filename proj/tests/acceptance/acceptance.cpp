// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "ldr/checkpoint.hpp"
#include "ldr/dataset.hpp"
#include "ldr/degradation.hpp"
#include "ldr/diffusion.hpp"
#include "ldr/gradcheck.hpp"
#include "ldr/guidance.hpp"
#include "ldr/lora.hpp"
#include "ldr/metrics.hpp"
#include "ldr/network.hpp"
#include "ldr/rng.hpp"
#include "ldr/trainer.hpp"

using namespace ldr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr Scalar kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr Scalar kMergeTol = 1e-9;
constexpr Scalar kCollinearTol = 1e-9;
constexpr Scalar kPsnrGainDb = 2.0;
constexpr double kTrainRestoreSeconds = 600.0;
constexpr Scalar kLoraGain = 0.10;
constexpr Scalar kTimingR2 = 0.9;
constexpr Scalar kSsimSelfTol = 1e-12;

constexpr std::size_t kTrainImages = 512;
constexpr std::size_t kHeldOut = 64;
constexpr Index kSize = 32;
const char* const kBenchSpec = "blur:2.0+sr:4";
constexpr PromptId kHeldFamily = PromptId::Rings;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("CRITERION %d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

Scalar max_abs(const Tensor& a, const Tensor& b) { return (a.data() - b.data()).cwiseAbs().maxCoeff(); }

std::vector<unsigned char> param_bytes(const NetParams& params) {
  CheckpointFile f;
  for (const auto& [name, t] : params) f.tensors.emplace_back(name, t);
  return encode_checkpoint(f);
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto start = Clock::now();
  const auto results = run_gradcheck(0);
  const double secs = seconds_since(start);
  Scalar worst = 0;
  std::string worst_name;
  for (const auto& r : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  report(1, worst < kGradTol && secs < kGradSeconds && !results.empty(),
         std::to_string(results.size()) + " checks, max rel err " + fmt("%.3g", worst) + " (" + worst_name + "), " +
             fmt("%.1f s", secs));
}

void lora_neutrality() {
  NetConfig c;
  const Model base{c, init_params(c, 1)};
  const std::vector<PromptId> prompt{PromptId::Disk, PromptId::HighQuality};
  bool neutral = true, law = true;
  Scalar worst = 0;
  for (int r : {1, 2, 4, 8}) {
    NetParams frozen = clone_params(base.params);
    LoraConfig lc;
    lc.rank = r;
    auto adapters = attach(frozen, lc, static_cast<std::uint64_t>(r));
    const Model frozen_model{c, frozen};
    const Network plain(base);
    Rng rng(static_cast<std::uint64_t>(100 + r));

    Index enumerated = 0, expected = 0;
    for (const auto& a : adapters) {
      enumerated += a.A.size() + a.B.size();
      expected += r * (a.d + a.k);
    }
    law = law && enumerated == expected && trainable_count(adapters) == expected;

    for (auto& a : adapters) a.B.mutable_data() = rng.randn(a.B.shape(), 0.05).data();
    auto merged_adapters = adapters;
    const Model merged_model{c, merge(frozen, merged_adapters)};
    const Network runtime(frozen_model, adapters), merged(merged_model);
    for (int i = 0; i < 20; ++i) {
      const Tensor z_lq = rng.randn({8, 8, 8}), z_t = rng.randn({8, 8, 8});
      const int t = static_cast<int>(rng.below(200));
      if (r == 1 && i < 5) {
        const auto cond = plain.condition(plain.control_features(z_lq, plain.prompt_embedding(prompt)), prompt);
        NetParams f2 = clone_params(base.params);
        auto zero = attach(f2, lc, 7);
        const Model m2{c, f2};
        const Network n2(m2, zero);
        const auto cond2 = n2.condition(n2.control_features(z_lq, n2.prompt_embedding(prompt)), prompt);
        neutral = neutral && plain.denoise(z_t, t, cond).data() == n2.denoise(z_t, t, cond2).data() &&
                  cond.z_lq.data() == cond2.z_lq.data();
      }
      const auto cr = runtime.condition(runtime.control_features(z_lq, runtime.prompt_embedding(prompt)), prompt);
      const auto cm = merged.condition(merged.control_features(z_lq, merged.prompt_embedding(prompt)), prompt);
      worst = std::max({worst, max_abs(runtime.denoise(z_t, t, cr), merged.denoise(z_t, t, cm)), max_abs(cr.z_lq, cm.z_lq)});
    }
  }
  const LoraAdapter example = make_adapter("w", {64, 64}, 4, 0);
  const bool example_ok = example.trainable_count() == 512 && example.frozen_count() == 4096;
  report(2, neutral && law && example_ok && worst < kMergeTol,
         std::string("fresh adapters bit-identical: ") + (neutral ? "yes" : "no") + "; merge vs runtime max diff " +
             fmt("%.3g", worst) + " over r in {1,2,4,8}; count law " + (law ? "holds" : "violated") +
             "; 64x64 r=4 -> " + std::to_string(example.trainable_count()) + " vs " +
             std::to_string(example.frozen_count()));
}

void cfg_identities() {
  NetConfig c;
  Model m{c, init_params(c, 2)};
  Rng rng(3);
  // Randomize the zero-initialized paths so the prompts actually matter.
  for (auto& [name, p] : m.params) {
    if (name.starts_with("ctrl.zero.") || name.starts_with("den.s")) p.mutable_data() = rng.randn(p.shape(), 0.1).data();
  }
  const Network net(m);
  const NoiseSchedule sched = make_schedule(200, 1e-4, 0.02).respaced(20);
  const Tensor z_t = rng.randn({8, 8, 8}), z_lq = rng.randn({8, 8, 8}), noise = rng.randn({8, 8, 8});
  bool zero_ok = true, equal_ok = true;
  Scalar collinear = 0;
  for (bool det : {true, false}) {
    GuidanceConfig g;
    g.deterministic = det;
    g.pos = {PromptId::Rings, PromptId::HighQuality};
    g.neg = {PromptId::LowQuality};
    const Sampler s = det ? Sampler::Deterministic : Sampler::Ancestral;
    for (int t : {0, 7, 19}) {
      const Tensor pos_only = reverse_step(net.denoiser(), z_t, t, net.condition(z_lq, g.pos), sched, s, &noise);
      g.lambda_cfg = 0.0;
      zero_ok = zero_ok && cfg_step(net, z_t, t, z_lq, g, sched, &noise).data() == pos_only.data();
      auto same = g;
      same.neg = same.pos;
      for (Scalar lambda : {0.5, 1.0, 7.5}) {
        same.lambda_cfg = lambda;
        equal_ok = equal_ok && cfg_step(net, z_t, t, z_lq, same, sched, &noise).data() == pos_only.data();
      }
      Tensor at[3];
      for (int l = 0; l < 3; ++l) {
        g.lambda_cfg = l;
        at[l] = cfg_step(net, z_t, t, z_lq, g, sched, &noise);
      }
      collinear = std::max(collinear, max_abs(sub(at[1], at[0]), sub(at[2], at[1])));
    }
  }
  report(4, zero_ok && equal_ok && collinear < kCollinearTol,
         std::string("lambda=0 bit-exact: ") + (zero_ok ? "yes" : "no") + "; pos==neg bit-exact: " +
             (equal_ok ? "yes" : "no") + "; collinearity max dev " + fmt("%.3g", collinear));
}

void diffusion_consistency() {
  Rng rng(4);
  bool moments_ok = true;
  std::string detail;
  const Scalar x0 = 0.6;
  const int n = 20000;
  for (int T : {2, 5}) {
    const NoiseSchedule s = make_schedule(T, 0.05, 0.3);
    const Scalar ab = s.alpha_bar.back();
    const Scalar mean = std::sqrt(ab) * x0, var = 1 - ab;
    // Forward marginal through the closed form and through T chained single steps.
    for (int chained = 0; chained < 2; ++chained) {
      Scalar sum = 0, sq = 0;
      std::vector<Scalar> xs(n);
      for (int i = 0; i < n; ++i) {
        Scalar x;
        if (chained) {
          x = x0;
          for (int t = 0; t < T; ++t) {
            const Scalar a = s.alpha[static_cast<std::size_t>(t)];
            x = std::sqrt(a) * x + std::sqrt(1 - a) * rng.normal();
          }
        } else {
          x = forward_diffuse(Tensor::full({1}, x0), T - 1, rng.randn({1}), s)[0];
        }
        xs[static_cast<std::size_t>(i)] = x;
        sum += x;
      }
      const Scalar m = sum / n;
      for (Scalar x : xs) sq += (x - m) * (x - m);
      const Scalar v = sq / (n - 1);
      const bool ok = std::abs(m - mean) < 3 * std::sqrt(var / n) && std::abs(v - var) < 3 * var * std::sqrt(2.0 / (n - 1));
      moments_ok = moments_ok && ok;
      detail += std::string(chained ? "chained " : "closed ") + fmt("T=%g mean %.4f/%.4f ", T, m, mean) +
                fmt("var %.4f/%.4f; ", v, var);
    }
  }
  const NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
  const Denoiser net = [](const Tensor& z, int t, const ConditioningBundle&) { return scale(tanh(z), 0.02 * (1 + t)); };
  bool repro = true;
  for (Sampler sm : {Sampler::Deterministic, Sampler::Ancestral}) {
    repro = repro && sample(net, {2, 4, 4}, {}, s, 9, sm).data() == sample(net, {2, 4, 4}, {}, s, 9, sm).data();
  }
  NetConfig c;
  const Model m{c, init_params(c, 0)};
  const Image lq = apply(DegradationSpec::parse(kBenchSpec), synth_image(PromptId::Blobs, 32, 3), 1);
  GuidanceConfig g;
  g.steps = 10;
  const NoiseSchedule full = make_schedule(200, 1e-4, 0.02);
  repro = repro && (restore(lq, m, {}, g, full).pixels == restore(lq, m, {}, g, full).pixels).all();
  report(5, moments_ok && repro, detail + "deterministic sampling reproducible: " + (repro ? "yes" : "no"));
}

void metric_oracles() {
  NetConfig c;
  const Model m{c, init_params(c, 0)};
  const Image a(1, 16, 16, 0.5), b(1, 16, 16, 0.5 + 1.0 / 255.0), c20(1, 16, 16, 0.6);
  const Scalar p48 = psnr(a, b);
  bool ok = std::abs(p48 - 20 * std::log10(255.0)) < 1e-9 && std::abs(p48 - 48.131) < 5e-4;
  ok = ok && psnr(a, a) == kPsnrIdentical && std::abs(psnr(a, c20) - 20.0) < 1e-9;

  const Dataset data = synth_dataset(5, 16, 32);
  Scalar self_dev = 0;
  bool ssim_ok = true, proxy_ok = true;
  Scalar mild = 0, strong = 0;
  for (const auto& item : data) {
    const Image& x = item.clean;
    const Image y = apply(DegradationSpec::parse("blur:2.0+noise:10"), x, 2);
    self_dev = std::max(self_dev, std::abs(ssim(x, x) - 1.0));
    const Scalar s = ssim(x, y);
    ssim_ok = ssim_ok && std::abs(s - ssim(y, x)) < 1e-12 && s >= -1 && s <= 1;
    proxy_ok = proxy_ok && perceptual_proxy(x, x, m) == 0.0 &&
               std::abs(perceptual_proxy(x, y, m) - perceptual_proxy(y, x, m)) < 1e-12;
    mild += perceptual_proxy(x, blur(x, 1.0), m);
    strong += perceptual_proxy(x, blur(x, 3.0), m);
  }
  const Image checker = synth_image(PromptId::Checkerboard, 32, 1);
  Image neg = checker;
  neg.pixels = 1.0 - checker.pixels;
  ssim_ok = ssim_ok && ssim(checker, neg) < 0 && self_dev < kSsimSelfTol;
  proxy_ok = proxy_ok && strong > mild;

  Image r30 = a;
  r30.pixels += std::sqrt(0.001);
  const MetricReport rep = evaluate({{"a", "x", a, c20, 0}, {"b", "x", a, r30, 0}}, m);
  const bool eval_ok = std::abs(rep.mean.psnr_db - 25.0) < 1e-9 && rep.rows.size() == 2;

  Scalar prev = kPsnrIdentical;
  bool ladder = true;
  for (Scalar sigma : {2.0, 5.0, 10.0, 20.0, 40.0}) {
    const Scalar p = psnr(checker, add_noise(checker, sigma, 3));
    ladder = ladder && p < prev;
    prev = p;
  }
  report(9, ok && ssim_ok && proxy_ok && eval_ok && ladder,
         fmt("psnr 1/255 case %.4f dB; ssim(x,x) max dev %.2g; ", p48, self_dev) + "ssim checks " +
             (ssim_ok ? "ok" : "bad") + "; proxy checks " + (proxy_ok ? "ok" : "bad") + "; mean of {20,30} dB = " +
             fmt("%.6f", rep.mean.psnr_db) + "; noise ladder " + (ladder ? "monotone" : "not monotone"));
}

// Returns the trained model for the later criteria.
Model training_improvement(const fs::path& ckpt_out, const fs::path& log_out) {
  const TrainConfig config;
  const Dataset train = synth_dataset(1, kTrainImages, kSize);
  const Dataset held = synth_dataset(99, kHeldOut, kSize);
  const auto start = Clock::now();
  TrainState state = init_training(config, 0);
  const MetricsLog log = train_base_steps(state, train, config, static_cast<std::uint64_t>(config.steps));
  const double train_secs = seconds_since(start);

  const DegradationSpec spec = DegradationSpec::parse(kBenchSpec);
  const GuidanceConfig g;
  const auto restore_start = Clock::now();
  Scalar pd = 0, pr = 0, sd = 0, sr = 0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    const Image lq = apply(spec, held[i].clean, 1000 + i);
    const Image out = restore(lq, state.model, {}, g, state.schedule);
    pd += psnr(held[i].clean, lq);
    pr += psnr(held[i].clean, out);
    sd += ssim(held[i].clean, lq);
    sr += ssim(held[i].clean, out);
  }
  const double total = train_secs + seconds_since(restore_start);
  const Scalar n = static_cast<Scalar>(held.size());
  pd /= n, pr /= n, sd /= n, sr /= n;
  report(6, pr >= pd + kPsnrGainDb && sr > sd && total < kTrainRestoreSeconds,
         fmt("PSNR degraded %.3f -> restored %.3f dB (gain %.3f, need %.1f); ", pd, pr, pr - pd, kPsnrGainDb) +
             fmt("SSIM %.4f -> %.4f; ", sd, sr) + fmt("train+restore %.1f s", total));

  save_training(ckpt_out, state);
  log.write_csv(log_out);
  return state.model;
}

void lora_benefit_and_frozen_base() {
  TrainConfig config;
  const Dataset all = synth_dataset(1, kTrainImages, kSize);
  const Dataset base_data = filter_family(all, kHeldFamily, false);
  const Dataset family_train = filter_family(all, kHeldFamily, true);
  const Dataset family_held = filter_family(synth_dataset(77, 8 * 16, kSize), kHeldFamily, true);
  const auto [base, base_log] = train_base(base_data, config, 0);

  NetParams frozen = clone_params(base.params);
  for (auto& [name, p] : frozen) p.set_requires_grad(false);
  const auto before = param_bytes(frozen);
  LoraConfig lora;
  auto adapters = attach(frozen, lora, 0);
  const Model frozen_model{base.config, frozen};
  config.steps = 500;
  config.recipes = {DegradationSpec::parse(kBenchSpec)};
  const auto start = Clock::now();
  train_lora(frozen_model, adapters, family_train, config, lora, 0);
  const double secs = seconds_since(start);
  const auto after = param_bytes(frozen_model.params);
  const bool frozen_ok = before == after;
  report(3, frozen_ok,
         std::to_string(before.size()) + "-byte base snapshot vs after 500 LoRA steps: " +
             (frozen_ok ? "identical" : "DIFFERENT"));

  const NoiseSchedule sched = make_schedule(config.T, config.beta_start, config.beta_end);
  const DegradationSpec spec = DegradationSpec::parse(kBenchSpec);
  const Scalar base_loss = diffusion_loss(frozen_model, {}, family_held, spec, sched, 5, 8);
  const Scalar lora_loss = diffusion_loss(frozen_model, adapters, family_held, spec, sched, 5, 8);
  const Scalar gain = 1.0 - lora_loss / base_loss;
  report(7, gain >= kLoraGain && frozen_ok,
         "held-out family '" + std::string(to_string(kHeldFamily)) + "' diffusion loss " +
             fmt("%.5f -> %.5f (%.1f%% lower, need %.0f%%); ", base_loss, lora_loss, 100 * gain, 100 * kLoraGain) +
             fmt("LoRA training %.1f s", secs));
}

void timing_harness(const Model& model) {
  const NoiseSchedule sched = make_schedule(200, 1e-4, 0.02);
  const Image lq = apply(DegradationSpec::parse(kBenchSpec), synth_image(PromptId::Stripes, kSize, 5), 0);
  const std::vector<int> steps{25, 50, 100, 200};
  std::vector<double> secs;
  for (int s : steps) {
    GuidanceConfig g;
    g.steps = s;
    std::vector<double> reps;
    for (int r = 0; r < 3; ++r) reps.push_back(timed_restore(lq, model, {}, g, sched).second);
    std::sort(reps.begin(), reps.end());
    secs.push_back(reps[1]);
  }
  const double n = static_cast<double>(steps.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) mx += steps[i] / n, my += secs[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    sxy += (steps[i] - mx) * (secs[i] - my);
    sxx += (steps[i] - mx) * (steps[i] - mx);
    syy += (secs[i] - my) * (secs[i] - my);
  }
  const double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0.0;
  report(8, r2 >= kTimingR2,
         fmt("median seconds at 25/50/100/200 steps: %.3f %.3f %.3f %.3f; ", secs[0], secs[1], secs[2], secs[3]) +
             fmt("r^2 = %.4f", r2));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + LDR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void reproducibility(const fs::path& work) {
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  bool all_ok = true;
  auto pipeline = [&](const fs::path& root) {
    fs::create_directories(root);
    // Console output names the run directory, so it is kept outside the compared tree.
    const auto data = root / "data", deg = root / "deg", res = root / "res";
    const auto log = root.parent_path() / (root.filename().string() + ".log");
    const std::vector<std::string> cmds{
        "synth-data --out " + q(data) + " --n 32 --size 16 --seed 3",
        "degrade --manifest " + q(data / "manifest.json") + " --out-dir " + q(deg) + " --spec " + kBenchSpec + " --seed 4",
        "degrade --in " + q(data / "00000.pgm") + " --out " + q(root / "single.pgm") + " --spec blur:3.0+noise:30",
        "train-base --data " + q(data / "manifest.json") + " --out " + q(root / "base.ldrs") + " --log " +
            q(root / "train.csv") + " --steps 6 --batch 4 --seed 5",
        "train-lora --base " + q(root / "base.ldrs") + " --data " + q(data / "manifest.json") + " --out " +
            q(root / "lora.ldrs") + " --log " + q(root / "lora.csv") + " --family disk --steps 4 --batch 2",
        "restore --ckpt " + q(root / "base.ldrs") + " --adapters " + q(root / "lora.ldrs") + " --batch " + q(deg) +
            " --out-dir " + q(res) + " --steps 5 --ancestral --seed 6",
        "restore --ckpt " + q(root / "base.ldrs") + " --in " + q(root / "single.pgm") + " --out " +
            q(root / "single.restored.pgm") + " --steps 5",
        "eval --dir " + q(res) + " --ckpt " + q(root / "base.ldrs") + " --out " + q(root / "eval.csv"),
        "gradcheck --seed 2",
    };
    for (const auto& c : cmds) {
      if (run_cli(c, log) != 0) {
        all_ok = false;
        std::fprintf(stderr, "command failed: ldr %s\n%s", c.c_str(), slurp(log).c_str());
      }
    }
  };
  fs::remove_all(work);
  pipeline(work / "a");
  pipeline(work / "b");

  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), work / "a");
    ++compared;
    if (!fs::exists(work / "b" / rel) || slurp(entry.path()) != slurp(work / "b" / rel)) {
      ++differing;
      std::fprintf(stderr, "differs: %s\n", rel.string().c_str());
    }
  }
  fs::remove_all(work);
  report(10, all_ok && differing == 0 && compared > 0,
         "two runs of every subcommand: " + std::to_string(compared) + " artifacts compared, " +
             std::to_string(differing) + " differ" + (all_ok ? "" : "; some commands failed"));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::current_path();
  fs::create_directories(out_dir);
  const auto start = Clock::now();

  gradient_correctness();
  lora_neutrality();
  cfg_identities();
  diffusion_consistency();
  metric_oracles();
  const Model trained = training_improvement(out_dir / "acceptance_base.ldrs", out_dir / "acceptance_train.csv");
  lora_benefit_and_frozen_base();
  timing_harness(trained);
  reproducibility(fs::temp_directory_path() / ("ldr_accept_" + std::to_string(::getpid())));

  std::printf("SUMMARY: %d of 10 criteria failed (%.0f s)\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
