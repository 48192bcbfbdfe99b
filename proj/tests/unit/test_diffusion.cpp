#include <doctest.h>

#include <cmath>

#include "ldr/diffusion.hpp"
#include "ldr/errors.hpp"
#include "ldr/rng.hpp"

using namespace ldr;

namespace {

struct Moments {
  Scalar mean = 0, var = 0;
};

Moments moments(const std::vector<Scalar>& xs) {
  Moments m;
  for (Scalar x : xs) m.mean += x;
  m.mean /= static_cast<Scalar>(xs.size());
  for (Scalar x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<Scalar>(xs.size() - 1);
  return m;
}

// 3σ Monte-Carlo bounds for the sample mean and variance of n Gaussian draws.
void check_gaussian_moments(const std::vector<Scalar>& xs, Scalar mean, Scalar var) {
  const auto n = static_cast<Scalar>(xs.size());
  const Moments m = moments(xs);
  CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(var / n));
  CHECK(std::abs(m.var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
}

Denoiser constant_net(const Tensor& out) {
  return [out](const Tensor&, int, const ConditioningBundle&) { return out; };
}

}  // namespace

TEST_CASE("schedule examples") {
  const NoiseSchedule one = make_schedule(1, 0.3, 0.3);
  REQUIRE(one.alpha_bar.size() == 1);
  CHECK(one.alpha_bar[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(one.sigma[0] == 0.0);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.02, 0.01), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.01, 1.0), ConfigError);
  CHECK_THROWS_AS(make_schedule(0, 0.01, 0.02), ConfigError);

  // Independent oracle: sum of logs in long double.
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  long double log_ab = 0;
  for (int t = 0; t < 1000; ++t) log_ab += std::log1p(-(1e-4L + (0.02L - 1e-4L) * t / 999.0L));
  CHECK(s.alpha_bar[999] == doctest::Approx(static_cast<double>(std::exp(log_ab))).epsilon(1e-10));
  CHECK(s.alpha_bar[999] == doctest::Approx(4.0e-5).epsilon(0.03));
}

TEST_CASE("schedule invariants") {
  for (auto [T, b0, b1] : {std::tuple{2, 1e-4, 0.02}, {5, 0.01, 0.3}, {200, 1e-4, 0.02}, {37, 0.05, 0.05}}) {
    const NoiseSchedule s = make_schedule(T, b0, b1);
    CHECK(s.sigma[0] == 0.0);
    for (int t = 0; t < T; ++t) {
      const auto i = static_cast<std::size_t>(t);
      CHECK(s.alpha[i] == 1.0 - s.beta[i]);
      CHECK(s.alpha_bar[i] > 0.0);
      CHECK(s.alpha_bar[i] <= 1.0);
      if (t == 0) continue;
      CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
      const Scalar expected = s.beta[i] * (1 - s.alpha_bar[i - 1]) / (1 - s.alpha_bar[i]);
      CHECK(s.sigma[i] * s.sigma[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("respacing keeps cumulative products at the kept steps") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  const NoiseSchedule r = s.respaced(25);
  REQUIRE(r.T == 25);
  CHECK(r.timestep.front() == 0);
  CHECK(r.timestep.back() == 199);
  for (int i = 0; i < r.T; ++i) {
    const auto k = static_cast<std::size_t>(i);
    CHECK(r.alpha_bar[k] == s.alpha_bar[static_cast<std::size_t>(r.timestep[k])]);
    if (i > 0) CHECK(r.timestep[k] > r.timestep[k - 1]);
  }
  CHECK(s.respaced(200).alpha_bar == s.alpha_bar);
  CHECK_THROWS_AS(s.respaced(0), ConfigError);
  CHECK_THROWS_AS(s.respaced(201), ConfigError);
}

TEST_CASE("forward_diffuse examples") {
  Rng rng(1);
  const Tensor x0 = rng.randn({2, 3, 3}), eps = rng.randn({2, 3, 3});
  const NoiseSchedule tiny = make_schedule(3, 1e-14, 1e-14);
  CHECK((forward_diffuse(x0, 0, eps, tiny).data() - x0.data()).cwiseAbs().maxCoeff() < 1e-6);

  const NoiseSchedule quarter = make_schedule(1, 0.75, 0.75);
  CHECK(forward_diffuse(x0, 0, Tensor::zeros(x0.shape()), quarter).data() == (0.5 * x0.data()).eval());
  CHECK_THROWS_AS(forward_diffuse(x0, 0, Tensor::zeros({2, 3, 2}), quarter), DimensionError);
  CHECK_THROWS_AS(forward_diffuse(x0, 1, eps, quarter), ContractViolation);
}

TEST_CASE("forward_diffuse Monte-Carlo moments") {
  const NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
  const Tensor x0 = Tensor::full({1}, 0.8);
  Rng rng(2);
  for (int t : {0, 10, 49}) {
    std::vector<Scalar> xs;
    for (int i = 0; i < 10000; ++i) xs.push_back(forward_diffuse(x0, t, rng.randn({1}), s)[0]);
    const Scalar ab = s.alpha_bar[static_cast<std::size_t>(t)];
    check_gaussian_moments(xs, std::sqrt(ab) * 0.8, 1 - ab);
  }
}

TEST_CASE("single steps compose to the closed-form marginal") {
  Rng rng(3);
  const Scalar x0 = 0.6;
  for (int T : {2, 5}) {
    const NoiseSchedule s = make_schedule(T, 0.05, 0.3);
    std::vector<Scalar> xs;
    for (int i = 0; i < 10000; ++i) {
      Scalar x = x0;
      for (int t = 0; t < T; ++t) {
        const Scalar a = s.alpha[static_cast<std::size_t>(t)];
        x = std::sqrt(a) * x + std::sqrt(1 - a) * rng.normal();
      }
      xs.push_back(x);
    }
    const Scalar ab = s.alpha_bar.back();
    check_gaussian_moments(xs, std::sqrt(ab) * x0, 1 - ab);
  }
}

TEST_CASE("ldm_loss examples") {
  Rng rng(4);
  const NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
  const Tensor x0 = rng.randn({2, 4, 4}), eps = rng.randn({2, 4, 4});
  const ConditioningBundle cond;
  CHECK(ldm_loss(constant_net(eps), x0, 7, eps, cond, s).item() == 0.0);
  const Scalar expected = eps.data().squaredNorm() / static_cast<Scalar>(eps.size());
  CHECK(ldm_loss(constant_net(Tensor::zeros(eps.shape())), x0, 7, eps, cond, s).item() ==
        doctest::Approx(expected).epsilon(1e-14));
  for (int i = 0; i < 5; ++i) CHECK(ldm_loss(constant_net(rng.randn(eps.shape())), x0, 3, eps, cond, s).item() > 0.0);
}

TEST_CASE("reverse_step with an oracle network recovers the closed-form posterior mean") {
  Rng rng(5);
  const NoiseSchedule s = make_schedule(30, 1e-3, 0.1);
  const Tensor x0 = rng.randn({1, 3, 3}), eps = rng.randn({1, 3, 3});
  for (int t : {1, 12, 29}) {
    const auto i = static_cast<std::size_t>(t);
    const Tensor z_t = forward_diffuse(x0, t, eps, s);
    const Tensor out = reverse_step(constant_net(eps), z_t, t, {}, s, Sampler::Deterministic, nullptr);
    const Scalar ab = s.alpha_bar[i], ab_prev = s.alpha_bar[i - 1];
    const Vec mu = (std::sqrt(ab_prev) * s.beta[i] / (1 - ab)) * x0.data() +
                   (std::sqrt(s.alpha[i]) * (1 - ab_prev) / (1 - ab)) * z_t.data();
    CHECK((out.data() - mu).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("reverse_step sampler contracts") {
  Rng rng(6);
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
  const Tensor z = rng.randn({1, 2, 2}), eps = rng.randn({1, 2, 2}), noise = rng.randn({1, 2, 2});
  const Denoiser net = constant_net(eps);
  const Tensor mu0 = posterior_mean(z, eps, 0, s);
  CHECK(reverse_step(net, z, 0, {}, s, Sampler::Ancestral, nullptr).data() == mu0.data());
  CHECK(reverse_step(net, z, 0, {}, s, Sampler::Ancestral, &noise).data() == mu0.data());
  CHECK_THROWS_AS(reverse_step(net, z, 4, {}, s, Sampler::Ancestral, nullptr), ContractViolation);
  const Vec anc = reverse_step(net, z, 4, {}, s, Sampler::Ancestral, &noise).data();
  CHECK((anc - posterior_mean(z, eps, 4, s).data() - s.sigma[4] * noise.data()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(reverse_step(net, z, 4, {}, s, Sampler::Deterministic, nullptr).data() ==
        reverse_step(net, z, 4, {}, s, Sampler::Deterministic, nullptr).data());
}

TEST_CASE("sample with T=1 is a single reverse step") {
  const NoiseSchedule s = make_schedule(1, 0.02, 0.02);
  Rng rng(7);
  const Tensor eps = rng.randn({2, 3, 3});
  const Denoiser net = constant_net(eps);
  const Tensor start = Rng(13).split("sample").randn({2, 3, 3});
  const Tensor expected = reverse_step(net, start, 0, {}, s, Sampler::Ancestral, nullptr);
  CHECK(sample(net, {2, 3, 3}, {}, s, 13, Sampler::Ancestral).data() == expected.data());
}

TEST_CASE("sampling is a pure function of the seed") {
  const NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
  const Denoiser net = [](const Tensor& z, int t, const ConditioningBundle&) {
    return scale(tanh(z), 0.1 * (1 + t));
  };
  for (Sampler sm : {Sampler::Deterministic, Sampler::Ancestral}) {
    CHECK(sample(net, {1, 4, 4}, {}, s, 3, sm).data() == sample(net, {1, 4, 4}, {}, s, 3, sm).data());
    CHECK(sample(net, {1, 4, 4}, {}, s, 3, sm).data() != sample(net, {1, 4, 4}, {}, s, 4, sm).data());
  }
}
