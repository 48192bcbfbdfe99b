#include "ldr/degradation.hpp"

#include <charconv>
#include <cmath>

#include "ldr/rng.hpp"

namespace ldr {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string format_real(Scalar v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

template <class T>
T parse_number(std::string_view text, std::string_view step) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("degradation spec: bad number in step '" + std::string(step) + "'");
  }
  return value;
}

Index reflect(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

DegradationSpec DegradationSpec::parse(std::string_view text) {
  DegradationSpec spec;
  if (text.empty()) return spec;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string_view step = text.substr(start, end - start);
    const std::size_t colon = step.find(':');
    if (colon == std::string_view::npos) throw ConfigError("degradation spec: step '" + std::string(step) + "' lacks ':'");
    const std::string_view kind = step.substr(0, colon), arg = step.substr(colon + 1);
    if (kind == "blur") {
      spec.steps.emplace_back(Blur{parse_number<Scalar>(arg, step)});
    } else if (kind == "sr") {
      spec.steps.emplace_back(Downsample{parse_number<Index>(arg, step)});
    } else if (kind == "noise") {
      spec.steps.emplace_back(Noise{parse_number<Scalar>(arg, step)});
    } else {
      throw ConfigError("degradation spec: unknown step kind '" + std::string(kind) + "'");
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  spec.validate();
  return spec;
}

std::string DegradationSpec::to_string() const {
  std::string out;
  for (const auto& step : steps) {
    if (!out.empty()) out += '+';
    out += std::visit(Overloaded{[](const Blur& b) { return "blur:" + format_real(b.sigma); },
                                 [](const Downsample& d) { return "sr:" + std::to_string(d.factor); },
                                 [](const Noise& n) { return "noise:" + format_real(n.sigma255); }},
                      step);
  }
  return out;
}

void DegradationSpec::validate() const {
  for (const auto& step : steps) {
    std::visit(Overloaded{[](const Blur& b) {
                            if (!(b.sigma > 0)) throw ConfigError("blur sigma must be > 0");
                          },
                          [](const Downsample& d) {
                            if (d.factor < 2) throw ConfigError("downsample factor must be >= 2");
                          },
                          [](const Noise& n) {
                            if (!(n.sigma255 >= 0)) throw ConfigError("noise sigma must be >= 0");
                          }},
               step);
  }
}

const std::vector<DegradationSpec>& benchmark_recipes() {
  static const std::vector<DegradationSpec> recipes = {
      DegradationSpec::parse("blur:3.0+noise:30.0"),
      DegradationSpec::parse("sr:4"),
      DegradationSpec::parse("blur:2.0+sr:4"),
      DegradationSpec::parse("blur:2.0+sr:4+noise:1.0"),
  };
  return recipes;
}

RowMat gaussian_kernel(Scalar sigma) {
  if (!(sigma > 0)) throw ParameterError("gaussian_kernel: sigma must be > 0");
  const auto radius = static_cast<Index>(std::ceil(3.0 * sigma));
  const Index k = 2 * radius + 1;
  RowMat kernel(k, k);
  for (Index y = 0; y < k; ++y) {
    for (Index x = 0; x < k; ++x) {
      const auto dy = static_cast<Scalar>(y - radius), dx = static_cast<Scalar>(x - radius);
      kernel(y, x) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  return kernel / kernel.sum();
}

Image blur(const Image& img, Scalar sigma) {
  const RowMat kernel = gaussian_kernel(sigma);
  const Index k = kernel.rows(), radius = k / 2;
  if (k > 2 * img.width || k > 2 * img.height) {
    throw ParameterError("blur: kernel of width " + std::to_string(k) + " exceeds twice the image size");
  }
  // The normalized 2-D Gaussian is the outer product of its normalized marginal.
  const Vec w = kernel.rowwise().sum();
  Image rows(img.channels, img.height, img.width);
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) {
        Scalar acc = 0.0;
        for (Index j = 0; j < k; ++j) acc += w[j] * img.at(c, y, reflect(x + j - radius, img.width));
        rows.at(c, y, x) = acc;
      }
  Image out(img.channels, img.height, img.width);
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) {
        Scalar acc = 0.0;
        for (Index i = 0; i < k; ++i) acc += w[i] * rows.at(c, reflect(y + i - radius, img.height), x);
        out.at(c, y, x) = acc;
      }
  return out.clamped();
}

Image box_downsample(const Image& img, Index factor) {
  if (factor < 1) throw ParameterError("downsample: factor must be >= 1");
  if (img.height % factor != 0 || img.width % factor != 0) {
    throw ParameterError("downsample: " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " not divisible by " + std::to_string(factor));
  }
  Image out(img.channels, img.height / factor, img.width / factor);
  const auto area = static_cast<Scalar>(factor * factor);
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < out.height; ++y)
      for (Index x = 0; x < out.width; ++x) {
        Scalar acc = 0.0;
        for (Index i = 0; i < factor; ++i)
          for (Index j = 0; j < factor; ++j) acc += img.at(c, y * factor + i, x * factor + j);
        out.at(c, y, x) = acc / area;
      }
  return out;
}

Image downsample_up(const Image& img, Index factor, Upsample mode) {
  const Image small = box_downsample(img, factor);
  if (factor == 1) return img;
  Image out(img.channels, img.height, img.width);
  const auto f = static_cast<Scalar>(factor);
  auto source = [f](Index i, Index n) {
    // Half-pixel centres; edges clamp.
    const Scalar s = std::clamp((static_cast<Scalar>(i) + 0.5) / f - 0.5, 0.0, static_cast<Scalar>(n - 1));
    const auto i0 = static_cast<Index>(std::floor(s));
    const Index i1 = std::min(i0 + 1, n - 1);
    return std::tuple{i0, i1, s - static_cast<Scalar>(i0)};
  };
  for (Index c = 0; c < img.channels; ++c) {
    for (Index y = 0; y < img.height; ++y) {
      for (Index x = 0; x < img.width; ++x) {
        if (mode == Upsample::Nearest) {
          out.at(c, y, x) = small.at(c, y / factor, x / factor);
          continue;
        }
        const auto [y0, y1, wy] = source(y, small.height);
        const auto [x0, x1, wx] = source(x, small.width);
        // a + w·(b − a) keeps equal neighbours exact.
        const Scalar top = small.at(c, y0, x0) + wx * (small.at(c, y0, x1) - small.at(c, y0, x0));
        const Scalar bottom = small.at(c, y1, x0) + wx * (small.at(c, y1, x1) - small.at(c, y1, x0));
        out.at(c, y, x) = top + wy * (bottom - top);
      }
    }
  }
  return out.clamped();
}

Image add_noise(const Image& img, Scalar sigma255, std::uint64_t seed) {
  if (!(sigma255 >= 0)) throw ParameterError("add_noise: sigma must be >= 0");
  if (sigma255 == 0) return img;
  Rng rng = Rng(seed).split("noise");
  Image out = img;
  const Scalar sigma = sigma255 / 255.0;
  for (Index i = 0; i < out.pixels.size(); ++i) out.pixels[i] += sigma * rng.normal();
  return out.clamped();
}

Image apply(const DegradationSpec& spec, const Image& img, std::uint64_t seed) {
  spec.validate();
  Image out = img;
  const Rng root(seed);
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    try {
      out = std::visit(Overloaded{[&](const Blur& b) { return blur(out, b.sigma); },
                                  [&](const Downsample& d) { return downsample_up(out, d.factor); },
                                  [&](const Noise& n) { return add_noise(out, n.sigma255, root.split("step", i).next_u64()); }},
                       spec.steps[i]);
    } catch (const ParameterError& e) {
      throw ParameterError("degradation step " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ldr
