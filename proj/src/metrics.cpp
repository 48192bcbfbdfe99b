#include "ldr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace ldr {

namespace {

constexpr Index kWindow = 11;
constexpr Scalar kWindowSigma = 1.5;
constexpr Scalar kC1 = 0.01 * 0.01;
constexpr Scalar kC2 = 0.03 * 0.03;

void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (!a.same_dims(b)) {
    throw DimensionError(std::string(what) + ": image dims differ (" + std::to_string(a.channels) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

std::vector<Scalar> window_1d() {
  std::vector<Scalar> w(kWindow);
  Scalar total = 0;
  for (Index i = 0; i < kWindow; ++i) {
    const Scalar d = static_cast<Scalar>(i - kWindow / 2);
    w[i] = std::exp(-d * d / (2 * kWindowSigma * kWindowSigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of one plane.
RowMat filter_valid(const RowMat& plane, const std::vector<Scalar>& w) {
  const Index h = plane.rows(), wd = plane.cols();
  const Index oh = h - kWindow + 1, ow = wd - kWindow + 1;
  RowMat rows(h, ow);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < ow; ++x) {
      Scalar acc = 0;
      for (Index k = 0; k < kWindow; ++k) acc += w[k] * plane(y, x + k);
      rows(y, x) = acc;
    }
  }
  RowMat out(oh, ow);
  for (Index y = 0; y < oh; ++y) {
    for (Index x = 0; x < ow; ++x) {
      Scalar acc = 0;
      for (Index k = 0; k < kWindow; ++k) acc += w[k] * rows(y + k, x);
      out(y, x) = acc;
    }
  }
  return out;
}

RowMat plane_of(const Image& img, Index c) {
  RowMat m(img.height, img.width);
  for (Index y = 0; y < img.height; ++y)
    for (Index x = 0; x < img.width; ++x) m(y, x) = img.at(c, y, x);
  return m;
}

Image mirrored(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (Index c = 0; c < img.channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Scalar feature_distance(const Network& net, const Image& a, const Image& b) {
  const auto fa = net.encoder_features(a.to_tensor());
  const auto fb = net.encoder_features(b.to_tensor());
  Scalar total = 0;
  for (std::size_t layer = 0; layer < fa.size(); ++layer) {
    const Index c = fa[layer].dim(0), n = fa[layer].dim(1) * fa[layer].dim(2);
    const ConstMatMap ma(fa[layer].data().data(), c, n);
    const ConstMatMap mb(fb[layer].data().data(), c, n);
    Scalar layer_sum = 0;
    for (Index p = 0; p < n; ++p) {
      const auto ca = ma.col(p), cb = mb.col(p);
      const Scalar na = ca.norm() + 1e-10, nb = cb.norm() + 1e-10;
      layer_sum += (ca / na - cb / nb).squaredNorm();
    }
    total += layer_sum / static_cast<Scalar>(n);
  }
  return total / static_cast<Scalar>(fa.size());
}

}  // namespace

Scalar psnr(const Image& a, const Image& b) {
  require_same_dims(a, b, "psnr");
  const Scalar mse = (a.pixels - b.pixels).square().mean();
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

Scalar ssim(const Image& a, const Image& b) {
  require_same_dims(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow) {
    throw ParameterError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " smaller than the 11x11 window");
  }
  const auto w = window_1d();
  Scalar total = 0;
  for (Index c = 0; c < a.channels; ++c) {
    const RowMat x = plane_of(a, c), y = plane_of(b, c);
    const RowMat mx = filter_valid(x, w), my = filter_valid(y, w);
    const RowMat sxx = filter_valid(x.cwiseProduct(x), w) - mx.cwiseProduct(mx);
    const RowMat syy = filter_valid(y.cwiseProduct(y), w) - my.cwiseProduct(my);
    const RowMat sxy = filter_valid(x.cwiseProduct(y), w) - mx.cwiseProduct(my);
    Scalar sum = 0;
    for (Index i = 0; i < mx.size(); ++i) {
      const Scalar ux = mx.data()[i], uy = my.data()[i];
      const Scalar num = (2 * ux * uy + kC1) * (2 * sxy.data()[i] + kC2);
      const Scalar den = (ux * ux + uy * uy + kC1) * (sxx.data()[i] + syy.data()[i] + kC2);
      sum += num / den;
    }
    total += sum / static_cast<Scalar>(mx.size());
  }
  return total / static_cast<Scalar>(a.channels);
}

Scalar perceptual_proxy(const Image& a, const Image& b, const Model& model) {
  require_same_dims(a, b, "perceptual_proxy");
  if (a.pixels.cwiseEqual(b.pixels).all()) return 0.0;
  NoGradGuard no_grad;
  const Network net(model);
  return 0.5 * (feature_distance(net, a, b) + feature_distance(net, mirrored(a), mirrored(b)));
}

std::string format_metric(Scalar value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::string MetricReport::to_csv() const {
  std::string out = "id,spec,psnr_db,ssim,pproxy,wall_ms\n";
  auto line = [&out](const MetricRow& r) {
    out += r.id + "," + r.spec + "," + format_metric(r.psnr_db) + "," + format_metric(r.ssim) + "," +
           format_metric(r.pproxy) + "," + format_metric(r.wall_ms) + "\n";
  };
  for (const auto& r : rows) line(r);
  line(mean);
  return out;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
}

MetricReport evaluate(const std::vector<EvalPair>& pairs, const Model& model) {
  if (pairs.empty()) throw ConfigError("evaluate: no image pairs");
  MetricReport report;
  for (const auto& p : pairs) {
    MetricRow row;
    row.id = p.id;
    row.spec = p.spec;
    row.psnr_db = psnr(p.clean, p.restored);
    row.ssim = ssim(p.clean, p.restored);
    row.pproxy = perceptual_proxy(p.clean, p.restored, model);
    row.wall_ms = p.wall_ms;
    report.rows.push_back(std::move(row));
  }
  const Scalar n = static_cast<Scalar>(report.rows.size());
  report.mean.id = "MEAN";
  report.mean.spec = report.rows.front().spec;
  for (const auto& r : report.rows) {
    if (r.spec != report.mean.spec) report.mean.spec = "mixed";
    report.mean.psnr_db += r.psnr_db;
    report.mean.ssim += r.ssim;
    report.mean.pproxy += r.pproxy;
    report.mean.wall_ms += r.wall_ms;
  }
  report.mean.psnr_db /= n;
  report.mean.ssim /= n;
  report.mean.pproxy /= n;
  report.mean.wall_ms /= n;
  return report;
}

}  // namespace ldr
