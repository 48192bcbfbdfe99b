#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ldr/dataset.hpp"
#include "ldr/errors.hpp"
#include "ldr/image.hpp"
#include "ldr/rng.hpp"

using namespace ldr;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> bytes_of(const std::string& header, std::vector<unsigned char> payload) {
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ldr_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image random_image(std::uint64_t seed, Index c, Index h, Index w) {
  Rng rng(seed);
  Image img(c, h, w);
  for (Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("P5 payload bytes map to byte/255") {
  const Image img = decode_pnm(bytes_of("P5\n2 2\n255\n", {0, 255, 128, 64}));
  REQUIRE(img.channels == 1);
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.pixels[0] == 0.0);
  CHECK(img.pixels[1] == 1.0);
  CHECK(img.pixels[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(img.pixels[3] == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("header comments and P6 are accepted") {
  const Image img = decode_pnm(bytes_of("P6\n# made by hand\n1 1\n255\n", {10, 20, 30}));
  CHECK(img.channels == 3);
  CHECK(img.at(2, 0, 0) == doctest::Approx(30.0 / 255.0));
}

TEST_CASE("malformed PNM is a format error with offset") {
  try {
    decode_pnm(bytes_of("P6\n1 1\n65535\n", {0, 0, 0, 0, 0, 0}));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset > 0);
  }
  CHECK_THROWS_AS(decode_pnm(bytes_of("P3\n1 1\n255\n", {0})), FormatError);
  CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n2 2\n255\n", {1, 2, 3})), FormatError);
  CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n2\n", {})), FormatError);
}

TEST_CASE("quantization rounds half up and clamps") {
  CHECK(quantize_pixel(0.5) == 128);
  CHECK(quantize_pixel(1.7) == 255);
  CHECK(quantize_pixel(-0.3) == 0);
  CHECK(quantize_pixel(1.0) == 255);
  const auto bytes = encode_pnm(Image(1, 3, 2, 0.0));
  const std::string header = "P5\n2 3\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("save then load is identity at byte level") {
  const fs::path dir = scratch_dir("pnm");
  for (Index c : {1, 3}) {
    const Image img = random_image(static_cast<std::uint64_t>(c), c, 5, 7);
    const fs::path p = dir / ("a" + std::to_string(c) + ".pnm");
    save_pnm(img, p);
    const Image back = load_pnm(p);
    CHECK(encode_pnm(back) == encode_pnm(img));
    CHECK((back.pixels - img.pixels).abs().maxCoeff() <= 0.5 / 255.0 + 1e-15);
    save_pnm(back, dir / "b.pnm");
    std::ifstream a(p, std::ios::binary), b(dir / "b.pnm", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  }
  CHECK_THROWS_AS(load_pnm(dir / "missing.pgm"), IoError);
  CHECK_THROWS_AS(save_pnm(Image(1, 2, 2), dir / "no" / "such" / "dir.pgm"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic dataset is a pure function of its arguments") {
  const Dataset a = synth_dataset(5, 24, 16), b = synth_dataset(5, 24, 16), c = synth_dataset(6, 24, 16);
  REQUIRE(a.size() == 24);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].clean.pixels == b[i].clean.pixels).all());
    CHECK(a[i].prompt == b[i].prompt);
    any_diff = any_diff || !(a[i].clean.pixels == c[i].clean.pixels).all();
  }
  CHECK(any_diff);
  CHECK_THROWS_AS(synth_dataset(0, 4, 24), ConfigError);
  CHECK_THROWS_AS(synth_dataset(0, 0, 32), ConfigError);
}

TEST_CASE("round-robin families give equal counts") {
  const Dataset data = synth_dataset(1, 800, 32);
  std::map<PromptId, int> counts;
  for (const auto& item : data) {
    counts[item.prompt]++;
    CHECK(item.clean.height == 32);
    CHECK(item.clean.width == 32);
    CHECK(item.clean.pixels.minCoeff() >= 0.0);
    CHECK(item.clean.pixels.maxCoeff() <= 1.0);
  }
  CHECK(counts.size() == kFamilyCount);
  for (const auto& [fam, n] : counts) CHECK(n == 100);
}

TEST_CASE("checkerboard histogram is bimodal at 0.1 and 0.9") {
  const Dataset data = synth_dataset(2, 64, 32);
  for (const auto& item : data) {
    if (item.prompt != PromptId::Checkerboard) continue;
    int lo = 0, hi = 0;
    for (Index i = 0; i < item.clean.pixels.size(); ++i) {
      const Scalar v = item.clean.pixels[i];
      if (v == 0.1) ++lo;
      if (v == 0.9) ++hi;
    }
    CHECK(lo + hi == 32 * 32);
    CHECK(lo > 300);
    CHECK(hi > 300);
  }
}

TEST_CASE("batch sizes, determinism and epoch coverage") {
  BatchIterator it(10, 4, 3);
  std::vector<std::size_t> sizes;
  std::multiset<std::size_t> seen;
  for (std::size_t b = 0; b < it.batches_per_epoch(); ++b) {
    const auto batch = it.next();
    sizes.push_back(batch.size());
    seen.insert(batch.begin(), batch.end());
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  std::multiset<std::size_t> expected;
  for (std::size_t i = 0; i < 10; ++i) expected.insert(i);
  CHECK(seen == expected);

  BatchIterator a(37, 5, 9), b(37, 5, 9);
  for (int s = 0; s < 20; ++s) CHECK(a.next() == b.next());
  CHECK(BatchIterator(37, 5, 9).batch_at(13) == BatchIterator(37, 5, 9).batch_at(13));
  CHECK(BatchIterator(37, 5, 9).batch_at(0) != BatchIterator(37, 5, 10).batch_at(0));
}

TEST_CASE("every epoch is a permutation") {
  BatchIterator it(23, 6, 1);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (std::size_t b = 0; b < it.batches_per_epoch(); ++b) {
      const auto batch = it.next();
      total += batch.size();
      seen.insert(batch.begin(), batch.end());
    }
    CHECK(total == 23);
    CHECK(seen.size() == 23);
  }
}

TEST_CASE("batch iterator rejects empty data and oversized batches") {
  CHECK_THROWS_AS(BatchIterator(0, 1, 0), ConfigError);
  CHECK_THROWS_AS(BatchIterator(3, 4, 0), ConfigError);
}

TEST_CASE("manifest round trip") {
  const fs::path dir = scratch_dir("manifest");
  const Dataset data = synth_dataset(4, 10, 16);
  write_dataset(data, dir);
  const Dataset back = read_manifest(dir / "manifest.json");
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].prompt == data[i].prompt);
    CHECK(back[i].tags == data[i].tags);
    CHECK(encode_pnm(back[i].clean) == encode_pnm(data[i].clean));
  }
  fs::remove_all(dir);
}

TEST_CASE("prompt vocabulary is closed") {
  CHECK(parse_prompt_list("checkerboard,high-quality") ==
        std::vector<PromptId>{PromptId::Checkerboard, PromptId::HighQuality});
  CHECK_THROWS_AS(parse_prompt("sunset"), ConfigError);
  for (std::size_t i = 0; i < kVocabSize; ++i) {
    const auto id = static_cast<PromptId>(i);
    CHECK(parse_prompt(to_string(id)) == id);
  }
}
