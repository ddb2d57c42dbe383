#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "opforge/imageops.hpp"
#include "opforge/wavelet.hpp"
#include "oracles.hpp"

using namespace opforge;

TEST_CASE("gamma correction fixed points, example value, monotonicity") {
  Rng rng(1);
  const GrayImage img = oracles::random_image(rng, 16, 16);
  CHECK(gamma_correct(img, 1.0) == img);

  GrayImage probe(3, 1);
  probe.pixels = {0, 128, 255};
  for (double g : {0.5, 0.9, 1.4, 2.0}) {
    const GrayImage out = gamma_correct(probe, g);
    CHECK(out.pixels[0] == 0);
    CHECK(out.pixels[2] == 255);
  }
  CHECK(gamma_correct(probe, 0.5).pixels[1] == 181);  // 255*sqrt(128/255) = 180.67

  for (double g : {0.5, 0.7, 1.2, 1.8}) {
    GrayImage ramp(256, 1);
    for (int i = 0; i < 256; ++i) ramp.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
    const GrayImage out = gamma_correct(ramp, g);
    for (int i = 1; i < 256; ++i) CHECK(out.pixels[static_cast<size_t>(i)] >= out.pixels[static_cast<size_t>(i) - 1]);
  }
}

TEST_CASE("histogram equalization degenerate, two-level, and formula oracle") {
  const GrayImage flat(8, 8, 77);
  CHECK(hist_equalize(flat) == flat);

  GrayImage two(8, 8);
  for (size_t i = 0; i < two.pixels.size(); ++i) two.pixels[i] = i % 2 ? 255 : 0;
  CHECK(hist_equalize(two) == two);

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage img = oracles::random_image(rng, 16, 16);
    const GrayImage out = hist_equalize(img);

    // direct evaluation of m(v) = round(255*(cdf(v)-cdf_min)/(1-cdf_min))
    std::array<long long, 256> count{};
    for (uint8_t v : img.pixels) ++count[v];
    std::array<long long, 256> cum{};
    std::partial_sum(count.begin(), count.end(), cum.begin());
    const long long total = 256;
    long long cdf_min = 0;
    for (int v = 0; v < 256; ++v)
      if (cum[static_cast<size_t>(v)]) {
        cdf_min = cum[static_cast<size_t>(v)];
        break;
      }
    REQUIRE(cdf_min < total);
    int prev = -1;
    bool hits_255 = false;
    for (size_t i = 0; i < img.pixels.size(); ++i) {
      const double cdf = static_cast<double>(cum[img.pixels[i]]) / total;
      const double lo = static_cast<double>(cdf_min) / total;
      CHECK(out.pixels[i] == oracles::round_u8(255.0 * (cdf - lo) / (1.0 - lo)));
    }
    for (int v = 0; v < 256; ++v) {
      if (!count[static_cast<size_t>(v)]) continue;
      GrayImage one(1, 1);
      one.pixels[0] = static_cast<uint8_t>(v);
      // monotone via the cum table directly
      const int mapped = oracles::round_u8(255.0 * (cum[static_cast<size_t>(v)] - cdf_min) /
                                           static_cast<double>(total - cdf_min));
      CHECK(mapped >= prev);
      prev = mapped;
      if (mapped == 255) hits_255 = true;
    }
    CHECK(hits_255);
  }
}

TEST_CASE("unsharp mask identities and edge boost") {
  const GrayImage flat(10, 10, 90);
  CHECK(unsharp_mask(flat, 1.0, 1.0) == flat);

  Rng rng(3);
  const GrayImage img = oracles::random_image(rng, 12, 12);
  CHECK(unsharp_mask(img, 0.8, 0.0) == img);

  GrayImage edge(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) edge.at(y, x) = x < 8 ? 64 : 192;
  const GrayImage sharp = unsharp_mask(edge, 1.0, 1.0);
  int contrast = 0;
  for (int y = 0; y < 16; ++y) contrast = std::max(contrast, sharp.at(y, 8) - sharp.at(y, 7));
  CHECK(contrast > 128);
}

TEST_CASE("linear smoothing identities, impulse, window validation") {
  const GrayImage flat(9, 9, 123);
  CHECK(linear_smooth(flat, SmoothKind::Mean, 5) == flat);
  CHECK(linear_smooth(flat, SmoothKind::Gaussian, 5, 1.1) == flat);

  GrayImage impulse(9, 9, 0);
  impulse.at(4, 4) = 255;
  const GrayImage blurred = linear_smooth(impulse, SmoothKind::Mean, 3);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x)
      CHECK(blurred.at(y, x) == (std::abs(y - 4) <= 1 && std::abs(x - 4) <= 1 ? 28 : 0));

  CHECK_THROWS_AS(linear_smooth(flat, SmoothKind::Mean, 4), std::invalid_argument);
  CHECK_THROWS_AS(linear_smooth(flat, SmoothKind::Gaussian, 3, 0.2), std::invalid_argument);
}

TEST_CASE("linear smoothing equals the brute-force oracle on 50 random images") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = oracles::random_image(rng, 16, 16);
    const int window = 3 + 2 * rng.uniform_int(3);
    if (trial % 2 == 0) {
      CHECK(linear_smooth(img, SmoothKind::Mean, window) == oracles::smooth(img, false, window, 0.0));
    } else {
      const double sigma = rng.uniform(0.8, 1.6);
      CHECK(linear_smooth(img, SmoothKind::Gaussian, window, sigma) == oracles::smooth(img, true, window, sigma));
    }
  }
}

TEST_CASE("median filter examples and the full-sort oracle on 50 random images") {
  GrayImage patch(3, 3);
  patch.pixels = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(median_filter(patch, 3).at(1, 1) == 5);

  GrayImage impulse(11, 11, 0);
  impulse.at(5, 5) = 255;
  const GrayImage cleaned = median_filter(impulse, 3);
  for (uint8_t p : cleaned.pixels) CHECK(p == 0);

  CHECK_THROWS_AS(median_filter(impulse, 2), std::invalid_argument);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = oracles::random_image(rng, 16, 16);
    const int window = 3 + 2 * rng.uniform_int(3);
    CHECK(median_filter(img, window) == oracles::median(img, window));
  }
}

TEST_CASE("wiener filter identity, denoising, and the flat-region branch") {
  const GrayImage flat(12, 12, 200);
  CHECK(wiener_filter(flat, 3) == flat);

  Rng rng(6);
  GrayImage noisy(32, 32);
  for (auto& p : noisy.pixels) p = oracles::round_u8(128.0 + 30.0 * rng.normal());
  const GrayImage filtered = wiener_filter(noisy, 5);
  const auto variance = [](const GrayImage& im) {
    double s = 0.0, s2 = 0.0;
    for (uint8_t p : im.pixels) {
      s += p;
      s2 += static_cast<double>(p) * p;
    }
    const double n = static_cast<double>(im.pixels.size());
    return s2 / n - (s / n) * (s / n);
  };
  CHECK(variance(filtered) < variance(noisy));

  // left half constant (sigma^2 = 0 <= nu^2 there), right half noisy
  GrayImage half(32, 32, 100);
  for (int y = 0; y < 32; ++y)
    for (int x = 16; x < 32; ++x) half.at(y, x) = oracles::round_u8(128.0 + 40.0 * rng.normal());
  const GrayImage out = wiener_filter(half, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 14; ++x) CHECK(out.at(y, x) == 100);  // local mean == the flat value
}

TEST_CASE("resample_scale identity, dims, constants, and range validation") {
  Rng rng(7);
  const GrayImage img = oracles::random_image(rng, 24, 24);
  CHECK(resample_scale(img, 1.0) == img);

  const GrayImage big(512, 512, 50);
  const GrayImage down = resample_scale(big, 0.55);
  CHECK(down.width == 282);
  CHECK(down.height == 282);
  const GrayImage up = resample_scale(big, 1.10);
  CHECK(up.width == 563);

  for (double f : {0.55, 0.8, 1.3, 1.9}) {
    const GrayImage scaled = resample_scale(GrayImage(20, 20, 163), f);
    for (uint8_t p : scaled.pixels) CHECK(p == 163);
  }

  CHECK_THROWS_AS(resample_scale(img, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(resample_scale(img, 1.95), std::invalid_argument);
}

TEST_CASE("rotation identity, constant interior, quarter-turn oracle") {
  Rng rng(8);
  const GrayImage img = oracles::random_image(rng, 16, 16);
  CHECK(rotate(img, 0.0) == img);

  const int n = 32;
  const GrayImage flat(n, n, 99);
  const GrayImage turned = rotate(flat, 30.0);
  // pixels within the inscribed valid square keep the constant value
  const double half = (n - 1) / 2.0;
  const double reach = half / (std::cos(30.0 * std::acos(-1.0) / 180.0) + std::sin(30.0 * std::acos(-1.0) / 180.0)) - 1.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (std::abs(y - half) <= reach && std::abs(x - half) <= reach) CHECK(turned.at(y, x) == 99);

  for (int trial = 0; trial < 10; ++trial) {
    const GrayImage r = oracles::random_image(rng, 16, 16);
    CHECK(rotate(r, 90.0) == oracles::quarter_turn(r));
  }
}

TEST_CASE("jpeg constant-128 identity and quant table scaling") {
  for (int q : {75, 85, 95, 99}) {
    const GrayImage flat(24, 24, 128);
    CHECK(jpeg_roundtrip(flat, q) == flat);
  }

  // IJG base luminance table, quality 50 leaves it unchanged
  const std::array<int, 64> base = {16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55,
                                    14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51, 87, 80, 62,
                                    18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92,
                                    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  CHECK(jpeg_quant_table(50) == base);
  for (int v : jpeg_quant_table(100)) CHECK(v == 1);  // scale 0 clamps to 1
  // spot-check the linear branch: Q=95 -> scale 10
  CHECK(jpeg_quant_table(95)[0] == std::clamp(static_cast<int>(std::lround(16 * 10 / 100.0)), 1, 255));

  // dims not multiples of 8: replicate-pad then crop back
  Rng rng(9);
  const GrayImage odd = oracles::random_image(rng, 20, 12);
  const GrayImage out = jpeg_roundtrip(odd, 90);
  CHECK(out.width == 20);
  CHECK(out.height == 12);
}

TEST_CASE("jpeg quality monotonicity on 10 seeded textures") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const GrayImage tex = oracles::texture(seed, 64);
    CHECK(psnr(tex, jpeg_roundtrip(tex, 95)) > psnr(tex, jpeg_roundtrip(tex, 75)));
  }
}

TEST_CASE("cdf97 wavelet round trip is lossless to 1e-9") {
  Rng rng(10);
  for (int n : {16, 33, 64}) {
    std::vector<double> data(static_cast<size_t>(n) * n);
    for (auto& v : data) v = rng.uniform(-100.0, 100.0);
    std::vector<double> copy = data;
    wavelet::cdf97_forward_2d(copy, n, n, 3);
    wavelet::cdf97_inverse_2d(copy, n, n, 3);
    double worst = 0.0;
    for (size_t i = 0; i < data.size(); ++i) worst = std::max(worst, std::abs(copy[i] - data[i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("jp2 constant exactness, ratio monotonicity, bitrate targeting") {
  for (double ratio : {2.0, 4.5, 8.0}) {
    const GrayImage flat(32, 32, 61);
    CHECK(jp2_roundtrip(flat, ratio) == flat);
  }

  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const GrayImage tex = oracles::texture(seed + 100, 64);
    CHECK(psnr(tex, jp2_roundtrip(tex, 2.0)) > psnr(tex, jp2_roundtrip(tex, 8.0)));
  }

  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const GrayImage tex = oracles::texture(seed + 200, 64);
    for (double ratio : {2.0, 5.0, 8.0}) {
      const Jp2Result r = jp2_roundtrip_info(tex, ratio);
      const double target = 8.0 / ratio;
      CHECK(r.bitrate == doctest::Approx(target).epsilon(0.05));
    }
  }
}

TEST_CASE("second compression round trip perturbs less than the first") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const GrayImage tex = oracles::texture(seed + 300, 64);
    const GrayImage j1 = jpeg_roundtrip(tex, 80);
    const GrayImage j2 = jpeg_roundtrip(j1, 80);
    CHECK(mse(j1, j2) < mse(tex, j1));
    const GrayImage w1 = jp2_roundtrip(tex, 4.0);
    const GrayImage w2 = jp2_roundtrip(w1, 4.0);
    CHECK(mse(w1, w2) < mse(tex, w1));
  }
}

TEST_CASE("sample_operation draws inside Table I and is seed-deterministic") {
  const std::vector<double> gammas = {0.5, 0.6, 0.7, 0.8, 0.9, 1.2, 1.4, 1.6, 1.8, 2.0};
  const std::vector<double> degrees = {1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45};
  const std::vector<double> up = {1, 3, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90};
  const std::vector<double> down = {1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45};
  const auto in_set = [](double v, const std::vector<double>& s) {
    for (double x : s)
      if (std::abs(v - x) < 1e-9) return true;
    return false;
  };

  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < kOpKindCount; ++k) {
      const OperationSpec spec = sample_operation(static_cast<OpKind>(k), rng);
      spec.validate();
      switch (spec.kind) {
        case OpKind::GC: CHECK(in_set(spec.gamma, gammas)); break;
        case OpKind::HE: break;
        case OpKind::UM:
          CHECK(spec.sigma >= 0.5);
          CHECK(spec.sigma <= 1.5);
          CHECK(spec.lambda >= 0.5);
          CHECK(spec.lambda <= 1.5);
          break;
        case OpKind::MeanF:
        case OpKind::MedF:
        case OpKind::WF: CHECK((spec.window == 3 || spec.window == 5 || spec.window == 7)); break;
        case OpKind::GF:
          CHECK((spec.window == 3 || spec.window == 5 || spec.window == 7));
          CHECK(spec.sigma >= 0.8);
          CHECK(spec.sigma <= 1.6);
          break;
        case OpKind::Sca: {
          const bool is_up = spec.factor > 1.0;
          const double pct = std::abs(spec.factor - 1.0) * 100.0;
          CHECK(in_set(pct, is_up ? up : down));
          break;
        }
        case OpKind::Rot: CHECK(in_set(spec.degrees, degrees)); break;
        case OpKind::JPEG:
          CHECK(spec.quality >= 75);
          CHECK(spec.quality <= 99);
          break;
        case OpKind::JP2:
          CHECK(spec.ratio >= 2.0);
          CHECK(spec.ratio <= 8.0);
          break;
      }
    }
  }

  Rng a(99), b(99);
  for (int k = 0; k < kOpKindCount; ++k) {
    const OperationSpec sa = sample_operation(static_cast<OpKind>(k), a);
    const OperationSpec sb = sample_operation(static_cast<OpKind>(k), b);
    CHECK(sa.to_json() == sb.to_json());
  }
}

TEST_CASE("operation spec json round trip and name table") {
  Rng rng(12);
  for (int k = 0; k < kOpKindCount; ++k) {
    const OperationSpec spec = sample_operation(static_cast<OpKind>(k), rng);
    const OperationSpec back = OperationSpec::from_json(spec.to_json());
    CHECK(back.to_json() == spec.to_json());
    CHECK(op_kind_from_string(to_string(spec.kind)) == spec.kind);
  }
  CHECK_THROWS_AS(op_kind_from_string("Blur"), std::invalid_argument);
}

TEST_CASE("apply dispatches and enforces parameter ranges") {
  Rng rng(13);
  const GrayImage img = oracles::random_image(rng, 16, 16);

  OperationSpec gc;
  gc.kind = OpKind::GC;
  gc.gamma = 1.0;
  CHECK(apply(img, gc) == img);

  GrayImage impulse(9, 9, 0);
  impulse.at(4, 4) = 255;
  OperationSpec medf;
  medf.kind = OpKind::MedF;
  medf.window = 3;
  for (uint8_t p : apply(impulse, medf).pixels) CHECK(p == 0);

  OperationSpec sca;
  sca.kind = OpKind::Sca;
  sca.factor = 1.10;
  const GrayImage big(512, 512, 7);
  CHECK(apply(big, sca).width == 563);

  OperationSpec bad;
  bad.kind = OpKind::GC;
  bad.gamma = 3.0;
  CHECK_THROWS_AS(apply(img, bad), std::invalid_argument);
  bad.kind = OpKind::JPEG;
  bad.quality = 60;
  CHECK_THROWS_AS(apply(img, bad), std::invalid_argument);
}

TEST_CASE("1000 randomized pairs keep outputs valid 8-bit images") {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const GrayImage img = oracles::texture(rng.next_u64(), 32);
    const OpKind kind = static_cast<OpKind>(rng.uniform_int(kOpKindCount));
    const OperationSpec spec = sample_operation(kind, rng);
    const GrayImage out = apply(img, spec);
    CHECK(out.valid());
    if (kind != OpKind::Sca) {
      CHECK(out.width == img.width);
      CHECK(out.height == img.height);
    } else {
      CHECK(out.width == std::llround(32 * spec.factor));
    }
  }
}

TEST_CASE("pgm round trip and malformed input") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "opforge_pgm_test";
  fs::create_directories(dir);
  Rng rng(15);
  const GrayImage img = oracles::random_image(rng, 21, 13);
  const std::string path = (dir / "roundtrip.pgm").string();
  write_pgm(img, path);
  CHECK(read_pgm(path) == img);

  const std::string bad = (dir / "color.ppm").string();
  std::ofstream os(bad, std::ios::binary);
  os << "P6\n2 2\n255\n";
  for (int i = 0; i < 12; ++i) os.put('\x40');
  os.close();
  CHECK_THROWS_AS(read_pgm(bad), std::runtime_error);
  fs::remove_all(dir);
}
