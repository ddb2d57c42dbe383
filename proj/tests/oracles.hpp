#pragma once

// Reference implementations kept deliberately naive and written against the
// documented contracts, not the library code: reflection by stepwise folding
// instead of period arithmetic, medians by full sort instead of selection,
// convolution by direct nested loops instead of im2col/GEMM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "opforge/image.hpp"
#include "opforge/nn.hpp"
#include "opforge/rng.hpp"

namespace oracles {

inline int ref_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

inline std::uint8_t round_u8(double v) {
  const double r = v < 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

inline opforge::GrayImage median(const opforge::GrayImage& img, int window) {
  const int r = window / 2;
  opforge::GrayImage out(img.width, img.height);
  std::vector<std::uint8_t> vals;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      vals.clear();
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          vals.push_back(img.at(ref_index(y + dy, img.height), ref_index(x + dx, img.width)));
      std::sort(vals.begin(), vals.end());
      out.at(y, x) = vals[vals.size() / 2];
    }
  return out;
}

// Kernel arithmetic matches the documented construction term for term so the
// comparison can demand bitwise equality; the gather/accumulate/round path is
// independent.
inline std::vector<double> smooth_kernel(bool gaussian, int window, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(window) * window, 1.0 / (window * window));
  if (!gaussian) return k;
  const int r = window / 2;
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(dy + r) * window + (dx + r)] = v;
      total += v;
    }
  for (double& v : k) v /= total;
  return k;
}

inline opforge::GrayImage smooth(const opforge::GrayImage& img, bool gaussian, int window, double sigma) {
  const std::vector<double> k = smooth_kernel(gaussian, window, sigma);
  const int r = window / 2;
  opforge::GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          acc += k[static_cast<std::size_t>(dy + r) * window + (dx + r)] *
                 img.at(ref_index(y + dy, img.height), ref_index(x + dx, img.width));
      out.at(y, x) = round_u8(acc);
    }
  return out;
}

// Quarter turn with out(y, x) = in(n-1-x, y): the grid-aligned case of the
// inverse-map rotation.
inline opforge::GrayImage quarter_turn(const opforge::GrayImage& img) {
  opforge::GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(img.height - 1 - x, y);
  return out;
}

inline opforge::Tensor conv2d_naive(const opforge::Tensor& in, const opforge::Tensor& w, const opforge::Tensor& b,
                                    int stride, int pad) {
  using opforge::Index;
  const Index oh = (in.height() + 2 * pad - w.height()) / stride + 1;
  const Index ow = (in.width() + 2 * pad - w.width()) / stride + 1;
  opforge::Tensor out(in.batch(), w.batch(), oh, ow);
  for (Index n = 0; n < in.batch(); ++n)
    for (Index f = 0; f < w.batch(); ++f)
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          double acc = b(f, 0, 0, 0);
          for (Index c = 0; c < in.channels(); ++c)
            for (Index ky = 0; ky < w.height(); ++ky)
              for (Index kx = 0; kx < w.width(); ++kx) {
                const Index sy = y * stride + ky - pad;
                const Index sx = x * stride + kx - pad;
                if (sy < 0 || sy >= in.height() || sx < 0 || sx >= in.width()) continue;
                acc += w(f, c, ky, kx) * in(n, c, sy, sx);
              }
          out(n, f, y, x) = static_cast<opforge::Real>(acc);
        }
  return out;
}

inline opforge::GrayImage random_image(opforge::Rng& rng, int w, int h) {
  opforge::GrayImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

// Band-limited seeded texture: a few random cosine plaids. Smooth enough that
// compression PSNR orderings are stable, non-trivial enough to exercise every
// subband.
inline opforge::GrayImage texture(std::uint64_t seed, int n) {
  opforge::Rng rng(seed);
  std::vector<double> field(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < 6; ++k) {
    const double fx = rng.uniform(0.01, 0.2), fy = rng.uniform(0.01, 0.2);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double amp = rng.uniform(0.3, 1.0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        field[static_cast<std::size_t>(y) * n + x] += amp * std::cos(6.283185307179586 * (fx * x + fy * y) + phase);
  }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  opforge::GrayImage img(n, n);
  for (std::size_t i = 0; i < field.size(); ++i)
    img.pixels[i] = round_u8(10.0 + 235.0 * (field[i] - *lo) / (*hi - *lo + 1e-12));
  return img;
}

}  // namespace oracles
