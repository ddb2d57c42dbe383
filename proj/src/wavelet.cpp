#include "opforge/wavelet.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace opforge::wavelet {
namespace {

constexpr double kAlpha = -1.586134342059924;
constexpr double kBeta = -0.052980118572961;
constexpr double kGamma = 0.882911075530934;
constexpr double kDelta = 0.443506852043971;
constexpr double kK = 1.230174104914001;

// Whole-point symmetric extension: -1 -> 1, n -> n-2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// One lifting pass over the strided signal. Boundary neighbors are taken
// from the current (partially lifted) state, which is the standard
// symmetric-extension behavior.
void forward_1d(double* x, int n, int stride, std::vector<double>& tmp) {
  if (n <= 1) return;
  tmp.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = x[i * stride];
  auto at = [&](int i) { return tmp[static_cast<size_t>(reflect(i, n))]; };
  for (int i = 1; i < n; i += 2) tmp[static_cast<size_t>(i)] += kAlpha * (at(i - 1) + at(i + 1));
  for (int i = 0; i < n; i += 2) tmp[static_cast<size_t>(i)] += kBeta * (at(i - 1) + at(i + 1));
  for (int i = 1; i < n; i += 2) tmp[static_cast<size_t>(i)] += kGamma * (at(i - 1) + at(i + 1));
  for (int i = 0; i < n; i += 2) tmp[static_cast<size_t>(i)] += kDelta * (at(i - 1) + at(i + 1));
  const int nl = (n + 1) / 2;
  for (int i = 0; i < n; i += 2) x[(i / 2) * stride] = tmp[static_cast<size_t>(i)] / kK;
  for (int i = 1; i < n; i += 2) x[(nl + i / 2) * stride] = tmp[static_cast<size_t>(i)] * kK;
}

void inverse_1d(double* x, int n, int stride, std::vector<double>& tmp) {
  if (n <= 1) return;
  const int nl = (n + 1) / 2;
  tmp.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; i += 2) tmp[static_cast<size_t>(i)] = x[(i / 2) * stride] * kK;
  for (int i = 1; i < n; i += 2) tmp[static_cast<size_t>(i)] = x[(nl + i / 2) * stride] / kK;
  auto at = [&](int i) { return tmp[static_cast<size_t>(reflect(i, n))]; };
  for (int i = 0; i < n; i += 2) tmp[static_cast<size_t>(i)] -= kDelta * (at(i - 1) + at(i + 1));
  for (int i = 1; i < n; i += 2) tmp[static_cast<size_t>(i)] -= kGamma * (at(i - 1) + at(i + 1));
  for (int i = 0; i < n; i += 2) tmp[static_cast<size_t>(i)] -= kBeta * (at(i - 1) + at(i + 1));
  for (int i = 1; i < n; i += 2) tmp[static_cast<size_t>(i)] -= kAlpha * (at(i - 1) + at(i + 1));
  for (int i = 0; i < n; ++i) x[i * stride] = tmp[static_cast<size_t>(i)];
}

void check_dims(int width, int height, int levels, size_t size) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("wavelet: dimensions must be positive");
  if (levels < 1) throw std::invalid_argument("wavelet: levels must be >= 1");
  if (size != static_cast<size_t>(width) * static_cast<size_t>(height))
    throw std::invalid_argument("wavelet: buffer size does not match dimensions");
}

}  // namespace

void cdf97_forward_2d(std::vector<double>& data, int width, int height, int levels) {
  check_dims(width, height, levels, data.size());
  std::vector<double> tmp;
  int rw = width, rh = height;
  for (int level = 0; level < levels; ++level) {
    for (int y = 0; y < rh; ++y) forward_1d(data.data() + static_cast<size_t>(y) * width, rw, 1, tmp);
    for (int x = 0; x < rw; ++x) forward_1d(data.data() + x, rh, width, tmp);
    rw = (rw + 1) / 2;
    rh = (rh + 1) / 2;
  }
}

void cdf97_inverse_2d(std::vector<double>& data, int width, int height, int levels) {
  check_dims(width, height, levels, data.size());
  std::vector<int> ws(static_cast<size_t>(levels)), hs(static_cast<size_t>(levels));
  int rw = width, rh = height;
  for (int level = 0; level < levels; ++level) {
    ws[static_cast<size_t>(level)] = rw;
    hs[static_cast<size_t>(level)] = rh;
    rw = (rw + 1) / 2;
    rh = (rh + 1) / 2;
  }
  std::vector<double> tmp;
  for (int level = levels - 1; level >= 0; --level) {
    rw = ws[static_cast<size_t>(level)];
    rh = hs[static_cast<size_t>(level)];
    for (int x = 0; x < rw; ++x) inverse_1d(data.data() + x, rh, width, tmp);
    for (int y = 0; y < rh; ++y) inverse_1d(data.data() + static_cast<size_t>(y) * width, rw, 1, tmp);
  }
}

double quantized_entropy(const std::vector<double>& data, double step) {
  if (step <= 0.0) throw std::invalid_argument("quantized_entropy: step must be positive");
  if (data.empty()) return 0.0;
  std::unordered_map<long long, long long> counts;
  for (double v : data) ++counts[std::llround(v / step)];
  const double n = static_cast<double>(data.size());
  double bits = 0.0;
  for (const auto& [symbol, count] : counts) {
    (void)symbol;
    const double p = static_cast<double>(count) / n;
    bits -= p * std::log2(p);
  }
  return bits;
}

}  // namespace opforge::wavelet
