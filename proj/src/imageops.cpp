#include "opforge/imageops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "opforge/wavelet.hpp"

namespace opforge {
namespace {

const std::vector<double> kGammaSet = {0.5, 0.6, 0.7, 0.8, 0.9, 1.2, 1.4, 1.6, 1.8, 2.0};
const std::vector<int> kWindowSet = {3, 5, 7};
const std::vector<double> kUpPercent = {1, 3, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90};
const std::vector<double> kDownPercent = {1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45};
const std::vector<double> kDegreeSet = {1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45};

void check_window(int window) {
  if (window != 3 && window != 5 && window != 7)
    throw std::invalid_argument("window must be 3, 5 or 7, got " + std::to_string(window));
}

std::vector<double> gaussian_kernel_2d(int window, double sigma) {
  const int r = window / 2;
  std::vector<double> k(static_cast<size_t>(window) * window);
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[static_cast<size_t>(dy + r) * window + (dx + r)] = v;
      total += v;
    }
  for (double& v : k) v /= total;
  return k;
}

// Real-valued convolution with mirror padding; shared by the smoothing
// filters and unsharp masking (which must not round the blurred image).
std::vector<double> convolve_real(const GrayImage& img, const std::vector<double>& kernel, int window) {
  const int w = img.width, h = img.height, r = window / 2;
  std::vector<double> out(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int sy = mirror_index(y + dy, h);
          const int sx = mirror_index(x + dx, w);
          acc += kernel[static_cast<size_t>(dy + r) * window + (dx + r)] * img.at(sy, sx);
        }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  return out;
}

using Mat8 = Eigen::Matrix<double, 8, 8>;

const Mat8& dct_matrix() {
  static const Mat8 c = [] {
    Mat8 m;
    const double pi = std::acos(-1.0);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        m(i, j) = i == 0 ? 1.0 / std::sqrt(8.0) : 0.5 * std::cos((2 * j + 1) * i * pi / 16.0);
    return m;
  }();
  return c;
}

}  // namespace

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

const std::vector<std::string>& op_kind_names() {
  static const std::vector<std::string> names = {"GC",  "HE", "UM",  "MeanF", "GF",  "MedF",
                                                 "WF",  "Sca", "Rot", "JPEG",  "JP2"};
  return names;
}

std::string to_string(OpKind kind) { return op_kind_names()[static_cast<size_t>(kind)]; }

OpKind op_kind_from_string(const std::string& name) {
  const auto& names = op_kind_names();
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<OpKind>(i);
  throw std::invalid_argument("unknown operation kind: " + name);
}

void OperationSpec::validate() const {
  switch (kind) {
    case OpKind::GC:
      if (gamma < 0.5 || gamma > 2.0) throw std::invalid_argument("GC: gamma outside [0.5, 2.0]");
      break;
    case OpKind::HE:
      break;
    case OpKind::UM:
      if (sigma < 0.5 || sigma > 1.5) throw std::invalid_argument("UM: sigma outside [0.5, 1.5]");
      if (lambda < 0.5 || lambda > 1.5) throw std::invalid_argument("UM: lambda outside [0.5, 1.5]");
      break;
    case OpKind::MeanF:
    case OpKind::MedF:
    case OpKind::WF:
      check_window(window);
      break;
    case OpKind::GF:
      check_window(window);
      if (sigma < 0.8 || sigma > 1.6) throw std::invalid_argument("GF: sigma outside [0.8, 1.6]");
      break;
    case OpKind::Sca:
      if (factor < 0.55 || factor > 1.90) throw std::invalid_argument("Sca: factor outside [0.55, 1.90]");
      break;
    case OpKind::Rot:
      if (degrees < 0.0 || degrees > 45.0) throw std::invalid_argument("Rot: degrees outside [0, 45]");
      break;
    case OpKind::JPEG:
      if (quality < 75 || quality > 99) throw std::invalid_argument("JPEG: quality outside [75, 99]");
      break;
    case OpKind::JP2:
      if (ratio < 2.0 || ratio > 8.0) throw std::invalid_argument("JP2: ratio outside [2.0, 8.0]");
      break;
  }
}

nlohmann::json OperationSpec::params_json() const {
  nlohmann::json j = nlohmann::json::object();
  switch (kind) {
    case OpKind::GC: j["gamma"] = gamma; break;
    case OpKind::HE: break;
    case OpKind::UM: j["sigma"] = sigma; j["lambda"] = lambda; break;
    case OpKind::MeanF: j["window"] = window; break;
    case OpKind::GF: j["window"] = window; j["sigma"] = sigma; break;
    case OpKind::MedF: j["window"] = window; break;
    case OpKind::WF: j["window"] = window; break;
    case OpKind::Sca: j["factor"] = factor; break;
    case OpKind::Rot: j["degrees"] = degrees; break;
    case OpKind::JPEG: j["quality"] = quality; break;
    case OpKind::JP2: j["ratio"] = ratio; break;
  }
  return j;
}

nlohmann::json OperationSpec::to_json() const {
  nlohmann::json j = params_json();
  j["kind"] = to_string(kind);
  return j;
}

OperationSpec OperationSpec::from_json(const nlohmann::json& j) {
  OperationSpec spec;
  spec.kind = op_kind_from_string(j.at("kind").get<std::string>());
  spec.gamma = j.value("gamma", 0.0);
  spec.sigma = j.value("sigma", 0.0);
  spec.lambda = j.value("lambda", 0.0);
  spec.window = j.value("window", 0);
  spec.factor = j.value("factor", 0.0);
  spec.degrees = j.value("degrees", 0.0);
  spec.quality = j.value("quality", 0);
  spec.ratio = j.value("ratio", 0.0);
  spec.validate();
  return spec;
}

OperationSpec sample_operation(OpKind kind, Rng& rng) {
  OperationSpec spec;
  spec.kind = kind;
  switch (kind) {
    case OpKind::GC: spec.gamma = rng.pick(kGammaSet); break;
    case OpKind::HE: break;
    case OpKind::UM:
      spec.sigma = rng.uniform(0.5, 1.5);
      spec.lambda = rng.uniform(0.5, 1.5);
      break;
    case OpKind::MeanF: spec.window = rng.pick(kWindowSet); break;
    case OpKind::GF:
      spec.window = rng.pick(kWindowSet);
      spec.sigma = rng.uniform(0.8, 1.6);
      break;
    case OpKind::MedF: spec.window = rng.pick(kWindowSet); break;
    case OpKind::WF: spec.window = rng.pick(kWindowSet); break;
    case OpKind::Sca: {
      const bool up = rng.uniform() < 0.5;
      const double p = rng.pick(up ? kUpPercent : kDownPercent);
      spec.factor = up ? 1.0 + p / 100.0 : 1.0 - p / 100.0;
      break;
    }
    case OpKind::Rot: spec.degrees = rng.pick(kDegreeSet); break;
    case OpKind::JPEG: spec.quality = rng.uniform_int(75, 99); break;
    case OpKind::JP2: spec.ratio = rng.uniform(2.0, 8.0); break;
  }
  return spec;
}

GrayImage gamma_correct(const GrayImage& img, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma_correct: gamma must be positive");
  std::array<uint8_t, 256> lut;
  for (int v = 0; v < 256; ++v) lut[static_cast<size_t>(v)] = quantize_u8(255.0 * std::pow(v / 255.0, gamma));
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = lut[img.pixels[i]];
  return out;
}

GrayImage hist_equalize(const GrayImage& img) {
  std::array<long long, 256> cum{};
  for (uint8_t v : img.pixels) ++cum[v];
  for (int v = 1; v < 256; ++v) cum[static_cast<size_t>(v)] += cum[static_cast<size_t>(v) - 1];
  const long long total = static_cast<long long>(img.pixels.size());
  long long cdf_min = 0;
  for (int v = 0; v < 256; ++v)
    if (cum[static_cast<size_t>(v)] > 0) {
      cdf_min = cum[static_cast<size_t>(v)];
      break;
    }
  if (cdf_min == total) return img;  // single-valued image: mapping undefined, leave unchanged
  std::array<uint8_t, 256> lut;
  for (int v = 0; v < 256; ++v) {
    const double num = static_cast<double>(cum[static_cast<size_t>(v)] - cdf_min);
    lut[static_cast<size_t>(v)] = quantize_u8(255.0 * num / static_cast<double>(total - cdf_min));
  }
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = lut[img.pixels[i]];
  return out;
}

GrayImage unsharp_mask(const GrayImage& img, double sigma, double lambda) {
  if (!(sigma > 0.0)) throw std::invalid_argument("unsharp_mask: sigma must be positive");
  if (lambda < 0.0) throw std::invalid_argument("unsharp_mask: lambda must be non-negative");
  const int window = 2 * static_cast<int>(std::ceil(2.0 * sigma)) + 1;
  const std::vector<double> smooth = convolve_real(img, gaussian_kernel_2d(window, sigma), window);
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = img.pixels[i];
    out.pixels[i] = quantize_u8(v + lambda * (v - smooth[i]));
  }
  return out;
}

GrayImage linear_smooth(const GrayImage& img, SmoothKind kind, int window, double sigma) {
  check_window(window);
  std::vector<double> kernel;
  if (kind == SmoothKind::Mean) {
    kernel.assign(static_cast<size_t>(window) * window, 1.0 / (window * window));
  } else {
    if (sigma < 0.8 || sigma > 1.6) throw std::invalid_argument("linear_smooth: gaussian sigma outside [0.8, 1.6]");
    kernel = gaussian_kernel_2d(window, sigma);
  }
  const std::vector<double> real = convolve_real(img, kernel, window);
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < real.size(); ++i) out.pixels[i] = quantize_u8(real[i]);
  return out;
}

GrayImage median_filter(const GrayImage& img, int window) {
  check_window(window);
  const int w = img.width, h = img.height, r = window / 2, n = window * window;
  std::array<uint8_t, 49> buf;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int k = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          buf[static_cast<size_t>(k++)] = img.at(mirror_index(y + dy, h), mirror_index(x + dx, w));
      std::nth_element(buf.begin(), buf.begin() + n / 2, buf.begin() + n);
      out.at(y, x) = buf[static_cast<size_t>(n / 2)];
    }
  return out;
}

GrayImage wiener_filter(const GrayImage& img, int window) {
  check_window(window);
  const int w = img.width, h = img.height, r = window / 2, n = window * window;
  std::vector<double> mean(static_cast<size_t>(w) * h), var(static_cast<size_t>(w) * h);
  double noise_acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      long long s = 0, s2 = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const long long v = img.at(mirror_index(y + dy, h), mirror_index(x + dx, w));
          s += v;
          s2 += v * v;
        }
      const double mu = static_cast<double>(s) / n;
      const double sg = std::max(0.0, static_cast<double>(s2) / n - mu * mu);
      const size_t i = static_cast<size_t>(y) * w + x;
      mean[i] = mu;
      var[i] = sg;
      noise_acc += sg;
    }
  const double noise = noise_acc / (static_cast<double>(w) * h);
  GrayImage out(w, h);
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    const double gain = var[i] > noise ? (var[i] - noise) / var[i] : 0.0;
    out.pixels[i] = quantize_u8(mean[i] + gain * (img.pixels[i] - mean[i]));
  }
  return out;
}

GrayImage resample_scale(const GrayImage& img, double factor) {
  if (factor < 0.55 || factor > 1.90) throw std::invalid_argument("resample_scale: factor outside [0.55, 1.90]");
  const int ow = static_cast<int>(std::llround(img.width * factor));
  const int oh = static_cast<int>(std::llround(img.height * factor));
  if (ow < 1 || oh < 1) throw std::invalid_argument("resample_scale: output would be smaller than 1x1");
  GrayImage out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    const double sy = (oh > 1 && img.height > 1) ? static_cast<double>(y) * (img.height - 1) / (oh - 1) : 0.0;
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < ow; ++x) {
      const double sx = (ow > 1 && img.width > 1) ? static_cast<double>(x) * (img.width - 1) / (ow - 1) : 0.0;
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
      const double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
      out.at(y, x) = quantize_u8((1.0 - fy) * top + fy * bot);
    }
  }
  return out;
}

GrayImage rotate(const GrayImage& img, double degrees) {
  if (!std::isfinite(degrees)) throw std::invalid_argument("rotate: degrees must be finite");
  const double rad = degrees * std::acos(-1.0) / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const int w = img.width, h = img.height;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  auto sample = [&](int y, int x) -> double {
    return (x >= 0 && x < w && y >= 0 && y < h) ? img.at(y, x) : 0.0;
  };
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const double top = (1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1);
      const double bot = (1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1);
      out.at(y, x) = quantize_u8((1.0 - fy) * top + fy * bot);
    }
  return out;
}

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg_quant_table: quality outside [1, 100]");
  static const std::array<int, 64> base = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> table;
  for (size_t i = 0; i < 64; ++i)
    table[i] = std::clamp(static_cast<int>(std::lround(base[i] * scale / 100.0)), 1, 255);
  return table;
}

GrayImage jpeg_roundtrip(const GrayImage& img, int quality) {
  const std::array<int, 64> q = jpeg_quant_table(quality);
  const int w = img.width, h = img.height;
  const int pw = (w + 7) / 8 * 8, ph = (h + 7) / 8 * 8;
  const Mat8& dct = dct_matrix();
  GrayImage out(w, h);
  Mat8 block, freq;
  for (int by = 0; by < ph; by += 8)
    for (int bx = 0; bx < pw; bx += 8) {
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          const int sy = std::min(by + j, h - 1);  // replicate padding for edge blocks
          const int sx = std::min(bx + i, w - 1);
          block(j, i) = img.at(sy, sx) - 128.0;
        }
      freq = dct * block * dct.transpose();
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          const double step = q[static_cast<size_t>(j) * 8 + i];
          freq(j, i) = std::round(freq(j, i) / step) * step;
        }
      block = dct.transpose() * freq * dct;
      for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) {
          const int oy = by + j, ox = bx + i;
          if (oy < h && ox < w) out.at(oy, ox) = quantize_u8(block(j, i) + 128.0);
        }
    }
  return out;
}

Jp2Result jp2_roundtrip_info(const GrayImage& img, double ratio) {
  if (ratio < 2.0 || ratio > 8.0) throw std::invalid_argument("jp2_roundtrip: ratio outside [2.0, 8.0]");
  const int w = img.width, h = img.height;
  std::vector<double> coeffs(img.pixels.begin(), img.pixels.end());
  wavelet::cdf97_forward_2d(coeffs, w, h, 3);

  const double target = 8.0 / ratio;
  double lo = 1e-3, hi = 1e4;
  double step = lo;
  double rate = wavelet::quantized_entropy(coeffs, lo);
  if (rate > target) {
    const double hi_rate = wavelet::quantized_entropy(coeffs, hi);
    if (hi_rate > target) {
      std::ostringstream msg;
      msg << "jp2_roundtrip: cannot reach " << target << " bits/pixel within step range (entropy at max step "
          << hi_rate << ")";
      throw std::runtime_error(msg.str());
    }
    step = hi;
    rate = hi_rate;
    for (int iter = 0; iter < 200 && std::abs(rate - target) > 0.05 * target; ++iter) {
      const double mid = std::sqrt(lo * hi);
      const double mid_rate = wavelet::quantized_entropy(coeffs, mid);
      if (std::abs(mid_rate - target) < std::abs(rate - target)) {
        step = mid;
        rate = mid_rate;
      }
      (mid_rate > target ? lo : hi) = mid;
    }
    if (std::abs(rate - target) > 0.05 * target) {
      std::ostringstream msg;
      msg << "jp2_roundtrip: rate search stalled at " << rate << " bits/pixel for target " << target;
      throw std::runtime_error(msg.str());
    }
  }

  for (double& c : coeffs) c = static_cast<double>(std::llround(c / step)) * step;
  wavelet::cdf97_inverse_2d(coeffs, w, h, 3);
  Jp2Result result{GrayImage(w, h), step, rate};
  for (size_t i = 0; i < coeffs.size(); ++i) result.image.pixels[i] = quantize_u8(coeffs[i]);
  return result;
}

GrayImage jp2_roundtrip(const GrayImage& img, double ratio) { return jp2_roundtrip_info(img, ratio).image; }

GrayImage apply(const GrayImage& img, const OperationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case OpKind::GC: return gamma_correct(img, spec.gamma);
    case OpKind::HE: return hist_equalize(img);
    case OpKind::UM: return unsharp_mask(img, spec.sigma, spec.lambda);
    case OpKind::MeanF: return linear_smooth(img, SmoothKind::Mean, spec.window);
    case OpKind::GF: return linear_smooth(img, SmoothKind::Gaussian, spec.window, spec.sigma);
    case OpKind::MedF: return median_filter(img, spec.window);
    case OpKind::WF: return wiener_filter(img, spec.window);
    case OpKind::Sca: return resample_scale(img, spec.factor);
    case OpKind::Rot: return rotate(img, spec.degrees);
    case OpKind::JPEG: return jpeg_roundtrip(img, spec.quality);
    case OpKind::JP2: return jp2_roundtrip(img, spec.ratio);
  }
  throw std::logic_error("apply: unhandled operation kind");
}

}  // namespace opforge
