#include "opforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "opforge/parallel.hpp"
#include "opforge/rng.hpp"

namespace opforge {
namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_pow2(std::complex<double>* a, int n) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double pi = std::acos(-1.0);
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * pi / len;
    const std::complex<double> step(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

void dft_naive(std::complex<double>* a, int n, std::vector<std::complex<double>>& tmp) {
  const double pi = std::acos(-1.0);
  tmp.assign(static_cast<size_t>(n), {0.0, 0.0});
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * pi * k * t / n;
      tmp[static_cast<size_t>(k)] += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
  std::copy(tmp.begin(), tmp.end(), a);
}

void fft_1d(std::complex<double>* a, int n, std::vector<std::complex<double>>& tmp) {
  if (is_pow2(n))
    fft_pow2(a, n);
  else
    dft_naive(a, n, tmp);
}

// Square 2-D transform, rows then columns. Direction does not matter for
// random-phase synthesis.
void fft_2d(std::vector<std::complex<double>>& data, int n) {
  std::vector<std::complex<double>> tmp, col(static_cast<size_t>(n));
  for (int y = 0; y < n; ++y) fft_1d(data.data() + static_cast<size_t>(y) * n, n, tmp);
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) col[static_cast<size_t>(y)] = data[static_cast<size_t>(y) * n + x];
    fft_1d(col.data(), n, tmp);
    for (int y = 0; y < n; ++y) data[static_cast<size_t>(y) * n + x] = col[static_cast<size_t>(y)];
  }
}

void validate_synth(const SynthConfig& cfg) {
  check_arg(cfg.size >= 32, "synth_image: size must be >= 32");
  check_arg(cfg.beta >= 1.0 && cfg.beta <= 2.0, "synth_image: beta outside [1, 2]");
  check_arg(cfg.contrast_low >= 0 && cfg.contrast_high <= 255 && cfg.contrast_high - cfg.contrast_low >= 85,
            "synth_image: contrast range must span at least 85 levels inside [0, 255]");
}

const char* split_name(int s) { return s == 0 ? "train" : s == 1 ? "validation" : "test"; }

}  // namespace

std::vector<std::string> all_class_names() {
  std::vector<std::string> names = {kOriginalClass};
  for (const auto& n : op_kind_names()) names.push_back(n);
  return names;
}

GrayImage synth_image(const SynthConfig& cfg, uint64_t index) {
  validate_synth(cfg);
  Rng rng(mix_seed(cfg.seed, index));
  const int n = cfg.size;
  const double pi = std::acos(-1.0);

  std::vector<std::complex<double>> spec(static_cast<size_t>(n) * n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      if (u == 0 && v == 0) continue;  // no DC; the mean is set by normalization
      const double fu = static_cast<double>(std::min(u, n - u)) / n;
      const double fv = static_cast<double>(std::min(v, n - v)) / n;
      const double amp = 1.0 / std::pow(std::sqrt(fu * fu + fv * fv), cfg.beta);
      const double phase = rng.uniform(0.0, 2.0 * pi);
      spec[static_cast<size_t>(u) * n + v] = amp * std::complex<double>(std::cos(phase), std::sin(phase));
    }
  fft_2d(spec, n);

  std::vector<double> field(static_cast<size_t>(n) * n);
  double sum = 0.0, sum2 = 0.0;
  for (size_t i = 0; i < field.size(); ++i) {
    field[i] = spec[i].real();
    sum += field[i];
    sum2 += field[i] * field[i];
  }
  const double mean = sum / static_cast<double>(field.size());
  const double sd = std::sqrt(std::max(0.0, sum2 / static_cast<double>(field.size()) - mean * mean));
  const double inv_sd = sd > 1e-12 ? 1.0 / sd : 1.0;

  const double gx = rng.uniform(-1.5, 1.5);
  const double gy = rng.uniform(-1.5, 1.5);
  const double gxy = rng.uniform(-1.5, 1.5);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double xn = static_cast<double>(x) / (n - 1) - 0.5;
      const double yn = static_cast<double>(y) / (n - 1) - 0.5;
      double& v = field[static_cast<size_t>(y) * n + x];
      v = (v - mean) * inv_sd + gx * xn + gy * yn + gxy * xn * yn;
    }

  const auto [mn_it, mx_it] = std::minmax_element(field.begin(), field.end());
  const double mn = *mn_it, mx = *mx_it;
  GrayImage img(n, n);
  if (mx - mn < 1e-12) {
    std::fill(img.pixels.begin(), img.pixels.end(),
              static_cast<uint8_t>((cfg.contrast_low + cfg.contrast_high) / 2));
    return img;
  }
  const double scale = (cfg.contrast_high - cfg.contrast_low) / (mx - mn);
  for (size_t i = 0; i < field.size(); ++i) img.pixels[i] = quantize_u8(cfg.contrast_low + (field[i] - mn) * scale);
  return img;
}

std::vector<GrayImage> synth_corpus(const SynthConfig& cfg, int count) {
  check_arg(count >= 1, "synth_corpus: count must be >= 1");
  std::vector<GrayImage> images(static_cast<size_t>(count));
  parallel_for(count, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) images[static_cast<size_t>(i)] = synth_image(cfg, static_cast<uint64_t>(i));
  });
  return images;
}

std::vector<GrayImage> load_corpus(const std::string& directory, int min_size, bool require_square) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw std::invalid_argument("load_corpus: not a directory: " + directory);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) std::cerr << "load_corpus: no .pgm files in " << directory << "\n";
  std::vector<GrayImage> images;
  images.reserve(paths.size());
  for (const auto& path : paths) {
    GrayImage img = read_pgm(path);
    if (require_square && img.width != img.height)
      throw std::runtime_error("load_corpus: " + path + " is not square (" + std::to_string(img.width) + "x" +
                               std::to_string(img.height) + ")");
    if (std::min(img.width, img.height) < min_size)
      throw std::runtime_error("load_corpus: " + path + " is smaller than the minimum size " +
                               std::to_string(min_size));
    images.push_back(std::move(img));
  }
  return images;
}

GrayImage center_crop(const GrayImage& img, int c) {
  check_arg(c >= 1, "center_crop: crop must be >= 1");
  check_arg(c <= std::min(img.width, img.height),
            "center_crop: crop " + std::to_string(c) + " exceeds image " + std::to_string(img.width) + "x" +
                std::to_string(img.height));
  const int ox = (img.width - c) / 2;
  const int oy = (img.height - c) / 2;
  GrayImage out(c, c);
  for (int y = 0; y < c; ++y)
    for (int x = 0; x < c; ++x) out.at(y, x) = img.at(oy + y, ox + x);
  return out;
}

DatasetSplits build_dataset(const std::vector<GrayImage>& originals, const std::vector<std::string>& classes,
                            int crop, uint64_t seed, const SplitRatios& ratios) {
  check_arg(!originals.empty(), "build_dataset: no original images");
  check_arg(!classes.empty(), "build_dataset: no classes");
  check_arg(ratios.train > 0 && ratios.validation > 0 && ratios.train + ratios.validation < 1.0,
            "build_dataset: split ratios must be positive with train+validation < 1");
  for (const auto& name : classes)
    if (name != kOriginalClass) op_kind_from_string(name);  // rejects unknown class names
  check_arg(std::set<std::string>(classes.begin(), classes.end()).size() == classes.size(),
            "build_dataset: duplicate class names");

  const int n = static_cast<int>(originals.size());
  const int k = static_cast<int>(classes.size());
  const int n_train = static_cast<int>(std::floor(n * ratios.train));
  const int n_val = static_cast<int>(std::floor(n * ratios.validation));
  check_arg(n_train >= 1 && n_val >= 1 && n_train + n_val < n,
            "build_dataset: too few originals for the requested split ratios");

  Rng split_rng(mix_seed(seed, 0x5917));
  const std::vector<int> perm = split_rng.permutation(n);
  std::vector<int> split_of(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r)
    split_of[static_cast<size_t>(perm[static_cast<size_t>(r)])] = r < n_train ? 0 : r < n_train + n_val ? 1 : 2;

  std::vector<LabeledItem> flat(static_cast<size_t>(n) * static_cast<size_t>(k));
  std::atomic<long long> resamples{0};
  parallel_for(n, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const GrayImage& original = originals[static_cast<size_t>(i)];
      for (int c = 0; c < k; ++c) {
        LabeledItem item;
        item.label = c;
        item.original_id = static_cast<uint64_t>(i);
        item.seed = mix_seed(seed, static_cast<uint64_t>(i), static_cast<uint64_t>(c));
        if (classes[static_cast<size_t>(c)] == kOriginalClass) {
          item.image = center_crop(original, crop);
        } else {
          const OpKind kind = op_kind_from_string(classes[static_cast<size_t>(c)]);
          Rng rng(item.seed);
          bool done = false;
          for (int attempt = 0; attempt < 100 && !done; ++attempt) {
            const OperationSpec spec = sample_operation(kind, rng);
            const GrayImage processed = apply(original, spec);
            if (processed.width >= crop && processed.height >= crop) {
              item.image = center_crop(processed, crop);
              item.op = spec;
              done = true;
            } else {
              ++resamples;
            }
          }
          if (!done)
            throw std::runtime_error("build_dataset: no feasible " + classes[static_cast<size_t>(c)] +
                                     " parameters for original " + std::to_string(i) + " at crop " +
                                     std::to_string(crop));
        }
        flat[static_cast<size_t>(i) * static_cast<size_t>(k) + static_cast<size_t>(c)] = std::move(item);
      }
    }
  });
  if (resamples > 0)
    std::cerr << "build_dataset: re-sampled " << resamples << " parameter draws infeasible at crop " << crop << "\n";

  DatasetSplits splits;
  for (LabeledSet* set : {&splits.train, &splits.validation, &splits.test}) set->class_names = classes;
  for (size_t i = 0; i < flat.size(); ++i) {
    const int s = split_of[i / static_cast<size_t>(k)];
    LabeledSet& set = s == 0 ? splits.train : s == 1 ? splits.validation : splits.test;
    set.items.push_back(std::move(flat[i]));
  }
  return splits;
}

std::string manifest_jsonl(const DatasetSplits& splits, int crop) {
  std::ostringstream os;
  const LabeledSet* sets[3] = {&splits.train, &splits.validation, &splits.test};
  for (int s = 0; s < 3; ++s)
    for (const auto& item : sets[s]->items) {
      const std::string& cls = sets[s]->class_names[static_cast<size_t>(item.label)];
      nlohmann::json j = {{"image_id", std::to_string(item.original_id) + "_" + cls},
                          {"split", split_name(s)},
                          {"class", cls},
                          {"params", item.op ? item.op->params_json() : nlohmann::json::object()},
                          {"crop", crop},
                          {"seed", item.seed}};
      os << j.dump() << "\n";
    }
  return os.str();
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t hash = 14695981039346656037ull;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

BatchStream::BatchStream(const LabeledSet& set, Index batch_size, uint64_t epoch_seed, InputScale scale)
    : set_(set), batch_size_(batch_size), scale_(scale) {
  check_arg(batch_size >= 1, "batches: batch_size must be >= 1");
  check_arg(!set.items.empty(), "batches: empty set");
  Rng rng(epoch_seed);
  const std::vector<int> perm = rng.permutation(static_cast<int>(set.items.size()));
  order_.assign(perm.begin(), perm.end());
}

Index BatchStream::batch_count() const {
  return (static_cast<Index>(order_.size()) + batch_size_ - 1) / batch_size_;
}

Batch BatchStream::get(Index batch_index) const {
  check_arg(batch_index >= 0 && batch_index < batch_count(), "batches: index out of range");
  const Index begin = batch_index * batch_size_;
  const Index end = std::min<Index>(begin + batch_size_, static_cast<Index>(order_.size()));
  const GrayImage& first = set_.items[static_cast<size_t>(order_[static_cast<size_t>(begin)])].image;
  const Index h = first.height, w = first.width;
  Batch batch;
  batch.input = Tensor(end - begin, 1, h, w);
  const Real scale = scale_ == InputScale::Unit ? static_cast<Real>(1.0 / 255.0) : 1;
  for (Index b = begin; b < end; ++b) {
    const LabeledItem& item = set_.items[static_cast<size_t>(order_[static_cast<size_t>(b)])];
    check_arg(item.image.height == h && item.image.width == w, "batches: mixed image sizes in one set");
    const Index base = (b - begin) * h * w;
    for (Index i = 0; i < h * w; ++i)
      batch.input[base + i] = scale * static_cast<Real>(item.image.pixels[static_cast<size_t>(i)]);
    batch.labels.push_back(item.label);
  }
  return batch;
}

}  // namespace opforge
