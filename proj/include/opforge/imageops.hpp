#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "opforge/image.hpp"
#include "opforge/rng.hpp"

namespace opforge {

/// The eleven operations, in report order (class 0 "Orig" is not an
/// operation and lives in the dataset layer).
enum class OpKind { GC, HE, UM, MeanF, GF, MedF, WF, Sca, Rot, JPEG, JP2 };

constexpr int kOpKindCount = 11;

const std::vector<std::string>& op_kind_names();
std::string to_string(OpKind kind);
OpKind op_kind_from_string(const std::string& name);

/// One operation with sampled parameters; only the fields of the active
/// kind are meaningful.
struct OperationSpec {
  OpKind kind = OpKind::GC;
  double gamma = 0.0;    // GC
  double sigma = 0.0;    // UM, GF
  double lambda = 0.0;   // UM
  int window = 0;        // MeanF, GF, MedF, WF
  double factor = 0.0;   // Sca
  double degrees = 0.0;  // Rot
  int quality = 0;       // JPEG
  double ratio = 0.0;    // JP2

  /// Throws unless the parameters lie in the documented ranges.
  void validate() const;

  nlohmann::json params_json() const;
  nlohmann::json to_json() const;
  static OperationSpec from_json(const nlohmann::json& j);
};

/// Draws parameters for one operation: discrete sets picked uniformly,
/// continuous ranges sampled uniformly, scale direction up/down with equal
/// probability.
OperationSpec sample_operation(OpKind kind, Rng& rng);

GrayImage gamma_correct(const GrayImage& img, double gamma);
GrayImage hist_equalize(const GrayImage& img);
GrayImage unsharp_mask(const GrayImage& img, double sigma, double lambda);

enum class SmoothKind { Mean, Gaussian };
GrayImage linear_smooth(const GrayImage& img, SmoothKind kind, int window, double sigma = 0.0);

GrayImage median_filter(const GrayImage& img, int window);
GrayImage wiener_filter(const GrayImage& img, int window);
GrayImage resample_scale(const GrayImage& img, double factor);
GrayImage rotate(const GrayImage& img, double degrees);

/// 8x8 DCT / quantization round trip without entropy coding (which is
/// lossless and leaves no pixel-domain artifact).
GrayImage jpeg_roundtrip(const GrayImage& img, int quality);

/// Standard luminance table under the IJG quality scaling rule.
std::array<int, 64> jpeg_quant_table(int quality);

struct Jp2Result {
  GrayImage image;
  double step = 0.0;     // quantizer step selected by the rate search
  double bitrate = 0.0;  // empirical-entropy estimate, bits/pixel
};

/// CDF 9/7 wavelet round trip with a uniform quantizer whose step is
/// chosen so the entropy estimate of the quantized coefficients meets
/// 8/ratio bits/pixel. An approximation of JPEG 2000 distortion: no
/// EBCOT, but the same wavelet-domain quantization footprint.
Jp2Result jp2_roundtrip_info(const GrayImage& img, double ratio);
GrayImage jp2_roundtrip(const GrayImage& img, double ratio);

GrayImage apply(const GrayImage& img, const OperationSpec& spec);

/// Symmetric (edge-repeating mirror) index used by the spatial filters.
int mirror_index(int i, int n);

}  // namespace opforge
