#pragma once

#include <vector>

namespace opforge::wavelet {

/// In-place multi-level CDF 9/7 transform of a row-major width x height
/// buffer. Levels operate on the top-left low-pass region; each 1-D pass
/// splits a length-n signal into ceil(n/2) low-pass then floor(n/2)
/// high-pass coefficients, using whole-point symmetric extension at the
/// borders. cdf97_inverse_2d is its exact inverse up to float rounding.
void cdf97_forward_2d(std::vector<double>& data, int width, int height, int levels);
void cdf97_inverse_2d(std::vector<double>& data, int width, int height, int levels);

/// Empirical entropy of values after midtread quantization q = round(x / step),
/// in bits per value.
double quantized_entropy(const std::vector<double>& data, double step);

}  // namespace opforge::wavelet
