#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace opforge {

/// 8-bit single-channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }

  bool valid() const { return width > 0 && height > 0 && pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool operator==(const GrayImage& o) const { return width == o.width && height == o.height && pixels == o.pixels; }
};

/// Round half away from zero and clamp to [0, 255]. The single rounding
/// rule used wherever an 8-bit result is produced.
std::uint8_t quantize_u8(double v);

/// Binary PGM (P5, maxval 255).
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

double psnr(const GrayImage& a, const GrayImage& b);
double mse(const GrayImage& a, const GrayImage& b);

}  // namespace opforge
