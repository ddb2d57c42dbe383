#include "opforge/image.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace opforge {

GrayImage::GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("GrayImage: non-positive dims " + std::to_string(w) + "x" + std::to_string(h));
  pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

std::uint8_t quantize_u8(double v) {
  const double r = std::round(v);  // half away from zero
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw std::runtime_error(path + ": malformed PGM header");
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > std::numeric_limits<int>::max()) throw std::runtime_error(path + ": PGM header value out of range");
    ch = in.get();
  }
  if (ch != EOF) in.unget();
  return static_cast<int>(v);
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw std::runtime_error(path + ": not a binary grayscale PGM (magic '" + std::string{m0, m1} + "', expected 'P5')");
  const int w = next_header_int(in, path);
  const int h = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (w <= 0 || h <= 0) throw std::runtime_error(path + ": bad PGM dimensions");
  if (maxval != 255) throw std::runtime_error(path + ": unsupported PGM maxval " + std::to_string(maxval) + " (need 255)");
  in.get();  // single whitespace byte before raster
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw std::runtime_error(path + ": truncated PGM raster");
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  if (!img.valid()) throw std::invalid_argument(path + ": refusing to write invalid image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

double mse(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("mse: image dims differ");
  double acc = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr(const GrayImage& a, const GrayImage& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

}  // namespace opforge
