#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "lenerf/render/volume.hpp"

namespace lenerf {

namespace detail {
inline unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace detail

/// Binary PPM (P6, 8-bit) from the first three channels; values clamped to [0, 1].
template <class T>
void write_ppm(const std::string& path, const Image<T>& img) {
  if (img.channels() < 3) throw ConfigError("write_ppm: image needs 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (Index r = 0; r < img.height * img.width; ++r)
    for (Index c = 0; c < 3; ++c) f.put(static_cast<char>(detail::to_byte(static_cast<double>(img.pixels(r, c)))));
}

/// Binary PGM (P5, 8-bit) from channel 0.
template <class T>
void write_pgm(const std::string& path, const Image<T>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (Index r = 0; r < img.height * img.width; ++r)
    f.put(static_cast<char>(detail::to_byte(static_cast<double>(img.pixels(r, 0)))));
}

/// Reads P5 or P6 with maxval 255 into [0, 1] doubles.
inline Image<double> read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string magic;
  Index w = 0, h = 0;
  int maxval = 0;
  f >> magic >> w >> h >> maxval;
  f.get();
  if ((magic != "P5" && magic != "P6") || maxval != 255 || w <= 0 || h <= 0)
    throw InputError("'" + path + "' is not an 8-bit P5/P6 image");
  const Index c = magic == "P6" ? 3 : 1;
  Mat<double> px(h * w, c);
  for (Index r = 0; r < h * w; ++r)
    for (Index k = 0; k < c; ++k) {
      const int v = f.get();
      if (v == EOF) throw InputError("'" + path + "' is truncated");
      px(r, k) = v / 255.0;
    }
  return Image<double>(h, w, std::move(px));
}

}  // namespace lenerf
