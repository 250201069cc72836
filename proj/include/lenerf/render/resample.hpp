#pragma once

#include <cmath>
#include <vector>

#include "lenerf/core/ops.hpp"

namespace lenerf {

/// Sparse operator that bilinearly samples an (h x w) image at output pixel
/// centers mapped through `src_of`, which returns continuous source
/// coordinates (row, col) in pixel units (pixel centers at i + 0.5).
/// Samples are clamped to the image border.
template <class T, class F>
ad::SparseMat<T> bilinear_operator(Index h, Index w, Index out_h, Index out_w, F src_of) {
  std::vector<Eigen::Triplet<T>> trip;
  trip.reserve(static_cast<std::size_t>(out_h * out_w * 4));
  for (Index i = 0; i < out_h; ++i) {
    for (Index j = 0; j < out_w; ++j) {
      auto [sy, sx] = src_of(i, j);
      double fy = std::clamp(sy - 0.5, 0.0, static_cast<double>(h - 1));
      double fx = std::clamp(sx - 0.5, 0.0, static_cast<double>(w - 1));
      Index y0 = std::min<Index>(static_cast<Index>(std::floor(fy)), std::max<Index>(h - 2, 0));
      Index x0 = std::min<Index>(static_cast<Index>(std::floor(fx)), std::max<Index>(w - 2, 0));
      const double ty = h > 1 ? fy - static_cast<double>(y0) : 0.0;
      const double tx = w > 1 ? fx - static_cast<double>(x0) : 0.0;
      const Index y1 = h > 1 ? y0 + 1 : y0, x1 = w > 1 ? x0 + 1 : x0;
      const Index row = i * out_w + j;
      auto put = [&](Index y, Index x, double wt) {
        if (wt != 0.0) trip.emplace_back(row, y * w + x, static_cast<T>(wt));
      };
      put(y0, x0, (1 - ty) * (1 - tx));
      put(y0, x1, (1 - ty) * tx);
      put(y1, x0, ty * (1 - tx));
      put(y1, x1, ty * tx);
    }
  }
  ad::SparseMat<T> m(out_h * out_w, h * w);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Half-pixel-aligned bilinear resize.
template <class T>
ad::SparseMat<T> resize_operator(Index h, Index w, Index out_h, Index out_w) {
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  return bilinear_operator<T>(h, w, out_h, out_w, [=](Index i, Index j) {
    return std::pair<double, double>((static_cast<double>(i) + 0.5) * sy, (static_cast<double>(j) + 0.5) * sx);
  });
}

/// Block-average pooling of an (h x w) image into (h/f x w/f).
template <class T>
ad::SparseMat<T> pool_operator(Index h, Index w, Index factor) {
  if (factor < 1 || h % factor || w % factor) throw ConfigError("pool_operator: size not divisible by factor");
  const Index oh = h / factor, ow = w / factor;
  std::vector<Eigen::Triplet<T>> trip;
  const T wt = T(1) / static_cast<T>(factor * factor);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) trip.emplace_back((i / factor) * ow + j / factor, i * w + j, wt);
  ad::SparseMat<T> m(oh * ow, h * w);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace lenerf
