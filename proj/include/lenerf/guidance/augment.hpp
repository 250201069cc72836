#pragma once

#include <cmath>

#include "lenerf/core/params.hpp"
#include "lenerf/render/resample.hpp"
#include "lenerf/render/volume.hpp"

namespace lenerf {

struct AugmentConfig {
  bool enabled = true;
  double crop_area = 0.9;   // fraction of the image area kept by the crop
  double flip_prob = 0.5;
};

/// The augmentation drawn for `seed` as one sparse resampling operator:
/// random crop of `crop_area`, bilinear resize back to h x w, optional
/// horizontal flip.
template <class T>
ad::SparseMat<T> augment_operator(Index h, Index w, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.enabled) {
    ad::SparseMat<T> id(h * w, h * w);
    id.setIdentity();
    return id;
  }
  Rng rng(mix_seed(seed, 0xa06));
  const double side = std::sqrt(std::clamp(cfg.crop_area, 1e-6, 1.0));
  const double oy = rng.uniform() * (1.0 - side) * static_cast<double>(h);
  const double ox = rng.uniform() * (1.0 - side) * static_cast<double>(w);
  const bool flip = rng.uniform() < cfg.flip_prob;
  return bilinear_operator<T>(h, w, h, w, [=](Index i, Index j) {
    const double jj = flip ? static_cast<double>(w - 1 - j) : static_cast<double>(j);
    return std::pair<double, double>(oy + (static_cast<double>(i) + 0.5) * side, ox + (jj + 0.5) * side);
  });
}

template <class T>
ad::Var<T> augment(const ad::Var<T>& image, Index h, Index w, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.enabled) return image;
  return ad::linear_map(augment_operator<T>(h, w, cfg, seed), image, "augment");
}

template <class T>
Image<T> augment(const Image<T>& img, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.enabled) return img;
  return Image<T>(img.height, img.width, augment_operator<T>(img.height, img.width, cfg, seed) * img.pixels);
}

}  // namespace lenerf
