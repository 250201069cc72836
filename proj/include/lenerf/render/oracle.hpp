#pragma once

#include <cmath>
#include <vector>

#include "lenerf/field/scene.hpp"
#include "lenerf/render/camera.hpp"
#include "lenerf/render/volume.hpp"

namespace lenerf {

/// Reference evaluation of C = int T(k) sigma(k) c(k) dk on [near, far] with
/// the composite trapezoid rule on `steps` intervals; the optical depth inside
/// T is accumulated with the same rule. Returns black for rays that miss.
inline Vec3 oracle_render(const AnalyticSceneSpec& scene, const Ray& ray, int steps = 4096) {
  if (!ray.hit) return Vec3::Zero();
  const double h = (ray.far - ray.near) / steps;
  double tau = 0.0;
  double prev_sigma = scene.sigma(ray.origin + ray.near * ray.direction);
  Vec3 prev_f = scene.sigma_color(ray.origin + ray.near * ray.direction);
  Vec3 acc = Vec3::Zero();
  for (int i = 1; i <= steps; ++i) {
    const Vec3 x = ray.origin + (ray.near + i * h) * ray.direction;
    const double sig = scene.sigma(x);
    const Vec3 sc = scene.sigma_color(x);
    const double tau_next = tau + 0.5 * h * (prev_sigma + sig);
    acc += 0.5 * h * (std::exp(-tau) * prev_f + std::exp(-tau_next) * sc);
    tau = tau_next;
    prev_sigma = sig;
    prev_f = sc;
  }
  return acc;
}

/// Opacity contributed by one blob along the ray (occlusion by the whole scene included).
inline double oracle_blob_opacity(const AnalyticSceneSpec& scene, const Ray& ray, int blob, int steps = 2048) {
  if (!ray.hit) return 0.0;
  const Blob& b = scene.blobs.at(static_cast<std::size_t>(blob));
  const double h = (ray.far - ray.near) / steps;
  double tau = 0.0;
  Vec3 x0 = ray.origin + ray.near * ray.direction;
  double prev_sigma = scene.sigma(x0), prev_b = b.sigma(x0);
  double acc = 0.0;
  for (int i = 1; i <= steps; ++i) {
    const Vec3 x = ray.origin + (ray.near + i * h) * ray.direction;
    const double sig = scene.sigma(x), sb = b.sigma(x);
    const double tau_next = tau + 0.5 * h * (prev_sigma + sig);
    acc += 0.5 * h * (std::exp(-tau) * prev_b + std::exp(-tau_next) * sb);
    tau = tau_next;
    prev_sigma = sig;
    prev_b = sb;
  }
  return acc;
}

/// Oracle image of the analytic scene.
template <class T>
Image<T> oracle_image(const AnalyticSceneSpec& scene, const CameraPose& cam, Index h, Index w, int steps = 4096) {
  const auto rays = generate_rays(cam, h, w, scene.extent);
  Mat<T> px(h * w, 3);
  for (Index r = 0; r < h * w; ++r) {
    const Vec3 c = oracle_render(scene, rays[static_cast<std::size_t>(r)], steps);
    px.row(r) << static_cast<T>(c.x()), static_cast<T>(c.y()), static_cast<T>(c.z());
  }
  return Image<T>(h, w, std::move(px));
}

/// Binary projection of a blob: pixels whose ray accumulates >= `threshold`
/// opacity inside the blob.
inline Image<double> region_projection(const AnalyticSceneSpec& scene, const CameraPose& cam, Index h, Index w,
                                       const std::vector<int>& blobs, double threshold = 0.5) {
  const auto rays = generate_rays(cam, h, w, scene.extent);
  Mat<double> px = Mat<double>::Zero(h * w, 1);
  for (Index r = 0; r < h * w; ++r)
    for (int b : blobs)
      if (oracle_blob_opacity(scene, rays[static_cast<std::size_t>(r)], b) >= threshold) px(r, 0) = 1.0;
  return Image<double>(h, w, std::move(px));
}

}  // namespace lenerf
