#pragma once

#include <cmath>
#include <vector>

#include "lenerf/core/errors.hpp"
#include "lenerf/core/params.hpp"
#include "lenerf/field/scene.hpp"

namespace lenerf {

struct CameraPose {
  Vec3 position = Vec3(0, 0, 3);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3(0, 1, 0);
  double fov = 0.8;  // vertical, radians

  void validate() const {
    const Vec3 view = look_at - position;
    if (!position.allFinite() || !look_at.allFinite() || !up.allFinite()) throw ConfigError("camera: non-finite pose");
    if (view.norm() < 1e-12) throw ConfigError("camera: position coincides with look_at");
    if (up.cross(view).norm() < 1e-9 * up.norm() * view.norm()) throw ConfigError("camera: up is parallel to view");
    if (!(fov > 0 && fov < 3.141592653589793)) throw ConfigError("camera: fov must lie in (0, pi)");
  }
};

/// Camera on a sphere around the origin. Azimuth 0 / elevation 0 sits on +z.
inline CameraPose orbit_pose(double azimuth, double elevation, double radius, double fov) {
  CameraPose c;
  c.position = radius * Vec3(std::cos(elevation) * std::sin(azimuth), std::sin(elevation),
                             std::cos(elevation) * std::cos(azimuth));
  c.fov = fov;
  return c;
}

/// Z_v: uniform azimuth/elevation ranges on a fixed-radius orbit.
struct PoseDistribution {
  double radius = 3.0;
  double azimuth_min = -0.5, azimuth_max = 0.5;
  double elevation_min = -0.25, elevation_max = 0.25;
  double fov = 0.8;

  CameraPose sample(Rng& rng) const {
    const double az = rng.uniform(azimuth_min, azimuth_max);
    const double el = rng.uniform(elevation_min, elevation_max);
    return orbit_pose(az, el, radius, fov);
  }
};

/// r(k) = origin + k * direction for k in [near, far]. Rays that miss the scene
/// cube have hit = false and contribute nothing when rendered.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3(0, 0, -1);
  double near = 0.0;
  double far = 1.0;
  bool hit = true;
};

/// Slab intersection with [-extent, extent]^3. Returns false on a miss.
inline bool clip_to_cube(Ray& ray, double extent) {
  double t0 = 0.0, t1 = 1e30;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin(a), d = ray.direction(a);
    if (std::abs(d) < 1e-15) {
      if (o < -extent || o > extent) return false;
      continue;
    }
    double ta = (-extent - o) / d, tb = (extent - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return false;
  ray.near = t0;
  ray.far = t1;
  return true;
}

/// Pinhole rays through pixel centers, row-major (row 0 at the top).
/// With extent > 0 each ray is clipped to the scene cube; otherwise near/far
/// are left at [0, 2 * distance to look_at].
inline std::vector<Ray> generate_rays(const CameraPose& cam, Index height, Index width, double extent = 0.0) {
  cam.validate();
  if (height < 1 || width < 1) throw ConfigError("generate_rays: image size must be positive");
  const Vec3 forward = (cam.look_at - cam.position).normalized();
  const Vec3 right = forward.cross(cam.up).normalized();
  const Vec3 up = right.cross(forward);
  const double tan_half = std::tan(cam.fov / 2);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double dist = (cam.look_at - cam.position).norm();
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(height * width));
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) {
      const double u = (2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(width) - 1.0) * tan_half * aspect;
      const double v = (1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(height)) * tan_half;
      Ray r;
      r.origin = cam.position;
      r.direction = (forward + u * right + v * up).normalized();
      if (extent > 0) {
        r.hit = clip_to_cube(r, extent);
        if (!r.hit) {
          r.near = std::max(0.0, dist - extent);
          r.far = dist + extent;
        }
      } else {
        r.near = 0.0;
        r.far = 2.0 * dist;
      }
      rays.push_back(r);
    }
  }
  return rays;
}

}  // namespace lenerf
