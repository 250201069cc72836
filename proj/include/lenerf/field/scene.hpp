#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lenerf/core/errors.hpp"

namespace lenerf {

using Vec3 = Eigen::Vector3d;

enum class BlobShape { Gaussian, Sphere };

/// One analytic density component.
///   Gaussian: density * exp(-|x - c|^2 / (2 r^2))
///   Sphere:   density * sigmoid((r - |x - c|) / softness)
struct Blob {
  std::string name;
  BlobShape shape = BlobShape::Sphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.3;
  double softness = 0.02;
  double density = 30.0;
  Vec3 color = Vec3::Constant(0.5);

  double sigma(const Vec3& x) const {
    const double d = (x - center).norm();
    if (shape == BlobShape::Gaussian) return density * std::exp(-d * d / (2.0 * radius * radius));
    const double z = (radius - d) / softness;
    return density * (z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
  }
};

/// Scene with analytic density and color: sigma = sum_b sigma_b and the
/// emitted radiance density sigma*c = sum_b sigma_b c_b.
struct AnalyticSceneSpec {
  double extent = 1.0;
  std::vector<Blob> blobs;

  double sigma(const Vec3& x) const {
    double s = 0;
    for (const auto& b : blobs) s += b.sigma(x);
    return s;
  }

  /// sigma(x) * c(x).
  Vec3 sigma_color(const Vec3& x) const {
    Vec3 acc = Vec3::Zero();
    for (const auto& b : blobs) acc += b.sigma(x) * b.color;
    return acc;
  }

  const Blob& blob(const std::string& name) const {
    for (const auto& b : blobs)
      if (b.name == name) return b;
    throw ConfigError("scene has no blob named '" + name + "'");
  }
  int blob_index(const std::string& name) const {
    for (std::size_t i = 0; i < blobs.size(); ++i)
      if (blobs[i].name == name) return static_cast<int>(i);
    throw ConfigError("scene has no blob named '" + name + "'");
  }
};

/// Text format, one directive per line ('#' starts a comment):
///   extent <half-width>
///   blob <name> <gaussian|sphere> <cx> <cy> <cz> <radius> <softness> <density> <r> <g> <b>
inline AnalyticSceneSpec parse_scene(std::istream& in) {
  AnalyticSceneSpec scene;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    auto fail = [&](const std::string& why) {
      throw ConfigError("scene line " + std::to_string(lineno) + ": " + why);
    };
    if (kw == "extent") {
      if (!(ls >> scene.extent) || scene.extent <= 0) fail("extent must be a positive number");
    } else if (kw == "blob") {
      Blob b;
      std::string shape;
      if (!(ls >> b.name >> shape >> b.center.x() >> b.center.y() >> b.center.z() >> b.radius >> b.softness >>
            b.density >> b.color.x() >> b.color.y() >> b.color.z()))
        fail("expected: blob <name> <shape> cx cy cz radius softness density r g b");
      if (shape == "gaussian")
        b.shape = BlobShape::Gaussian;
      else if (shape == "sphere")
        b.shape = BlobShape::Sphere;
      else
        fail("unknown blob shape '" + shape + "'");
      if (b.radius <= 0 || b.softness <= 0 || b.density < 0) fail("radius/softness must be > 0 and density >= 0");
      scene.blobs.push_back(b);
    } else {
      fail("unknown directive '" + kw + "'");
    }
  }
  return scene;
}

inline AnalyticSceneSpec load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scene file '" + path + "'");
  return parse_scene(f);
}

inline void write_scene(std::ostream& out, const AnalyticSceneSpec& s) {
  out.precision(17);
  out << "extent " << s.extent << "\n";
  for (const auto& b : s.blobs)
    out << "blob " << b.name << ' ' << (b.shape == BlobShape::Gaussian ? "gaussian" : "sphere") << ' '
        << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z() << ' ' << b.radius << ' ' << b.softness << ' '
        << b.density << ' ' << b.color.x() << ' ' << b.color.y() << ' ' << b.color.z() << "\n";
}

/// Two colored spheres (left blue, right red) in front of a gray backdrop sphere.
inline AnalyticSceneSpec two_blob_scene() {
  AnalyticSceneSpec s;
  s.blobs.push_back({"left", BlobShape::Sphere, Vec3(-0.45, 0.05, 0.15), 0.3, 0.025, 40.0, Vec3(0.15, 0.3, 0.9)});
  s.blobs.push_back({"right", BlobShape::Sphere, Vec3(0.45, 0.05, 0.15), 0.3, 0.025, 40.0, Vec3(0.9, 0.2, 0.15)});
  s.blobs.push_back({"body", BlobShape::Sphere, Vec3(0.0, -0.1, -0.45), 0.45, 0.025, 40.0, Vec3(0.6, 0.6, 0.6)});
  return s;
}

}  // namespace lenerf
