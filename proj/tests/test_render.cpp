#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lenerf/render/oracle.hpp"
#include "lenerf/render/upsample.hpp"
#include "lenerf/train/gradcheck.hpp"

using namespace lenerf;

namespace {

/// sigma0 and color c everywhere.
FieldFn<double> slab(double sigma0, Vec3 c) {
  return [=](const Mat<double>& p) {
    Mat<double> f(p.rows(), 3);
    for (Index i = 0; i < p.rows(); ++i) f.row(i) << c.x(), c.y(), c.z();
    return std::make_pair(f, Mat<double>::Constant(p.rows(), 1, sigma0));
  };
}

Ray unit_ray() {
  Ray r;
  r.origin = Vec3(0, 0, 0.5);
  r.direction = Vec3(0, 0, -1);
  r.near = 0;
  r.far = 1;
  return r;
}

/// Color of an analytic scene as a field: c = (sigma c) / sigma.
FieldFn<double> scene_field(const AnalyticSceneSpec& s) {
  return [&s](const Mat<double>& p) {
    Mat<double> f(p.rows(), 3), sg(p.rows(), 1);
    for (Index i = 0; i < p.rows(); ++i) {
      const Vec3 x = p.row(i).transpose();
      const double sig = s.sigma(x);
      const Vec3 sc = s.sigma_color(x);
      sg(i, 0) = sig;
      const Vec3 c = sig > 0 ? Vec3(sc / sig) : Vec3::Zero();
      f.row(i) << c.x(), c.y(), c.z();
    }
    return std::make_pair(f, sg);
  };
}

}  // namespace

TEST(Camera, CenterPixelLooksDownAxis) {
  const auto rays = generate_rays(orbit_pose(0, 0, 3, 0.8), 3, 3);
  EXPECT_NEAR((rays[4].direction - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
}

TEST(Camera, SmallFovCollapsesCorners) {
  const auto rays = generate_rays(orbit_pose(0, 0, 3, 1e-6), 2, 2);
  EXPECT_LT(std::acos(std::min(1.0, -rays[0].direction.z())), 1e-6);
}

TEST(Camera, TwoByTwoQuarterPi) {
  // fov = pi/2 at distance 1: tan(fov/2) = 1, pixel centers at u, v = +-0.5.
  CameraPose c = orbit_pose(0, 0, 1, std::numbers::pi / 2);
  const auto rays = generate_rays(c, 2, 2);
  const double n = std::sqrt(1.5);
  EXPECT_NEAR((rays[0].direction - Vec3(-0.5, 0.5, -1) / n).norm(), 0.0, 1e-15);
  EXPECT_NEAR((rays[3].direction - Vec3(0.5, -0.5, -1) / n).norm(), 0.0, 1e-15);
}

TEST(Camera, DegeneratePoseThrows) {
  CameraPose c;
  c.up = Vec3(0, 0, 1);
  EXPECT_THROW(generate_rays(c, 2, 2), ConfigError);
  c = CameraPose{};
  c.fov = 0;
  EXPECT_THROW(generate_rays(c, 2, 2), ConfigError);
}

TEST(Renderer, ZeroDensityIsBlack) {
  auto out = render_ray<double>(slab(0.0, Vec3(1, 1, 1)), unit_ray(), 32, false, 0);
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(Renderer, SlabClosedForm) {
  const Vec3 c(0.2, 0.5, 0.9);
  const double want = 1 - std::exp(-1.0);
  auto out = render_ray<double>(slab(1.0, c), unit_ray(), 256, false, 0);
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(out(k) - c(k) * want) / (c(k) * want), 1e-3);
  auto strat = render_ray<double>(slab(1.0, c), unit_ray(), 256, true, 9);
  EXPECT_LT(std::abs(strat(0) - c(0) * want) / (c(0) * want), 1e-3);
}

TEST(Renderer, WeightsAreSubProbability) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> sig(16), del(16, 0.1), w(16);
    for (auto& s : sig) s = 50 * rng.uniform();
    composite_weights(sig.data(), del.data(), 16, w.data());
    double sum = 0;
    for (double x : w) sum += x;
    EXPECT_LE(sum, 1.0 + 1e-12);
  }
}

TEST(Renderer, NonFiniteFieldThrows) {
  auto bad = [](const Mat<double>& p) {
    return std::make_pair(Mat<double>::Zero(p.rows(), 3), Mat<double>::Constant(p.rows(), 1, NAN));
  };
  EXPECT_THROW(render_ray<double>(bad, unit_ray(), 8, false, 0), NumericError);
}

TEST(Renderer, ConvergesMonotonicallyOnSmoothField) {
  AnalyticSceneSpec s;
  s.blobs.push_back({"g", BlobShape::Gaussian, Vec3(0.1, 0, 0), 0.35, 0, 6.0, Vec3(0.8, 0.3, 0.4)});
  Ray r;
  r.origin = Vec3(0.05, 0.02, 3);
  ASSERT_TRUE(clip_to_cube(r, 1.0));
  const Vec3 ref = oracle_render(s, r, 65536);
  double prev = 1e9;
  for (Index n : {16, 32, 64, 128}) {
    const double err = (render_ray<double>(scene_field(s), r, n, false, 0) - ref).norm();
    EXPECT_LE(err, prev + 1e-6);
    prev = err;
  }
}

TEST(Renderer, MaskClosedForms) {
  auto dens = [](double s) {
    return [s](const Mat<double>& p) { return Mat<double>::Constant(p.rows(), 1, s); };
  };
  auto m = [](double v) {
    return [v](const Mat<double>& p) { return Mat<double>::Constant(p.rows(), 1, v); };
  };
  EXPECT_EQ(render_mask<double>(m(0.0), dens(1.0), unit_ray(), 64, false, 0), 0.0);
  EXPECT_NEAR(render_mask<double>(m(0.5), dens(1.0), unit_ray(), 256, false, 0), 0.5 * (1 - std::exp(-1.0)), 1e-4);
  EXPECT_NEAR(render_mask<double>(m(1.0), dens(60.0), unit_ray(), 256, false, 0), 1.0, 1e-12);
  // m = kappa is kappa times the discrete opacity.
  std::vector<double> sig(32, 1.0), del(32, 1.0 / 32), w(32);
  composite_weights(sig.data(), del.data(), 32, w.data());
  double op = 0;
  for (double x : w) op += x;
  EXPECT_NEAR(render_mask<double>(m(0.3), dens(1.0), unit_ray(), 32, false, 0), 0.3 * op, 1e-15);
}

TEST(Renderer, SigmaGradientMatchesFiniteDifferences) {
  Rng rng(3);
  Mat<double> sigma(2, 10);
  for (Index i = 0; i < sigma.size(); ++i) sigma(i) = 3 * rng.uniform();
  const Mat<double> deltas = Mat<double>::Constant(2, 10, 0.1);
  const Mat<double> feat = random_normal<double>(20, 3, 1.0, rng);
  auto g = gradient_check(
      [&](ad::Tape<double>& t, const std::vector<ad::Var<double>>& v) {
        auto w = ad::render_weights(v[0], deltas);
        return ad::sum(ad::weighted_sum(w, t.constant(feat)));
      },
      {sigma});
  EXPECT_LT(g.max_rel_error, 1e-6);
}

TEST(Oracle, ZeroDensityAndSlab) {
  AnalyticSceneSpec empty;
  EXPECT_EQ(oracle_render(empty, unit_ray(), 128).norm(), 0.0);
  // A wide flat Gaussian is constant to ~1e-12 over the unit segment.
  AnalyticSceneSpec slab_scene;
  slab_scene.blobs.push_back({"s", BlobShape::Gaussian, Vec3(0, 0, 0), 1e6, 0, 1.0, Vec3(0.4, 0.4, 0.4)});
  const Vec3 c = oracle_render(slab_scene, unit_ray(), 65536);
  EXPECT_LT(std::abs(c.x() - 0.4 * (1 - std::exp(-1.0))) / (0.4 * (1 - std::exp(-1.0))), 1e-6);
}

TEST(Oracle, SelfConvergentOnBlob) {
  AnalyticSceneSpec s;
  s.blobs.push_back({"g", BlobShape::Gaussian, Vec3(0, 0, 0), 0.3, 0, 8.0, Vec3(0.2, 0.7, 0.5)});
  Ray r;
  r.origin = Vec3(0, 0, 3);
  ASSERT_TRUE(clip_to_cube(r, 1.0));
  const Vec3 a = oracle_render(s, r, 16384), b = oracle_render(s, r, 32768);
  EXPECT_LT((a - b).norm() / b.norm(), 1e-5);
}

TEST(Upsampler, IdentityMixKeepsConstantImage) {
  Upsampler<double> u(4);
  ParamStore<double> s;
  u.init_params(s);
  Mat<double> px(9, 4);
  px.rowwise() = Eigen::RowVector4d(0.3, 0.6, 0.1, 0.9);
  auto out = u.apply(s, Image<double>(3, 3, px));
  ASSERT_EQ(out.height, 6);
  for (Index r = 0; r < out.pixels.rows(); ++r)
    EXPECT_NEAR((out.pixels.row(r) - Eigen::RowVector3d(0.3, 0.6, 0.1)).norm(), 0.0, 1e-15);
}

TEST(Upsampler, SinglePixelBecomesTwoByTwo) {
  Upsampler<double> u(3);
  ParamStore<double> s;
  u.init_params(s);
  Mat<double> px(1, 3);
  px << 0.25, 0.5, 0.75;
  auto out = u.apply(s, Image<double>(1, 1, px));
  ASSERT_EQ(out.pixels.rows(), 4);
  for (Index r = 0; r < 4; ++r) EXPECT_NEAR((out.pixels.row(r) - px.row(0)).norm(), 0.0, 1e-15);
}

TEST(Upsampler, RandomMixMatchesRecomputation) {
  Upsampler<double> u(4);
  ParamStore<double> s;
  u.init_params(s);
  Rng rng(6);
  s.at("upsampler.mix").value = random_normal<double>(4, 3, 1.0, rng);
  s.at("upsampler.bias").value = random_normal<double>(1, 3, 1.0, rng);
  Mat<double> px(1, 4);
  px << 0.1, 0.2, 0.3, 0.4;
  auto out = u.apply(s, Image<double>(1, 1, px));
  const Mat<double> want = px * s.at("upsampler.mix").value + s.at("upsampler.bias").value;
  EXPECT_NEAR((out.pixels.row(3) - want).norm(), 0.0, 1e-14);
  EXPECT_THROW(Upsampler<double>(2), ConfigError);
}
