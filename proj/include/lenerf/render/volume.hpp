#pragma once

// Discretised volume rendering. For samples k_0 < ... < k_{S-1} on a ray:
//   delta_i = k_{i+1} - k_i   (the last interval closes the segment so that
//                              sum_i delta_i = far - near)
//   alpha_i = 1 - exp(-sigma_i delta_i)
//   T_i     = prod_{j<i} (1 - alpha_j)
//   w_i     = T_i alpha_i,    pixel = sum_i w_i f_i
// Background is black: leftover transmittance adds nothing.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lenerf/core/ops.hpp"
#include "lenerf/core/params.hpp"
#include "lenerf/render/camera.hpp"

namespace lenerf {

/// Image stored as (height * width) x channels, row-major pixel order.
template <class T>
struct Image {
  Index height = 0;
  Index width = 0;
  Mat<T> pixels;

  Image() = default;
  Image(Index h, Index w, Mat<T> p) : height(h), width(w), pixels(std::move(p)) {
    if (pixels.rows() != h * w) throw ConfigError("image: pixel count does not match size");
  }
  static Image constant(Index h, Index w, Index c, T v) { return Image(h, w, Mat<T>::Constant(h * w, c, v)); }
  Index channels() const { return pixels.cols(); }
  T& at(Index i, Index j, Index c) { return pixels(i * width + j, c); }
  T at(Index i, Index j, Index c) const { return pixels(i * width + j, c); }
};

/// Sample positions for a bundle of rays: points are ray-major (ray r, sample s
/// at row r*S + s).
template <class T>
struct RaySamples {
  Index rays = 0;
  Index per_ray = 0;
  Mat<T> points;  // (R*S) x 3
  Mat<T> depths;  // R x S
  Mat<T> deltas;  // R x S, zero on rays that miss the scene
};

/// Midpoint sampling when `stratified` is false; otherwise one uniform jitter
/// per bin, seeded per ray from (seed, ray index).
template <class T>
RaySamples<T> make_samples(const std::vector<Ray>& rays, Index per_ray, bool stratified, std::uint64_t seed) {
  if (per_ray < 2) throw ConfigError("volume rendering needs at least 2 samples per ray");
  RaySamples<T> s;
  s.rays = static_cast<Index>(rays.size());
  s.per_ray = per_ray;
  s.points.resize(s.rays * per_ray, 3);
  s.depths.resize(s.rays, per_ray);
  s.deltas.resize(s.rays, per_ray);
  std::vector<double> k(static_cast<std::size_t>(per_ray));
  for (Index r = 0; r < s.rays; ++r) {
    const Ray& ray = rays[static_cast<std::size_t>(r)];
    if (!(ray.far > ray.near)) throw ConfigError("ray has near >= far");
    const double bin = (ray.far - ray.near) / static_cast<double>(per_ray);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    for (Index i = 0; i < per_ray; ++i) {
      const double off = stratified ? rng.uniform() : 0.5;
      k[static_cast<std::size_t>(i)] = ray.near + (static_cast<double>(i) + off) * bin;
    }
    for (Index i = 0; i < per_ray; ++i) {
      const double ki = k[static_cast<std::size_t>(i)];
      const double next = i + 1 < per_ray ? k[static_cast<std::size_t>(i + 1)] : ray.far + (k[0] - ray.near);
      s.depths(r, i) = static_cast<T>(ki);
      s.deltas(r, i) = ray.hit ? static_cast<T>(next - ki) : T(0);
      const Vec3 p = ray.origin + ki * ray.direction;
      s.points.row(r * per_ray + i) << static_cast<T>(p.x()), static_cast<T>(p.y()), static_cast<T>(p.z());
    }
  }
  return s;
}

/// w_i = T_i alpha_i for one ray. Writes `n` weights.
template <class T>
void composite_weights(const T* sigma, const T* delta, Index n, T* w) {
  T trans = T(1);
  for (Index i = 0; i < n; ++i) {
    const T keep = std::exp(-sigma[i] * delta[i]);
    w[i] = trans * (T(1) - keep);
    trans *= keep;
  }
}

namespace ad {

/// sigma (R x S) -> weights (R x S) under the quadrature above.
template <class T>
Var<T> render_weights(const Var<T>& sigma, const Mat<T>& deltas) {
  if (sigma.rows() != deltas.rows() || sigma.cols() != deltas.cols())
    throw ContractError("render_weights: sigma and deltas differ in shape");
  const Index rays = sigma.rows(), n = sigma.cols();
  Mat<T> w(rays, n);
  for (Index r = 0; r < rays; ++r) composite_weights(&sigma.value()(r, 0), &deltas(r, 0), n, &w(r, 0));
  const int is = sigma.id();
  return sigma.tape().push(std::move(w), "render_weights", sigma.requires_grad(), [is, deltas](Tape<T>& tp, int self) {
    // dL/dsigma_k = delta_k * (g_k T_{k+1} - sum_{i>k} g_i w_i)
    const Mat<T>& sg = tp.value(is);
    const Mat<T>& wv = tp.value(self);
    const Mat<T>& g = tp.grad(self);
    Mat<T>& gs = tp.grad_acc(is);
    const Index n = sg.cols();
    for (Index r = 0; r < sg.rows(); ++r) {
      T suffix = T(0);
      // T_{k+1} computed forward, consumed backward.
      std::vector<T> trans_next(static_cast<std::size_t>(n));
      T trans = T(1);
      for (Index k = 0; k < n; ++k) {
        trans *= std::exp(-sg(r, k) * deltas(r, k));
        trans_next[static_cast<std::size_t>(k)] = trans;
      }
      for (Index k = n - 1; k >= 0; --k) {
        gs(r, k) += deltas(r, k) * (g(r, k) * trans_next[static_cast<std::size_t>(k)] - suffix);
        suffix += g(r, k) * wv(r, k);
      }
    }
  });
}

/// weights (R x S), per-sample values ((R*S) x C) -> per-ray sums (R x C).
template <class T>
Var<T> weighted_sum(const Var<T>& weights, const Var<T>& values) {
  const Index rays = weights.rows(), n = weights.cols();
  if (values.rows() != rays * n) throw ContractError("weighted_sum: values must have R*S rows");
  const Index c = values.cols();
  Mat<T> y(rays, c);
  for (Index r = 0; r < rays; ++r) y.row(r) = weights.value().row(r) * values.value().middleRows(r * n, n);
  const int iw = weights.id(), iv = values.id();
  return weights.tape().push(std::move(y), "weighted_sum", weights.requires_grad() || values.requires_grad(),
                             [iw, iv, rays, n](Tape<T>& tp, int self) {
                               const Mat<T>& g = tp.grad(self);
                               if (tp.requires_grad(iw)) {
                                 Mat<T>& gw = tp.grad_acc(iw);
                                 const Mat<T>& v = tp.value(iv);
                                 for (Index r = 0; r < rays; ++r)
                                   gw.row(r).noalias() += (v.middleRows(r * n, n) * g.row(r).transpose()).transpose();
                               }
                               if (tp.requires_grad(iv)) {
                                 Mat<T>& gv = tp.grad_acc(iv);
                                 const Mat<T>& w = tp.value(iw);
                                 for (Index r = 0; r < rays; ++r)
                                   gv.middleRows(r * n, n).noalias() += w.row(r).transpose() * g.row(r);
                               }
                             });
}

}  // namespace ad

/// Per-ray outputs of a taped render.
template <class T>
struct TapedRender {
  ad::Var<T> pixels;   // R x C
  ad::Var<T> weights;  // R x S
};

/// Composites per-sample (features, sigma) given in the RaySamples layout.
template <class T>
TapedRender<T> composite(const ad::Var<T>& features, const ad::Var<T>& sigma, const RaySamples<T>& samples) {
  ad::Var<T> w = ad::render_weights(ad::reshape(sigma, samples.rays, samples.per_ray), samples.deltas);
  return {ad::weighted_sum(w, features), w};
}

/// A field maps sample points ((N x 3)) to features (N x C) and density (N x 1).
template <class T>
using FieldFn = std::function<std::pair<Mat<T>, Mat<T>>(const Mat<T>&)>;

/// Renders one ray through an arbitrary field. Throws NumericError naming the
/// first sample whose field output is not finite.
template <class T>
Eigen::Matrix<T, Eigen::Dynamic, 1> render_ray(const FieldFn<T>& field, const Ray& ray, Index per_ray, bool stratified,
                                               std::uint64_t seed) {
  const RaySamples<T> s = make_samples<T>({ray}, per_ray, stratified, seed);
  auto [feat, sigma] = field(s.points);
  if (feat.rows() != per_ray || sigma.rows() != per_ray) throw ContractError("render_ray: field returned wrong count");
  for (Index i = 0; i < per_ray; ++i)
    if (!feat.row(i).allFinite() || !std::isfinite(sigma(i, 0)))
      throw NumericError("render_ray", "field output at sample " + std::to_string(i));
  std::vector<T> w(static_cast<std::size_t>(per_ray));
  Eigen::Matrix<T, 1, Eigen::Dynamic> sig = sigma.col(0).transpose();
  composite_weights(sig.data(), s.deltas.data(), per_ray, w.data());
  Eigen::Matrix<T, Eigen::Dynamic, 1> out = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(feat.cols());
  for (Index i = 0; i < per_ray; ++i) out += w[static_cast<std::size_t>(i)] * feat.row(i).transpose();
  return out;
}

/// Mask rendering: sum_i w_i m_i with weights from `density`.
template <class T>
T render_mask(const std::function<Mat<T>(const Mat<T>&)>& mask, const std::function<Mat<T>(const Mat<T>&)>& density,
              const Ray& ray, Index per_ray, bool stratified, std::uint64_t seed) {
  FieldFn<T> f = [&](const Mat<T>& pts) { return std::make_pair(mask(pts), density(pts)); };
  return render_ray<T>(f, ray, per_ray, stratified, seed)(0);
}

}  // namespace lenerf
