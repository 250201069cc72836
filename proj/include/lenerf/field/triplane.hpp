#pragma once

#include <array>
#include <cmath>

#include "lenerf/core/errors.hpp"
#include "lenerf/core/ops.hpp"

namespace lenerf {

/// Three axis-aligned feature planes (XY, XZ, YZ), each R x R texels of C
/// channels, covering the cube [-extent, extent]^3. Texel (u, v) of plane p is
/// row p*R*R + v*R + u; nodes sit on the cube faces (corner-aligned grid).
template <class T>
struct TriPlaneSet {
  Mat<T> data;
  Index resolution = 0;
  T extent = T(1);

  TriPlaneSet() = default;
  TriPlaneSet(Mat<T> d, Index r, T e) : data(std::move(d)), resolution(r), extent(e) { validate(); }

  Index channels() const { return data.cols(); }
  static Index row_of(Index plane, Index u, Index v, Index r) { return plane * r * r + v * r + u; }

  void validate() const {
    if (resolution < 2) throw ConfigError("tri-plane resolution must be at least 2");
    if (data.rows() != 3 * resolution * resolution) throw ConfigError("tri-plane data must hold exactly 3 planes");
    if (!data.allFinite()) throw InputError("tri-plane values must be finite");
  }
};

// Coordinate pairs (u, v) each plane reads from a point.
inline constexpr std::array<std::array<int, 2>, 3> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}}};

namespace detail {

// Continuous texel coordinate with clamp-to-edge; `inside` is false when clamped.
template <class T>
struct Lerp1 {
  Index i0;
  T t;
  bool inside;
};

template <class T>
Lerp1<T> locate(T c, Index r, T extent) {
  const T f = (c + extent) / (T(2) * extent) * static_cast<T>(r - 1);
  const T hi = static_cast<T>(r - 1);
  const bool inside = f >= T(0) && f <= hi;
  const T fc = std::clamp(f, T(0), hi);
  Index i0 = static_cast<Index>(std::floor(fc));
  if (i0 > r - 2) i0 = r - 2;
  return {i0, fc - static_cast<T>(i0), inside};
}

}  // namespace detail

/// Feature at one point: sum of the three bilinear plane samples.
template <class T>
Eigen::Matrix<T, 1, Eigen::Dynamic> sample_feature(const TriPlaneSet<T>& planes, const Eigen::Matrix<T, 3, 1>& x) {
  if (!x.allFinite()) throw InputError("sample_feature: non-finite position");
  const Index r = planes.resolution;
  Eigen::Matrix<T, 1, Eigen::Dynamic> f = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(planes.channels());
  for (Index p = 0; p < 3; ++p) {
    const auto lu = ::lenerf::detail::locate(x(kPlaneAxes[p][0]), r, planes.extent);
    const auto lv = ::lenerf::detail::locate(x(kPlaneAxes[p][1]), r, planes.extent);
    const Index b = p * r * r;
    f += (T(1) - lu.t) * (T(1) - lv.t) * planes.data.row(b + lv.i0 * r + lu.i0);
    f += lu.t * (T(1) - lv.t) * planes.data.row(b + lv.i0 * r + lu.i0 + 1);
    f += (T(1) - lu.t) * lv.t * planes.data.row(b + (lv.i0 + 1) * r + lu.i0);
    f += lu.t * lv.t * planes.data.row(b + (lv.i0 + 1) * r + lu.i0 + 1);
  }
  return f;
}

namespace ad {

/// Batched tri-plane lookup: planes (3R^2 x C), positions (N x 3) -> N x C.
/// Differentiable in both the plane texels and the positions (zero positional
/// gradient along a clamped axis).
template <class T>
Var<T> triplane_sample(const Var<T>& planes, const Var<T>& pos, Index r, T extent) {
  if (planes.rows() != 3 * r * r) throw ContractError("triplane_sample: plane tensor has wrong row count");
  if (pos.cols() != 3) throw ContractError("triplane_sample: positions must be N x 3");
  if (!pos.value().allFinite()) throw InputError("triplane_sample: non-finite position");
  const Index n = pos.rows(), c = planes.cols();
  const Mat<T>& pv = planes.value();
  const Mat<T>& xv = pos.value();
  Mat<T> y = Mat<T>::Zero(n, c);
  for (Index i = 0; i < n; ++i) {
    for (Index p = 0; p < 3; ++p) {
      const auto lu = ::lenerf::detail::locate(xv(i, kPlaneAxes[p][0]), r, extent);
      const auto lv = ::lenerf::detail::locate(xv(i, kPlaneAxes[p][1]), r, extent);
      const Index b = p * r * r + lv.i0 * r + lu.i0;
      y.row(i) += (T(1) - lu.t) * (T(1) - lv.t) * pv.row(b) + lu.t * (T(1) - lv.t) * pv.row(b + 1) +
                  (T(1) - lu.t) * lv.t * pv.row(b + r) + lu.t * lv.t * pv.row(b + r + 1);
    }
  }
  const int ip = planes.id(), ix = pos.id();
  const bool rg = planes.requires_grad() || pos.requires_grad();
  return planes.tape().push(std::move(y), "triplane_sample", rg, [ip, ix, r, extent](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    const Mat<T>& pv = tp.value(ip);
    const Mat<T>& xv = tp.value(ix);
    const bool want_p = tp.requires_grad(ip), want_x = tp.requires_grad(ix);
    Mat<T>* gp = want_p ? &tp.grad_acc(ip) : nullptr;
    Mat<T>* gx = want_x ? &tp.grad_acc(ix) : nullptr;
    const T dscale = static_cast<T>(r - 1) / (T(2) * extent);
    for (Index i = 0; i < xv.rows(); ++i) {
      for (Index p = 0; p < 3; ++p) {
        const int au = kPlaneAxes[p][0], av = kPlaneAxes[p][1];
        const auto lu = ::lenerf::detail::locate(xv(i, au), r, extent);
        const auto lv = ::lenerf::detail::locate(xv(i, av), r, extent);
        const Index b = p * r * r + lv.i0 * r + lu.i0;
        if (gp) {
          gp->row(b) += (T(1) - lu.t) * (T(1) - lv.t) * g.row(i);
          gp->row(b + 1) += lu.t * (T(1) - lv.t) * g.row(i);
          gp->row(b + r) += (T(1) - lu.t) * lv.t * g.row(i);
          gp->row(b + r + 1) += lu.t * lv.t * g.row(i);
        }
        if (gx) {
          if (lu.inside) {
            const auto d = (T(1) - lv.t) * (pv.row(b + 1) - pv.row(b)) + lv.t * (pv.row(b + r + 1) - pv.row(b + r));
            (*gx)(i, au) += dscale * g.row(i).dot(d);
          }
          if (lv.inside) {
            const auto d = (T(1) - lu.t) * (pv.row(b + r) - pv.row(b)) + lu.t * (pv.row(b + r + 1) - pv.row(b + 1));
            (*gx)(i, av) += dscale * g.row(i).dot(d);
          }
        }
      }
    }
  });
}

}  // namespace ad
}  // namespace lenerf
