#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lenerf/core/ops.hpp"

namespace lenerf {

/// Row-major lattice index with x fastest.
inline Index lattice_index(Index i, Index j, Index k, Index g) { return i + g * (j + g * k); }

/// G^3 lattice points spanning [-extent, extent]^3 (node-aligned), x fastest.
template <class T>
Mat<T> lattice_points(Index g, double extent) {
  if (g < 1) throw ConfigError("lattice needs G >= 1");
  Mat<T> p(g * g * g, 3);
  auto coord = [&](Index i) { return g == 1 ? 0.0 : -extent + 2.0 * extent * double(i) / double(g - 1); };
  for (Index k = 0; k < g; ++k)
    for (Index j = 0; j < g; ++j)
      for (Index i = 0; i < g; ++i) {
        const Index r = lattice_index(i, j, k, g);
        p(r, 0) = static_cast<T>(coord(i));
        p(r, 1) = static_cast<T>(coord(j));
        p(r, 2) = static_cast<T>(coord(k));
      }
  return p;
}

/// L_tv = (1/N) sum sqrt(dx^2 + dy^2 + dz^2 + eps) over a gx x gy x gz grid
/// (N = gx gy gz, x fastest) with forward differences and zero difference at
/// the high boundary. m: N x 1.
template <class T>
ad::Var<T> tv_loss(const ad::Var<T>& m, Index gx, Index gy, Index gz, T eps = T(1e-12)) {
  const Index n = gx * gy * gz;
  if (gx < 1 || gy < 1 || gz < 1 || m.rows() != n || m.cols() != 1)
    throw ConfigError("tv_loss: mask grid must be (gx*gy*gz) x 1");
  auto at = [gx, gy](Index i, Index j, Index k) { return i + gx * (j + gy * k); };
  const Mat<T>& v = m.value();
  Mat<T> root(n, 1);
  Mat<T> d(n, 3);
  for (Index k = 0; k < gz; ++k)
    for (Index j = 0; j < gy; ++j)
      for (Index i = 0; i < gx; ++i) {
        const Index r = at(i, j, k);
        d(r, 0) = i + 1 < gx ? v(at(i + 1, j, k), 0) - v(r, 0) : T(0);
        d(r, 1) = j + 1 < gy ? v(at(i, j + 1, k), 0) - v(r, 0) : T(0);
        d(r, 2) = k + 1 < gz ? v(at(i, j, k + 1), 0) - v(r, 0) : T(0);
        root(r, 0) = std::sqrt(d.row(r).squaredNorm() + eps);
      }
  Mat<T> y(1, 1);
  y(0, 0) = root.sum() / static_cast<T>(n);
  const int im = m.id();
  return m.tape().push(std::move(y), "tv_loss", m.requires_grad(), [=](ad::Tape<T>& tp, int self) {
    const T gs = tp.grad(self)(0, 0) / static_cast<T>(n);
    Mat<T>& ga = tp.grad_acc(im);
    for (Index k = 0; k < gz; ++k)
      for (Index j = 0; j < gy; ++j)
        for (Index i = 0; i < gx; ++i) {
          const Index r = at(i, j, k);
          const T c = gs / root(r, 0);
          const Index nb[3] = {i + 1 < gx ? at(i + 1, j, k) : -1, j + 1 < gy ? at(i, j + 1, k) : -1,
                               k + 1 < gz ? at(i, j, k + 1) : -1};
          for (int a = 0; a < 3; ++a) {
            if (nb[a] < 0) continue;
            ga(nb[a], 0) += c * d(r, a);
            ga(r, 0) -= c * d(r, a);
          }
        }
  });
}

template <class T>
ad::Var<T> tv_loss(const ad::Var<T>& m, Index g, T eps = T(1e-12)) {
  return tv_loss(m, g, g, g, eps);
}

/// Indices of the k largest and k smallest values; ties go to the lower index.
template <class T>
std::pair<std::vector<Index>, std::vector<Index>> top_bottom_k(const Mat<T>& m, Index k) {
  std::vector<Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Index(0));
  std::vector<Index> top = order, bottom = order;
  std::stable_sort(top.begin(), top.end(), [&](Index a, Index b) { return m(a, 0) > m(b, 0); });
  std::stable_sort(bottom.begin(), bottom.end(), [&](Index a, Index b) { return m(a, 0) < m(b, 0); });
  top.resize(static_cast<std::size_t>(k));
  bottom.resize(static_cast<std::size_t>(k));
  return {top, bottom};
}

/// -sum_{top k} log m - sum_{bottom k} log(1 - m), m clamped to [eps, 1 - eps].
template <class T>
ad::Var<T> sparsity_loss(const ad::Var<T>& m, Index k, T eps = T(1e-6)) {
  if (m.cols() != 1) throw ConfigError("sparsity_loss: expects an n x 1 column of mask values");
  if (k < 1 || 2 * k > m.rows()) throw ConfigError("sparsity_loss: need 1 <= k and 2k <= sample count");
  ad::Var<T> c = ad::clamp(m, eps, T(1) - eps);
  auto [top, bottom] = top_bottom_k(c.value(), k);
  ad::Var<T> lt = ad::sum(ad::log(ad::gather_rows(c, top)));
  ad::Var<T> lb = ad::sum(ad::log(ad::add_scalar(ad::scale(ad::gather_rows(c, bottom), T(-1)), T(1))));
  return ad::scale(ad::add(lt, lb), T(-1));
}

/// k_top as a fraction of the sample count, at least 1.
inline Index k_from_fraction(Index samples, double fraction) {
  return std::max<Index>(1, std::min<Index>(samples / 2, static_cast<Index>(std::lround(fraction * double(samples)))));
}

struct AfnWeights {
  double mask = 3.0;
  double tv = 0.01;
  double sparsity = 0.01;
  double clip_plus = 0.1;
};

/// L_AFN = l_mask L_mask + l_tv L_tv + l_sp L_sparsity + l_clip L_CLIP+.
template <class T>
ad::Var<T> afn_loss(const ad::Var<T>& mask, const ad::Var<T>& tv, const ad::Var<T>& sparsity,
                    const ad::Var<T>& clip_plus, const AfnWeights& w) {
  ad::Var<T> a = ad::add(ad::scale(mask, static_cast<T>(w.mask)), ad::scale(tv, static_cast<T>(w.tv)));
  ad::Var<T> b = ad::add(ad::scale(sparsity, static_cast<T>(w.sparsity)), ad::scale(clip_plus, static_cast<T>(w.clip_plus)));
  return ad::add(a, b);
}

}  // namespace lenerf
