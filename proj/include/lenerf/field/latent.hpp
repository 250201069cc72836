#pragma once

#include <string>

#include "lenerf/core/errors.hpp"
#include "lenerf/core/params.hpp"

namespace lenerf {

/// W^k codes come from the synthesizer's mapped range; W^k_* codes (edit
/// targets) may lie anywhere.
enum class LatentSpace { W, WStar };

/// Group-structured latent code: row n holds the vector that modulates the
/// n-th group of synthesizer layers.
template <class T>
struct LatentCode {
  Mat<T> groups;
  LatentSpace space = LatentSpace::W;

  LatentCode() = default;
  LatentCode(Mat<T> g, LatentSpace s = LatentSpace::W) : groups(std::move(g)), space(s) { validate(); }

  Index num_groups() const { return groups.rows(); }
  Index group_dim() const { return groups.cols(); }
  Index dim() const { return groups.size(); }

  /// 1 x (N * d_g), groups laid out in order.
  Mat<T> flat() const { return Eigen::Map<const Mat<T>>(groups.data(), 1, groups.size()); }

  void validate() const {
    if (groups.rows() < 1 || groups.cols() < 1) throw ConfigError("latent code needs at least one non-empty group");
    if (!groups.allFinite()) throw InputError("latent code has non-finite entries");
  }

  static LatentCode random(Index n, Index dg, Rng& rng, double stddev = 1.0) {
    return LatentCode(random_normal<T>(n, dg, stddev, rng), LatentSpace::W);
  }

  template <class U>
  LatentCode<U> cast() const {
    return LatentCode<U>(groups.template cast<U>(), space);
  }
};

}  // namespace lenerf
