#pragma once

#include "lenerf/core/params.hpp"

namespace lenerf {

/// Decoded radiance sample: M_c feature channels (first three are RGB) and density.
template <class T>
struct DecodedPoint {
  Eigen::Matrix<T, 1, Eigen::Dynamic> radiance_feature;
  T density = T(0);
};

/// Small MLP mapping a tri-plane feature (M_f) to M_c = M_f radiance channels
/// and one density. Channels go through a logistic; density through softplus.
template <class T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore<T>& s, Index feature_dim, Index hidden, Rng& rng)
      : net_(s, "decoder", {feature_dim, hidden, feature_dim + 1}, Activation::Softplus, rng), dim_(feature_dim) {}

  Index feature_dim() const { return dim_; }
  const Mlp<T>& net() const { return net_; }

  struct Output {
    ad::Var<T> features;  // N x M_c in (0, 1)
    ad::Var<T> sigma;     // N x 1, >= 0
  };

  Output forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& f) const {
    ad::Var<T> raw = net_.forward(tape, s, f);
    return {ad::sigmoid(ad::slice_cols(raw, 0, dim_)), ad::softplus(ad::slice_cols(raw, dim_, 1))};
  }

  DecodedPoint<T> decode(const ParamStore<T>& s, const Eigen::Matrix<T, 1, Eigen::Dynamic>& f) const {
    if (!f.allFinite()) throw InputError("decode_feature: non-finite feature");
    if (f.cols() != dim_) throw ConfigError("decode_feature: feature width mismatch");
    Mat<T> raw = net_.evaluate(s, Mat<T>(f));
    DecodedPoint<T> out;
    out.radiance_feature.resize(dim_);
    for (Index c = 0; c < dim_; ++c) out.radiance_feature(c) = ad::sigmoid_value(raw(0, c));
    out.density = ad::softplus_value(raw(0, dim_));
    return out;
  }

 private:
  Mlp<T> net_;
  Index dim_ = 0;
};

}  // namespace lenerf
