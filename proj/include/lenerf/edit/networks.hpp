#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lenerf/field/latent.hpp"

namespace lenerf {

struct EditConfig {
  std::vector<Index> lrm_hidden{64, 64};
  std::vector<Index> afn_hidden{64, 64, 64};
  std::vector<Index> dn_hidden{64, 64, 64};
  double afn_bias_init = -4.0;
  double gamma_d = 0.1;
  bool deformation = false;
};

namespace detail {
inline std::vector<Index> widths(Index in, const std::vector<Index>& hidden, Index out) {
  std::vector<Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}
}  // namespace detail

/// One residual head per latent group: w_t^n = w_s^n + M^n(w_s^n).
/// Final layers start at zero, so w_t = w_s initially.
template <class T>
class ResidualMapper {
 public:
  ResidualMapper() = default;
  ResidualMapper(ParamStore<T>& s, Index groups, Index group_dim, const std::vector<Index>& hidden, Rng& rng)
      : groups_(groups), dim_(group_dim) {
    for (Index n = 0; n < groups; ++n) {
      heads_.emplace_back(s, "lrm." + std::to_string(n), detail::widths(group_dim, hidden, group_dim),
                          Activation::Softplus, rng);
      heads_.back().weight(s, heads_.back().layers() - 1).value.setZero();
    }
  }

  Index groups() const { return groups_; }
  const std::vector<Mlp<T>>& heads() const { return heads_; }

  /// w_s: 1 x (N d_g) -> delta w, same shape.
  ad::Var<T> residual(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& w_s) const {
    if (w_s.rows() != 1 || w_s.cols() != groups_ * dim_)
      throw ConfigError("map_latent: latent has " + std::to_string(w_s.cols()) + " entries, mapper expects " +
                        std::to_string(groups_ * dim_));
    std::vector<ad::Var<T>> parts;
    for (Index n = 0; n < groups_; ++n)
      parts.push_back(heads_[static_cast<std::size_t>(n)].forward(tape, s, ad::slice_cols(w_s, n * dim_, dim_)));
    return ad::concat_cols<T>(std::span<const ad::Var<T>>(parts));
  }

  /// Untaped: returns (delta w, w_t) with w_t tagged W*.
  std::pair<LatentCode<T>, LatentCode<T>> map_latent(const LatentCode<T>& w_s, const ParamStore<T>& s) const {
    w_s.validate();
    if (w_s.num_groups() != groups_ || w_s.group_dim() != dim_)
      throw ConfigError("map_latent: latent shape does not match the mapper heads");
    Mat<T> dw(groups_, dim_);
    for (Index n = 0; n < groups_; ++n)
      dw.row(n) = heads_[static_cast<std::size_t>(n)].evaluate(s, Mat<T>(w_s.groups.row(n))).row(0);
    return {LatentCode<T>(dw, LatentSpace::WStar), LatentCode<T>(w_s.groups + dw, LatentSpace::WStar)};
  }

 private:
  Index groups_ = 0, dim_ = 0;
  std::vector<Mlp<T>> heads_;
};

/// x' = x + gamma_d * tanh(MLP(x, w_s, w_t)); identity at init (zero final layer).
template <class T>
class DeformationNet {
 public:
  DeformationNet() = default;
  DeformationNet(ParamStore<T>& s, Index latent_dim, const std::vector<Index>& hidden, double gamma, Rng& rng)
      : net_(s, "dn", detail::widths(3 + 2 * latent_dim, hidden, 3), Activation::Softplus, rng), gamma_(gamma) {
    net_.weight(s, net_.layers() - 1).value.setZero();
  }

  double gamma() const { return gamma_; }
  void set_gamma(double g) { gamma_ = g; }
  const Mlp<T>& net() const { return net_; }

  /// x: n x 3, cond: 1 x 2d (w_s then w_t).
  ad::Var<T> forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& x, const ad::Var<T>& cond) const {
    if (gamma_ == 0) return x;
    ad::Var<T> d = ad::tanh(net_.forward_conditioned(tape, s, x, cond));
    return ad::add(x, ad::scale(d, static_cast<T>(gamma_)));
  }

 private:
  Mlp<T> net_;
  double gamma_ = 0.1;
};

/// m = sigmoid(A(F_s + x', F_t + x, w_s, w_t)) with input layout
/// [F_s, x', F_t, x | w_s, w_t].
template <class T>
class AttentionFieldNet {
 public:
  AttentionFieldNet() = default;
  AttentionFieldNet(ParamStore<T>& s, Index feature_dim, Index latent_dim, const std::vector<Index>& hidden,
                    double bias_init, Rng& rng)
      : net_(s, "afn", detail::widths(2 * feature_dim + 6 + 2 * latent_dim, hidden, 1), Activation::Softplus, rng),
        feature_dim_(feature_dim) {
    net_.bias(s, net_.layers() - 1).value.setConstant(static_cast<T>(bias_init));
  }

  const Mlp<T>& net() const { return net_; }
  Index feature_dim() const { return feature_dim_; }

  ad::Var<T> forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& f_s, const ad::Var<T>& x_def,
                     const ad::Var<T>& f_t, const ad::Var<T>& x, const ad::Var<T>& cond) const {
    if (f_s.cols() != feature_dim_ || f_t.cols() != feature_dim_)
      throw ConfigError("attention_mask: feature width must be " + std::to_string(feature_dim_));
    ad::Var<T> in = ad::concat_cols({f_s, x_def, f_t, x});
    return ad::sigmoid(net_.forward_conditioned(tape, s, in, cond));
  }

 private:
  Mlp<T> net_;
  Index feature_dim_ = 0;
};

/// F = (1 - m) F_s + m F_t, m: n x 1.
template <class T>
ad::Var<T> fuse(const ad::Var<T>& f_s, const ad::Var<T>& f_t, const ad::Var<T>& m) {
  ad::Var<T> keep = ad::add_scalar(ad::scale(m, T(-1)), T(1));
  return ad::add(ad::mul_col(f_s, keep), ad::mul_col(f_t, m));
}

template <class T>
Eigen::Matrix<T, 1, Eigen::Dynamic> fuse(const Eigen::Matrix<T, 1, Eigen::Dynamic>& f_s,
                                         const Eigen::Matrix<T, 1, Eigen::Dynamic>& f_t, T m) {
  if (!(m >= T(0) && m <= T(1))) throw ContractError("fuse: m must lie in [0, 1]");
  if (f_s.size() != f_t.size()) throw ContractError("fuse: feature sizes differ");
  return (T(1) - m) * f_s + m * f_t;
}

}  // namespace lenerf
