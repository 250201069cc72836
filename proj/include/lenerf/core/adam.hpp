#pragma once

#include <cmath>
#include <vector>

#include "lenerf/core/tape.hpp"

namespace lenerf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  Mat<T> m;
  Mat<T> v;
  long step = 0;
};

/// One bias-corrected adaptive-moment update of `value` given `grad`.
template <class T>
void adam_update(Mat<T>& value, const Mat<T>& grad, AdamState<T>& state, double lr, const AdamConfig& cfg = {}) {
  if (grad.rows() != value.rows() || grad.cols() != value.cols())
    throw ContractError("adam_update: gradient shape does not match parameter");
  if (state.m.size() == 0) {
    state.m.setZero(value.rows(), value.cols());
    state.v.setZero(value.rows(), value.cols());
  }
  if (state.m.rows() != value.rows() || state.m.cols() != value.cols())
    throw ContractError("adam_update: optimizer state shape does not match parameter");
  ++state.step;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  state.m = b1 * state.m + (T(1) - b1) * grad;
  state.v = b2 * state.v + (T(1) - b2) * grad.cwiseProduct(grad);
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T lr_t = static_cast<T>(lr), eps = static_cast<T>(cfg.eps);
  value.array() -= lr_t * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

/// Adam over a fixed group of parameters sharing one learning rate.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter<T>*> params, double lr, AdamConfig cfg = {})
      : params_(std::move(params)), states_(params_.size()), lr_(lr), cfg_(cfg) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_update(params_[i]->value, params_[i]->grad, states_[i], lr_, cfg_);
  }
  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<Parameter<T>*>& params() const { return params_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<AdamState<T>> states_;
  double lr_ = 1e-3;
  AdamConfig cfg_;
};

}  // namespace lenerf
