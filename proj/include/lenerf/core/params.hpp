#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "lenerf/core/tape.hpp"

namespace lenerf {

/// SplitMix64 mixing; used to derive independent per-ray / per-step streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

/// Small deterministic generator. Distribution code is written here rather than
/// with <random> distributions so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix_seed(seed)) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::uint64_t state_;
};

template <class T>
Mat<T> random_normal(Index rows, Index cols, double stddev, Rng& rng) {
  Mat<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(stddev * rng.normal());
  return m;
}

/// Named parameter collection with stable addresses. Sections group tensors
/// by module ("synth", "decoder", ...) for checkpointing and freezing.
template <class T>
class ParamStore {
 public:
  Parameter<T>& add(const std::string& name, Mat<T> value) {
    if (find(name)) throw ConfigError("duplicate parameter '" + name + "'");
    params_.emplace_back(name, std::move(value));
    return params_.back();
  }

  Parameter<T>* find(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Parameter<T>* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  Parameter<T>& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
  }
  const Parameter<T>& at(std::string_view name) const {
    if (const auto* p = find(name)) return *p;
    throw ConfigError("unknown parameter '" + std::string(name) + "'");
  }

  std::deque<Parameter<T>>& all() { return params_; }
  const std::deque<Parameter<T>>& all() const { return params_; }

  std::vector<Parameter<T>*> pointers() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  void set_trainable(bool on) {
    for (auto& p : params_) p.trainable = on;
  }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  Index count() const {
    Index n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// Copies values into a store of another scalar type with identical layout.
  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.template cast<U>());
      q.trainable = p.trainable;
    }
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;
};

enum class Activation { Softplus, Tanh, LeakyRelu };

/// Fully connected network description. Tensors live in a ParamStore under
/// `<prefix>.w<i>` / `<prefix>.b<i>`; the Mlp itself only holds the layout, so
/// modules stay copyable together with their store.
template <class T>
class Mlp {
 public:
  Mlp() = default;

  Mlp(ParamStore<T>& store, std::string prefix, std::vector<Index> widths, Activation act, Rng& rng)
      : prefix_(std::move(prefix)), widths_(std::move(widths)), act_(act) {
    if (widths_.size() < 2) throw ConfigError("Mlp '" + prefix_ + "' needs at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const double stddev = std::sqrt(1.0 / static_cast<double>(widths_[l]));
      store.add(weight_name(l), random_normal<T>(widths_[l], widths_[l + 1], stddev, rng));
      store.add(bias_name(l), Mat<T>::Zero(1, widths_[l + 1]));
    }
  }

  Index in_dim() const { return widths_.front(); }
  Index out_dim() const { return widths_.back(); }
  std::size_t layers() const { return widths_.size() - 1; }
  const std::string& prefix() const { return prefix_; }
  std::string weight_name(std::size_t l) const { return prefix_ + ".w" + std::to_string(l); }
  std::string bias_name(std::size_t l) const { return prefix_ + ".b" + std::to_string(l); }

  Parameter<T>& weight(ParamStore<T>& s, std::size_t l) const { return s.at(weight_name(l)); }
  Parameter<T>& bias(ParamStore<T>& s, std::size_t l) const { return s.at(bias_name(l)); }
  const Parameter<T>& weight(const ParamStore<T>& s, std::size_t l) const { return s.at(weight_name(l)); }
  const Parameter<T>& bias(const ParamStore<T>& s, std::size_t l) const { return s.at(bias_name(l)); }

  /// x: batch x in_dim.
  ad::Var<T> forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& x) const {
    return forward_from(tape, s, x, ad::Var<T>());
  }

  /// Same as forward() on [x, cond] where `cond` (1 x k) is shared by every row:
  /// the first layer splits into x*W_top + (cond*W_bottom + b).
  ad::Var<T> forward_conditioned(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& x,
                                 const ad::Var<T>& cond) const {
    return forward_from(tape, s, x, cond);
  }

  /// Plain evaluation without a tape, for reference checks.
  Mat<T> evaluate(const ParamStore<T>& s, const Mat<T>& x) const;

 private:
  ad::Var<T> activate(const ad::Var<T>& x) const;
  ad::Var<T> forward_from(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& x, const ad::Var<T>& cond) const;

  std::string prefix_;
  std::vector<Index> widths_;
  Activation act_ = Activation::Softplus;
};

}  // namespace lenerf

#include "lenerf/core/ops.hpp"

namespace lenerf {

template <class T>
ad::Var<T> Mlp<T>::activate(const ad::Var<T>& x) const {
  switch (act_) {
    case Activation::Tanh:
      return ad::tanh(x);
    case Activation::LeakyRelu:
      return ad::leaky_relu(x, T(0.2));
    case Activation::Softplus:
    default:
      return ad::softplus(x);
  }
}

template <class T>
ad::Var<T> Mlp<T>::forward_from(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& x,
                                const ad::Var<T>& cond) const {
  ad::Var<T> h;
  {
    ad::Var<T> w = tape.param(weight(s, 0));
    ad::Var<T> b = tape.param(bias(s, 0));
    if (cond.valid()) {
      const Index nx = x.cols();
      if (nx + cond.cols() != widths_[0]) throw ConfigError("Mlp '" + prefix_ + "': conditioned input width mismatch");
      ad::Var<T> w_top = ad::slice_rows(w, 0, nx);
      ad::Var<T> w_bot = ad::slice_rows(w, nx, cond.cols());
      ad::Var<T> row = ad::add(ad::matmul(cond, w_bot), b);
      h = ad::affine(x, w_top, row);
    } else {
      if (x.cols() != widths_[0]) throw ConfigError("Mlp '" + prefix_ + "': input width mismatch");
      h = ad::affine(x, w, b);
    }
  }
  for (std::size_t l = 1; l < layers(); ++l) {
    h = activate(h);
    h = ad::affine(h, tape.param(weight(s, l)), tape.param(bias(s, l)));
  }
  return h;
}

template <class T>
Mat<T> Mlp<T>::evaluate(const ParamStore<T>& s, const Mat<T>& x) const {
  Mat<T> h = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    if (l > 0) {
      for (Index k = 0; k < h.size(); ++k) {
        T& v = h.data()[k];
        switch (act_) {
          case Activation::Tanh:
            v = std::tanh(v);
            break;
          case Activation::LeakyRelu:
            v = v > 0 ? v : T(0.2) * v;
            break;
          case Activation::Softplus:
          default:
            v = ad::softplus_value(v);
        }
      }
    }
    Mat<T> next = h * weight(s, l).value;
    next.rowwise() += bias(s, l).value.row(0);
    h = std::move(next);
  }
  return h;
}

}  // namespace lenerf
