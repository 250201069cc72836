#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Values are kept on the
// nodes; backward() walks the record in reverse and accumulates gradients.
// Leaves created through param() push their gradient into the owning
// Parameter, so several backward passes over one tape can route different
// losses to different parameter groups.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lenerf/core/errors.hpp"

namespace lenerf {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// A named trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Mat<T> v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

namespace ad {

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Mat<T>& value() const { return tape_->value(id_); }
  const Mat<T>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Tape<T>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Mat<T> value;
    Mat<T> grad;
    BackwardFn backward;
    std::string op;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Skip the per-op finiteness scan (used by hot loops that check at the end).
  void set_check_finite(bool on) { check_finite_ = on; }

  Var<T> constant(Mat<T> value, std::string op = "constant") {
    return push(std::move(value), std::move(op), false, nullptr);
  }

  /// A leaf that receives a gradient readable through Var::grad().
  Var<T> variable(Mat<T> value, std::string op = "variable") {
    return push(std::move(value), std::move(op), true, nullptr);
  }

  /// Record parameters as constants (inference passes).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  /// A leaf bound to a Parameter. Frozen parameters are recorded as constants.
  Var<T> param(Parameter<T>& p) {
    if (!p.trainable || !grad_enabled_) return push(p.value, "param:" + p.name, false, nullptr);
    Parameter<T>* target = &p;
    return push(p.value, "param:" + p.name, true, [target](Tape& t, int self) {
      if (target->grad.rows() != target->value.rows() || target->grad.cols() != target->value.cols())
        target->zero_grad();
      target->grad += t.nodes_[self].grad;
    });
  }

  Var<T> push(Mat<T> value, std::string op, bool requires_grad, BackwardFn backward) {
    if (check_finite_ && !value.allFinite()) throw NumericError(op, "forward output");
    nodes_.push_back(Node{std::move(value), Mat<T>(), std::move(backward), std::move(op), requires_grad});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Mat<T>& value(int id) const { return nodes_[id].value; }
  const Mat<T>& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const std::string& op(int id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of `id`, zero-initialised on first touch.
  Mat<T>& grad_acc(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse pass from a scalar root. Clears gradients from any earlier pass.
  void backward(const Var<T>& root) {
    if (root.rows() != 1 || root.cols() != 1)
      throw ContractError("backward() needs a 1x1 root, got op '" + nodes_[root.id()].op + "'");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_acc(root.id())(0, 0) = T(1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      if (check_finite_ && !n.grad.allFinite()) throw NumericError(n.op, "gradient");
      n.backward(*this, i);
    }
  }

 private:
  std::deque<Node> nodes_;
  bool check_finite_ = true;
  bool grad_enabled_ = true;
};

}  // namespace ad
}  // namespace lenerf
