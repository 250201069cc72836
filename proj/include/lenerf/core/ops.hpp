#pragma once

// Differentiable operations on Tape variables.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lenerf/core/tape.hpp"

namespace lenerf::ad {

template <class T>
using SparseMat = Eigen::SparseMatrix<T, Eigen::RowMajor>;

namespace detail {

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

template <class T>
void require_shape(bool ok, const char* op, const Var<T>& a, const Var<T>& b) {
  if (!ok)
    throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}

// Elementwise unary op given f(x) and f'(x, y).
template <class T, class F, class D>
Var<T> unary(const Var<T>& a, const char* name, F f, D df) {
  Tape<T>& t = a.tape();
  const int ia = a.id();
  Mat<T> y = a.value().unaryExpr(f);
  return t.push(std::move(y), name, a.requires_grad(), [ia, df](Tape<T>& tp, int self) {
    const Mat<T>& x = tp.value(ia);
    const Mat<T>& yv = tp.value(self);
    const Mat<T>& g = tp.grad(self);
    Mat<T>& ga = tp.grad_acc(ia);
    for (Index k = 0; k < x.size(); ++k) ga.data()[k] += g.data()[k] * df(x.data()[k], yv.data()[k]);
  });
}

}  // namespace detail

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "matmul");
  detail::require_shape(a.cols() == b.rows(), "matmul", a, b);
  Tape<T>& t = a.tape();
  const int ia = a.id(), ib = b.id();
  Mat<T> y = a.value() * b.value();
  return t.push(std::move(y), "matmul", a.requires_grad() || b.requires_grad(), [ia, ib](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia).noalias() += g * tp.value(ib).transpose();
    if (tp.requires_grad(ib)) tp.grad_acc(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

/// x * W + b with b broadcast over rows.
template <class T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::require_shape(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "affine", x, w);
  Tape<T>& t = x.tape();
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Mat<T> y = x.value() * w.value();
  y.rowwise() += b.value().row(0);
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return t.push(std::move(y), "affine", rg, [ix, iw, ib](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ix)) tp.grad_acc(ix).noalias() += g * tp.value(iw).transpose();
    if (tp.requires_grad(iw)) tp.grad_acc(iw).noalias() += tp.value(ix).transpose() * g;
    if (tp.requires_grad(ib)) tp.grad_acc(ib) += g.colwise().sum();
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "add");
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  const int ia = a.id(), ib = b.id();
  Mat<T> y = a.value() + b.value();
  return a.tape().push(std::move(y), "add", a.requires_grad() || b.requires_grad(), [ia, ib](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia) += g;
    if (tp.requires_grad(ib)) tp.grad_acc(ib) += g;
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "sub");
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  const int ia = a.id(), ib = b.id();
  Mat<T> y = a.value() - b.value();
  return a.tape().push(std::move(y), "sub", a.requires_grad() || b.requires_grad(), [ia, ib](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia) += g;
    if (tp.requires_grad(ib)) tp.grad_acc(ib) -= g;
  });
}

/// Elementwise product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "mul");
  detail::require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  const int ia = a.id(), ib = b.id();
  Mat<T> y = a.value().cwiseProduct(b.value());
  return a.tape().push(std::move(y), "mul", a.requires_grad() || b.requires_grad(), [ia, ib](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia) += g.cwiseProduct(tp.value(ib));
    if (tp.requires_grad(ib)) tp.grad_acc(ib) += g.cwiseProduct(tp.value(ia));
  });
}

/// Adds a 1xC row to every row of a.
template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  detail::require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  const int ia = a.id(), ir = row.id();
  Mat<T> y = a.value();
  y.rowwise() += row.value().row(0);
  return a.tape().push(std::move(y), "add_row", a.requires_grad() || row.requires_grad(),
                       [ia, ir](Tape<T>& tp, int self) {
                         const Mat<T>& g = tp.grad(self);
                         if (tp.requires_grad(ia)) tp.grad_acc(ia) += g;
                         if (tp.requires_grad(ir)) tp.grad_acc(ir) += g.colwise().sum();
                       });
}

/// Multiplies every column of a by the column vector c (N x 1).
template <class T>
Var<T> mul_col(const Var<T>& a, const Var<T>& c) {
  detail::require_shape(c.cols() == 1 && c.rows() == a.rows(), "mul_col", a, c);
  const int ia = a.id(), ic = c.id();
  Mat<T> y = a.value().array().colwise() * c.value().col(0).array();
  return a.tape().push(std::move(y), "mul_col", a.requires_grad() || c.requires_grad(), [ia, ic](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia).array() += g.array().colwise() * tp.value(ic).col(0).array();
    if (tp.requires_grad(ic)) tp.grad_acc(ic).col(0) += g.cwiseProduct(tp.value(ia)).rowwise().sum();
  });
}

/// Multiplies every row of a by the row vector r (1 x C).
template <class T>
Var<T> mul_row(const Var<T>& a, const Var<T>& r) {
  detail::require_shape(r.rows() == 1 && r.cols() == a.cols(), "mul_row", a, r);
  const int ia = a.id(), ir = r.id();
  Mat<T> y = a.value().array().rowwise() * r.value().row(0).array();
  return a.tape().push(std::move(y), "mul_row", a.requires_grad() || r.requires_grad(), [ia, ir](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia).array() += g.array().rowwise() * tp.value(ir).row(0).array();
    if (tp.requires_grad(ir)) tp.grad_acc(ir).row(0) += g.cwiseProduct(tp.value(ia)).colwise().sum();
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  const int ia = a.id();
  Mat<T> y = a.value() * s;
  return a.tape().push(std::move(y), "scale", a.requires_grad(), [ia, s](Tape<T>& tp, int self) {
    tp.grad_acc(ia) += tp.grad(self) * s;
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  const int ia = a.id();
  Mat<T> y = a.value().array() + s;
  return a.tape().push(std::move(y), "add_scalar", a.requires_grad(),
                       [ia](Tape<T>& tp, int self) { tp.grad_acc(ia) += tp.grad(self); });
}

/// Multiplies a by the 1x1 variable s.
template <class T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s) {
  detail::require_shape(s.rows() == 1 && s.cols() == 1, "scale_by", a, s);
  const int ia = a.id(), is = s.id();
  Mat<T> y = a.value() * s.scalar();
  return a.tape().push(std::move(y), "scale_by", a.requires_grad() || s.requires_grad(), [ia, is](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad_acc(ia) += g * tp.value(is)(0, 0);
    if (tp.requires_grad(is)) tp.grad_acc(is)(0, 0) += g.cwiseProduct(tp.value(ia)).sum();
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a, "sigmoid",
      [](T x) { return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
      [](T, T y) { return y * (T(1) - y); });
}

/// log(1 + e^x), evaluated without overflow.
template <class T>
T softplus_value(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T sigmoid_value(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
Var<T> softplus(const Var<T>& a) {
  return detail::unary(a, "softplus", [](T x) { return softplus_value(x); },
                       [](T x, T) { return sigmoid_value(x); });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
  return detail::unary(
      a, "leaky_relu", [slope](T x) { return x > 0 ? x : slope * x; },
      [slope](T x, T) { return x > 0 ? T(1) : slope; });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  return detail::unary(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(const Var<T>& a) {
  return detail::unary(a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> sqrt(const Var<T>& a) {
  return detail::unary(a, "sqrt", [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary(a, "square", [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

/// Clamp with zero gradient outside [lo, hi].
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary(
      a, "clamp", [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  const int ia = a.id();
  Mat<T> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape().push(std::move(y), "sum", a.requires_grad(),
                       [ia](Tape<T>& tp, int self) { tp.grad_acc(ia).array() += tp.grad(self)(0, 0); });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Sum over columns: N x C -> N x 1.
template <class T>
Var<T> row_sum(const Var<T>& a) {
  const int ia = a.id();
  Mat<T> y = a.value().rowwise().sum();
  return a.tape().push(std::move(y), "row_sum", a.requires_grad(), [ia](Tape<T>& tp, int self) {
    tp.grad_acc(ia).array().colwise() += tp.grad(self).col(0).array();
  });
}

/// Sum over rows: N x C -> 1 x C.
template <class T>
Var<T> col_sum(const Var<T>& a) {
  const int ia = a.id();
  Mat<T> y = a.value().colwise().sum();
  return a.tape().push(std::move(y), "col_sum", a.requires_grad(), [ia](Tape<T>& tp, int self) {
    tp.grad_acc(ia).rowwise() += tp.grad(self).row(0);
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  const int ia = a.id();
  Mat<T> y = a.value().transpose();
  return a.tape().push(std::move(y), "transpose", a.requires_grad(),
                       [ia](Tape<T>& tp, int self) { tp.grad_acc(ia) += tp.grad(self).transpose(); });
}

/// Reinterprets the row-major data with a new shape.
template <class T>
Var<T> reshape(const Var<T>& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw ContractError("reshape: element count mismatch");
  const int ia = a.id();
  Mat<T> y = Eigen::Map<const Mat<T>>(a.value().data(), rows, cols);
  return a.tape().push(std::move(y), "reshape", a.requires_grad(), [ia](Tape<T>& tp, int self) {
    Mat<T>& ga = tp.grad_acc(ia);
    Eigen::Map<Mat<T>>(ga.data(), tp.grad(self).rows(), tp.grad(self).cols()) += tp.grad(self);
  });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const Index n = parts[0].rows();
  Index c = 0;
  bool rg = false;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ContractError("concat_cols: row count mismatch");
    c += p.cols();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
  }
  Mat<T> y(n, c);
  Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return parts[0].tape().push(std::move(y), "concat_cols", rg, [ids](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    Index o = 0;
    for (int id : ids) {
      const Index w = tp.value(id).cols();
      if (tp.requires_grad(id)) tp.grad_acc(id) += g.middleCols(o, w);
      o += w;
    }
  });
}

template <class T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_cols<T>(std::span<const Var<T>>(v));
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const Index c = parts[0].cols();
  Index r = 0;
  bool rg = false;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ContractError("concat_rows: column count mismatch");
    r += p.rows();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
  }
  Mat<T> y(r, c);
  Index off = 0;
  for (const auto& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return parts[0].tape().push(std::move(y), "concat_rows", rg, [ids](Tape<T>& tp, int self) {
    const Mat<T>& g = tp.grad(self);
    Index o = 0;
    for (int id : ids) {
      const Index h = tp.value(id).rows();
      if (tp.requires_grad(id)) tp.grad_acc(id) += g.middleRows(o, h);
      o += h;
    }
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, Index start, Index count) {
  if (start < 0 || start + count > a.cols()) throw ContractError("slice_cols: range out of bounds");
  const int ia = a.id();
  Mat<T> y = a.value().middleCols(start, count);
  return a.tape().push(std::move(y), "slice_cols", a.requires_grad(), [ia, start, count](Tape<T>& tp, int self) {
    tp.grad_acc(ia).middleCols(start, count) += tp.grad(self);
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, Index start, Index count) {
  if (start < 0 || start + count > a.rows()) throw ContractError("slice_rows: range out of bounds");
  const int ia = a.id();
  Mat<T> y = a.value().middleRows(start, count);
  return a.tape().push(std::move(y), "slice_rows", a.requires_grad(), [ia, start, count](Tape<T>& tp, int self) {
    tp.grad_acc(ia).middleRows(start, count) += tp.grad(self);
  });
}

/// Selects rows by index (indices may repeat).
template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<Index> idx) {
  const int ia = a.id();
  Mat<T> y(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.rows()) throw ContractError("gather_rows: index out of range");
    y.row(static_cast<Index>(k)) = a.value().row(idx[k]);
  }
  return a.tape().push(std::move(y), "gather_rows", a.requires_grad(), [ia, idx = std::move(idx)](Tape<T>& tp, int self) {
    Mat<T>& ga = tp.grad_acc(ia);
    const Mat<T>& g = tp.grad(self);
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Index>(k));
  });
}

/// Row-wise softmax.
template <class T>
Var<T> softmax_rows(const Var<T>& a) {
  const int ia = a.id();
  Mat<T> y(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const T m = a.value().row(r).maxCoeff();
    y.row(r) = (a.value().row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return a.tape().push(std::move(y), "softmax_rows", a.requires_grad(), [ia](Tape<T>& tp, int self) {
    const Mat<T>& yv = tp.value(self);
    const Mat<T>& g = tp.grad(self);
    Mat<T>& ga = tp.grad_acc(ia);
    for (Index r = 0; r < yv.rows(); ++r) {
      const T dot = g.row(r).dot(yv.row(r));
      ga.row(r).array() += yv.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

/// log(sum(exp(a))) over all entries, with max subtraction.
template <class T>
Var<T> logsumexp(const Var<T>& a) {
  const int ia = a.id();
  const T m = a.value().maxCoeff();
  Mat<T> y(1, 1);
  y(0, 0) = m + std::log((a.value().array() - m).exp().sum());
  return a.tape().push(std::move(y), "logsumexp", a.requires_grad(), [ia](Tape<T>& tp, int self) {
    const T lse = tp.value(self)(0, 0);
    tp.grad_acc(ia).array() += tp.grad(self)(0, 0) * (tp.value(ia).array() - lse).exp();
  });
}

/// Scales each row to unit L2 norm. Rows with norm below `tiny` become the
/// uniform unit vector and pass no gradient.
template <class T>
Var<T> normalize_rows(const Var<T>& a, T tiny = T(1e-12)) {
  const int ia = a.id();
  Mat<T> y(a.rows(), a.cols());
  std::vector<T> norms(static_cast<std::size_t>(a.rows()));
  for (Index r = 0; r < a.rows(); ++r) {
    const T n = a.value().row(r).norm();
    norms[static_cast<std::size_t>(r)] = n;
    if (n < tiny)
      y.row(r).setConstant(T(1) / std::sqrt(static_cast<T>(a.cols())));
    else
      y.row(r) = a.value().row(r) / n;
  }
  return a.tape().push(std::move(y), "normalize_rows", a.requires_grad(),
                       [ia, tiny, norms = std::move(norms)](Tape<T>& tp, int self) {
                         const Mat<T>& yv = tp.value(self);
                         const Mat<T>& g = tp.grad(self);
                         Mat<T>& ga = tp.grad_acc(ia);
                         for (Index r = 0; r < yv.rows(); ++r) {
                           const T n = norms[static_cast<std::size_t>(r)];
                           if (n < tiny) continue;
                           const T dot = g.row(r).dot(yv.row(r));
                           ga.row(r) += (g.row(r) - dot * yv.row(r)) / n;
                         }
                       });
}

/// Frobenius norm; the gradient at zero is taken as zero.
template <class T>
Var<T> norm(const Var<T>& a) {
  const int ia = a.id();
  const T n = a.value().norm();
  Mat<T> y(1, 1);
  y(0, 0) = n;
  return a.tape().push(std::move(y), "norm", a.requires_grad(), [ia, n](Tape<T>& tp, int self) {
    if (n == T(0)) return;
    tp.grad_acc(ia) += (tp.grad(self)(0, 0) / n) * tp.value(ia);
  });
}

/// y = S * a for a fixed sparse matrix S (image resampling, pooling, patching).
template <class T>
Var<T> linear_map(const SparseMat<T>& s, const Var<T>& a, std::string name = "linear_map") {
  if (s.cols() != a.rows()) throw ContractError(name + ": operator/input size mismatch");
  const int ia = a.id();
  Mat<T> y = s * a.value();
  auto st = std::make_shared<SparseMat<T>>(s);
  return a.tape().push(std::move(y), std::move(name), a.requires_grad(), [ia, st](Tape<T>& tp, int self) {
    tp.grad_acc(ia).noalias() += st->transpose() * tp.grad(self);
  });
}

}  // namespace lenerf::ad
