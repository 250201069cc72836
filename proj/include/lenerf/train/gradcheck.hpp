#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lenerf/core/params.hpp"

namespace lenerf {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  Index checked = 0;
  std::string worst;  // "<input>[<index>]"
};

/// Compares reverse-mode gradients of a scalar loss with central differences
/// (fourth order, so a step of 1e-3 keeps both truncation and roundoff near
/// 1e-12).
/// `loss` builds the graph from leaf variables holding `inputs`. Per-entry
/// relative error is |a - n| / max(|a|, |n|, floor * g_max), g_max being the
/// largest gradient magnitude of that input; the floor keeps entries whose
/// true gradient is (near) zero from dividing by zero. `max_entries` > 0
/// checks an evenly strided subset of each input.
/// Fourth-order central difference of f at 0:
/// (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h.
template <class F>
double central_difference(F&& f, double h) {
  return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
}

using LossBuilder = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

inline GradCheckResult gradient_check(const LossBuilder& loss, const std::vector<Mat<double>>& inputs,
                                      const std::vector<std::string>& names = {}, double h = 1e-3,
                                      Index max_entries = 0, double floor = 1e-3) {
  std::vector<Mat<double>> analytic;
  {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    tape.backward(loss(tape, vars));
    for (const auto& v : vars) analytic.push_back(v.grad().size() ? v.grad() : Mat<double>::Zero(v.rows(), v.cols()));
  }
  auto eval = [&](const std::vector<Mat<double>>& in) {
    ad::Tape<double> tape;
    tape.set_grad_enabled(false);
    std::vector<ad::Var<double>> vars;
    for (const auto& m : in) vars.push_back(tape.constant(m));
    return loss(tape, vars).scalar();
  };
  GradCheckResult r;
  std::vector<Mat<double>> work = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const double gmax = analytic[a].cwiseAbs().maxCoeff();
    const Index n = inputs[a].size();
    const Index stride = max_entries > 0 ? std::max<Index>(1, n / max_entries) : 1;
    for (Index k = 0; k < n; k += stride) {
      const double x0 = inputs[a].data()[k];
      auto f = [&](double dx) {
        work[a].data()[k] = x0 + dx;
        return eval(work);
      };
      const double num = central_difference(f, h);
      work[a].data()[k] = x0;
      const double an = analytic[a].data()[k];
      const double abs_err = std::abs(an - num);
      const double rel = abs_err / std::max({std::abs(an), std::abs(num), floor * gmax, 1e-300});
      ++r.checked;
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = (a < names.size() ? names[a] : "input" + std::to_string(a)) + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

/// Same check for named parameters: the loss reads them through
/// tape.param(), gradients land in Parameter::grad.
inline GradCheckResult gradient_check_params(const std::function<ad::Var<double>(ad::Tape<double>&)>& loss,
                                             const std::vector<Parameter<double>*>& params, double h = 1e-3,
                                             Index max_entries = 0, double floor = 1e-3) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape<double> tape;
    tape.backward(loss(tape));
  }
  std::vector<Mat<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  auto eval = [&] {
    ad::Tape<double> tape;
    tape.set_grad_enabled(false);
    return loss(tape).scalar();
  };
  GradCheckResult r;
  for (std::size_t a = 0; a < params.size(); ++a) {
    Mat<double>& v = params[a]->value;
    const double gmax = analytic[a].cwiseAbs().maxCoeff();
    const Index n = v.size();
    const Index stride = max_entries > 0 ? std::max<Index>(1, n / max_entries) : 1;
    for (Index k = 0; k < n; k += stride) {
      const double x0 = v.data()[k];
      auto f = [&](double dx) {
        v.data()[k] = x0 + dx;
        return eval();
      };
      const double num = central_difference(f, h);
      v.data()[k] = x0;
      const double an = analytic[a].data()[k];
      const double abs_err = std::abs(an - num);
      const double rel = abs_err / std::max({std::abs(an), std::abs(num), floor * gmax, 1e-300});
      ++r.checked;
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = params[a]->name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

}  // namespace lenerf
