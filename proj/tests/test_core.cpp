#include <gtest/gtest.h>

#include <cmath>

#include "lenerf/core/adam.hpp"
#include "lenerf/core/ops.hpp"
#include "lenerf/train/gradcheck.hpp"

using namespace lenerf;

TEST(Tape, NormGradientIsUnitDirection) {
  ad::Tape<double> t;
  Mat<double> v(1, 3);
  v << 3.0, -4.0, 12.0;
  auto x = t.variable(v);
  auto n = ad::norm(x);
  t.backward(n);
  EXPECT_DOUBLE_EQ(n.scalar(), 13.0);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(x.grad()(0, i), v(0, i) / 13.0, 1e-15);
}

TEST(Tape, NonFiniteNamesTheOperation) {
  ad::Tape<double> t;
  auto x = t.variable(Mat<double>::Constant(1, 1, -1.0));
  try {
    ad::log(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.op(), "log");
  }
}

TEST(Tape, FrozenParameterGetsNoGradient) {
  Parameter<double> p("p", Mat<double>::Constant(1, 2, 2.0));
  p.trainable = false;
  ad::Tape<double> t;
  auto y = ad::sum(ad::square(t.param(p)));
  t.backward(y);
  EXPECT_EQ(p.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Tape, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  const Mat<double> a = random_normal<double>(3, 4, 1.0, rng);
  const Mat<double> b = random_normal<double>(4, 2, 1.0, rng);
  auto r = gradient_check(
      [](ad::Tape<double>&, const std::vector<ad::Var<double>>& v) {
        auto y = ad::softplus(ad::matmul(v[0], v[1]));
        return ad::logsumexp(ad::reshape(ad::tanh(y), 6, 1));
      },
      {a, b});
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Mat<double> v = Mat<double>::Constant(2, 2, 0.7);
  AdamState<double> s;
  adam_update<double>(v, Mat<double>::Zero(2, 2), s, 0.1);
  EXPECT_EQ(v, Mat<double>::Constant(2, 2, 0.7));
}

TEST(Adam, FirstStepClosedForm) {
  Mat<double> v(1, 3), g(1, 3);
  v << 1.0, 1.0, 1.0;
  g << 0.5, -2.0, 1e-3;
  AdamState<double> s;
  adam_update(v, g, s, 0.01);
  for (Index i = 0; i < 3; ++i) {
    const double gi = g(0, i);
    EXPECT_NEAR(v(0, i), 1.0 - 0.01 * gi / (std::abs(gi) + 1e-8), 1e-15);
  }
}

TEST(Adam, QuadraticDecreasesEachStep) {
  Parameter<double> p("theta", Mat<double>::Constant(1, 1, 1.0));
  Adam<double> opt({&p}, 0.1);
  double prev = 1.0;
  for (int k = 0; k < 3; ++k) {
    opt.zero_grad();
    ad::Tape<double> t;
    t.backward(ad::sum(ad::square(t.param(p))));
    opt.step();
    EXPECT_LT(p.value(0, 0), prev);
    prev = p.value(0, 0);
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Mat<double> v(1, 2);
  AdamState<double> s;
  EXPECT_THROW(adam_update(v, Mat<double>(2, 1), s, 0.1), ContractError);
}
