// tests/test_tensor_autograd.cpp

// Copyright 2026 The modfuse Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "modfuse/grad_check.hpp"
#include "modfuse/ops.hpp"

namespace modfuse {
namespace {

Tensor column(std::initializer_list<double> v) {
  Tensor t(Shape{v.size(), 1});
  std::size_t i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape tape;
  Var c = matmul(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(column({5, 6})));
  EXPECT_EQ(c.value(), column({5, 6}));
}

TEST(Matmul, HandComputedProduct) {
  Tape tape;
  Var c = matmul(tape.constant(Tensor::matrix({{1, 2}, {3, 4}})), tape.constant(column({5, 6})));
  EXPECT_EQ(c.value(), column({17, 39}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, a);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] x [2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientsFollowTransposeRules) {
  Tape tape;
  Var a = tape.variable(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = tape.variable(column({5, 6}));
  tape.backward(matmul(a, b), column({1, -1}));
  // dA = dC * B^T, dB = A^T * dC
  EXPECT_EQ(tape.grad(a), Tensor::matrix({{5, 6}, {-5, -6}}));
  EXPECT_EQ(tape.grad(b), column({-2, -2}));
}

TEST(Softmax, SymmetricInputIsUniform) {
  const Tensor p = softmax(Tensor::vector({0, 0}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, ExpOfLogK) {
  const Tensor p = softmax(Tensor::vector({0, 0.693147, 1.098612}));
  EXPECT_NEAR(p[0], 1.0 / 6, 1e-6);
  EXPECT_NEAR(p[1], 2.0 / 6, 1e-6);
  EXPECT_NEAR(p[2], 3.0 / 6, 1e-6);
}

TEST(Softmax, ShiftInvariant) {
  const Tensor x = Tensor::matrix({{0.3, -1.2, 2.5}, {4, 4, -7}});
  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 123.25;
  const Tensor a = softmax(x), b = softmax(shifted);
  EXPECT_LT(max_abs_difference(a, b), 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor p = softmax(Tensor::vector({1000, 999}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(Softmax, EmptyAxisIsShapeError) {
  EXPECT_THROW(softmax(Tensor(Shape{2, 0})), ShapeError);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tape tape;
  Var y = layer_norm(tape.constant(Tensor::vector({3, 3, 3})),
                     tape.constant(Tensor::vector({1, 1, 1})),
                     tape.constant(Tensor::vector({0, 0, 0})), 1e-5);
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, HandComputedWithZeroEps) {
  Tape tape;
  Var y = layer_norm(tape.constant(Tensor::vector({1, 2, 3})),
                     tape.constant(Tensor::vector({1, 1, 1})),
                     tape.constant(Tensor::vector({0, 0, 0})), 0.0);
  EXPECT_NEAR(y.value()[0], -1.224745, 1e-5);
  EXPECT_NEAR(y.value()[1], 0.0, 1e-12);
  EXPECT_NEAR(y.value()[2], 1.224745, 1e-5);
}

TEST(LayerNorm, ConstantInputYieldsBeta) {
  Tape tape;
  Var y = layer_norm(tape.constant(Tensor::matrix({{2, 2}, {-1, -1}})),
                     tape.constant(Tensor::vector({3, 4})),
                     tape.constant(Tensor::vector({0.5, -0.25})), 1e-5);
  EXPECT_EQ(y.value(), Tensor::matrix({{0.5, -0.25}, {0.5, -0.25}}));
}

TEST(LayerNorm, NegativeEpsRejected) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1, 2}));
  Var g = tape.constant(Tensor::vector({1, 1}));
  EXPECT_THROW(layer_norm(x, g, g, -1.0), ConfigError);
}

TEST(Conv1d, IdentityKernel) {
  Tape tape;
  Var y = conv1d(tape.constant(Tensor::matrix({{1, 2, 3}})),
                 tape.constant(Tensor(Shape{1, 1, 1}, 1.0)), 1);
  EXPECT_EQ(y.value(), Tensor::matrix({{1, 2, 3}}));
}

TEST(Conv1d, PairSumKernel) {
  Tape tape;
  Var y = conv1d(tape.constant(Tensor::matrix({{1, 2, 3}})),
                 tape.constant(Tensor(Shape{1, 1, 2}, 1.0)), 1);
  EXPECT_EQ(y.value(), Tensor::matrix({{3, 5}}));
}

TEST(Conv1d, OutputLengthFormula) {
  Tape tape;
  Var y = conv1d(tape.constant(Tensor(Shape{1, 90}, 1.0)),
                 tape.constant(Tensor(Shape{1, 1, 2}, 1.0)), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 45}));
}

TEST(Conv1d, KernelLongerThanInputRejected) {
  Tape tape;
  EXPECT_THROW(conv1d(tape.constant(Tensor(Shape{1, 2})), tape.constant(Tensor(Shape{1, 1, 3})), 1),
               ShapeError);
}

TEST(Conv2dMaxpool, IdentityThenPoolTakesBlockMax) {
  Tape tape;
  Var y = conv2d_maxpool(tape.constant(Tensor(Shape{1, 2, 2}, {1, 2, 3, 4})),
                         tape.constant(Tensor(Shape{1, 1, 1, 1}, 1.0)));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.value()[0], 4.0);
}

TEST(Conv2dMaxpool, ShapeFormula) {
  Tape tape;
  Var y = conv2d_maxpool(tape.constant(Tensor(Shape{1, 8, 8}, 0.5)),
                         tape.constant(Tensor(Shape{1, 1, 3, 3}, 0.1)));
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
}

TEST(Conv2dMaxpool, ZeroKernelsGiveZeros) {
  Tape tape;
  Var y = conv2d_maxpool(tape.constant(Tensor(Shape{2, 5, 7}, 1.5)),
                         tape.constant(Tensor(Shape{3, 2, 2, 2})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dMaxpool, TieRoutesGradientToFirstCell) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{1, 2, 2}, 7.0));
  Var y = conv2d_maxpool(x, tape.constant(Tensor(Shape{1, 1, 1, 1}, 1.0)));
  tape.backward(sum(y));
  EXPECT_EQ(tape.grad(x), Tensor(Shape{1, 2, 2}, {1, 0, 0, 0}));
}

TEST(Conv2dMaxpool, KernelLargerThanInputRejected) {
  Tape tape;
  EXPECT_THROW(conv2d_maxpool(tape.constant(Tensor(Shape{1, 2, 2})),
                              tape.constant(Tensor(Shape{1, 1, 3, 1}))),
               ShapeError);
}

TEST(GradCheck, SumOfSquares) {
  const double err = grad_check([](Tape&, Var x) { return sum(mul(x, x)); },
                                Tensor::vector({1, 2}));
  EXPECT_LT(err, 1e-7);
  Tape tape;
  Var x = tape.variable(Tensor::vector({1, 2}));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(tape.grad(x), Tensor::vector({2, 4}));
}

TEST(GradCheck, ConstantFunction) {
  const double err = grad_check(
      [](Tape& t, Var) { return t.constant(Tensor::scalar(3.0)); }, Tensor::vector({1, -4, 2}));
  EXPECT_LT(err, 1e-7);
}

TEST(GradCheck, DetectsWrongGradient) {
  // Forward x^2 with a backward that reports x instead of 2x.
  auto half_square = [](Tape& t, Var x) {
    Tensor y = x.value();
    for (auto& v : y.data()) v *= v;
    Var out = t.record("bad_square", y, {x.index}, [x](Tape& tp, std::size_t self) {
      Tensor g = tp.grad_buffer(self);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= tp.value(x.index)[i];
      tp.accumulate(x.index, g);
    });
    return sum(out);
  };
  EXPECT_GT(grad_check(half_square, Tensor::vector({1.5, 2})), 0.1);
}

TEST(Tape, BackwardTwiceRaises) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1}));
  Var y = sum(mul(x, x));
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), std::logic_error);
  tape.reset();
  Var x2 = tape.variable(Tensor::vector({3}));
  tape.backward(sum(mul(x2, x2)));
  EXPECT_EQ(tape.grad(x2)[0], 6.0);
}

TEST(Tape, NonFiniteOutputNamesOp) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1e300}));
  try {
    mul(x, x);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos) << e.what();
  }
}

TEST(Tape, ZeroVarianceWithZeroEpsIsReported) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({2, 2}));
  Var g = tape.constant(Tensor::vector({1, 1}));
  EXPECT_THROW(layer_norm(x, g, g, 0.0), NumericalError);
}

TEST(Tape, ParameterRegisteredOnceAccumulatesAllUses) {
  Parameter p(Tensor::vector({3}));
  Tape tape;
  Var a = tape.parameter(p);
  Var b = tape.parameter(p);
  EXPECT_EQ(a.index, b.index);
  tape.backward(sum(add(mul(a, a), b)));
  EXPECT_EQ(p.grad[0], 7.0);
}

TEST(Tape, InferenceTapeKeepsNoGradients) {
  Parameter p(Tensor::vector({1, 2}));
  Tape tape(false);
  Var y = sum(mul(tape.parameter(p), tape.parameter(p)));
  EXPECT_EQ(y.value()[0], 5.0);
  EXPECT_FALSE(tape.requires_grad(y.index));
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  Tape tape;
  const std::vector<int> labels{0, 1};
  Var l = cross_entropy(tape.constant(Tensor(Shape{2, 2})), labels);
  EXPECT_NEAR(l.value()[0], std::log(2.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectLogitsGiveZeroAndMean) {
  Tape tape;
  const std::vector<int> one{1};
  Var sure = cross_entropy(tape.constant(Tensor::matrix({{-800, 800}})), one);
  EXPECT_EQ(sure.value()[0], 0.0);
  const std::vector<int> both{1, 0};
  Var mixed = cross_entropy(tape.constant(Tensor::matrix({{-800, 800}, {0, 0}})), both);
  EXPECT_NEAR(mixed.value()[0], 0.346574, 1e-6);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape tape;
  const std::vector<int> bad{2};
  EXPECT_THROW(cross_entropy(tape.constant(Tensor(Shape{1, 2})), bad), ContractError);
}

}  // namespace
}  // namespace modfuse
