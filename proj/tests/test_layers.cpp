// tests/test_layers.cpp

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

#include <algorithm>
#include <cmath>

#include "modfuse/layers.hpp"
#include "modfuse/ops.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {
namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

TEST(PositionalEncoding, RowZeroAlternatesZeroOne) {
  const auto pe = make_positional_table(4, 6);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(pe.table.at(0, j), j % 2 ? 1.0 : 0.0);
}

TEST(PositionalEncoding, HandEvaluatedRowOne) {
  const auto pe = make_positional_table(2, 4);
  EXPECT_NEAR(pe.table.at(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(pe.table.at(1, 1), 0.540302, 1e-6);
  EXPECT_NEAR(pe.table.at(1, 2), 0.010000, 1e-6);
  EXPECT_NEAR(pe.table.at(1, 3), 0.999950, 1e-6);
}

TEST(PositionalEncoding, MatchesClosedFormEverywhere) {
  const std::size_t T = 10, F = 8;
  const auto pe = make_positional_table(T, F);
  for (std::size_t pos = 0; pos < T; ++pos)
    for (std::size_t i = 0; i < F / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) / F);
      EXPECT_NEAR(pe.table.at(pos, 2 * i), std::sin(angle), 1e-9);
      EXPECT_NEAR(pe.table.at(pos, 2 * i + 1), std::cos(angle), 1e-9);
    }
  for (double v : pe.table.data()) EXPECT_LE(std::abs(v), 1.0);
}

TEST(PositionalEncoding, ZeroInputReturnsTableSlice) {
  const auto pe = make_positional_table(5, 4);
  Tape tape;
  Var y = positional_encode(tape.constant(Tensor(Shape{3, 4})), pe);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.value().at(p, j), pe.table.at(p, j));
}

TEST(PositionalEncoding, TooManyStepsRejected) {
  const auto pe = make_positional_table(2, 4);
  Tape tape;
  EXPECT_THROW(positional_encode(tape.constant(Tensor(Shape{3, 4})), pe), ShapeError);
}

TEST(Attention, SingleStepPassesValuesThrough) {
  Rng rng(3);
  auto p = make_encoder_layer(4, 2, 8, true, 1e-5, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const AttentionState s = inspect_attention(x, p);
  for (const auto& probs : s.probs) EXPECT_EQ(probs, Tensor(Shape{1, 1}, 1.0));
  EXPECT_LT(max_abs_difference(s.attended, s.v), 1e-15);
}

TEST(Attention, IdenticalStepsAttendEvenly) {
  Rng rng(4);
  auto p = make_encoder_layer(4, 2, 8, true, 1e-5, rng);
  Tensor x(Shape{2, 4});
  for (std::size_t j = 0; j < 4; ++j) x.at(0, j) = x.at(1, j) = rng.normal();
  for (const auto& probs : inspect_attention(x, p).probs)
    for (double v : probs.data()) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Attention, RowsSumToOneAndAEqualsPV) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = make_encoder_layer(8, 4, 16, trial % 2 == 0, 1e-5, rng);
    const AttentionState s = inspect_attention(random_tensor({5, 8}, rng), p);
    for (std::size_t h = 0; h < 4; ++h) {
      const Tensor& P = s.probs[h];
      for (std::size_t i = 0; i < 5; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 5; ++j) row += P.at(i, j);
        EXPECT_NEAR(row, 1.0, 1e-9);
      }
      // A = P V on this head's columns.
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < 5; ++j) acc += P.at(i, j) * s.v.at(j, h * 2 + c);
          EXPECT_NEAR(s.attended.at(i, h * 2 + c), acc, 1e-12);
        }
    }
  }
}

TEST(Attention, HeadDivisibility) {
  Rng rng(1);
  EXPECT_THROW(make_encoder_layer(8, 16, 16, true, 1e-5, rng), ConfigError);
  EXPECT_THROW(make_encoder_layer(24, 16, 48, true, 1e-5, rng), ConfigError);
  EXPECT_NO_THROW(make_encoder_layer(32, 16, 64, true, 1e-5, rng));
  EXPECT_NO_THROW(make_encoder_layer(16, 16, 32, true, 1e-5, rng));
}

TEST(EncoderLayer, PreservesShape) {
  Rng rng(6);
  auto p = make_encoder_layer(32, 16, 64, true, 1e-5, rng);
  Tape tape;
  Var y = encoder_layer_forward(tape.constant(random_tensor({8, 32}, rng)), p);
  EXPECT_EQ(y.shape(), (Shape{8, 32}));
}

TEST(EncoderLayer, ZeroInputAndProjectionsGiveBeta) {
  Rng rng(7);
  auto p = make_encoder_layer(4, 2, 8, true, 1e-5, rng);
  for (Parameter* w : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo, &p.ff1,
                       &p.ff1_bias, &p.ff2, &p.ff2_bias})
    w->value.fill(0.0);
  p.norm2_beta.value = Tensor::vector({0.1, -0.2, 0.3, -0.4});
  Tape tape;
  Var y = encoder_layer_forward(tape.constant(Tensor(Shape{3, 4})), p);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.value().at(t, j), p.norm2_beta.value[j]);
}

TEST(Decimator, DefaultAudioLength) {
  EXPECT_EQ(decimated_length(149, DecimatorConfig{}), 36u);
  EXPECT_EQ(decimated_length(8, DecimatorConfig{{3}, {2}}), 3u);
}

TEST(Decimator, NonReducingStackRejected) {
  EXPECT_THROW(decimated_length(20, DecimatorConfig{{1, 1}, {1, 1}}), ConfigError);
  EXPECT_THROW(decimated_length(4, DecimatorConfig{{3, 3}, {2, 2}}), ConfigError);
}

TEST(Decimator, KeepsChannelAndFeatureAxes) {
  Rng rng(8);
  auto p = make_decimator(2, DecimatorConfig{}, rng);
  Tape tape;
  Var y = decimate(tape.constant(random_tensor({2, 5, 149}, rng)), p);
  EXPECT_EQ(y.shape(), (Shape{2, 5, 36}));
}

TEST(ModalityEncoder, DefaultShapes) {
  const ModalityEncoderConfig cfg;
  EXPECT_EQ(encoder_feature_map({1, 64, 36}, cfg), (std::pair<std::size_t, std::size_t>{14, 7}));
  EXPECT_EQ(encoder_feature_map({1, 96, 36}, cfg), (std::pair<std::size_t, std::size_t>{22, 7}));
  Rng rng(9);
  auto video = make_modality_encoder({1, 64, 36}, cfg, 32, 8, rng);
  auto audio = make_modality_encoder({1, 96, 36}, cfg, 32, 8, rng);
  Tape tape;
  EXPECT_EQ(encode_modality(tape.constant(random_tensor({1, 64, 36}, rng)), video).shape(),
            (Shape{32, 8}));
  EXPECT_EQ(encode_modality(tape.constant(random_tensor({1, 96, 36}, rng)), audio).shape(),
            (Shape{32, 8}));
}

TEST(ModalityEncoder, TooSmallInputRejected) {
  EXPECT_THROW(encoder_feature_map({1, 4, 4}, ModalityEncoderConfig{}), ConfigError);
}

TEST(MeanPool, Examples) {
  Tape tape;
  EXPECT_EQ(mean_pool(tape.constant(Tensor::matrix({{1, 2}, {3, 4}}))).value(),
            Tensor::vector({2, 3}));
  EXPECT_EQ(mean_pool(tape.constant(Tensor::matrix({{5, -1}}))).value(), Tensor::vector({5, -1}));
  EXPECT_THROW(mean_pool(tape.constant(Tensor(Shape{0, 3}))), ShapeError);
}

TEST(MeanPool, PermutationInvariant) {
  Rng rng(10);
  const Tensor x = random_tensor({6, 3}, rng);
  Tensor y = x;
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 3; ++j) y.at(t, j) = x.at(perm[t], j);
  // The permutation changes summation order, so equality holds up to rounding.
  Tape tape;
  const Tensor a = mean_pool(tape.constant(x)).value();
  const Tensor b = mean_pool(tape.constant(y)).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a[j], b[j], 1e-15);
}

TEST(Classifier, ZeroWeightsEmitOutputBias) {
  Rng rng(11);
  auto p = make_classifier(32, 32, 2, rng);
  p.hidden.value.fill(0.0);
  p.out.value.fill(0.0);
  p.out_bias.value = Tensor::vector({0.25, -1.5});
  Tape tape;
  Var logits = classify(tape.constant(random_tensor({32}, rng)), p);
  EXPECT_EQ(logits.value(), Tensor::vector({0.25, -1.5}));
}

TEST(Init, UniformWithinFanInBound) {
  Rng rng(12);
  const Parameter p = init_uniform({20, 30}, 25, rng);
  for (double v : p.value.data()) EXPECT_LE(std::abs(v), 0.2);
}

}  // namespace
}  // namespace modfuse
