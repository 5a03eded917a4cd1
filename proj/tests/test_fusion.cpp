// tests/test_fusion.cpp

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

#include <set>

#include "modfuse/fusion.hpp"
#include "modfuse/ops.hpp"
#include "modfuse/verify.hpp"

namespace modfuse {
namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

struct Inputs {
  Tensor audio, video;
};

Inputs random_inputs(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return {random_tensor(c.audio.shape(), rng), random_tensor(c.video.shape(), rng)};
}

Tensor logits(FusionModel& m, const Tensor& a, const Tensor* v) {
  Tape tape(false);
  return m.forward(tape, a, v).value();
}

TEST(Variant, ParseNamesAndAliases) {
  EXPECT_EQ(parse_variant("unified"), Variant::unified);
  EXPECT_EQ(parse_variant("audio"), Variant::audio_only);
  EXPECT_EQ(parse_variant("video_only"), Variant::video_only);
  try {
    parse_variant("fancy");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("unified, early, late, audio, video"), std::string::npos);
  }
}

TEST(FusionModel, DefaultShapeChainForEveryVariant) {
  for (Variant v : {Variant::unified, Variant::early, Variant::late, Variant::audio_only,
                    Variant::video_only}) {
    ModelConfig c;
    c.variant = v;
    FusionModel m(c, 1);
    const Inputs in = random_inputs(c, 2);
    Tape tape(false);
    EXPECT_EQ(m.forward(tape, in.audio, &in.video).shape(), (Shape{2})) << variant_name(v);
    if (uses_audio(v)) {
      EXPECT_EQ(m.latent(tape, in.audio, Modality::audio).shape(), (Shape{8, 32}));
    }
    if (uses_video(v)) {
      EXPECT_EQ(m.latent(tape, in.video, Modality::video).shape(), (Shape{8, 32}));
    }
  }
}

TEST(FusionModel, FusionScalarsStartAtOne) {
  ModelConfig c;
  FusionModel m(c, 3);
  EXPECT_EQ(m.params().audio_scale->value, Tensor(Shape{32}, 1.0));
  EXPECT_EQ(m.params().video_scale->value, Tensor(Shape{32}, 1.0));
  c.variant = Variant::early;
  EXPECT_FALSE(FusionModel(c, 3).params().audio_scale.has_value());
}

TEST(FusionModel, SameSeedSameWeights) {
  ModelConfig c = tiny_model_config(Variant::late);
  FusionModel a(c, 42), b(c, 42), other(c, 43);
  auto pa = a.parameters(), pb = b.parameters(), po = other.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].param->value, pb[i].param->value);
    any_diff |= !(pa[i].param->value == po[i].param->value);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Unified, MissingVideoEqualsDeletedBranch) {
  for (std::uint64_t s = 0; s < 100; ++s) EXPECT_EQ(missing_video_gap(s), 0.0) << "seed " << s;
}

TEST(Unified, ZeroVideoScalarMatchesAbsentVideo) {
  FusionModel m(tiny_model_config(Variant::unified), 5);
  m.params().video_scale->value.fill(0.0);
  const Inputs in = random_inputs(m.config(), 6);
  EXPECT_EQ(logits(m, in.audio, &in.video), logits(m, in.audio, nullptr));
}

TEST(Unified, SharedEncoderIsOneStorage) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_TRUE(shared_encoder_structurally_equal(s));
}

TEST(Unified, SharedEncoderGradientsAdd) {
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LE(shared_encoder_gradient_gap(s), 1e-9);
}

TEST(Unified, AudioRequired) {
  FusionModel m(tiny_model_config(Variant::unified), 1);
  const Inputs in = random_inputs(m.config(), 2);
  Tape tape;
  EXPECT_THROW(m.forward_unified(tape, Tensor(Shape{0}), &in.video), ContractError);
}

TEST(Early, MissingVideoIsContractError) {
  FusionModel m(tiny_model_config(Variant::early), 1);
  const Inputs in = random_inputs(m.config(), 2);
  Tape tape;
  EXPECT_THROW(m.forward(tape, in.audio, nullptr), ContractError);
}

TEST(Late, MissingVideoIsContractError) {
  FusionModel m(tiny_model_config(Variant::late), 1);
  const Inputs in = random_inputs(m.config(), 2);
  Tape tape;
  EXPECT_THROW(m.forward(tape, in.audio, nullptr), ContractError);
}

TEST(Late, BranchesHoldDisjointEncoders) {
  FusionModel m(tiny_model_config(Variant::late), 7);
  const Inputs in = random_inputs(m.config(), 8);
  auto video_rep = [&] {
    Tape tape(false);
    return m.branch_representation(tape, in.video, Modality::video).value();
  };
  const Tensor before = video_rep();
  std::vector<NamedParameter> ga;
  m.params().encoder.collect("", ga);
  for (auto& np : ga)
    for (auto& v : np.param->value.data()) v += 0.5;
  EXPECT_EQ(video_rep(), before);
}

TEST(Late, IdenticalEncodersAndInputsGiveIdenticalBranches) {
  const ModelConfig c = tiny_model_config(Variant::late);
  FusionModel m(c, 9);
  *m.params().video_encoder_g = m.params().encoder;
  Rng rng(10);
  const Tensor a = random_tensor(c.audio.shape(), rng);
  Tape tape(false);
  Var ua = m.represent(m.latent(tape, a, Modality::audio), m.params().encoder);
  Var uv = m.represent(m.latent(tape, a, Modality::audio), *m.params().video_encoder_g);
  EXPECT_EQ(ua.value(), uv.value());
}

TEST(AudioOnly, IgnoresVideo) {
  FusionModel m(tiny_model_config(Variant::audio_only), 11);
  const Inputs in = random_inputs(m.config(), 12);
  EXPECT_EQ(logits(m, in.audio, &in.video), logits(m, in.audio, nullptr));
}

TEST(VideoOnly, NeedsVideo) {
  FusionModel m(tiny_model_config(Variant::video_only), 13);
  const Inputs in = random_inputs(m.config(), 14);
  Tape tape;
  EXPECT_THROW(m.forward(tape, in.audio, nullptr), ContractError);
  EXPECT_THROW(m.forward_unimodal(tape, in.audio, Modality::audio), ContractError);
}

TEST(FusionModel, WrongInputShapeNamesBoth) {
  FusionModel m(tiny_model_config(Variant::audio_only), 15);
  Tape tape;
  try {
    m.forward(tape, Tensor(Shape{1, 3, 3}), nullptr);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("[1x3x3]"), std::string::npos) << w;
    EXPECT_NE(w.find("[1x14x41]"), std::string::npos) << w;
  }
}

TEST(ModalityDropout, Extremes) {
  Rng rng(1);
  for (auto d : sample_modality_dropout(50, 0.0, rng).drop) EXPECT_EQ(d, 0);
  for (auto d : sample_modality_dropout(50, 1.0, rng).drop) EXPECT_EQ(d, 1);
  EXPECT_THROW(sample_modality_dropout(3, 1.5, rng), ConfigError);
}

TEST(ModalityDropout, HalfRateConcentrates) {
  Rng rng(2026);
  const auto m = sample_modality_dropout(10000, 0.5, rng);
  std::size_t dropped = 0;
  for (auto d : m.drop) dropped += d;
  const double share = static_cast<double>(dropped) / 10000.0;
  EXPECT_GE(share, 0.48);
  EXPECT_LE(share, 0.52);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.dropout_p = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.audio = {1, 96, 6};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FusionParams, NamesAreSortedAndUnique) {
  FusionModel m(tiny_model_config(Variant::unified), 1);
  const auto ps = m.parameters();
  std::set<std::string> names;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    names.insert(ps[i].name);
    if (i) EXPECT_LT(ps[i - 1].name, ps[i].name);
  }
  EXPECT_EQ(names.size(), ps.size());
  EXPECT_TRUE(names.contains("c_a"));
  EXPECT_TRUE(names.contains("c_v"));
}

}  // namespace
}  // namespace modfuse
