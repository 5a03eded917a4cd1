// include/modfuse/fusion.hpp

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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modfuse/layers.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

enum class Variant { audio_only, video_only, unified, early, late };

std::string_view variant_name(Variant v);
// Accepts "unified", "early", "late", "audio"/"audio_only", "video"/"video_only".
Variant parse_variant(std::string_view name);
bool uses_audio(Variant v);
bool uses_video(Variant v);
// True for the variants that accept samples with absent video.
bool tolerates_missing_video(Variant v);

enum class Modality { audio, video };

struct ModelConfig {
  Variant variant = Variant::unified;
  std::size_t latent_features = 32;  // F
  std::size_t latent_steps = 8;      // T
  std::size_t heads = 16;
  bool attention_scale = true;
  std::size_t encoder_layers = 1;
  std::size_t ff_width = 0;           // 0 selects 2F
  std::size_t classifier_hidden = 0;  // 0 selects F
  double layer_norm_eps = 1e-5;
  EmbeddingShape audio{1, 96, 149};
  EmbeddingShape video{1, 64, 36};
  DecimatorConfig decimator;
  ModalityEncoderConfig audio_encoder;
  ModalityEncoderConfig video_encoder;
  double dropout_p = 0.5;  // video dropout, unified training only

  std::size_t effective_ff_width() const { return ff_width ? ff_width : 2 * latent_features; }
  std::size_t effective_hidden() const {
    return classifier_hidden ? classifier_hidden : latent_features;
  }
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

// Learnable state of one model. Which members are engaged depends on the
// variant:
//   audio_only: decimator, audio_encoder, encoder, classifier
//   video_only: video_encoder, encoder, classifier
//   unified:    everything but video_encoder_g; `encoder` is the shared G
//   early:      decimator, both modality encoders, encoder, classifier
//   late:       as early plus video_encoder_g; `encoder` acts as G_a
struct FusionParams {
  std::optional<DecimatorParams> decimator;
  std::optional<ModalityEncoderParams> audio_encoder;
  std::optional<ModalityEncoderParams> video_encoder;
  SequenceEncoderParams encoder;
  std::optional<SequenceEncoderParams> video_encoder_g;
  std::optional<Parameter> audio_scale;  // c_a
  std::optional<Parameter> video_scale;  // c_v
  ClassifierParams classifier;

  // Stable, name-sorted order independent of the variant's construction path.
  std::vector<NamedParameter> parameters();
};

struct DropoutMask {
  std::vector<std::uint8_t> drop;  // 1 = video excluded for that sample
  double p = 0.0;
};

// B independent Bernoulli(p) draws.
DropoutMask sample_modality_dropout(std::size_t batch, double p, Rng& rng);

class FusionModel {
 public:
  FusionModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }
  FusionParams& params() noexcept { return params_; }
  const FusionParams& params() const noexcept { return params_; }
  std::vector<NamedParameter> parameters() { return params_.parameters(); }
  void zero_grad();

  // Dispatches on the configured variant. `video == nullptr` means absent.
  Var forward(Tape& tape, const Tensor& audio, const Tensor* video);

  Var forward_unified(Tape& tape, const Tensor& audio, const Tensor* video);
  Var forward_early(Tape& tape, const Tensor& audio, const Tensor* video);
  Var forward_late(Tape& tape, const Tensor& audio, const Tensor* video);
  Var forward_unimodal(Tape& tape, const Tensor& x, Modality which);

  // Latent sequence [T x F] of one modality (decimator and modality encoder).
  Var latent(Tape& tape, const Tensor& x, Modality which);
  // mean_pool(G(PE(LN(latent)))) for one modality through `g`.
  Var represent(Var latent_seq, SequenceEncoderParams& g);
  // Pooled representation of one modality through the encoder that variant
  // assigns to it (the shared G for unified).
  Var branch_representation(Tape& tape, const Tensor& x, Modality which);
  Var head(Var r);

 private:
  ModelConfig config_;
  FusionParams params_;
  PositionalEncodingTable pe_;
};

}  // namespace modfuse
