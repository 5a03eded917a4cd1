// src/fusion.cpp

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

#include "modfuse/fusion.hpp"

#include <algorithm>

namespace modfuse {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::audio_only: return "audio_only";
    case Variant::video_only: return "video_only";
    case Variant::unified: return "unified";
    case Variant::early: return "early";
    case Variant::late: return "late";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "unified") return Variant::unified;
  if (name == "early") return Variant::early;
  if (name == "late") return Variant::late;
  if (name == "audio" || name == "audio_only") return Variant::audio_only;
  if (name == "video" || name == "video_only") return Variant::video_only;
  throw ConfigError("unknown model '" + std::string(name) +
                    "'; valid: unified, early, late, audio, video");
}

bool uses_audio(Variant v) { return v != Variant::video_only; }
bool uses_video(Variant v) { return v != Variant::audio_only; }
bool tolerates_missing_video(Variant v) {
  return v == Variant::unified || v == Variant::audio_only;
}

void ModelConfig::validate() const {
  if (latent_features == 0 || latent_steps == 0)
    throw ConfigError("latent shape must be non-empty");
  if (heads == 0 || latent_features % heads != 0)
    throw ConfigError("latent feature width " + std::to_string(latent_features) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  if (encoder_layers == 0) throw ConfigError("encoder_layers must be >= 1");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be > 0");
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0))
    throw ConfigError("dropout probability must lie in [0, 1]");
  if (uses_audio(variant)) {
    if (audio.channels == 0 || audio.features == 0 || audio.steps == 0)
      throw ConfigError("audio embedding shape must be non-empty");
    EmbeddingShape decimated = audio;
    decimated.steps = decimated_length(audio.steps, decimator);
    encoder_feature_map(decimated, audio_encoder);
  }
  if (uses_video(variant)) {
    if (video.channels == 0 || video.features == 0 || video.steps == 0)
      throw ConfigError("video embedding shape must be non-empty");
    encoder_feature_map(video, video_encoder);
  }
}

std::vector<NamedParameter> FusionParams::parameters() {
  std::vector<NamedParameter> out;
  if (decimator) decimator->collect("decimator.", out);
  if (audio_encoder) audio_encoder->collect("audio_encoder.", out);
  if (video_encoder) video_encoder->collect("video_encoder.", out);
  encoder.collect("g.", out);
  if (video_encoder_g) video_encoder_g->collect("g_video.", out);
  if (audio_scale) out.push_back({"c_a", &*audio_scale});
  if (video_scale) out.push_back({"c_v", &*video_scale});
  classifier.collect("classifier.", out);
  std::sort(out.begin(), out.end(),
            [](const NamedParameter& a, const NamedParameter& b) { return a.name < b.name; });
  return out;
}

DropoutMask sample_modality_dropout(std::size_t batch, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
  DropoutMask m;
  m.p = p;
  m.drop.resize(batch);
  for (auto& d : m.drop) d = rng.bernoulli(p) ? 1 : 0;
  return m;
}

FusionModel::FusionModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const ModelConfig& c = config_;
  const std::size_t F = c.latent_features, T = c.latent_steps;
  auto rng_for = [seed](std::string_view part) { return Rng(derive_seed(seed, part)); };

  if (uses_audio(c.variant)) {
    Rng r1 = rng_for("decimator");
    params_.decimator = make_decimator(c.audio.channels, c.decimator, r1);
    EmbeddingShape decimated = c.audio;
    decimated.steps = decimated_length(c.audio.steps, c.decimator);
    Rng r2 = rng_for("audio_encoder");
    params_.audio_encoder = make_modality_encoder(decimated, c.audio_encoder, F, T, r2);
  }
  if (uses_video(c.variant)) {
    Rng r = rng_for("video_encoder");
    params_.video_encoder = make_modality_encoder(c.video, c.video_encoder, F, T, r);
  }
  {
    Rng r = rng_for("g");
    params_.encoder = make_sequence_encoder(F, c.heads, c.effective_ff_width(),
                                            c.encoder_layers, c.attention_scale,
                                            c.layer_norm_eps, r);
  }
  if (c.variant == Variant::late) {
    Rng r = rng_for("g_video");
    params_.video_encoder_g = make_sequence_encoder(F, c.heads, c.effective_ff_width(),
                                                    c.encoder_layers, c.attention_scale,
                                                    c.layer_norm_eps, r);
  }
  if (c.variant == Variant::unified) {
    params_.audio_scale = Parameter(Tensor(Shape{F}, 1.0));
    params_.video_scale = Parameter(Tensor(Shape{F}, 1.0));
  }
  Rng r = rng_for("classifier");
  params_.classifier = make_classifier(F, c.effective_hidden(), 2, r);
  pe_ = make_positional_table(T, F);
}

void FusionModel::zero_grad() {
  for (auto& np : parameters()) np.param->zero_grad();
}

Var FusionModel::latent(Tape& tape, const Tensor& x, Modality which) {
  const bool audio = which == Modality::audio;
  const EmbeddingShape& expected = audio ? config_.audio : config_.video;
  if (x.shape() != expected.shape())
    throw ShapeError(std::string(audio ? "audio" : "video") + " embedding shape " +
                     to_string(x.shape()) + " does not match configured " +
                     to_string(expected.shape()));
  auto& enc = audio ? params_.audio_encoder : params_.video_encoder;
  if (!enc)
    throw ContractError(std::string(variant_name(config_.variant)) + " model has no " +
                        (audio ? "audio" : "video") + " branch");
  Var w = tape.constant(x);
  if (audio) w = decimate(w, *params_.decimator);
  return transpose(encode_modality(w, *enc));
}

Var FusionModel::represent(Var latent_seq, SequenceEncoderParams& g) {
  return mean_pool(encode_sequence(latent_seq, g, pe_));
}

Var FusionModel::branch_representation(Tape& tape, const Tensor& x, Modality which) {
  SequenceEncoderParams& g =
      (config_.variant == Variant::late && which == Modality::video) ? *params_.video_encoder_g
                                                                      : params_.encoder;
  return represent(latent(tape, x, which), g);
}

Var FusionModel::head(Var r) { return classify(r, params_.classifier); }

Var FusionModel::forward(Tape& tape, const Tensor& audio, const Tensor* video) {
  switch (config_.variant) {
    case Variant::unified: return forward_unified(tape, audio, video);
    case Variant::early: return forward_early(tape, audio, video);
    case Variant::late: return forward_late(tape, audio, video);
    case Variant::audio_only: return forward_unimodal(tape, audio, Modality::audio);
    case Variant::video_only:
      if (!video) throw ContractError("video_only model needs a video embedding");
      return forward_unimodal(tape, *video, Modality::video);
  }
  throw std::logic_error("unreachable variant");
}

Var FusionModel::forward_unified(Tape& tape, const Tensor& audio, const Tensor* video) {
  if (config_.variant != Variant::unified)
    throw ContractError("forward_unified called on a " +
                        std::string(variant_name(config_.variant)) + " model");
  if (audio.size() == 0) throw ContractError("unified model needs an audio embedding");
  Var r = mul(tape.parameter(*params_.audio_scale),
              represent(latent(tape, audio, Modality::audio), params_.encoder));
  if (video) {
    Var rv = represent(latent(tape, *video, Modality::video), params_.encoder);
    r = add(r, mul(tape.parameter(*params_.video_scale), rv));
  }
  return head(r);
}

Var FusionModel::forward_early(Tape& tape, const Tensor& audio, const Tensor* video) {
  if (config_.variant != Variant::early)
    throw ContractError("forward_early called on a " +
                        std::string(variant_name(config_.variant)) + " model");
  if (audio.size() == 0 || !video)
    throw ContractError("early fusion needs both audio and video embeddings");
  Var z = add(latent(tape, audio, Modality::audio), latent(tape, *video, Modality::video));
  return head(represent(z, params_.encoder));
}

Var FusionModel::forward_late(Tape& tape, const Tensor& audio, const Tensor* video) {
  if (config_.variant != Variant::late)
    throw ContractError("forward_late called on a " +
                        std::string(variant_name(config_.variant)) + " model");
  if (audio.size() == 0 || !video)
    throw ContractError("late fusion needs both audio and video embeddings");
  Var ua = represent(latent(tape, audio, Modality::audio), params_.encoder);
  Var uv = represent(latent(tape, *video, Modality::video), *params_.video_encoder_g);
  return head(add(ua, uv));
}

Var FusionModel::forward_unimodal(Tape& tape, const Tensor& x, Modality which) {
  const Variant expected =
      which == Modality::audio ? Variant::audio_only : Variant::video_only;
  if (config_.variant != expected)
    throw ContractError(std::string(variant_name(config_.variant)) +
                        " model cannot run a single " +
                        (which == Modality::audio ? "audio" : "video") + " branch");
  return head(represent(latent(tape, x, which), params_.encoder));
}

}  // namespace modfuse
