// include/modfuse/layers.hpp

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

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "modfuse/ops.hpp"
#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

struct NamedParameter {
  std::string name;
  Parameter* param;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Parameter init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Positional encoding

struct PositionalEncodingTable {
  Tensor table;  // [max_steps x d_model]
  std::size_t d_model = 0;
};

// table[pos][2i] = sin(pos / 10000^(2i/F)), table[pos][2i+1] = cos(same).
PositionalEncodingTable make_positional_table(std::size_t max_steps,
                                              std::size_t d_model);
Var positional_encode(Var x, const PositionalEncodingTable& pe);

// ---------------------------------------------------------------------------
// Transformer encoder layer

struct EncoderLayerParams {
  std::size_t heads = 16;
  bool scaled = true;
  double eps = 1e-5;
  Parameter wq, bq, wk, bk, wv, bv;  // [F x F], [F]
  Parameter wo, bo;
  Parameter ff1, ff1_bias, ff2, ff2_bias;  // F -> ff_width -> F
  Parameter norm1_gamma, norm1_beta, norm2_gamma, norm2_beta;

  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

EncoderLayerParams make_encoder_layer(std::size_t features, std::size_t heads,
                                      std::size_t ff_width, bool scaled,
                                      double eps, Rng& rng);

// Intermediate attention values of one layer, for inspection.
struct AttentionState {
  Tensor q, k, v;                 // [T x F]
  std::vector<Tensor> scores;     // per head S, [T x T]
  std::vector<Tensor> probs;      // per head P = softmax(S)
  Tensor attended;                // A = P V per head, concatenated [T x F]
};

AttentionState inspect_attention(const Tensor& x, const EncoderLayerParams& p);

// Multi-head self-attention followed by the output projection.
Var mha_forward(Var x, EncoderLayerParams& p);
// y1 = LN(x + mha(x)); y = LN(y1 + ffn(y1)).
Var encoder_layer_forward(Var x, EncoderLayerParams& p);

// Shared-weight sequence encoder G: input layer norm, positional encoding,
// then a stack of encoder layers.
struct SequenceEncoderParams {
  Parameter input_gamma, input_beta;
  double eps = 1e-5;
  std::vector<EncoderLayerParams> layers;

  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

SequenceEncoderParams make_sequence_encoder(std::size_t features, std::size_t heads,
                                            std::size_t ff_width, std::size_t layers,
                                            bool scaled, double eps, Rng& rng);

// x: [T x F] -> [T x F]
Var encode_sequence(Var x, SequenceEncoderParams& p, const PositionalEncodingTable& pe);

// ---------------------------------------------------------------------------
// Embedding decimator

struct DecimatorConfig {
  std::vector<std::size_t> kernels{3, 3};
  std::vector<std::size_t> strides{2, 2};
};

struct DecimatorParams {
  std::vector<std::size_t> strides;
  std::vector<Parameter> kernels;  // [C x C x K]
  std::vector<Parameter> biases;   // [C]

  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

// Output length of the configured stack; throws ConfigError if it drops below
// one or does not shorten the input.
std::size_t decimated_length(std::size_t steps, const DecimatorConfig& cfg);

DecimatorParams make_decimator(std::size_t channels, const DecimatorConfig& cfg,
                               Rng& rng);

// w: [C x F x T] -> [C x F x T_decim]
Var decimate(Var w, DecimatorParams& p);

// ---------------------------------------------------------------------------
// Modality encoder (two conv + max-pool stages and a projection to F x T)

struct EmbeddingShape {
  std::size_t channels = 1;
  std::size_t features = 0;
  std::size_t steps = 0;

  Shape shape() const { return {channels, features, steps}; }
  friend bool operator==(const EmbeddingShape&, const EmbeddingShape&) = default;
};

struct ModalityEncoderConfig {
  std::size_t channels1 = 4;
  std::size_t channels2 = 4;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
};

struct ModalityEncoderParams {
  Parameter conv1, conv1_bias, conv2, conv2_bias;
  Parameter feature_proj, feature_bias;  // [C2*H2 x F], [F]
  Parameter temporal_proj;               // [T x W2]

  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

// Spatial size (H2, W2) after both conv + pool stages.
std::pair<std::size_t, std::size_t> encoder_feature_map(const EmbeddingShape& in,
                                                        const ModalityEncoderConfig& cfg);

ModalityEncoderParams make_modality_encoder(const EmbeddingShape& in,
                                            const ModalityEncoderConfig& cfg,
                                            std::size_t latent_features,
                                            std::size_t latent_steps, Rng& rng);

// w: [C x F_in x T_in] -> [F x T]
Var encode_modality(Var w, ModalityEncoderParams& p);

// ---------------------------------------------------------------------------
// Pooling and classifier

// Temporal mean pooling is the mean_pool op: [T x F] -> [F].

struct ClassifierParams {
  Parameter hidden, hidden_bias;  // [F x H], [H]
  Parameter out, out_bias;        // [H x 2], [2]

  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

ClassifierParams make_classifier(std::size_t features, std::size_t hidden,
                                 std::size_t classes, Rng& rng);

// r: [F] -> logits [classes]
Var classify(Var r, ClassifierParams& p);

}  // namespace modfuse
