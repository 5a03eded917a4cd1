// src/layers.cpp

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

#include "modfuse/layers.hpp"

#include <cmath>

namespace modfuse {

Parameter init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return Parameter(std::move(t));
}

namespace {

Parameter zeros(Shape shape) { return Parameter(Tensor(std::move(shape))); }
Parameter ones(Shape shape) { return Parameter(Tensor(std::move(shape), 1.0)); }

Var linear(Var x, Parameter& w, Parameter& b) {
  Tape& t = *x.tape;
  return add_bias(matmul(x, t.parameter(w)), t.parameter(b));
}

}  // namespace

// ---------------------------------------------------------------------------

PositionalEncodingTable make_positional_table(std::size_t max_steps,
                                              std::size_t d_model) {
  PositionalEncodingTable pe{Tensor(Shape{max_steps, d_model}), d_model};
  for (std::size_t pos = 0; pos < max_steps; ++pos)
    for (std::size_t j = 0; j < d_model; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, i2 / static_cast<double>(d_model));
      pe.table.at(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

Var positional_encode(Var x, const PositionalEncodingTable& pe) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != pe.d_model)
    throw ShapeError("positional_encode: input " + to_string(xv.shape()) +
                     " does not match table width " + std::to_string(pe.d_model));
  const std::size_t steps = xv.dim(0);
  if (steps > pe.table.dim(0))
    throw ShapeError("positional_encode: " + std::to_string(steps) +
                     " steps exceed table length " + std::to_string(pe.table.dim(0)));
  std::vector<double> rows(pe.table.data().begin(),
                           pe.table.data().begin() + steps * pe.d_model);
  return add(x, x.tape->constant(Tensor(Shape{steps, pe.d_model}, std::move(rows))));
}

// ---------------------------------------------------------------------------

void EncoderLayerParams::collect(const std::string& prefix,
                                 std::vector<NamedParameter>& out) {
  out.insert(out.end(), {{prefix + "wq", &wq},
                         {prefix + "bq", &bq},
                         {prefix + "wk", &wk},
                         {prefix + "bk", &bk},
                         {prefix + "wv", &wv},
                         {prefix + "bv", &bv},
                         {prefix + "wo", &wo},
                         {prefix + "bo", &bo},
                         {prefix + "ff1", &ff1},
                         {prefix + "ff1_bias", &ff1_bias},
                         {prefix + "ff2", &ff2},
                         {prefix + "ff2_bias", &ff2_bias},
                         {prefix + "norm1_gamma", &norm1_gamma},
                         {prefix + "norm1_beta", &norm1_beta},
                         {prefix + "norm2_gamma", &norm2_gamma},
                         {prefix + "norm2_beta", &norm2_beta}});
}

EncoderLayerParams make_encoder_layer(std::size_t features, std::size_t heads,
                                      std::size_t ff_width, bool scaled,
                                      double eps, Rng& rng) {
  if (heads == 0 || features % heads != 0)
    throw ConfigError("encoder layer: feature width " + std::to_string(features) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  const std::size_t F = features;
  EncoderLayerParams p;
  p.heads = heads;
  p.scaled = scaled;
  p.eps = eps;
  p.wq = init_uniform({F, F}, F, rng);
  p.bq = zeros({F});
  p.wk = init_uniform({F, F}, F, rng);
  p.bk = zeros({F});
  p.wv = init_uniform({F, F}, F, rng);
  p.bv = zeros({F});
  p.wo = init_uniform({F, F}, F, rng);
  p.bo = zeros({F});
  p.ff1 = init_uniform({F, ff_width}, F, rng);
  p.ff1_bias = zeros({ff_width});
  p.ff2 = init_uniform({ff_width, F}, ff_width, rng);
  p.ff2_bias = zeros({F});
  p.norm1_gamma = ones({F});
  p.norm1_beta = zeros({F});
  p.norm2_gamma = ones({F});
  p.norm2_beta = zeros({F});
  return p;
}

AttentionState inspect_attention(const Tensor& x, const EncoderLayerParams& p) {
  auto project = [&](const Parameter& w, const Parameter& b) {
    Tensor out(Shape{x.dim(0), w.value.dim(1)});
    out.matrix() = (x.matrix() * w.value.matrix()).rowwise() + b.value.matrix().row(0);
    return out;
  };
  AttentionState s;
  s.q = project(p.wq, p.bq);
  s.k = project(p.wk, p.bk);
  s.v = project(p.wv, p.bv);
  const std::size_t T = x.dim(0), F = s.q.dim(1);
  const Eigen::Index dh = static_cast<Eigen::Index>(F / p.heads);
  const double scale = p.scaled ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  s.probs = attention_probabilities(s.q, s.k, p.heads, p.scaled);
  s.attended = Tensor(Shape{T, F});
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    Tensor sc(Shape{T, T});
    sc.matrix() = scale * s.q.matrix().middleCols(c0, dh) *
                  s.k.matrix().middleCols(c0, dh).transpose();
    s.scores.push_back(std::move(sc));
    s.attended.matrix().middleCols(c0, dh) =
        s.probs[h].matrix() * s.v.matrix().middleCols(c0, dh);
  }
  return s;
}

Var mha_forward(Var x, EncoderLayerParams& p) {
  Var q = linear(x, p.wq, p.bq);
  Var k = linear(x, p.wk, p.bk);
  Var v = linear(x, p.wv, p.bv);
  return linear(attention(q, k, v, p.heads, p.scaled), p.wo, p.bo);
}

Var encoder_layer_forward(Var x, EncoderLayerParams& p) {
  Tape& t = *x.tape;
  Var y1 = layer_norm(add(x, mha_forward(x, p)), t.parameter(p.norm1_gamma),
                      t.parameter(p.norm1_beta), p.eps);
  Var ff = linear(relu(linear(y1, p.ff1, p.ff1_bias)), p.ff2, p.ff2_bias);
  return layer_norm(add(y1, ff), t.parameter(p.norm2_gamma), t.parameter(p.norm2_beta),
                    p.eps);
}

void SequenceEncoderParams::collect(const std::string& prefix,
                                    std::vector<NamedParameter>& out) {
  out.push_back({prefix + "input_gamma", &input_gamma});
  out.push_back({prefix + "input_beta", &input_beta});
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + "layer" + std::to_string(i) + ".", out);
}

SequenceEncoderParams make_sequence_encoder(std::size_t features, std::size_t heads,
                                            std::size_t ff_width, std::size_t layers,
                                            bool scaled, double eps, Rng& rng) {
  if (layers == 0) throw ConfigError("sequence encoder needs at least one layer");
  SequenceEncoderParams p;
  p.input_gamma = ones({features});
  p.input_beta = zeros({features});
  p.eps = eps;
  for (std::size_t i = 0; i < layers; ++i)
    p.layers.push_back(make_encoder_layer(features, heads, ff_width, scaled, eps, rng));
  return p;
}

Var encode_sequence(Var x, SequenceEncoderParams& p, const PositionalEncodingTable& pe) {
  Tape& t = *x.tape;
  Var h = positional_encode(
      layer_norm(x, t.parameter(p.input_gamma), t.parameter(p.input_beta), p.eps), pe);
  for (auto& layer : p.layers) h = encoder_layer_forward(h, layer);
  return h;
}

// ---------------------------------------------------------------------------

void DecimatorParams::collect(const std::string& prefix,
                              std::vector<NamedParameter>& out) {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.push_back({prefix + "conv" + std::to_string(i), &kernels[i]});
    out.push_back({prefix + "conv" + std::to_string(i) + "_bias", &biases[i]});
  }
}

std::size_t decimated_length(std::size_t steps, const DecimatorConfig& cfg) {
  if (cfg.kernels.size() != cfg.strides.size() || cfg.kernels.empty())
    throw ConfigError("decimator: kernels and strides must be non-empty and equal length");
  std::size_t len = steps;
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    const std::size_t k = cfg.kernels[i], s = cfg.strides[i];
    if (k == 0 || s == 0) throw ConfigError("decimator: kernel and stride must be >= 1");
    if (k > len)
      throw ConfigError("decimator: stage " + std::to_string(i) + " kernel " +
                        std::to_string(k) + " exceeds length " + std::to_string(len));
    len = (len - k) / s + 1;
  }
  if (len >= steps)
    throw ConfigError("decimator: output length " + std::to_string(len) +
                      " must be shorter than input length " + std::to_string(steps));
  return len;
}

DecimatorParams make_decimator(std::size_t channels, const DecimatorConfig& cfg,
                               Rng& rng) {
  DecimatorParams p;
  p.strides = cfg.strides;
  // Moving average per channel plus a small random part, so the stack starts
  // as a low-pass filter instead of one that may cancel slow components.
  for (std::size_t k : cfg.kernels) {
    Parameter kern = init_uniform({channels, channels, k}, channels * k, rng);
    for (double& v : kern.value.data()) v *= 0.1;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t j = 0; j < k; ++j) kern.value.at(c, c, j) += 1.0 / static_cast<double>(k);
    p.kernels.push_back(std::move(kern));
    p.biases.push_back(zeros({channels}));
  }
  return p;
}

Var decimate(Var w, DecimatorParams& p) {
  Tape& t = *w.tape;
  Var h = w;
  for (std::size_t i = 0; i < p.kernels.size(); ++i)
    h = temporal_conv(h, t.parameter(p.kernels[i]), t.parameter(p.biases[i]),
                      p.strides[i]);
  return h;
}

// ---------------------------------------------------------------------------

void ModalityEncoderParams::collect(const std::string& prefix,
                                    std::vector<NamedParameter>& out) {
  out.insert(out.end(), {{prefix + "conv1", &conv1},
                         {prefix + "conv1_bias", &conv1_bias},
                         {prefix + "conv2", &conv2},
                         {prefix + "conv2_bias", &conv2_bias},
                         {prefix + "feature_proj", &feature_proj},
                         {prefix + "feature_bias", &feature_bias},
                         {prefix + "temporal_proj", &temporal_proj}});
}

std::pair<std::size_t, std::size_t> encoder_feature_map(
    const EmbeddingShape& in, const ModalityEncoderConfig& cfg) {
  std::size_t h = in.features, w = in.steps;
  for (int stage = 0; stage < 2; ++stage) {
    if (cfg.kernel_h == 0 || cfg.kernel_w == 0 || cfg.kernel_h > h || cfg.kernel_w > w)
      throw ConfigError("modality encoder: kernel " + std::to_string(cfg.kernel_h) + "x" +
                        std::to_string(cfg.kernel_w) + " does not fit " +
                        std::to_string(h) + "x" + std::to_string(w) + " at stage " +
                        std::to_string(stage + 1));
    h = (h - cfg.kernel_h + 1) / 2;
    w = (w - cfg.kernel_w + 1) / 2;
    if (h == 0 || w == 0)
      throw ConfigError("modality encoder: feature map vanishes at stage " +
                        std::to_string(stage + 1));
  }
  return {h, w};
}

ModalityEncoderParams make_modality_encoder(const EmbeddingShape& in,
                                            const ModalityEncoderConfig& cfg,
                                            std::size_t latent_features,
                                            std::size_t latent_steps, Rng& rng) {
  if (cfg.channels1 == 0 || cfg.channels2 == 0)
    throw ConfigError("modality encoder: channel counts must be >= 1");
  const auto [h2, w2] = encoder_feature_map(in, cfg);
  const std::size_t kk = cfg.kernel_h * cfg.kernel_w;
  ModalityEncoderParams p;
  p.conv1 = init_uniform({cfg.channels1, in.channels, cfg.kernel_h, cfg.kernel_w},
                         in.channels * kk, rng);
  p.conv1_bias = zeros({cfg.channels1});
  p.conv2 = init_uniform({cfg.channels2, cfg.channels1, cfg.kernel_h, cfg.kernel_w},
                         cfg.channels1 * kk, rng);
  p.conv2_bias = zeros({cfg.channels2});
  p.feature_proj = init_uniform({cfg.channels2 * h2, latent_features}, cfg.channels2 * h2, rng);
  p.feature_bias = zeros({latent_features});
  p.temporal_proj = init_uniform({latent_steps, w2}, w2, rng);
  return p;
}

Var encode_modality(Var w, ModalityEncoderParams& p) {
  Tape& t = *w.tape;
  Var h = relu(conv2d_maxpool(w, t.parameter(p.conv1), t.parameter(p.conv1_bias)));
  h = relu(conv2d_maxpool(h, t.parameter(p.conv2), t.parameter(p.conv2_bias)));
  const Shape& s = h.shape();
  h = transpose(reshape(h, {s[0] * s[1], s[2]}));  // [W2 x C2*H2]
  h = add_bias(matmul(h, t.parameter(p.feature_proj)), t.parameter(p.feature_bias));
  return transpose(matmul(t.parameter(p.temporal_proj), h));  // [F x T]
}

// ---------------------------------------------------------------------------

void ClassifierParams::collect(const std::string& prefix,
                               std::vector<NamedParameter>& out) {
  out.insert(out.end(), {{prefix + "hidden", &hidden},
                         {prefix + "hidden_bias", &hidden_bias},
                         {prefix + "out", &this->out},
                         {prefix + "out_bias", &out_bias}});
}

ClassifierParams make_classifier(std::size_t features, std::size_t hidden,
                                 std::size_t classes, Rng& rng) {
  ClassifierParams p;
  p.hidden = init_uniform({features, hidden}, features, rng);
  p.hidden_bias = zeros({hidden});
  p.out = init_uniform({hidden, classes}, hidden, rng);
  p.out_bias = zeros({classes});
  return p;
}

Var classify(Var r, ClassifierParams& p) {
  const Tensor& rv = r.value();
  if (rv.rank() != 1)
    throw ShapeError("classify: expected a feature vector, got " + to_string(rv.shape()));
  Var row = reshape(r, {1, rv.dim(0)});
  Var logits = linear(relu(linear(row, p.hidden, p.hidden_bias)), p.out, p.out_bias);
  return reshape(logits, {p.out.value.dim(1)});
}

}  // namespace modfuse
