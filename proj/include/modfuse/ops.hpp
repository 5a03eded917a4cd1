// include/modfuse/ops.hpp

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
#include <span>
#include <vector>

#include "modfuse/tape.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

// Differentiable ops. Every op records one node on the tape shared by its
// inputs. Broadcasting is limited to a trailing-axis bias.

Var add(Var a, Var b);
Var mul(Var a, Var b);  // elementwise, identical shapes
Var scale(Var a, double s);
Var add_bias(Var x, Var bias);  // x[...xF] + bias[F]
Var matmul(Var a, Var b);       // [MxK]·[KxN]
Var transpose(Var a);           // rank 2 only
Var reshape(Var a, Shape shape);
Var relu(Var a);
Var sum(Var a);                 // -> scalar

Var softmax(Var x);  // over the last axis
Var layer_norm(Var x, Var gamma, Var beta, double eps);

// Valid cross-correlation along time of x[C x T] with kernels[Cout x C x K].
Var conv1d(Var x, Var kernels, std::size_t stride);
Var conv1d(Var x, Var kernels, Var bias, std::size_t stride);

// conv1d applied independently to every feature row of x[C x F x T]; the
// kernel mixes channels and is shared across the feature axis.
// Output is [Cout x F x T'], T' = (T - K) / stride + 1.
Var temporal_conv(Var x, Var kernels, Var bias, std::size_t stride);

// Valid 2D convolution of x[C x H x W] with kernels[Cout x C x Kh x Kw],
// then 2x2 non-overlapping max pooling. A trailing odd row/column of the
// convolution output is dropped. Ties route the gradient to the first cell in
// row-major order.
Var conv2d_maxpool(Var x, Var kernels, std::size_t pool = 2);
Var conv2d_maxpool(Var x, Var kernels, Var bias, std::size_t pool = 2);

Var mean_pool(Var a);  // [T x F] -> [F]

// Multi-head scaled dot-product attention on pre-projected q, k, v [T x F].
// Head h uses columns [h*F/H, (h+1)*F/H). When `scaled`, scores are divided by
// sqrt(F/H).
Var attention(Var q, Var k, Var v, std::size_t heads, bool scaled);

// Stacks equally shaped rank-1 values into [B x N].
Var stack(std::span<const Var> rows);

// Mean negative log-likelihood of softmax(logits[B x C]) at the labels.
Var cross_entropy(Var logits, std::span<const int> labels);

// Tape-free helpers.
Tensor softmax(const Tensor& x);
// Per-head attention probabilities P, each [T x T].
std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k,
                                            std::size_t heads, bool scaled);

}  // namespace modfuse
