// src/ops.cpp

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

#include "modfuse/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace modfuse {
namespace {

using Index = Eigen::Index;

Tape& tape_of(Var a) {
  if (!a.tape) throw std::logic_error("Var is not bound to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("Vars recorded on different tapes");
  return tape_of(a);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + to_string(t.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
}

ConstMatrixMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(t.data().data(), static_cast<Index>(rows),
                        static_cast<Index>(cols));
}

MatrixMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixMap(t.data().data(), static_cast<Index>(rows),
                   static_cast<Index>(cols));
}

void softmax_rows(RowMatrix& s) {
  for (Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// Shared kernel of conv1d and temporal_conv. x is [C x F x T].
struct TimeConvGeometry {
  std::size_t channels, features, steps, out_channels, kernel, stride, out_steps;
};

TimeConvGeometry time_conv_geometry(const char* op, const Shape& x,
                                    const Shape& k, std::size_t stride) {
  if (k.size() != 3)
    throw ShapeError(std::string(op) + ": kernels must be [Cout x C x K], got " +
                     to_string(k));
  if (stride == 0) throw ConfigError(std::string(op) + ": stride must be >= 1");
  TimeConvGeometry g{x[0], x[1], x[2], k[0], k[2], stride, 0};
  if (k[1] != g.channels)
    throw ShapeError(std::string(op) + ": kernel channels " + to_string(k) +
                     " do not match input " + to_string(x));
  if (g.kernel == 0 || g.kernel > g.steps)
    throw ShapeError(std::string(op) + ": kernel length " + std::to_string(g.kernel) +
                     " exceeds input length " + std::to_string(g.steps));
  g.out_steps = (g.steps - g.kernel) / stride + 1;
  return g;
}

RowMatrix time_conv_columns(const Tensor& x, const TimeConvGeometry& g) {
  RowMatrix cols(static_cast<Index>(g.channels * g.kernel),
                 static_cast<Index>(g.features * g.out_steps));
  const double* xd = x.data().data();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t k = 0; k < g.kernel; ++k) {
      double* row = cols.row(static_cast<Index>(c * g.kernel + k)).data();
      for (std::size_t f = 0; f < g.features; ++f) {
        const double* src = xd + (c * g.features + f) * g.steps + k;
        for (std::size_t t = 0; t < g.out_steps; ++t)
          row[f * g.out_steps + t] = src[t * g.stride];
      }
    }
  return cols;
}

Var time_conv(const char* op, Var x, Var kernels, const Var* bias,
              std::size_t stride, const Shape& x3, const Shape& out_shape_hint) {
  Tape& tape = tape_of(x, kernels);
  const Tensor& kv = kernels.value();
  const TimeConvGeometry g = time_conv_geometry(op, x3, kv.shape(), stride);
  if (bias) {
    const Tensor& bv = bias->value();
    if (bv.shape() != Shape{g.out_channels})
      throw ShapeError(std::string(op) + ": bias " + to_string(bv.shape()) +
                       " does not match kernels " + to_string(kv.shape()));
  }
  RowMatrix cols = time_conv_columns(x.value(), g);
  auto w = as_matrix(kv, g.out_channels, g.channels * g.kernel);
  Shape out_shape = out_shape_hint.empty()
                        ? Shape{g.out_channels, g.features, g.out_steps}
                        : out_shape_hint;
  Tensor out(out_shape);
  auto om = as_matrix(out, g.out_channels, g.features * g.out_steps);
  om.noalias() = w * cols;
  if (bias) om.colwise() += as_matrix(bias->value(), g.out_channels, 1).col(0);

  std::vector<std::size_t> inputs{x.index, kernels.index};
  if (bias) inputs.push_back(bias->index);
  const std::size_t ix = x.index, ik = kernels.index;
  const std::size_t ib = bias ? bias->index : 0;
  const bool has_bias = bias != nullptr;
  return tape.record(
      op, std::move(out), std::move(inputs),
      [g, ix, ik, ib, has_bias, cols = std::move(cols)](Tape& t,
                                                                 std::size_t self) {
        const Tensor& go = t.grad_buffer(self);
        auto gm = as_matrix(go, g.out_channels, g.features * g.out_steps);
        if (t.requires_grad(ik)) {
          Tensor& gk = t.grad_buffer(ik);
          as_matrix(gk, g.out_channels, g.channels * g.kernel).noalias() +=
              gm * cols.transpose();
        }
        if (has_bias && t.requires_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          as_matrix(gb, g.out_channels, 1).col(0) += gm.rowwise().sum();
        }
        if (t.requires_grad(ix)) {
          auto w = as_matrix(t.value(ik), g.out_channels, g.channels * g.kernel);
          RowMatrix gcols = w.transpose() * gm;
          double* gx = t.grad_buffer(ix).data().data();
          for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t k = 0; k < g.kernel; ++k) {
              const double* row = gcols.row(static_cast<Index>(c * g.kernel + k)).data();
              for (std::size_t f = 0; f < g.features; ++f) {
                double* dst = gx + (c * g.features + f) * g.steps + k;
                for (std::size_t s = 0; s < g.out_steps; ++s)
                  dst[s * g.stride] += row[f * g.out_steps + s];
              }
            }
        }
      });
}

Var conv2d_pool_impl(Var x, Var kernels, const Var* bias, std::size_t pool) {
  static constexpr const char* op = "conv2d_maxpool";
  Tape& tape = tape_of(x, kernels);
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  require_rank(op, xv, 3);
  require_rank(op, kv, 4);
  if (pool == 0) throw ConfigError("conv2d_maxpool: pool size must be >= 1");
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const std::size_t Co = kv.dim(0), Kh = kv.dim(2), Kw = kv.dim(3);
  if (kv.dim(1) != C)
    throw ShapeError("conv2d_maxpool: kernel channels " + to_string(kv.shape()) +
                     " do not match input " + to_string(xv.shape()));
  if (Kh == 0 || Kw == 0 || Kh > H || Kw > W)
    throw ShapeError("conv2d_maxpool: kernel " + to_string(kv.shape()) +
                     " larger than input " + to_string(xv.shape()));
  const std::size_t Ho = H - Kh + 1, Wo = W - Kw + 1;
  const std::size_t Hp = Ho / pool, Wp = Wo / pool;
  if (Hp == 0 || Wp == 0)
    throw ShapeError("conv2d_maxpool: convolution output " + std::to_string(Ho) +
                     "x" + std::to_string(Wo) + " is smaller than the pool window");
  if (bias && bias->value().shape() != Shape{Co})
    throw ShapeError("conv2d_maxpool: bias " + to_string(bias->value().shape()) +
                     " does not match kernels " + to_string(kv.shape()));

  const std::size_t patch = C * Kh * Kw;
  RowMatrix cols(static_cast<Index>(patch), static_cast<Index>(Ho * Wo));
  const double* xd = xv.data().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t a = 0; a < Kh; ++a)
      for (std::size_t b = 0; b < Kw; ++b) {
        double* row = cols.row(static_cast<Index>((c * Kh + a) * Kw + b)).data();
        for (std::size_t i = 0; i < Ho; ++i) {
          const double* src = xd + (c * H + i + a) * W + b;
          std::copy(src, src + Wo, row + i * Wo);
        }
      }
  RowMatrix conv = as_matrix(kv, Co, patch) * cols;
  if (bias) conv.colwise() += as_matrix(bias->value(), Co, 1).col(0);

  Tensor out(Shape{Co, Hp, Wp});
  std::vector<std::size_t> argmax(Co * Hp * Wp);
  for (std::size_t o = 0; o < Co; ++o) {
    const double* cr = conv.row(static_cast<Index>(o)).data();
    for (std::size_t i = 0; i < Hp; ++i)
      for (std::size_t j = 0; j < Wp; ++j) {
        std::size_t best = (i * pool) * Wo + j * pool;
        for (std::size_t a = 0; a < pool; ++a)
          for (std::size_t b = 0; b < pool; ++b) {
            const std::size_t cell = (i * pool + a) * Wo + j * pool + b;
            if (cr[cell] > cr[best]) best = cell;
          }
        const std::size_t o_idx = (o * Hp + i) * Wp + j;
        argmax[o_idx] = best;
        out[o_idx] = cr[best];
      }
  }

  std::vector<std::size_t> inputs{x.index, kernels.index};
  if (bias) inputs.push_back(bias->index);
  const std::size_t ix = x.index, ik = kernels.index;
  const std::size_t ib = bias ? bias->index : 0;
  const bool has_bias = bias != nullptr;
  return tape.record(
      op, std::move(out), std::move(inputs),
      [=, cols = std::move(cols), argmax = std::move(argmax)](Tape& t,
                                                             std::size_t self) {
        const Tensor& go = t.grad_buffer(self);
        RowMatrix gconv = RowMatrix::Zero(static_cast<Index>(Co),
                                          static_cast<Index>(Ho * Wo));
        for (std::size_t o = 0; o < Co; ++o)
          for (std::size_t p = 0; p < Hp * Wp; ++p)
            gconv(static_cast<Index>(o), static_cast<Index>(argmax[o * Hp * Wp + p])) +=
                go[o * Hp * Wp + p];
        if (t.requires_grad(ik))
          as_matrix(t.grad_buffer(ik), Co, patch).noalias() += gconv * cols.transpose();
        if (has_bias && t.requires_grad(ib))
          as_matrix(t.grad_buffer(ib), Co, 1).col(0) += gconv.rowwise().sum();
        if (t.requires_grad(ix)) {
          RowMatrix gcols = as_matrix(t.value(ik), Co, patch).transpose() * gconv;
          double* gx = t.grad_buffer(ix).data().data();
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < Kh; ++a)
              for (std::size_t b = 0; b < Kw; ++b) {
                const double* row =
                    gcols.row(static_cast<Index>((c * Kh + a) * Kw + b)).data();
                for (std::size_t i = 0; i < Ho; ++i) {
                  double* dst = gx + (c * H + i + a) * W + b;
                  for (std::size_t j = 0; j < Wo; ++j) dst[j] += row[i * Wo + j];
                }
              }
        }
      });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out(a.value().shape());
  out.matrix() = a.value().matrix() + b.value().matrix();
  const std::size_t ia = a.index, ib = b.index;
  return tape.record("add", std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out(a.value().shape());
  out.matrix() = a.value().matrix().cwiseProduct(b.value().matrix());
  const std::size_t ia = a.index, ib = b.index;
  return tape.record("mul", std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       if (t.requires_grad(ia))
                         t.grad_buffer(ia).matrix() +=
                             g.matrix().cwiseProduct(t.value(ib).matrix());
                       if (t.requires_grad(ib))
                         t.grad_buffer(ib).matrix() +=
                             g.matrix().cwiseProduct(t.value(ia).matrix());
                     });
}

Var scale(Var a, double s) {
  Tape& tape = tape_of(a);
  Tensor out(a.value().shape());
  out.matrix() = a.value().matrix() * s;
  const std::size_t ia = a.index;
  return tape.record("scale", std::move(out), {ia}, [ia, s](Tape& t, std::size_t self) {
    t.grad_buffer(ia).matrix() += t.grad_buffer(self).matrix() * s;
  });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rank() != 1 || xv.rank() == 0 || bv.dim(0) != xv.cols())
    throw ShapeError("add_bias: bias " + to_string(bv.shape()) +
                     " does not match trailing axis of " + to_string(xv.shape()));
  Tensor out(xv.shape());
  out.matrix() = xv.matrix().rowwise() + bv.matrix().row(0);
  const std::size_t ix = x.index, ib = bias.index;
  return tape.record("add_bias", std::move(out), {ix, ib},
                     [ix, ib](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       t.accumulate(ix, g);
                       if (t.requires_grad(ib))
                         t.grad_buffer(ib).matrix().row(0) += g.matrix().colwise().sum();
                     });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: dimension mismatch " + to_string(av.shape()) + " x " +
                     to_string(bv.shape()));
  Tensor out(Shape{av.dim(0), bv.dim(1)});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const std::size_t ia = a.index, ib = b.index;
  return tape.record("matmul", std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       if (t.requires_grad(ia))
                         t.grad_buffer(ia).matrix().noalias() +=
                             g.matrix() * t.value(ib).matrix().transpose();
                       if (t.requires_grad(ib))
                         t.grad_buffer(ib).matrix().noalias() +=
                             t.value(ia).matrix().transpose() * g.matrix();
                     });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require_rank("transpose", av, 2);
  Tensor out(Shape{av.dim(1), av.dim(0)});
  out.matrix() = av.matrix().transpose();
  const std::size_t ia = a.index;
  return tape.record("transpose", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia))
      t.grad_buffer(ia).matrix() += t.grad_buffer(self).matrix().transpose();
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.index;
  return tape.record("reshape", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
}

Var relu(Var a) {
  Tape& tape = tape_of(a);
  Tensor out(a.value().shape());
  out.matrix() = a.value().matrix().cwiseMax(0.0);
  const std::size_t ia = a.index;
  return tape.record("relu", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& x = t.value(ia);
    Tensor& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) gi[i] += g[i];
  });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  Tensor out = Tensor::scalar(a.value().matrix().sum());
  const std::size_t ia = a.index;
  return tape.record("sum", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia))
      t.grad_buffer(ia).matrix().array() += t.grad_buffer(self)[0];
  });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0 || x.cols() == 0)
    throw ShapeError("softmax: empty axis in " + to_string(x.shape()));
  RowMatrix m = x.matrix();
  softmax_rows(m);
  Tensor out(x.shape());
  out.matrix() = m;
  return out;
}

Var softmax(Var x) {
  Tape& tape = tape_of(x);
  Tensor out = softmax(x.value());
  const std::size_t ix = x.index;
  return tape.record("softmax", std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    auto y = t.value(self).matrix();
    auto g = t.grad_buffer(self).matrix();
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.grad_buffer(ix).matrix() +=
        y.cwiseProduct(g - dots.replicate(1, g.cols()));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = tape_of(x, gamma);
  if (beta.tape != x.tape) throw std::logic_error("Vars recorded on different tapes");
  if (!(eps >= 0.0)) throw ConfigError("layer_norm: eps must be non-negative");
  const Tensor& xv = x.value();
  const std::size_t F = xv.cols();
  if (xv.rank() == 0 || F == 0)
    throw ShapeError("layer_norm: empty feature axis in " + to_string(xv.shape()));
  if (gamma.value().shape() != Shape{F} || beta.value().shape() != Shape{F})
    throw ShapeError("layer_norm: gamma/beta " + to_string(gamma.value().shape()) +
                     " do not match feature axis of " + to_string(xv.shape()));
  auto xm = xv.matrix();
  RowMatrix xhat(xm.rows(), xm.cols());
  Eigen::VectorXd inv_std(xm.rows());
  for (Index r = 0; r < xm.rows(); ++r) {
    const double mean = xm.row(r).mean();
    const double var = (xm.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xm.row(r).array() - mean) * inv_std(r);
  }
  Tensor out(xv.shape());
  out.matrix() = (xhat.array().rowwise() * gamma.value().matrix().row(0).array())
                     .rowwise() +
                 beta.value().matrix().row(0).array();
  const std::size_t ix = x.index, ig = gamma.index, ib = beta.index;
  return tape.record(
      "layer_norm", std::move(out), {ix, ig, ib},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).matrix();
        if (t.requires_grad(ig))
          t.grad_buffer(ig).matrix().row(0) += g.cwiseProduct(xhat).colwise().sum();
        if (t.requires_grad(ib)) t.grad_buffer(ib).matrix().row(0) += g.colwise().sum();
        if (!t.requires_grad(ix)) return;
        const double n = static_cast<double>(g.cols());
        RowMatrix gxhat = g.array().rowwise() * t.value(ig).matrix().row(0).array();
        Eigen::VectorXd s1 = gxhat.rowwise().sum();
        Eigen::VectorXd s2 = gxhat.cwiseProduct(xhat).rowwise().sum();
        auto gx = t.grad_buffer(ix).matrix();
        for (Index r = 0; r < g.rows(); ++r)
          gx.row(r).array() += (inv_std(r) / n) *
                               (n * gxhat.row(r).array() - s1(r) - xhat.row(r).array() * s2(r));
      });
}

Var conv1d(Var x, Var kernels, std::size_t stride) {
  const Tensor& xv = x.value();
  require_rank("conv1d", xv, 2);
  const Shape x3{xv.dim(0), 1, xv.dim(1)};
  const Shape& k = kernels.value().shape();
  const std::size_t out_steps =
      time_conv_geometry("conv1d", x3, k, stride).out_steps;
  return time_conv("conv1d", x, kernels, nullptr, stride, x3, Shape{k[0], out_steps});
}

Var conv1d(Var x, Var kernels, Var bias, std::size_t stride) {
  const Tensor& xv = x.value();
  require_rank("conv1d", xv, 2);
  const Shape x3{xv.dim(0), 1, xv.dim(1)};
  const Shape& k = kernels.value().shape();
  const std::size_t out_steps =
      time_conv_geometry("conv1d", x3, k, stride).out_steps;
  return time_conv("conv1d", x, kernels, &bias, stride, x3, Shape{k[0], out_steps});
}

Var temporal_conv(Var x, Var kernels, Var bias, std::size_t stride) {
  require_rank("temporal_conv", x.value(), 3);
  return time_conv("temporal_conv", x, kernels, &bias, stride, x.value().shape(), {});
}

Var conv2d_maxpool(Var x, Var kernels, std::size_t pool) {
  return conv2d_pool_impl(x, kernels, nullptr, pool);
}

Var conv2d_maxpool(Var x, Var kernels, Var bias, std::size_t pool) {
  return conv2d_pool_impl(x, kernels, &bias, pool);
}

Var mean_pool(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require_rank("mean_pool", av, 2);
  if (av.dim(0) == 0) throw ShapeError("mean_pool: no time steps in " + to_string(av.shape()));
  Tensor out(Shape{av.dim(1)});
  out.matrix().row(0) = av.matrix().colwise().mean();
  const std::size_t ia = a.index;
  return tape.record("mean_pool", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    auto g = t.grad_buffer(self).matrix().row(0);
    auto gi = t.grad_buffer(ia).matrix();
    gi.rowwise() += g / static_cast<double>(gi.rows());
  });
}

std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k,
                                            std::size_t heads, bool scaled) {
  require_rank("attention", q, 2);
  require_same_shape("attention", q, k);
  const std::size_t T = q.dim(0), F = q.dim(1);
  if (heads == 0 || F % heads != 0)
    throw ConfigError("attention: feature width " + std::to_string(F) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  const Index dh = static_cast<Index>(F / heads);
  const double s = scaled ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < heads; ++h) {
    const Index c0 = static_cast<Index>(h) * dh;
    RowMatrix p = s * q.matrix().middleCols(c0, dh) *
                  k.matrix().middleCols(c0, dh).transpose();
    softmax_rows(p);
    Tensor pt(Shape{T, T});
    pt.matrix() = p;
    out.push_back(std::move(pt));
  }
  return out;
}

Var attention(Var q, Var k, Var v, std::size_t heads, bool scaled) {
  Tape& tape = tape_of(q, k);
  if (v.tape != q.tape) throw std::logic_error("Vars recorded on different tapes");
  const Tensor& qv = q.value();
  require_same_shape("attention", qv, v.value());
  std::vector<Tensor> probs = attention_probabilities(qv, k.value(), heads, scaled);
  const std::size_t T = qv.dim(0), F = qv.dim(1);
  const Index dh = static_cast<Index>(F / heads);
  const double s = scaled ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  Tensor out(Shape{T, F});
  auto om = out.matrix();
  for (std::size_t h = 0; h < heads; ++h) {
    const Index c0 = static_cast<Index>(h) * dh;
    om.middleCols(c0, dh).noalias() =
        probs[h].matrix() * v.value().matrix().middleCols(c0, dh);
  }
  const std::size_t iq = q.index, ik = k.index, iv = v.index;
  return tape.record(
      "attention", std::move(out), {iq, ik, iv},
      [iq, ik, iv, heads, dh, s, probs = std::move(probs)](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).matrix();
        auto qm = t.value(iq).matrix();
        auto km = t.value(ik).matrix();
        auto vm = t.value(iv).matrix();
        for (std::size_t h = 0; h < heads; ++h) {
          const Index c0 = static_cast<Index>(h) * dh;
          auto p = probs[h].matrix();
          auto gh = g.middleCols(c0, dh);
          if (t.requires_grad(iv))
            t.grad_buffer(iv).matrix().middleCols(c0, dh).noalias() += p.transpose() * gh;
          RowMatrix gp = gh * vm.middleCols(c0, dh).transpose();
          Eigen::VectorXd dots = gp.cwiseProduct(p).rowwise().sum();
          RowMatrix gs = p.cwiseProduct(gp - dots.replicate(1, gp.cols())) * s;
          if (t.requires_grad(iq))
            t.grad_buffer(iq).matrix().middleCols(c0, dh).noalias() +=
                gs * km.middleCols(c0, dh);
          if (t.requires_grad(ik))
            t.grad_buffer(ik).matrix().middleCols(c0, dh).noalias() +=
                gs.transpose() * qm.middleCols(c0, dh);
        }
      });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack: no rows");
  Tape& tape = tape_of(rows.front());
  const Shape& row_shape = rows.front().value().shape();
  if (row_shape.size() != 1)
    throw ShapeError("stack: rows must be rank 1, got " + to_string(row_shape));
  const std::size_t n = row_shape[0];
  Tensor out(Shape{rows.size(), n});
  std::vector<std::size_t> inputs;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].tape != &tape) throw std::logic_error("stack: Vars from different tapes");
    const Tensor& rv = rows[r].value();
    if (rv.shape() != row_shape)
      throw ShapeError("stack: row shape " + to_string(rv.shape()) + " vs " +
                       to_string(row_shape));
    std::copy(rv.data().begin(), rv.data().end(), out.data().begin() + r * n);
    inputs.push_back(rows[r].index);
  }
  return tape.record("stack", std::move(out), inputs,
                     [inputs, n](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_buffer(self);
                       for (std::size_t r = 0; r < inputs.size(); ++r) {
                         if (!t.requires_grad(inputs[r])) continue;
                         Tensor& gi = t.grad_buffer(inputs[r]);
                         for (std::size_t j = 0; j < n; ++j) gi[j] += g[r * n + j];
                       }
                     });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = tape_of(logits);
  const Tensor& lv = logits.value();
  require_rank("cross_entropy", lv, 2);
  const std::size_t B = lv.dim(0), C = lv.dim(1);
  if (labels.size() != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(B) + " rows");
  if (B == 0 || C == 0) throw ShapeError("cross_entropy: empty logits");
  RowMatrix probs = lv.matrix();
  double loss = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw ContractError("cross_entropy: label " + std::to_string(y) +
                          " out of range for " + std::to_string(C) + " classes");
    auto row = probs.row(static_cast<Index>(i));
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += lse - row(y);
    row = (row.array() - lse).exp().matrix();
  }
  loss /= static_cast<double>(B);
  std::vector<int> ys(labels.begin(), labels.end());
  const std::size_t il = logits.index;
  return tape.record(
      "cross_entropy", Tensor::scalar(loss), {il},
      [il, B, probs = std::move(probs), ys = std::move(ys)](Tape& t, std::size_t self) {
        if (!t.requires_grad(il)) return;
        const double g = t.grad_buffer(self)[0] / static_cast<double>(B);
        RowMatrix d = probs;
        for (std::size_t i = 0; i < B; ++i) d(static_cast<Index>(i), ys[i]) -= 1.0;
        t.grad_buffer(il).matrix() += g * d;
      });
}

}  // namespace modfuse
