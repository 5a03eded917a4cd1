// src/verify.cpp

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

#include "modfuse/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <unordered_set>

#include "modfuse/data.hpp"
#include "modfuse/eval.hpp"
#include "modfuse/grad_check.hpp"
#include "modfuse/ops.hpp"

namespace modfuse {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.index(hi - lo + 1));
}

using Body = std::function<Var(Tape&, std::span<const Var>)>;

// Checks d/d(inputs) of sum(W * body(inputs)) for a random W, which exercises
// every output element with a distinct upstream gradient.
double check_body(const std::vector<Tensor>& inputs, const Body& body, Rng& rng,
                  std::vector<Parameter*> extra = {}) {
  std::deque<Parameter> leaves;
  std::vector<Parameter*> ptrs;
  for (const auto& t : inputs) ptrs.push_back(&leaves.emplace_back(t));
  ptrs.insert(ptrs.end(), extra.begin(), extra.end());
  auto leaf_vars = [&](Tape& tape) {
    std::vector<Var> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) vs.push_back(tape.parameter(*ptrs[i]));
    return vs;
  };
  Tensor weights;
  {
    Tape tape(false);
    const auto vs = leaf_vars(tape);
    weights = random_tensor(body(tape, vs).shape(), rng);
  }
  auto f = [&](Tape& tape) {
    const auto vs = leaf_vars(tape);
    return sum(mul(body(tape, vs), tape.constant(weights)));
  };
  return grad_check_parameters(f, ptrs, 1e-5, 0, rng.next_u64());
}

std::vector<Parameter*> pointers(std::vector<NamedParameter> named) {
  std::vector<Parameter*> out;
  for (auto& np : named) out.push_back(np.param);
  return out;
}

void add_op_cases(std::vector<GradientCase>& cases) {
  auto op = [&](std::string name, std::function<double(Rng&)> fn) {
    cases.push_back({std::move(name), [fn](std::uint64_t seed) {
                       Rng rng(seed);
                       return fn(rng);
                     }});
  };
  op("add", [](Rng& r) {
    Shape s{draw(r, 1, 4), draw(r, 1, 5)};
    return check_body({random_tensor(s, r), random_tensor(s, r)}, [](Tape&, auto v) {
      return add(v[0], v[1]);
    }, r);
  });
  op("mul", [](Rng& r) {
    Shape s{draw(r, 1, 4), draw(r, 1, 5)};
    return check_body({random_tensor(s, r), random_tensor(s, r)}, [](Tape&, auto v) {
      return mul(v[0], v[1]);
    }, r);
  });
  op("scale", [](Rng& r) {
    const double c = r.normal();
    return check_body({random_tensor({draw(r, 1, 6)}, r)},
                      [c](Tape&, auto v) { return scale(v[0], c); }, r);
  });
  op("add_bias", [](Rng& r) {
    const std::size_t f = draw(r, 1, 5);
    return check_body({random_tensor({draw(r, 1, 4), f}, r), random_tensor({f}, r)},
                      [](Tape&, auto v) { return add_bias(v[0], v[1]); }, r);
  });
  op("matmul", [](Rng& r) {
    const std::size_t m = draw(r, 1, 4), k = draw(r, 1, 4), n = draw(r, 1, 4);
    return check_body({random_tensor({m, k}, r), random_tensor({k, n}, r)},
                      [](Tape&, auto v) { return matmul(v[0], v[1]); }, r);
  });
  op("transpose", [](Rng& r) {
    return check_body({random_tensor({draw(r, 1, 4), draw(r, 1, 4)}, r)},
                      [](Tape&, auto v) { return transpose(v[0]); }, r);
  });
  op("reshape", [](Rng& r) {
    const std::size_t a = draw(r, 1, 3), b = draw(r, 1, 3), c = draw(r, 1, 3);
    return check_body({random_tensor({a, b, c}, r)},
                      [=](Tape&, auto v) { return reshape(v[0], {a * b, c}); }, r);
  });
  op("relu", [](Rng& r) {
    return check_body({random_tensor({draw(r, 1, 4), draw(r, 1, 6)}, r)},
                      [](Tape&, auto v) { return relu(v[0]); }, r);
  });
  op("sum", [](Rng& r) {
    return check_body({random_tensor({draw(r, 1, 4), draw(r, 1, 4)}, r)},
                      [](Tape&, auto v) { return sum(v[0]); }, r);
  });
  op("softmax", [](Rng& r) {
    return check_body({random_tensor({draw(r, 1, 4), draw(r, 1, 6)}, r)},
                      [](Tape&, auto v) { return softmax(v[0]); }, r);
  });
  op("layer_norm", [](Rng& r) {
    const std::size_t f = draw(r, 2, 6);
    return check_body({random_tensor({draw(r, 1, 4), f}, r), random_tensor({f}, r),
                       random_tensor({f}, r)},
                      [](Tape&, auto v) { return layer_norm(v[0], v[1], v[2], 1e-5); }, r);
  });
  op("conv1d", [](Rng& r) {
    const std::size_t c = draw(r, 1, 3), co = draw(r, 1, 3), k = draw(r, 1, 3);
    const std::size_t t = draw(r, k, 9), stride = draw(r, 1, 3);
    return check_body({random_tensor({c, t}, r), random_tensor({co, c, k}, r)},
                      [=](Tape&, auto v) { return conv1d(v[0], v[1], stride); }, r);
  });
  op("conv1d_bias", [](Rng& r) {
    const std::size_t c = draw(r, 1, 3), co = draw(r, 1, 3), k = draw(r, 1, 3);
    const std::size_t t = draw(r, k, 9), stride = draw(r, 1, 3);
    return check_body({random_tensor({c, t}, r), random_tensor({co, c, k}, r),
                       random_tensor({co}, r)},
                      [=](Tape&, auto v) { return conv1d(v[0], v[1], v[2], stride); }, r);
  });
  op("temporal_conv", [](Rng& r) {
    const std::size_t c = draw(r, 1, 2), co = draw(r, 1, 3), f = draw(r, 1, 3);
    const std::size_t k = draw(r, 1, 3), t = draw(r, k, 8), stride = draw(r, 1, 2);
    return check_body({random_tensor({c, f, t}, r), random_tensor({co, c, k}, r),
                       random_tensor({co}, r)},
                      [=](Tape&, auto v) { return temporal_conv(v[0], v[1], v[2], stride); },
                      r);
  });
  op("conv2d_maxpool", [](Rng& r) {
    const std::size_t c = draw(r, 1, 2), co = draw(r, 1, 2);
    const std::size_t kh = draw(r, 1, 3), kw = draw(r, 1, 3);
    const std::size_t h = draw(r, kh + 1, kh + 5), w = draw(r, kw + 1, kw + 5);
    return check_body({random_tensor({c, h, w}, r), random_tensor({co, c, kh, kw}, r)},
                      [](Tape&, auto v) { return conv2d_maxpool(v[0], v[1]); }, r);
  });
  op("conv2d_maxpool_bias", [](Rng& r) {
    const std::size_t c = draw(r, 1, 2), co = draw(r, 1, 2);
    const std::size_t kh = draw(r, 1, 3), kw = draw(r, 1, 3);
    const std::size_t h = draw(r, kh + 1, kh + 5), w = draw(r, kw + 1, kw + 5);
    return check_body({random_tensor({c, h, w}, r), random_tensor({co, c, kh, kw}, r),
                       random_tensor({co}, r)},
                      [](Tape&, auto v) { return conv2d_maxpool(v[0], v[1], v[2]); }, r);
  });
  op("mean_pool", [](Rng& r) {
    return check_body({random_tensor({draw(r, 1, 5), draw(r, 1, 5)}, r)},
                      [](Tape&, auto v) { return mean_pool(v[0]); }, r);
  });
  for (bool scaled : {true, false}) {
    op(scaled ? "attention" : "attention_unscaled", [scaled](Rng& r) {
      const std::size_t heads = draw(r, 1, 3), t = draw(r, 1, 4);
      const std::size_t f = heads * draw(r, 1, 3);
      return check_body({random_tensor({t, f}, r), random_tensor({t, f}, r),
                         random_tensor({t, f}, r)},
                        [=](Tape&, auto v) { return attention(v[0], v[1], v[2], heads, scaled); },
                        r);
    });
  }
  op("stack", [](Rng& r) {
    const std::size_t n = draw(r, 1, 4);
    return check_body({random_tensor({n}, r), random_tensor({n}, r), random_tensor({n}, r)},
                      [](Tape&, auto v) { return stack(v); }, r);
  });
  op("cross_entropy", [](Rng& r) {
    const std::size_t b = draw(r, 1, 4), c = draw(r, 2, 4);
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(r.index(c));
    return check_body({random_tensor({b, c}, r)},
                      [labels](Tape&, auto v) { return cross_entropy(v[0], labels); }, r);
  });
}

void add_layer_cases(std::vector<GradientCase>& cases) {
  cases.push_back({"positional_encoding", [](std::uint64_t seed) {
                     Rng r(seed);
                     const std::size_t t = draw(r, 1, 5), f = 2 * draw(r, 1, 3);
                     const auto pe = make_positional_table(t + 2, f);
                     return check_body({random_tensor({t, f}, r)},
                                       [&](Tape&, auto v) { return positional_encode(v[0], pe); },
                                       r);
                   }});
  cases.push_back({"multi_head_attention", [](std::uint64_t seed) {
                     Rng r(seed);
                     const std::size_t heads = draw(r, 1, 2), f = heads * draw(r, 1, 3);
                     auto p = make_encoder_layer(f, heads, 2 * f, true, 1e-5, r);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor({draw(r, 1, 4), f}, r)},
                                       [&](Tape&, auto v) { return mha_forward(v[0], p); }, r,
                                       pointers(named));
                   }});
  cases.push_back({"encoder_layer", [](std::uint64_t seed) {
                     Rng r(seed);
                     const std::size_t heads = draw(r, 1, 2), f = heads * draw(r, 1, 3);
                     auto p = make_encoder_layer(f, heads, 2 * f, r.bernoulli(0.5), 1e-5, r);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor({draw(r, 2, 4), f}, r)},
                                       [&](Tape&, auto v) { return encoder_layer_forward(v[0], p); },
                                       r, pointers(named));
                   }});
  cases.push_back({"sequence_encoder", [](std::uint64_t seed) {
                     Rng r(seed);
                     const std::size_t f = 4, t = draw(r, 2, 4);
                     auto p = make_sequence_encoder(f, 2, 2 * f, draw(r, 1, 2), true, 1e-5, r);
                     const auto pe = make_positional_table(t, f);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor({t, f}, r)},
                                       [&](Tape&, auto v) { return encode_sequence(v[0], p, pe); },
                                       r, pointers(named));
                   }});
  cases.push_back({"decimator", [](std::uint64_t seed) {
                     Rng r(seed);
                     DecimatorConfig cfg{{2, 3}, {2, 1}};
                     const std::size_t c = draw(r, 1, 2);
                     auto p = make_decimator(c, cfg, r);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor({c, draw(r, 1, 3), draw(r, 8, 12)}, r)},
                                       [&](Tape&, auto v) { return decimate(v[0], p); }, r,
                                       pointers(named));
                   }});
  cases.push_back({"modality_encoder", [](std::uint64_t seed) {
                     Rng r(seed);
                     EmbeddingShape in{draw(r, 1, 2), draw(r, 8, 11), draw(r, 8, 11)};
                     ModalityEncoderConfig cfg{2, 2, 2, 2};
                     auto p = make_modality_encoder(in, cfg, 4, 3, r);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor(in.shape(), r)},
                                       [&](Tape&, auto v) { return encode_modality(v[0], p); }, r,
                                       pointers(named));
                   }});
  cases.push_back({"classifier", [](std::uint64_t seed) {
                     Rng r(seed);
                     const std::size_t f = draw(r, 2, 6);
                     auto p = make_classifier(f, draw(r, 2, 6), 2, r);
                     std::vector<NamedParameter> named;
                     p.collect("", named);
                     return check_body({random_tensor({f}, r)},
                                       [&](Tape&, auto v) { return classify(v[0], p); }, r,
                                       pointers(named));
                   }});
}

void add_model_cases(std::vector<GradientCase>& cases) {
  for (Variant v : {Variant::unified, Variant::early, Variant::late, Variant::audio_only,
                    Variant::video_only}) {
    cases.push_back({"model_" + std::string(variant_name(v)), [v](std::uint64_t seed) {
                       Rng r(seed);
                       FusionModel model(tiny_model_config(v), r.next_u64());
                       const ModelConfig& c = model.config();
                       // Perturb the fusion scalars away from their initial ones.
                       for (auto& np : model.parameters())
                         if (np.name == "c_a" || np.name == "c_v")
                           for (auto& x : np.param->value.data()) x = r.uniform(0.5, 1.5);
                       std::vector<Tensor> audio, video;
                       for (int i = 0; i < 2; ++i) {
                         audio.push_back(random_tensor(c.audio.shape(), r));
                         video.push_back(random_tensor(c.video.shape(), r));
                       }
                       // Unified sees one pair with and one without video.
                       const bool drop_second = v == Variant::unified && (seed & 1);
                       const std::vector<int> labels{0, 1};
                       auto f = [&](Tape& tape) {
                         std::vector<Var> logits;
                         for (std::size_t i = 0; i < 2; ++i) {
                           const Tensor* vid = (drop_second && i == 1) ? nullptr : &video[i];
                           logits.push_back(model.forward(tape, audio[i], vid));
                         }
                         return cross_entropy(stack(logits), labels);
                       };
                       const auto ptrs = pointers(model.parameters());
                       return grad_check_parameters(f, ptrs, 1e-5, 4, r.next_u64());
                     }});
  }
}

}  // namespace

ModelConfig tiny_model_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.latent_features = 8;
  c.latent_steps = 3;
  c.heads = 4;
  c.audio = {1, 14, 41};
  c.video = {1, 12, 11};
  c.decimator = {{3, 3}, {2, 2}};
  c.audio_encoder = {2, 2, 2, 2};
  c.video_encoder = {2, 2, 2, 2};
  return c;
}

std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> cases;
  add_op_cases(cases);
  add_layer_cases(cases);
  add_model_cases(cases);
  return cases;
}

std::vector<GradientResult> run_gradient_checks(std::span<const GradientCase> cases,
                                                std::size_t trials, double tol) {
  std::vector<GradientResult> out;
  for (const auto& c : cases) {
    GradientResult res;
    res.name = c.name;
    try {
      for (std::size_t t = 0; t < trials; ++t)
        res.worst = std::max(res.worst, c.trial(derive_seed(fnv1a(c.name), t)));
      res.passed = res.worst < tol;
    } catch (const std::exception& e) {
      res.error = e.what();
      res.passed = false;
    }
    out.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct UnifiedDraw {
  FusionModel model;
  Tensor audio, video;
};

UnifiedDraw draw_unified(std::uint64_t seed) {
  Rng r(seed);
  UnifiedDraw d{FusionModel(tiny_model_config(Variant::unified), r.next_u64()), {}, {}};
  for (auto& np : d.model.parameters())
    if (np.name == "c_a" || np.name == "c_v")
      for (auto& x : np.param->value.data()) x = r.uniform(-1.5, 1.5);
  d.audio = random_tensor(d.model.config().audio.shape(), r);
  d.video = random_tensor(d.model.config().video.shape(), r);
  return d;
}

std::unordered_set<const Parameter*> encoder_set(SequenceEncoderParams& g) {
  std::vector<NamedParameter> named;
  g.collect("", named);
  std::unordered_set<const Parameter*> out;
  for (auto& np : named) out.insert(np.param);
  return out;
}

std::unordered_set<const Parameter*> intersect(const std::unordered_set<const Parameter*>& a,
                                               const std::unordered_set<const Parameter*>& b) {
  std::unordered_set<const Parameter*> out;
  for (auto* p : a)
    if (b.contains(p)) out.insert(p);
  return out;
}

}  // namespace

bool shared_encoder_structurally_equal(std::uint64_t seed) {
  UnifiedDraw d = draw_unified(seed);
  auto& g = d.model.params().encoder;
  const auto g_set = encoder_set(g);
  Tape tape;
  Var ra = d.model.branch_representation(tape, d.audio, Modality::audio);
  Var rv = d.model.branch_representation(tape, d.video, Modality::video);
  const auto audio_g = intersect(tape.reachable_parameters(ra), g_set);
  const auto video_g = intersect(tape.reachable_parameters(rv), g_set);
  return audio_g == video_g && audio_g == g_set;
}

double shared_encoder_gradient_gap(std::uint64_t seed) {
  UnifiedDraw d = draw_unified(seed);
  Rng r(derive_seed(seed, "upstream"));
  const Tensor w = random_tensor({2}, r);

  d.model.zero_grad();
  {
    Tape tape;
    Var logits = d.model.forward_unified(tape, d.audio, &d.video);
    tape.backward(sum(mul(logits, tape.constant(w))));
  }
  std::vector<NamedParameter> shared;
  d.model.params().encoder.collect("", shared);

  // Oracle: identical computation with the video pass routed through a
  // detached copy of G.
  FusionModel split = d.model;
  SequenceEncoderParams g_video = split.params().encoder;
  split.zero_grad();
  std::vector<NamedParameter> g_audio_named, g_video_named;
  split.params().encoder.collect("", g_audio_named);
  g_video.collect("", g_video_named);
  for (auto& np : g_video_named) np.param->zero_grad();
  {
    Tape tape;
    auto& p = split.params();
    Var ra = split.represent(split.latent(tape, d.audio, Modality::audio), p.encoder);
    Var rv = split.represent(split.latent(tape, d.video, Modality::video), g_video);
    Var rep = add(mul(tape.parameter(*p.audio_scale), ra), mul(tape.parameter(*p.video_scale), rv));
    tape.backward(sum(mul(split.head(rep), tape.constant(w))));
  }
  double gap = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    const Tensor& combined = shared[i].param->grad;
    const Tensor& ga = g_audio_named[i].param->grad;
    const Tensor& gv = g_video_named[i].param->grad;
    for (std::size_t k = 0; k < combined.size(); ++k)
      gap = std::max(gap, std::abs(combined[k] - (ga[k] + gv[k])));
  }
  return gap;
}

double missing_video_gap(std::uint64_t seed) {
  UnifiedDraw d = draw_unified(seed);
  Tape tape(false);
  const Tensor with_absent = d.model.forward_unified(tape, d.audio, nullptr).value();
  Var ra = d.model.branch_representation(tape, d.audio, Modality::audio);
  const Tensor deleted =
      d.model.head(mul(tape.parameter(*d.model.params().audio_scale), ra)).value();
  return max_abs_difference(with_absent, deleted);
}

// ---------------------------------------------------------------------------

namespace {

void check(std::vector<CheckResult>& out, std::string_view group, std::string name, bool ok,
           std::string detail = "") {
  out.push_back({std::string(group), std::move(name), ok, std::move(detail)});
}

template <typename E, typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void metric_checks(std::vector<CheckResult>& out) {
  const std::string_view g = "metrics";
  const ConfusionCounts c{5, 2, 8, 5};
  check(out, g, "balanced_accuracy_example", std::abs(balanced_accuracy(c) - 0.65) < 1e-12);
  const ConfusionCounts f{2, 1, 0, 1};
  check(out, g, "f1_example", std::abs(f1_score(f) - 2.0 / 3.0) < 1e-9);
  {
    Tape tape(false);
    const std::vector<int> labels{0, 1, 1};
    const double loss =
        cross_entropy(tape.constant(Tensor(Shape{3, 2}, 0.0)), labels).value()[0];
    check(out, g, "uniform_logits_loss", std::abs(loss - std::log(2.0)) < 1e-12);
  }
  {
    Rng r(2024);
    ConfusionCounts coin;
    for (int i = 0; i < 2000; ++i) coin.add(i % 2, r.bernoulli(0.5) ? 1 : 0);
    const double ba = balanced_accuracy(coin);
    check(out, g, "coin_flip_ba", ba >= 0.47 && ba <= 0.53, "BA " + std::to_string(ba));
  }
  {
    const ConfusionCounts swapped{c.tn, c.fn, c.tp, c.fp};
    check(out, g, "ba_class_symmetry",
          std::abs(balanced_accuracy(c) - balanced_accuracy(swapped)) < 1e-15);
  }
  {
    ConfusionCounts a{1, 2, 3, 4}, b{4, 0, 2, 1}, total = a;
    total += b;
    check(out, g, "count_additivity", total == ConfusionCounts{5, 2, 5, 5});
  }
  check(out, g, "ba_empty_class_rejected",
        throws<ContractError>([] { balanced_accuracy(ConfusionCounts{0, 3, 2, 0}); }));
  const std::vector<double> three{0.7, 0.8, 0.9};
  const MeanStd ms = mean_std(three);
  check(out, g, "seed_aggregate",
        std::abs(ms.mean - 0.8) < 1e-12 && std::abs(ms.std - 0.1) < 1e-12);
}

void format_checks(std::vector<CheckResult>& out) {
  const std::string_view g = "format";
  Rng r(99);
  bool exact = true;
  for (std::size_t nd = 1; nd <= 4; ++nd) {
    Shape s;
    for (std::size_t i = 0; i < nd; ++i) s.push_back(draw(r, 1, 4));
    const Tensor t = random_tensor(s, r, 3.0);
    exact = exact && decode_tensor(encode_tensor(t)) == quantize_f32(t);
  }
  check(out, g, "roundtrip_1_to_4_axes", exact);

  const auto bytes = encode_tensor(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  auto offset_of = [](std::vector<std::uint8_t> b) -> long {
    try {
      decode_tensor(b);
    } catch (const FormatError& e) {
      return static_cast<long>(e.offset());
    }
    return -1;
  };
  auto bad_magic = bytes;
  std::copy_n("XXXX", 4, bad_magic.begin());
  check(out, g, "bad_magic_offset_0", offset_of(bad_magic) == 0);
  auto bad_version = bytes;
  bad_version[4] = 2;
  check(out, g, "bad_version_offset_4", offset_of(bad_version) == 4);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);
  check(out, g, "truncated_payload", offset_of(truncated) == static_cast<long>(truncated.size()));
}

void invariant_checks(std::vector<CheckResult>& out) {
  const std::string_view g = "invariants";
  bool structural = true;
  double grad_gap = 0.0, missing_gap = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    structural = structural && shared_encoder_structurally_equal(s);
    grad_gap = std::max(grad_gap, shared_encoder_gradient_gap(s));
  }
  for (std::uint64_t s = 0; s < 100; ++s) missing_gap = std::max(missing_gap, missing_video_gap(s));
  check(out, g, "shared_encoder_parameters", structural);
  check(out, g, "shared_encoder_gradient_additivity", grad_gap <= 1e-9,
        "max gap " + std::to_string(grad_gap));
  check(out, g, "missing_video_equivalence", missing_gap == 0.0,
        "max gap " + std::to_string(missing_gap));
  check(out, g, "backward_twice_rejected", throws<std::logic_error>([] {
          Tape tape;
          Var x = tape.variable(Tensor::vector({1, 2}));
          Var y = sum(mul(x, x));
          tape.backward(y);
          tape.backward(y);
        }));
}

}  // namespace

std::vector<CheckResult> run_verification(std::string_view only, std::ostream* progress) {
  if (!only.empty() &&
      std::find(std::begin(kVerifyGroups), std::end(kVerifyGroups), only) == std::end(kVerifyGroups))
    throw ConfigError("unknown verify group '" + std::string(only) +
                      "'; valid: gradients, metrics, format, invariants");
  auto wanted = [&](std::string_view g) { return only.empty() || only == g; };
  std::vector<CheckResult> out;
  if (wanted("gradients")) {
    const auto cases = gradient_cases();
    for (const auto& c : cases) {
      const auto res = run_gradient_checks(std::span(&c, 1)).front();
      std::string detail = res.error.empty() ? "max relative error " + std::to_string(res.worst)
                                             : res.error;
      check(out, "gradients", res.name, res.passed, std::move(detail));
      if (progress) *progress << "." << std::flush;
    }
    if (progress) *progress << "\n";
  }
  if (wanted("metrics")) metric_checks(out);
  if (wanted("format")) format_checks(out);
  if (wanted("invariants")) invariant_checks(out);
  return out;
}

}  // namespace modfuse
