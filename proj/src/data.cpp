// src/data.cpp

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

#include "modfuse/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "modfuse/parallel.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tensor files

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'A', 'V', 'E'};
constexpr std::size_t kMaxRank = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > kMaxRank) throw ShapeError("tensor rank too large for file format");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(kTensorFormatVersion & 0xff));
  out.push_back(static_cast<std::uint8_t>(kTensorFormatVersion >> 8));
  out.push_back(0);  // float32
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw ShapeError("dimension too large for file format");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * t.size());
  for (double v : t.data()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f))
      throw NumericalError("write_tensor: value " + std::to_string(v) +
                           " is not representable as a finite float32");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  const std::size_t n = bytes.size();
  if (n < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw FormatError("bad magic, expected \"DAVE\"", 0);
  if (n < 6) throw FormatError("truncated header: missing version", n);
  const std::uint16_t version =
      static_cast<std::uint16_t>(bytes[4] | (static_cast<std::uint16_t>(bytes[5]) << 8));
  if (version != kTensorFormatVersion)
    throw FormatError("unsupported version " + std::to_string(version), 4);
  if (n < 7) throw FormatError("truncated header: missing dtype", n);
  if (bytes[6] != 0)
    throw FormatError("unsupported dtype " + std::to_string(bytes[6]), 6);
  if (n < 8) throw FormatError("truncated header: missing ndim", n);
  const std::size_t ndim = bytes[7];
  if (ndim > kMaxRank) throw FormatError("rank " + std::to_string(ndim) + " too large", 7);
  const std::size_t header = 8 + 4 * ndim;
  if (n < header) throw FormatError("truncated header: dimensions cut short", n);
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u32(bytes.data() + 8 + 4 * i);
  const std::size_t count = num_elements(shape);
  const std::size_t expected = header + 4 * count;
  if (n < expected)
    throw FormatError("truncated data: header " + to_string(shape) + " needs " +
                          std::to_string(count) + " floats, file holds " +
                          std::to_string((n - header) / 4),
                      n);
  if (n > expected)
    throw FormatError("trailing bytes after " + std::to_string(count) + " floats", expected);
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
    if (!std::isfinite(f)) throw FormatError("non-finite value", header + 4 * i);
    data[i] = f;
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const fs::path& path, const Tensor& t) {
  write_file(path, encode_tensor(t));
}

Tensor read_tensor(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

Tensor quantize_f32(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = static_cast<float>(v);
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

bool is_valid_task(std::string_view task) {
  return std::find(std::begin(kTasks), std::end(kTasks), task) != std::end(kTasks);
}

namespace {

json shape_json(const EmbeddingShape& s) { return json::array({s.channels, s.features, s.steps}); }

EmbeddingShape shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError("manifest shape must be [channels, features, steps]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

}  // namespace

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"id", r.id},
                       {"label", r.label},
                       {"task", r.task},
                       {"split", split_name(r.split)},
                       {"audio_path", r.audio_path},
                       {"video_path", r.video_path ? json(*r.video_path) : json(nullptr)}});
  }
  json j = {{"header",
             {{"shapes", {{"audio", shape_json(m.header.audio)},
                          {"video", shape_json(m.header.video)}}},
              {"dtype", m.header.dtype},
              {"generator_config_hash", m.header.generator_config_hash}}},
            {"records", std::move(records)}};
  const std::string text = j.dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    const json& h = j.at("header");
    m.header.audio = shape_from_json(h.at("shapes").at("audio"));
    m.header.video = shape_from_json(h.at("shapes").at("video"));
    m.header.dtype = h.value("dtype", "float32");
    m.header.generator_config_hash = h.value("generator_config_hash", "");
    for (const json& r : j.at("records")) {
      ManifestRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.label = r.at("label").get<int>();
      rec.task = r.at("task").get<std::string>();
      rec.split = parse_split(r.at("split").get<std::string>());
      rec.audio_path = r.at("audio_path").get<std::string>();
      if (r.contains("video_path") && !r.at("video_path").is_null())
        rec.video_path = r.at("video_path").get<std::string>();
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  if (m.header.dtype != "float32")
    throw ConfigError("manifest dtype '" + m.header.dtype + "' unsupported");
  return m;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (!seen.insert(r.id).second) throw ConfigError("duplicate record id '" + r.id + "'");
    if (r.label != 0 && r.label != 1)
      throw ConfigError("record '" + r.id + "': label must be 0 or 1");
    if (!is_valid_task(r.task))
      throw ConfigError("record '" + r.id + "': unknown task '" + r.task + "'");
  }
  Dataset ds;
  ds.header = m.header;
  ds.samples.resize(m.records.size());
  parallel_for(m.records.size(), [&](std::size_t i) {
    const ManifestRecord& r = m.records[i];
    EmbeddingSample& s = ds.samples[i];
    s.id = r.id;
    s.label = r.label;
    s.task = r.task;
    s.split = r.split;
    auto load = [&](const std::string& p, const EmbeddingShape& expected, const char* what) {
      const fs::path path = resolve(p);
      if (!fs::exists(path))
        throw IoError("record '" + r.id + "': " + what + " file " + path.string() +
                      " does not exist");
      Tensor t = read_tensor(path);
      if (t.shape() != expected.shape())
        throw ShapeError("record '" + r.id + "': " + what + " tensor shape " +
                         to_string(t.shape()) + " conflicts with header shape " +
                         to_string(expected.shape()));
      return t;
    };
    s.audio = load(r.audio_path, m.header.audio, "audio");
    if (r.video_path) s.video = load(*r.video_path, m.header.video, "video");
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (n_per_class == 0) throw ConfigError("n_per_class must be >= 1");
  if (!is_valid_task(task)) throw ConfigError("unknown task '" + task + "'");
  for (const EmbeddingShape* s : {&audio, &video})
    if (s->channels == 0 || s->features == 0 || s->steps == 0)
      throw ConfigError("synthetic embedding shapes must be non-empty");
  if (!(audio_sigma > 0.0) || !(video_sigma > 0.0))
    throw ConfigError("noise sigmas must be > 0");
  if (signal_span < 1 || signal_span > video.steps)
    throw ConfigError("signal_span must lie in [1, video steps]");
  if (!(missing_video_fraction >= 0.0 && missing_video_fraction <= 1.0))
    throw ConfigError("missing_video_fraction must lie in [0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  if (!(active_fraction > 0.0 && active_fraction <= 1.0))
    throw ConfigError("active_fraction must lie in (0, 1]");
  if (row_block == 0 || row_block > std::min(audio.features, video.features))
    throw ConfigError("row_block must lie in [1, smallest feature count]");
}

std::string SyntheticSpec::config_hash() const {
  json j = {{"seed", seed},
            {"n_per_class", n_per_class},
            {"task", task},
            {"audio", shape_json(audio)},
            {"video", shape_json(video)},
            {"audio_sigma", audio_sigma},
            {"video_sigma", video_sigma},
            {"amplitude", amplitude},
            {"signal_span", signal_span},
            {"active_fraction", active_fraction},
            {"row_block", row_block},
            {"missing_video_fraction", missing_video_fraction},
            {"test_fraction", test_fraction}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::size_t SyntheticSpec::audio_span() const {
  const double scaled = static_cast<double>(signal_span) * static_cast<double>(audio.steps) /
                        static_cast<double>(video.steps);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(scaled)), 1, audio.steps);
}

std::size_t SyntheticSpec::active_blocks(const EmbeddingShape& s) const {
  const std::size_t blocks = s.features / row_block;
  return std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(active_fraction * static_cast<double>(blocks))), 1,
      blocks);
}

std::size_t SyntheticSpec::active_rows(const EmbeddingShape& s) const {
  return active_blocks(s) * row_block;
}

namespace {

struct ModalityPatterns {
  std::vector<double> pattern[2];  // per class, length = features
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

ModalityPatterns make_patterns(const SyntheticSpec& spec, const EmbeddingShape& shape,
                               const std::string& modality) {
  std::vector<std::size_t> blocks(shape.features / spec.row_block);
  std::iota(blocks.begin(), blocks.end(), std::size_t{0});
  Rng block_rng(derive_seed(spec.seed, "rows/" + modality));
  shuffle(blocks, block_rng);
  blocks.resize(spec.active_blocks(shape));

  // One value per block, shared by its row_block adjacent rows.
  ModalityPatterns p;
  Rng rng(derive_seed(spec.seed, "pattern/" + spec.task + "/" + modality));
  for (auto& v : p.pattern) {
    v.assign(shape.features, 0.0);
    for (std::size_t b : blocks) {
      const double x = rng.normal();
      for (std::size_t r = 0; r < spec.row_block; ++r) v[b * spec.row_block + r] = x;
    }
  }
  // Fix the class separation: ||p1 - p0|| = sqrt(2 * active rows).
  double dist2 = 0.0;
  for (std::size_t f = 0; f < shape.features; ++f)
    dist2 += (p.pattern[1][f] - p.pattern[0][f]) * (p.pattern[1][f] - p.pattern[0][f]);
  const double s = std::sqrt(2.0 * static_cast<double>(spec.active_rows(shape)) / dist2);
  for (auto& v : p.pattern)
    for (double& x : v) x *= s;
  return p;
}

struct Plan {
  std::string id;
  int label;
  std::size_t index;
  Split split;
  bool has_video;
};

std::vector<Plan> make_plan(const SyntheticSpec& spec) {
  std::vector<Plan> plan;
  const std::size_t n = spec.n_per_class;
  const std::size_t n_test = static_cast<std::size_t>(
      std::llround(spec.test_fraction * static_cast<double>(n)));
  for (int label = 0; label < 2; ++label) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(spec.seed, "split/" + std::to_string(label)));
    shuffle(order, rng);
    std::vector<Split> split(n, Split::train);
    for (std::size_t i = 0; i < n_test; ++i) split[order[i]] = Split::test;
    for (std::size_t i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s-%d-%05zu", spec.task.c_str(), label, i);
      plan.push_back({id, label, i, split[i], true});
    }
  }
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < plan.size(); ++i)
    if (plan[i].split == Split::train) train.push_back(i);
  const std::size_t n_missing = static_cast<std::size_t>(
      std::llround(spec.missing_video_fraction * static_cast<double>(train.size())));
  Rng rng(derive_seed(spec.seed, "missing"));
  shuffle(train, rng);
  for (std::size_t i = 0; i < n_missing; ++i) plan[train[i]].has_video = false;
  return plan;
}

Tensor make_embedding(Rng& rng, const EmbeddingShape& shape, double sigma, double amplitude,
                      const std::vector<double>& pattern, std::size_t start,
                      std::size_t span) {
  Tensor t(shape.shape());
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (std::size_t f = 0; f < shape.features; ++f)
      for (std::size_t s = 0; s < shape.steps; ++s) {
        double v = sigma * rng.normal();
        if (s >= start && s < start + span) v += amplitude * pattern[f];
        t.at(c, f, s) = static_cast<float>(v);
      }
  return t;
}

EmbeddingSample make_sample(const SyntheticSpec& spec, const Plan& p,
                            const ModalityPatterns& audio, const ModalityPatterns& video) {
  Rng rng(derive_seed(spec.seed, p.id));
  const std::size_t span_v = spec.signal_span;
  const std::size_t span_a = spec.audio_span();
  const std::size_t start_v = rng.index(spec.video.steps - span_v + 1);
  const std::size_t start_a = std::min(
      static_cast<std::size_t>(static_cast<double>(start_v) *
                               static_cast<double>(spec.audio.steps) /
                               static_cast<double>(spec.video.steps)),
      spec.audio.steps - span_a);
  EmbeddingSample s;
  s.id = p.id;
  s.label = p.label;
  s.task = spec.task;
  s.split = p.split;
  s.audio = make_embedding(rng, spec.audio, spec.audio_sigma, spec.amplitude,
                           audio.pattern[p.label], start_a, span_a);
  Tensor v = make_embedding(rng, spec.video, spec.video_sigma, spec.amplitude,
                            video.pattern[p.label], start_v, span_v);
  if (p.has_video) s.video = std::move(v);
  return s;
}

}  // namespace

Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const auto plan = make_plan(spec);
  const auto audio = make_patterns(spec, spec.audio, "audio");
  const auto video = make_patterns(spec, spec.video, "video");
  Dataset ds;
  ds.header = {spec.audio, spec.video, "float32", spec.config_hash()};
  ds.samples.resize(plan.size());
  parallel_for(plan.size(), [&](std::size_t i) {
    ds.samples[i] = make_sample(spec, plan[i], audio, video);
  });
  return ds;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const auto plan = make_plan(spec);
  const auto audio = make_patterns(spec, spec.audio, "audio");
  const auto video = make_patterns(spec, spec.video, "video");
  fs::create_directories(out_dir / "audio");
  fs::create_directories(out_dir / "video");
  DatasetManifest m;
  m.header = {spec.audio, spec.video, "float32", spec.config_hash()};
  m.records.resize(plan.size());
  parallel_for(plan.size(), [&](std::size_t i) {
    EmbeddingSample s = make_sample(spec, plan[i], audio, video);
    ManifestRecord& r = m.records[i];
    r.id = s.id;
    r.label = s.label;
    r.task = s.task;
    r.split = s.split;
    r.audio_path = "audio/" + s.id + ".dave";
    write_tensor(out_dir / r.audio_path, s.audio);
    if (s.video) {
      r.video_path = "video/" + s.id + ".dave";
      write_tensor(out_dir / *r.video_path, *s.video);
    }
  });
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

double synthetic_probe_ba(const SyntheticSpec& spec, bool video) {
  const EmbeddingShape& s = video ? spec.video : spec.audio;
  const double sigma = video ? spec.video_sigma : spec.audio_sigma;
  const double span = static_cast<double>(video ? spec.signal_span : spec.audio_span());
  const double steps = static_cast<double>(s.steps);
  const double rows = static_cast<double>(spec.active_rows(s));
  // Time-averaged mean difference: (span / T) * A * (p1 - p0) on each channel;
  // averaged noise has standard deviation sigma / sqrt(T).
  const double delta = span * spec.amplitude * std::sqrt(2.0 * rows) *
                       std::sqrt(static_cast<double>(s.channels)) /
                       (sigma * std::sqrt(steps));
  return 0.5 * std::erfc(-(delta / 2.0) / std::sqrt(2.0));
}

}  // namespace modfuse
