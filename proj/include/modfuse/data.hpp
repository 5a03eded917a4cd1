// include/modfuse/data.hpp

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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modfuse/layers.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tensor files
//
// Layout, all integers little-endian:
//   offset 0   4 bytes  magic "DAVE"
//   offset 4   u16      version (1)
//   offset 6   u8       dtype (0 = float32)
//   offset 7   u8       ndim
//   offset 8   ndim x u32 dims
//   then       prod(dims) x float32, row-major

inline constexpr std::uint16_t kTensorFormatVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

// Rounds every value to the nearest float32, which is what a write/read cycle
// preserves.
Tensor quantize_f32(const Tensor& t);

// ---------------------------------------------------------------------------
// Samples and manifests

enum class Split { train, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

// Disfluency tasks: Blocks, Word repetition, Sound repetition, Interjection,
// Prolongation.
inline constexpr std::string_view kTasks[] = {"Bl", "WP", "SnD", "Intrj", "Pro"};
bool is_valid_task(std::string_view task);

struct EmbeddingSample {
  std::string id;
  int label = 0;  // 0 = fluent, 1 = disfluent
  std::string task;
  Split split = Split::train;
  Tensor audio;                 // [C_a x F_a x T_a]
  std::optional<Tensor> video;  // [C_v x F_v x T_v], absent when missing

  const Tensor* video_ptr() const { return video ? &*video : nullptr; }
};

struct DatasetHeader {
  EmbeddingShape audio;
  EmbeddingShape video;
  std::string dtype = "float32";
  std::string generator_config_hash;
};

struct ManifestRecord {
  std::string id;
  int label = 0;
  std::string task;
  Split split = Split::train;
  std::string audio_path;
  std::optional<std::string> video_path;
};

struct DatasetManifest {
  DatasetHeader header;
  std::vector<ManifestRecord> records;
};

void write_manifest(const fs::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const fs::path& path);

struct Dataset {
  DatasetHeader header;
  std::vector<EmbeddingSample> samples;

  std::vector<std::size_t> indices(Split split) const;
};

// Loads and validates every record. Relative paths resolve against the
// manifest's directory.
Dataset load_dataset(const fs::path& manifest_path);

// ---------------------------------------------------------------------------
// Synthetic paired embeddings

struct SyntheticSpec {
  std::uint64_t seed = 7;
  std::size_t n_per_class = 500;
  std::string task = "Bl";
  EmbeddingShape audio{1, 96, 149};
  EmbeddingShape video{1, 64, 36};
  double audio_sigma = 5.0;
  double video_sigma = 0.75;
  double amplitude = 0.25;
  // Length of the class-carrying span in video frames. The audio span covers
  // the same stretch of the clip, scaled by T_a / T_v.
  std::size_t signal_span = 12;
  // Fraction of feature rows that carry the class pattern. Rows are chosen in
  // blocks of row_block adjacent rows sharing one pattern value.
  double active_fraction = 0.25;
  std::size_t row_block = 4;
  double missing_video_fraction = 0.0;
  double test_fraction = 0.2;

  void validate() const;
  std::string config_hash() const;
  std::size_t audio_span() const;
  std::size_t active_blocks(const EmbeddingShape& s) const;
  std::size_t active_rows(const EmbeddingShape& s) const;
};

// Writes tensors under out_dir/{audio,video}/ and out_dir/manifest.json.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir);

// Generates the same samples in memory without touching the filesystem.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec);

// Closed-form balanced accuracy of the optimal linear probe on time-averaged
// features of one modality: Phi(delta / 2), with delta the Mahalanobis
// distance between the two class means.
double synthetic_probe_ba(const SyntheticSpec& spec, bool video);

}  // namespace modfuse
