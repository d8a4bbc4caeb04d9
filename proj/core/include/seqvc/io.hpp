// Copyright 2026 The seqvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "seqvc/dsp.hpp"
#include "seqvc/model.hpp"
#include "seqvc/tensor.hpp"
#include "seqvc/train.hpp"

namespace seqvc::io {

using num::ParamStore;
using num::Tensor;

// --- feature files -----------------------------------------------------------
// Shape-prefixed flat binary: 8-byte magic "SEQVCFEA", u32 version, u32 rank,
// u32 dims[rank], then float32 little-endian values, row major.
void write_feature_file(const std::string& path, const Tensor& t);
Tensor read_feature_file(const std::string& path);

// --- wav ---------------------------------------------------------------------
// 16-bit PCM mono.
void write_wav(const std::string& path, const dsp::Waveform& w);
dsp::Waveform read_wav(const std::string& path);

// --- text exports ------------------------------------------------------------
// Two-column delimited index pairs (alignment paths).
void write_path_tsv(const std::string& path,
                    const std::vector<std::pair<int, int>>& pairs);
std::vector<std::pair<int, int>> read_path_tsv(const std::string& path);

void write_matrix_tsv(const std::string& path, const Tensor& m);
Tensor read_matrix_tsv(const std::string& path);

// Binary 8-bit portable graymap. Matrix values are min-max scaled; rows map to
// image rows.
void write_pgm(const std::string& path, const Tensor& m);

// --- config text blocks -------------------------------------------------------
using KvMap = std::map<std::string, std::string>;
std::string encode_kv(const KvMap& kv);
KvMap decode_kv(const std::string& text);

KvMap model_config_to_kv(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_kv(const KvMap& kv);
KvMap train_config_to_kv(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_kv(const KvMap& kv);
KvMap loss_weights_to_kv(const train::LossWeights& w);
train::LossWeights loss_weights_from_kv(const KvMap& kv);
KvMap mel_config_to_kv(const dsp::MelConfig& cfg);
dsp::MelConfig mel_config_from_kv(const KvMap& kv);

// --- checkpoints ---------------------------------------------------------------
// Binary: magic "SEQVCCKP", u32 version, length-prefixed key=value header
// (configs, epoch, step), tensor table (name, shape, float32 LE values:
// model parameters plus adam.m.* / adam.v.* moments), CRC-32 trailer.
// Values narrow to 32 bits; quantize_to_f32 (train-side) keeps in-memory
// state identical to its round-tripped image.
struct CheckpointMeta {
  std::uint32_t version = 1;
  model::ModelConfig model_cfg;
  train::TrainConfig train_cfg;
  train::LossWeights weights;
  int epoch = 0;
  std::int64_t global_step = 0;
  // Free-form extension entries (feature normalization stats, analysis
  // configuration); persisted under an "x." prefix.
  KvMap extra;
};

std::string encode_double_list(const std::vector<double>& v);
std::vector<double> decode_double_list(const std::string& s);

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore& params, const train::AdamState& opt);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ParamStore params;
  train::AdamState opt;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// Rounds every value through float32 so that the live state and its saved
// image are bit-identical (resume == continuous run).
void quantize_to_f32(ParamStore& params);
void quantize_to_f32(train::AdamState& opt);

// --- corpus manifest ------------------------------------------------------------
struct ManifestEntry {
  std::string id;
  std::string split;  // train | val | test
  std::uint64_t seed = 0;
  int src_frames = 0, tgt_frames = 0;
  double src_dur_s = 0, tgt_dur_s = 0;
  double warp_ratio = 0;  // realized target/source frame ratio
  std::string src_mel, src_aux, src_f0, src_wav;
  std::string tgt_mel, tgt_aux, tgt_f0, tgt_wav;
  std::string gt_path;  // staircase alignment path file
};

struct Manifest {
  int version = 1;
  KvMap header;  // generator + feature configuration
  std::vector<ManifestEntry> items;
};

void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

// --- training log -----------------------------------------------------------
// One delimited record per optimizer step.
std::string format_train_log_line(std::int64_t step, int epoch, double lr,
                                  double total, double dec, double post, double end);

}  // namespace seqvc::io
