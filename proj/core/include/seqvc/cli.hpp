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

#include <string>
#include <vector>

#include "seqvc/io.hpp"
#include "seqvc/model.hpp"
#include "seqvc/train.hpp"

namespace seqvc::cli {

// Entry point for the seqvc tool; returns the process exit code.
int run(int argc, const char* const* argv);

// --- pipeline building blocks (shared with tests) ---------------------------

struct NormStats {
  std::vector<double> src_mean, src_std, tgt_mean, tgt_std;
};

// Per-dimension mel statistics over the training split.
NormStats compute_norm_stats(const std::string& root, const io::Manifest& manifest,
                             int d_mel);

num::FeatureSequence normalize_mel(const num::FeatureSequence& mel,
                                   const std::vector<double>& mean,
                                   const std::vector<double>& stddev);
num::FeatureSequence denormalize_mel(const num::FeatureSequence& mel,
                                     const std::vector<double>& mean,
                                     const std::vector<double>& stddev);

struct LoadedPairs {
  std::vector<train::PairExample> items;
  std::vector<std::string> ids;
  std::vector<int> src_frames;                 // original source lengths
  std::vector<std::vector<int>> gt_src_frame;  // per target frame
};

// Assembles teacher-forcing pairs for a split. For the no-attention variant
// the source input is DTW-warped to the target time axis using mel-cepstra.
LoadedPairs load_pairs(const std::string& root, const io::Manifest& manifest,
                       const std::string& split, const model::ModelConfig& cfg,
                       const NormStats& stats);

// Train-split duration ratio (target over source) used by the interpolation
// baseline.
double corpus_duration_ratio(const io::Manifest& manifest);

struct TrainRunOptions {
  std::string data_dir;
  std::string out_dir;
  model::ModelConfig model_cfg;
  train::TrainConfig train_cfg;
  train::LossWeights weights;
  bool resume = false;
  int save_every = 0;  // extra numbered checkpoints every k epochs (0 = off)
  bool quiet = false;
};

// Full training run: loads the corpus, trains with per-epoch validation
// checkpointing, writes latest/best checkpoints and the step log.
// Returns the best validation loss.
double run_training(const TrainRunOptions& opts);

struct ConvertOptions {
  double interp_ratio = 0.0;  // 0: no interpolation, <0: auto from manifest
  int griffin_lim_iters = 0;  // 0: no audio
  bool export_alignment = false;
  int max_steps = 0;
};

struct ConvertOutcome {
  std::string id;
  int steps = 0;
  bool step_cap_hit = false;
  int output_frames = 0;
};

// Converts the given split of a corpus with a loaded checkpoint; writes
// {id}.mel.fea (plus optional alignment/audio files) into out_dir.
std::vector<ConvertOutcome> convert_corpus(const io::LoadedCheckpoint& ckpt,
                                           const std::string& data_root,
                                           const io::Manifest& manifest,
                                           const std::string& split,
                                           const std::string& out_dir,
                                           const ConvertOptions& opts);

}  // namespace seqvc::cli
