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
#include <string>
#include <vector>

#include "seqvc/dsp.hpp"
#include "seqvc/io.hpp"
#include "seqvc/tensor.hpp"

namespace seqvc::synth {

using num::FeatureSequence;
using num::Tensor;

// Ground-truth monotone warp between a synthetic pair: per-symbol duration
// rates around a global ratio plus multiplicative per-segment jitter. Segment
// boundaries are the piecewise-linear knots.
struct WarpSpec {
  double global_ratio = 0.8;
  double rate_spread = 0.30;     // per-symbol rate = ratio * (1 +- spread)
  double segment_jitter = 0.10;  // multiplicative, per segment
};

struct VoiceSpec {
  double f0_base_hz = 220.0;
  double spectral_tilt = -0.06;  // exponential per-harmonic rolloff
};

struct GeneratorConfig {
  dsp::MelConfig mel;     // defines frame rate and mel dimensionality
  int alphabet_size = 16; // also the auxiliary channel width
  int n_harmonics = 24;
  int min_source_frames = 80;
  int max_source_frames = 240;
  int min_seg_units = 1;  // segment lengths in units of aux_grid frames
  int max_seg_units = 5;
  int aux_grid = 4;       // auxiliary channel computed every aux_grid frames,
                          // then upsampled by repetition
  double aux_active_weight = 0.88;
  double noise_floor = 0.004;
  int unvoiced_symbols = 4;    // last symbols of the alphabet are noise bursts
  int confusable_pairs = 3;    // leading symbol pairs share source rendering
  // Utterances are bracketed by silence like recorded speech; the last
  // alphabet symbol is reserved for it and never drawn as content. One unit
  // of tail silence spans exactly one encoder state at the default grid,
  // which keeps the completion cue crisp.
  int lead_silence_units = 1;
  int tail_silence_units = 1;
  WarpSpec warp;
  VoiceSpec source_voice{220.0, -0.06};
  VoiceSpec target_voice{120.0, -0.12};

  int silence_symbol() const { return alphabet_size - 1; }
  static GeneratorConfig desk();
  void validate() const;
};

// Per-symbol rendering properties, fixed per corpus seed. Source renderings of
// confusable pairs are identical (envelope and pitch offset); their target
// renderings differ, so the auxiliary channel carries real information.
struct SymbolTable {
  std::vector<bool> voiced;
  std::vector<std::vector<double>> env_source;  // [symbol][harmonic]
  std::vector<std::vector<double>> env_target;
  std::vector<double> f0_off_source;  // multiplicative
  std::vector<double> f0_off_target;
  std::vector<double> rate_target;    // per-symbol target/source duration rate
  std::vector<double> noise_center_hz;
  // Within-segment trajectory (content property, shared by both voices):
  // spectra glide monotonically across each segment so that progress through
  // a symbol is observable frame by frame, like phone-internal dynamics.
  std::vector<double> glide;  // spectral tilt swing per symbol
  std::vector<double> ramp;   // overall gain swing per symbol

  static SymbolTable build(const GeneratorConfig& cfg, std::uint64_t corpus_seed);
};

struct ContentSpec {
  std::vector<int> symbols;
  std::vector<int> durations;  // source frames per symbol, multiples of aux_grid
};

ContentSpec random_content(const GeneratorConfig& cfg, std::uint64_t seed);

struct SyntheticUtterance {
  dsp::Waveform wave;
  FeatureSequence mel;   // [T x n_mels], log power
  FeatureSequence aux;   // [T x alphabet], rows sum to 1
  std::vector<double> f0_track;      // per frame, 0 = unvoiced
  std::vector<int> segment_starts;   // frame index per segment, plus total
};

struct SyntheticPair {
  SyntheticUtterance source;
  SyntheticUtterance target;
  std::vector<int> gt_src_frame;  // per target frame: aligned source frame
  double realized_ratio = 0;      // target frames / source frames
};

// Renders the same symbolic content with both voices; target timing follows
// the warp. The ground-truth alignment map is exact by construction.
SyntheticPair generate_pair(const GeneratorConfig& cfg, const SymbolTable& table,
                            const ContentSpec& content, std::uint64_t pair_seed);

struct CorpusSpec {
  int n_train = 200;
  int n_val = 20;
  int n_test = 20;
  std::uint64_t seed = 1;
  GeneratorConfig gen;
};

// Writes feature files, wavs, ground-truth tracks and the manifest under
// out_dir. Refuses to clobber an existing manifest unless force is set.
io::Manifest build_corpus(const std::string& out_dir, const CorpusSpec& spec,
                          bool force = false);

}  // namespace seqvc::synth
