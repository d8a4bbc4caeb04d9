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

#include <vector>

#include "seqvc/align.hpp"
#include "seqvc/dsp.hpp"
#include "seqvc/tensor.hpp"

namespace seqvc::metrics {

using num::FeatureSequence;
using num::Tensor;

// Orthonormal DCT-II along the mel axis, first n_coeffs coefficients kept.
FeatureSequence mel_cepstra(const FeatureSequence& logmel, int n_coeffs);

// Mel-cepstral distortion in dB between two log-mel sequences: cepstra are
// DTW-aligned (coefficient 0 excluded from both alignment and distance) and
// MCD = (10/ln 10) * mean over aligned pairs of sqrt(2 * sum_i (c_i - c'_i)^2)
// over coefficients 1..n_coeffs-1.
double mcd_db(const FeatureSequence& logmel_a, const FeatureSequence& logmel_b,
              int n_coeffs);

struct F0RmseResult {
  double rmse_hz = 0;
  int mutually_voiced = 0;
};

// F0 RMSE over frames voiced in both signals, after DTW alignment on the same
// cepstral path as mcd_db. Throws DataError when no frame is voiced in both.
F0RmseResult f0_rmse(const dsp::Waveform& converted, const dsp::Waveform& reference,
                     const dsp::MelConfig& mel_cfg, const dsp::F0Config& f0_cfg,
                     int n_coeffs);

// Mean absolute duration difference in seconds over paired utterances.
double ddur_s(const std::vector<double>& converted_dur_s,
              const std::vector<double>& target_dur_s);

struct AlignmentDiagnostics {
  double mean_row_entropy = 0;
  int monotonicity_violations = 0;  // argmax decreases, or jumps > threshold
  double mean_path_deviation = 0;   // |argmax - reference column|, encoder states
};

// Reference columns give, per decoder step, the expected encoder state.
AlignmentDiagnostics alignment_diagnostics(const Tensor& alignment,
                                           const std::vector<int>& reference_cols,
                                           int jump_threshold = 3);

// Nearest-index downsampling of a frame-level alignment path to (decoder step,
// encoder state) rates: for step t the source frame paired with target frame
// t*r is mapped to its encoder state (frame / M).
std::vector<int> downsample_reference_path(const std::vector<int>& src_frame_per_tgt_frame,
                                           int steps, int r, int m_downsample, int t_h);

// Expands a per-target-frame source-index map into a valid monotone staircase
// path (steps of (1,0), (0,1), (1,1)).
std::vector<std::pair<int, int>> staircase_path(const std::vector<int>& src_per_tgt);

}  // namespace seqvc::metrics
