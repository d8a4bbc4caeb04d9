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
#include <vector>

#include "seqvc/tensor.hpp"

namespace seqvc::dsp {

using num::FeatureSequence;
using num::Tensor;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Analysis configuration. Frames are centered: the signal is reflect-padded
// by win_length/2 on both sides so frame t is centered at t*hop samples.
// Mel filters are triangular on the HTK mel scale, peak normalized, applied
// to magnitude-squared (power) spectra, followed by natural-log compression
// with a small positive floor.
struct MelConfig {
  int sample_rate = 16000;
  int fft_size = 1024;       // power of two
  double win_ms = 50.0;
  double hop_ms = 10.0;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;   // <= Nyquist
  double log_floor = 1e-10;

  int win_length() const { return static_cast<int>(win_ms * sample_rate / 1000.0 + 0.5); }
  int hop_length() const { return static_cast<int>(hop_ms * sample_rate / 1000.0 + 0.5); }
  int n_bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

// Closed-form frame count for a centered analysis: floor(n_samples/hop) + 1.
int frame_count(std::int64_t n_samples, const MelConfig& cfg);

// Hann-windowed magnitude spectra, one row per frame, fft_size/2+1 bins.
Tensor stft_magnitude(const Waveform& w, const MelConfig& cfg);

// [n_mels x n_bins] triangular filterbank; rows nonnegative and unimodal.
Tensor mel_filterbank(const MelConfig& cfg);

// Log-power mel spectrogram, [frames x n_mels].
FeatureSequence mel_spectrogram(const Waveform& w, const MelConfig& cfg);

// mu-law companding. mu = 2^bits - 1; level = floor((m+1)/2*(2^bits-1)+0.5)
// where m is the companded sample. The inverse maps level centers back.
std::vector<int> mu_law(const Waveform& w, int bits = 10);
Waveform mu_law_inverse(const std::vector<int>& levels, int bits = 10,
                        int sample_rate = 16000);

struct F0Config {
  int sample_rate = 16000;
  double win_ms = 40.0;
  double hop_ms = 10.0;
  double fmin_hz = 60.0;
  double fmax_hz = 400.0;
  double voicing_threshold = 0.45;  // on the normalized autocorrelation peak
};

struct F0Frame {
  double f0_hz = 0.0;
  bool voiced = false;
};

// Normalized-autocorrelation pitch track; digital silence is never voiced.
std::vector<F0Frame> extract_f0(const Waveform& w, const F0Config& cfg);

// Iterative phase reconstruction from a log-mel spectrogram produced with
// cfg. Output is peak normalized. If iteration_errors is non-null it receives
// the spectral-convergence error after each iteration.
Waveform griffin_lim(const FeatureSequence& logmel, const MelConfig& cfg,
                     int iterations, std::vector<double>* iteration_errors = nullptr);

// Upsamples a feature sequence by integer repetition along time (used for the
// auxiliary channel computed at a lower frame rate).
FeatureSequence repeat_upsample(const FeatureSequence& x, int factor);

}  // namespace seqvc::dsp
