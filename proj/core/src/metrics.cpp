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

#include "seqvc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "seqvc/error.hpp"

namespace seqvc::metrics {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Cepstra without c0, the representation MCD aligns and measures on.
FeatureSequence cepstra_no_c0(const FeatureSequence& logmel, int n_coeffs) {
  FeatureSequence c = mel_cepstra(logmel, n_coeffs);
  FeatureSequence out({c.rows(), n_coeffs - 1});
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 1; j < n_coeffs; ++j) out.at(i, j - 1) = c.at(i, j);
  return out;
}

double mcd_over_path(const FeatureSequence& ca, const FeatureSequence& cb,
                     const align::DtwPath& path) {
  double acc = 0;
  for (const auto& [i, j] : path.pairs) {
    double sq = 0;
    for (int k = 0; k < ca.cols(); ++k) {
      double d = ca.at(i, k) - cb.at(j, k);
      sq += d * d;
    }
    acc += std::sqrt(2.0 * sq);
  }
  return (10.0 / std::log(10.0)) * acc / static_cast<double>(path.pairs.size());
}

}  // namespace

FeatureSequence mel_cepstra(const FeatureSequence& logmel, int n_coeffs) {
  if (logmel.rank() != 2 || logmel.rows() < 1) throw DataError("mel_cepstra: empty input");
  const int n = logmel.cols();
  if (n_coeffs < 1 || n_coeffs > n)
    throw DataError("mel_cepstra: n_coeffs must lie in [1, n_mels]");
  FeatureSequence out({logmel.rows(), n_coeffs});
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (int t = 0; t < logmel.rows(); ++t) {
    for (int k = 0; k < n_coeffs; ++k) {
      double acc = 0;
      for (int j = 0; j < n; ++j)
        acc += logmel.at(t, j) * std::cos(kPi * (j + 0.5) * k / n);
      out.at(t, k) = (k == 0 ? s0 : sk) * acc;
    }
  }
  return out;
}

double mcd_db(const FeatureSequence& logmel_a, const FeatureSequence& logmel_b,
              int n_coeffs) {
  if (n_coeffs < 2) throw DataError("mcd: need at least two cepstral coefficients");
  FeatureSequence ca = cepstra_no_c0(logmel_a, n_coeffs);
  FeatureSequence cb = cepstra_no_c0(logmel_b, n_coeffs);
  align::DtwPath path = align::dtw(ca, cb, align::Metric::kEuclidean);
  if (path.pairs.empty()) throw DataError("mcd: empty alignment");
  return mcd_over_path(ca, cb, path);
}

F0RmseResult f0_rmse(const dsp::Waveform& converted, const dsp::Waveform& reference,
                     const dsp::MelConfig& mel_cfg, const dsp::F0Config& f0_cfg,
                     int n_coeffs) {
  FeatureSequence mel_a = dsp::mel_spectrogram(converted, mel_cfg);
  FeatureSequence mel_b = dsp::mel_spectrogram(reference, mel_cfg);
  FeatureSequence ca = cepstra_no_c0(mel_a, n_coeffs);
  FeatureSequence cb = cepstra_no_c0(mel_b, n_coeffs);
  align::DtwPath path = align::dtw(ca, cb, align::Metric::kEuclidean);

  auto f0_a = dsp::extract_f0(converted, f0_cfg);
  auto f0_b = dsp::extract_f0(reference, f0_cfg);

  double acc = 0;
  int count = 0;
  for (const auto& [i, j] : path.pairs) {
    if (i >= static_cast<int>(f0_a.size()) || j >= static_cast<int>(f0_b.size())) continue;
    const auto& fa = f0_a[static_cast<std::size_t>(i)];
    const auto& fb = f0_b[static_cast<std::size_t>(j)];
    if (fa.voiced && fb.voiced) {
      double d = fa.f0_hz - fb.f0_hz;
      acc += d * d;
      ++count;
    }
  }
  if (count == 0) throw DataError("f0_rmse: no mutually voiced frames");
  F0RmseResult r;
  r.rmse_hz = std::sqrt(acc / count);
  r.mutually_voiced = count;
  return r;
}

double ddur_s(const std::vector<double>& converted_dur_s,
              const std::vector<double>& target_dur_s) {
  if (converted_dur_s.empty() || converted_dur_s.size() != target_dur_s.size())
    throw DataError("ddur: unpaired duration sets");
  double acc = 0;
  for (std::size_t i = 0; i < converted_dur_s.size(); ++i)
    acc += std::fabs(converted_dur_s[i] - target_dur_s[i]);
  return acc / static_cast<double>(converted_dur_s.size());
}

AlignmentDiagnostics alignment_diagnostics(const Tensor& alignment,
                                           const std::vector<int>& reference_cols,
                                           int jump_threshold) {
  if (alignment.rank() != 2 || alignment.rows() < 1)
    throw DataError("alignment_diagnostics: empty matrix");
  const int steps = alignment.rows();
  const int t_h = alignment.cols();
  AlignmentDiagnostics d;

  int prev_argmax = -1;
  double entropy_acc = 0;
  double dev_acc = 0;
  int dev_count = 0;
  for (int t = 0; t < steps; ++t) {
    int am = 0;
    double entropy = 0;
    for (int n = 0; n < t_h; ++n) {
      double p = alignment.at(t, n);
      if (p > alignment.at(t, am)) am = n;
      if (p > 0) entropy -= p * std::log(p);
    }
    entropy_acc += entropy;
    if (prev_argmax >= 0) {
      if (am < prev_argmax || am - prev_argmax > jump_threshold)
        d.monotonicity_violations++;
    }
    prev_argmax = am;
    if (t < static_cast<int>(reference_cols.size())) {
      dev_acc += std::fabs(am - reference_cols[static_cast<std::size_t>(t)]);
      ++dev_count;
    }
  }
  d.mean_row_entropy = entropy_acc / steps;
  d.mean_path_deviation = dev_count > 0 ? dev_acc / dev_count : 0.0;
  return d;
}

std::vector<int> downsample_reference_path(const std::vector<int>& src_frame_per_tgt_frame,
                                           int steps, int r, int m_downsample, int t_h) {
  if (src_frame_per_tgt_frame.empty()) throw DataError("empty reference path");
  std::vector<int> out(static_cast<std::size_t>(steps));
  const int t_y = static_cast<int>(src_frame_per_tgt_frame.size());
  for (int t = 0; t < steps; ++t) {
    int j = std::min(t * r, t_y - 1);
    int src = src_frame_per_tgt_frame[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(t)] = std::clamp(src / m_downsample, 0, t_h - 1);
  }
  return out;
}

std::vector<std::pair<int, int>> staircase_path(const std::vector<int>& src_per_tgt) {
  if (src_per_tgt.empty()) throw DataError("staircase_path: empty map");
  std::vector<std::pair<int, int>> path;
  int i = 0;
  path.emplace_back(0, 0);
  for (int j = 1; j < static_cast<int>(src_per_tgt.size()); ++j) {
    int target_i = std::max(i, src_per_tgt[static_cast<std::size_t>(j)]);
    // advance source while staying on the previous target row
    while (i + 1 < target_i) {
      ++i;
      path.emplace_back(i, j - 1);
    }
    if (target_i > i) i = target_i;
    path.emplace_back(i, j);
  }
  return path;
}

}  // namespace seqvc::metrics
