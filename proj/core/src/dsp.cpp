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

#include "seqvc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "seqvc/error.hpp"

namespace seqvc::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place. inverse=true applies conjugation and 1/N.
void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

// Reflect indexing without edge repetition, robust for short signals.
double sample_reflect(const std::vector<double>& x, std::int64_t i) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n == 1) return x[0];
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return x[static_cast<std::size_t>(i)];
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Frames of complex spectra for Griffin-Lim; shares the centering convention
// with stft_magnitude.
std::vector<std::vector<std::complex<double>>> stft_complex(
    const std::vector<double>& samples, const MelConfig& cfg) {
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  const int pad = win / 2;
  const int n_frames = static_cast<int>(static_cast<std::int64_t>(samples.size()) / hop) + 1;
  const auto window = hann_window(win);
  std::vector<std::vector<std::complex<double>>> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int t = 0; t < n_frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - pad;
    for (int i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] =
          sample_reflect(samples, start + i) * window[static_cast<std::size_t>(i)];
    }
    fft(buf, false);
    out.push_back(buf);
  }
  return out;
}

}  // namespace

void MelConfig::validate() const {
  if (!is_pow2(fft_size)) throw ConfigError("fft_size must be a power of two");
  if (win_length() > fft_size) throw ConfigError("window longer than fft_size");
  if (win_length() < hop_length()) throw ConfigError("win_length must be >= hop");
  if (hop_length() <= 0) throw ConfigError("hop must be positive");
  if (n_mels <= 0 || n_mels >= n_bins()) throw ConfigError("n_mels out of range");
  double nyq = sample_rate / 2.0;
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= nyq))
    throw ConfigError("mel band edges must satisfy 0 <= fmin < fmax <= nyquist");
  if (log_floor <= 0.0) throw ConfigError("log_floor must be positive");
}

int frame_count(std::int64_t n_samples, const MelConfig& cfg) {
  return static_cast<int>(n_samples / cfg.hop_length()) + 1;
}

Tensor stft_magnitude(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw DataError("stft: empty waveform");
  auto frames = stft_complex(w.samples, cfg);
  const int n_frames = static_cast<int>(frames.size());
  const int nb = cfg.n_bins();
  Tensor mag({n_frames, nb});
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < nb; ++b) mag.at(t, b) = std::abs(frames[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]);
  return mag;
}

Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int nb = cfg.n_bins();
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  Tensor fb({cfg.n_mels, nb});
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[static_cast<std::size_t>(m)];
    const double f1 = edges[static_cast<std::size_t>(m) + 1];
    const double f2 = edges[static_cast<std::size_t>(m) + 2];
    bool any = false;
    for (int b = 0; b < nb; ++b) {
      const double f = b * bin_hz;
      double v = 0.0;
      if (f > f0 && f < f1) v = (f - f0) / (f1 - f0);
      else if (f >= f1 && f <= f2 && f2 > f1) v = (f2 - f) / (f2 - f1);
      if (v > 0) any = true;
      fb.at(m, b) = v;
    }
    if (!any) {
      // Degenerate narrow filter: fall back to the nearest bin.
      int b = static_cast<int>(f1 / bin_hz + 0.5);
      b = std::clamp(b, 0, nb - 1);
      fb.at(m, b) = 1.0;
    }
  }
  return fb;
}

FeatureSequence mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  Tensor mag = stft_magnitude(w, cfg);
  Tensor fb = mel_filterbank(cfg);
  const int n_frames = mag.rows();
  const int nb = mag.cols();
  FeatureSequence out({n_frames, cfg.n_mels});
  for (int t = 0; t < n_frames; ++t) {
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0;
      const double* frow = fb.data() + static_cast<std::size_t>(m) * nb;
      const double* srow = mag.data() + static_cast<std::size_t>(t) * nb;
      for (int b = 0; b < nb; ++b) acc += frow[b] * srow[b] * srow[b];
      out.at(t, m) = std::log(std::max(acc, cfg.log_floor));
    }
  }
  return out;
}

std::vector<int> mu_law(const Waveform& w, int bits) {
  if (bits < 2 || bits > 16) throw ConfigError("mu_law: bits out of range");
  const double mu = static_cast<double>((1 << bits) - 1);
  std::vector<int> out;
  out.reserve(w.samples.size());
  for (double x : w.samples) {
    if (!(x >= -1.0 && x <= 1.0)) throw DataError("mu_law: sample out of [-1,1]");
    double m = (x >= 0 ? 1.0 : -1.0) * std::log1p(mu * std::fabs(x)) / std::log1p(mu);
    int level = static_cast<int>(std::floor((m + 1.0) / 2.0 * mu + 0.5));
    level = std::clamp(level, 0, (1 << bits) - 1);
    out.push_back(level);
  }
  return out;
}

Waveform mu_law_inverse(const std::vector<int>& levels, int bits, int sample_rate) {
  if (bits < 2 || bits > 16) throw ConfigError("mu_law_inverse: bits out of range");
  const double mu = static_cast<double>((1 << bits) - 1);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.reserve(levels.size());
  for (int level : levels) {
    if (level < 0 || level > (1 << bits) - 1) throw DataError("mu_law_inverse: level out of range");
    double m = 2.0 * level / mu - 1.0;
    double x = (m >= 0 ? 1.0 : -1.0) * (std::pow(1.0 + mu, std::fabs(m)) - 1.0) / mu;
    w.samples.push_back(x);
  }
  return w;
}

std::vector<F0Frame> extract_f0(const Waveform& w, const F0Config& cfg) {
  if (w.samples.empty()) throw DataError("extract_f0: empty waveform");
  const int win = static_cast<int>(cfg.win_ms * cfg.sample_rate / 1000.0 + 0.5);
  const int hop = static_cast<int>(cfg.hop_ms * cfg.sample_rate / 1000.0 + 0.5);
  const int pad = win / 2;
  const int tau_min = std::max(2, static_cast<int>(cfg.sample_rate / cfg.fmax_hz));
  const int tau_max = std::min(win - 2, static_cast<int>(cfg.sample_rate / cfg.fmin_hz + 0.5));
  const int n_frames = static_cast<int>(static_cast<std::int64_t>(w.samples.size()) / hop) + 1;

  std::vector<F0Frame> out(static_cast<std::size_t>(n_frames));
  std::vector<double> frame(static_cast<std::size_t>(win));
  for (int t = 0; t < n_frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * hop - pad;
    double mean = 0;
    for (int i = 0; i < win; ++i) {
      frame[static_cast<std::size_t>(i)] = sample_reflect(w.samples, start + i);
      mean += frame[static_cast<std::size_t>(i)];
    }
    mean /= win;
    double energy = 0;
    for (int i = 0; i < win; ++i) {
      frame[static_cast<std::size_t>(i)] -= mean;
      energy += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
    }
    if (energy < 1e-12) continue;  // silence: unvoiced

    std::vector<double> rbuf(static_cast<std::size_t>(tau_max) + 2, -1.0);
    double r_max = -1.0;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      double num = 0, e0 = 0, e1 = 0;
      const int n = win - tau;
      for (int i = 0; i < n; ++i) {
        num += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i + tau)];
        e0 += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
        e1 += frame[static_cast<std::size_t>(i + tau)] * frame[static_cast<std::size_t>(i + tau)];
      }
      double denom = std::sqrt(e0 * e1);
      double r = denom > 1e-12 ? num / denom : 0.0;
      rbuf[static_cast<std::size_t>(tau)] = r;
      r_max = std::max(r_max, r);
    }
    // Subharmonic lags of a periodic signal correlate as strongly as the
    // fundamental; take the smallest local maximum near the global peak.
    int best_tau = 0;
    double best_r = -1.0;
    for (int tau = tau_min; tau <= tau_max; ++tau) {
      double r = rbuf[static_cast<std::size_t>(tau)];
      bool local_max =
          (tau == tau_min || r >= rbuf[static_cast<std::size_t>(tau) - 1]) &&
          (tau == tau_max || r >= rbuf[static_cast<std::size_t>(tau) + 1]);
      if (local_max && r >= 0.9 * r_max) {
        best_tau = tau;
        best_r = r;
        break;
      }
    }
    if (best_r > cfg.voicing_threshold && best_tau > 0) {
      double tau_refined = best_tau;
      if (best_tau > tau_min && best_tau < tau_max) {
        const double rm = rbuf[static_cast<std::size_t>(best_tau) - 1];
        const double r0 = rbuf[static_cast<std::size_t>(best_tau)];
        const double rp = rbuf[static_cast<std::size_t>(best_tau) + 1];
        const double denom = rm - 2.0 * r0 + rp;
        if (std::fabs(denom) > 1e-12) {
          double delta = 0.5 * (rm - rp) / denom;
          if (std::fabs(delta) < 1.0) tau_refined += delta;
        }
      }
      out[static_cast<std::size_t>(t)].voiced = true;
      out[static_cast<std::size_t>(t)].f0_hz = cfg.sample_rate / tau_refined;
    }
  }
  return out;
}

FeatureSequence repeat_upsample(const FeatureSequence& x, int factor) {
  if (factor < 1) throw ConfigError("repeat_upsample: factor must be >= 1");
  const int T = x.rows(), C = x.cols();
  FeatureSequence out({T * factor, C});
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < factor; ++k)
      for (int c = 0; c < C; ++c) out.at(t * factor + k, c) = x.at(t, c);
  return out;
}

Waveform griffin_lim(const FeatureSequence& logmel, const MelConfig& cfg,
                     int iterations, std::vector<double>* iteration_errors) {
  cfg.validate();
  if (!logmel.all_finite()) throw NumericError("griffin_lim: non-finite input");
  if (logmel.cols() != cfg.n_mels) throw NumericError("griffin_lim: n_mels mismatch");
  const int n_frames = logmel.rows();
  const int nb = cfg.n_bins();
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  const int pad = win / 2;

  // Pseudo-inverse of the filterbank: pinv = F^T (F F^T)^-1, then clip to >= 0.
  Tensor fb = mel_filterbank(cfg);
  const int M = cfg.n_mels;
  std::vector<double> gram(static_cast<std::size_t>(M) * M, 0.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      double acc = 0;
      for (int b = 0; b < nb; ++b) acc += fb.at(i, b) * fb.at(j, b);
      gram[static_cast<std::size_t>(i) * M + j] = acc;
    }
  // Gauss-Jordan inversion with a small ridge for numerical safety.
  std::vector<double> inv(static_cast<std::size_t>(M) * M, 0.0);
  for (int i = 0; i < M; ++i) {
    gram[static_cast<std::size_t>(i) * M + i] += 1e-10;
    inv[static_cast<std::size_t>(i) * M + i] = 1.0;
  }
  for (int col = 0; col < M; ++col) {
    int piv = col;
    for (int r = col + 1; r < M; ++r)
      if (std::fabs(gram[static_cast<std::size_t>(r) * M + col]) >
          std::fabs(gram[static_cast<std::size_t>(piv) * M + col]))
        piv = r;
    for (int c = 0; c < M; ++c) {
      std::swap(gram[static_cast<std::size_t>(col) * M + c], gram[static_cast<std::size_t>(piv) * M + c]);
      std::swap(inv[static_cast<std::size_t>(col) * M + c], inv[static_cast<std::size_t>(piv) * M + c]);
    }
    double d = gram[static_cast<std::size_t>(col) * M + col];
    if (std::fabs(d) < 1e-300) throw NumericError("griffin_lim: singular filterbank gram");
    for (int c = 0; c < M; ++c) {
      gram[static_cast<std::size_t>(col) * M + c] /= d;
      inv[static_cast<std::size_t>(col) * M + c] /= d;
    }
    for (int r = 0; r < M; ++r) {
      if (r == col) continue;
      double f = gram[static_cast<std::size_t>(r) * M + col];
      if (f == 0) continue;
      for (int c = 0; c < M; ++c) {
        gram[static_cast<std::size_t>(r) * M + c] -= f * gram[static_cast<std::size_t>(col) * M + c];
        inv[static_cast<std::size_t>(r) * M + c] -= f * inv[static_cast<std::size_t>(col) * M + c];
      }
    }
  }

  // Target magnitudes: power -> pinv -> clip -> sqrt.
  Tensor target({n_frames, nb});
  for (int t = 0; t < n_frames; ++t) {
    for (int b = 0; b < nb; ++b) {
      double acc = 0;
      for (int i = 0; i < M; ++i) {
        double w_ib = 0;
        for (int j = 0; j < M; ++j)
          w_ib += inv[static_cast<std::size_t>(i) * M + j] * fb.at(j, b);
        acc += w_ib * std::exp(logmel.at(t, i));
      }
      target.at(t, b) = std::sqrt(std::max(acc, 0.0));
    }
  }

  const std::int64_t n_samples = static_cast<std::int64_t>(std::max(0, n_frames - 1)) * hop + 1;
  const auto window = hann_window(win);

  // ISTFT via windowed overlap-add with squared-window normalization.
  auto istft = [&](const std::vector<std::vector<std::complex<double>>>& spec) {
    std::vector<double> acc(static_cast<std::size_t>(n_samples + 2 * pad), 0.0);
    std::vector<double> norm(acc.size(), 0.0);
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
    for (int t = 0; t < n_frames; ++t) {
      for (int b = 0; b < nb; ++b) {
        buf[static_cast<std::size_t>(b)] = spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)];
        if (b > 0 && b < cfg.fft_size - b)
          buf[static_cast<std::size_t>(cfg.fft_size - b)] = std::conj(buf[static_cast<std::size_t>(b)]);
      }
      fft(buf, true);
      const std::int64_t start = static_cast<std::int64_t>(t) * hop;
      for (int i = 0; i < win; ++i) {
        std::int64_t idx = start + i;
        if (idx < 0 || idx >= static_cast<std::int64_t>(acc.size())) continue;
        acc[static_cast<std::size_t>(idx)] += buf[static_cast<std::size_t>(i)].real() * window[static_cast<std::size_t>(i)];
        norm[static_cast<std::size_t>(idx)] += window[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
      }
    }
    std::vector<double> out(static_cast<std::size_t>(n_samples));
    for (std::int64_t i = 0; i < n_samples; ++i) {
      double n = norm[static_cast<std::size_t>(i + pad)];
      out[static_cast<std::size_t>(i)] = n > 1e-9 ? acc[static_cast<std::size_t>(i + pad)] / n : 0.0;
    }
    return out;
  };

  // Zero initial phase; plain Griffin-Lim iteration (no momentum) so the
  // spectral-convergence error is non-increasing.
  std::vector<std::vector<std::complex<double>>> spec(
      static_cast<std::size_t>(n_frames),
      std::vector<std::complex<double>>(static_cast<std::size_t>(nb)));
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < nb; ++b)
      spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] = target.at(t, b);

  std::vector<double> x;
  double target_norm = 0;
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < nb; ++b) target_norm += target.at(t, b) * target.at(t, b);
  target_norm = std::sqrt(std::max(target_norm, 1e-300));

  for (int it = 0; it < std::max(1, iterations); ++it) {
    x = istft(spec);
    auto est = stft_complex(x, cfg);
    double err = 0;
    const int tmax = std::min<int>(n_frames, static_cast<int>(est.size()));
    for (int t = 0; t < tmax; ++t) {
      for (int b = 0; b < nb; ++b) {
        double mag = std::abs(est[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]);
        double d = mag - target.at(t, b);
        err += d * d;
        double phase_mag = mag > 1e-300 ? target.at(t, b) / mag : 0.0;
        spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] =
            est[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] * phase_mag;
      }
    }
    if (iteration_errors) iteration_errors->push_back(std::sqrt(err) / target_norm);
  }
  x = istft(spec);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(x);
  double peak = 0;
  for (double v : out.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 1e-2) {
    for (double& v : out.samples) v *= 0.95 / peak;
  }
  for (double v : out.samples)
    if (!std::isfinite(v)) throw NumericError("griffin_lim: non-finite output");
  return out;
}

}  // namespace seqvc::dsp
