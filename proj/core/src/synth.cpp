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

#include "seqvc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "seqvc/error.hpp"
#include "seqvc/metrics.hpp"
#include "seqvc/rng.hpp"

namespace seqvc::synth {

namespace fs = std::filesystem;
using seqvc::Rng;

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

GeneratorConfig GeneratorConfig::desk() {
  GeneratorConfig cfg;
  cfg.mel.n_mels = 16;
  return cfg;
}

void GeneratorConfig::validate() const {
  mel.validate();
  if (alphabet_size < 4) throw ConfigError("alphabet too small");
  if (unvoiced_symbols >= alphabet_size) throw ConfigError("too many unvoiced symbols");
  if (2 * confusable_pairs > alphabet_size - unvoiced_symbols)
    throw ConfigError("too many confusable pairs");
  if (min_source_frames < aux_grid * min_seg_units)
    throw ConfigError("min_source_frames shorter than one segment");
  if (!(warp.global_ratio >= 0.5 && warp.global_ratio <= 2.0))
    throw ConfigError("warp ratio must lie in [0.5, 2]");
  if (aux_grid < 1 || min_seg_units < 1 || max_seg_units < min_seg_units)
    throw ConfigError("bad segment grid");
}

namespace {

// Formant-like harmonic envelope: two random humps over the harmonic axis.
std::vector<double> random_envelope(int n_harmonics, Rng& rng) {
  double c1 = rng.uniform(1.5, n_harmonics * 0.45);
  double c2 = rng.uniform(n_harmonics * 0.5, n_harmonics * 0.95);
  double w1 = rng.uniform(1.0, 3.0);
  double w2 = rng.uniform(1.5, 4.0);
  double g2 = rng.uniform(0.25, 0.8);
  std::vector<double> env(static_cast<std::size_t>(n_harmonics));
  for (int h = 0; h < n_harmonics; ++h) {
    double d1 = (h + 1 - c1) / w1;
    double d2 = (h + 1 - c2) / w2;
    env[static_cast<std::size_t>(h)] =
        0.05 + std::exp(-d1 * d1) + g2 * std::exp(-d2 * d2);
  }
  return env;
}

}  // namespace

SymbolTable SymbolTable::build(const GeneratorConfig& cfg, std::uint64_t corpus_seed) {
  cfg.validate();
  Rng rng(Rng::mix(corpus_seed, 0x53594d42ULL));
  const int a = cfg.alphabet_size;
  SymbolTable t;
  t.voiced.resize(static_cast<std::size_t>(a));
  t.env_source.resize(static_cast<std::size_t>(a));
  t.env_target.resize(static_cast<std::size_t>(a));
  t.f0_off_source.resize(static_cast<std::size_t>(a));
  t.f0_off_target.resize(static_cast<std::size_t>(a));
  t.rate_target.resize(static_cast<std::size_t>(a));
  t.noise_center_hz.resize(static_cast<std::size_t>(a));
  t.glide.resize(static_cast<std::size_t>(a));
  t.ramp.resize(static_cast<std::size_t>(a));

  for (int s = 0; s < a; ++s) {
    t.voiced[static_cast<std::size_t>(s)] = s < a - cfg.unvoiced_symbols;
    t.env_source[static_cast<std::size_t>(s)] = random_envelope(cfg.n_harmonics, rng);
    t.env_target[static_cast<std::size_t>(s)] = random_envelope(cfg.n_harmonics, rng);
    t.f0_off_source[static_cast<std::size_t>(s)] = rng.uniform(0.92, 1.08);
    t.f0_off_target[static_cast<std::size_t>(s)] = rng.uniform(0.92, 1.08);
    t.rate_target[static_cast<std::size_t>(s)] =
        cfg.warp.global_ratio * rng.uniform(1.0 - cfg.warp.rate_spread,
                                            1.0 + cfg.warp.rate_spread);
    t.noise_center_hz[static_cast<std::size_t>(s)] = rng.uniform(1500.0, 6000.0);
    t.glide[static_cast<std::size_t>(s)] = (s % 2 ? 1.0 : -1.0) * rng.uniform(1.0, 2.0);
    t.ramp[static_cast<std::size_t>(s)] = (s % 3 == 0 ? 1.0 : -1.0) * rng.uniform(0.2, 0.5);
  }
  // Confusable pairs (2k, 2k+1): identical source rendering, distinct targets.
  for (int k = 0; k < cfg.confusable_pairs; ++k) {
    int s0 = 2 * k, s1 = 2 * k + 1;
    t.env_source[static_cast<std::size_t>(s1)] = t.env_source[static_cast<std::size_t>(s0)];
    t.f0_off_source[static_cast<std::size_t>(s1)] = t.f0_off_source[static_cast<std::size_t>(s0)];
  }
  // Silence brackets keep their length across speakers; content rates are
  // normalized so their mean compensates the fixed-rate silence mass and the
  // corpus-level duration ratio matches the warp's global ratio.
  const double sil_frames = cfg.aux_grid * (cfg.lead_silence_units + cfg.tail_silence_units);
  const double mean_content =
      0.5 * (cfg.min_source_frames + cfg.max_source_frames) +
      0.25 * cfg.aux_grid * (cfg.min_seg_units + cfg.max_seg_units);
  const double rho = cfg.warp.global_ratio;
  const double target_mean =
      (rho * (mean_content + sil_frames) - sil_frames) / mean_content;
  double mean_rate = 0;
  const int content_symbols = a - 1;
  for (int s = 0; s < content_symbols; ++s) mean_rate += t.rate_target[static_cast<std::size_t>(s)];
  mean_rate /= content_symbols;
  for (int s = 0; s < content_symbols; ++s)
    t.rate_target[static_cast<std::size_t>(s)] *= target_mean / mean_rate;
  t.rate_target[static_cast<std::size_t>(cfg.silence_symbol())] = 1.0;
  return t;
}

ContentSpec random_content(const GeneratorConfig& cfg, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x434f4e54ULL));
  const int total_target =
      rng.uniform_int(cfg.min_source_frames, cfg.max_source_frames);
  ContentSpec c;
  int total = 0;
  c.symbols.push_back(cfg.silence_symbol());
  c.durations.push_back(cfg.aux_grid * cfg.lead_silence_units);
  while (total < total_target) {
    int sym = rng.uniform_int(0, cfg.alphabet_size - 2);  // silence is reserved
    int dur = cfg.aux_grid * rng.uniform_int(cfg.min_seg_units, cfg.max_seg_units);
    c.symbols.push_back(sym);
    c.durations.push_back(dur);
    total += dur;
  }
  c.symbols.push_back(cfg.silence_symbol());
  c.durations.push_back(cfg.aux_grid * cfg.tail_silence_units);
  return c;
}

namespace {

struct RenderSpec {
  const GeneratorConfig* cfg;
  const SymbolTable* table;
  const VoiceSpec* voice;
  bool target_side;
};

SyntheticUtterance render(const RenderSpec& rs, const std::vector<int>& symbols,
                          const std::vector<int>& durations, std::uint64_t seed) {
  const GeneratorConfig& cfg = *rs.cfg;
  const SymbolTable& table = *rs.table;
  Rng rng(Rng::mix(seed, rs.target_side ? 0x54475452ULL : 0x53524352ULL));

  const int hop = cfg.mel.hop_length();
  const int sr = cfg.mel.sample_rate;
  int total_frames = 0;
  for (int d : durations) total_frames += d;
  const std::int64_t n_samples =
      static_cast<std::int64_t>(total_frames - 1) * hop + hop / 2;

  SyntheticUtterance u;
  u.wave.sample_rate = sr;
  u.wave.samples.assign(static_cast<std::size_t>(n_samples), 0.0);
  u.f0_track.assign(static_cast<std::size_t>(total_frames), 0.0);
  const double drift_phase = rng.uniform(0.0, kTwoPi);

  int frame0 = 0;
  u.segment_starts.push_back(0);
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const int sym = symbols[k];
    const int frames = durations[k];
    const std::int64_t s0 = static_cast<std::int64_t>(frame0) * hop;
    const std::int64_t s1 =
        std::min<std::int64_t>(n_samples, static_cast<std::int64_t>(frame0 + frames) * hop);
    const std::int64_t fade = hop;  // trapezoid edges against clicks
    const auto& env = rs.target_side ? table.env_target[static_cast<std::size_t>(sym)]
                                     : table.env_source[static_cast<std::size_t>(sym)];
    const double sym_glide = table.glide[static_cast<std::size_t>(sym)];
    const double sym_ramp = table.ramp[static_cast<std::size_t>(sym)];
    // progress through the segment at a given sample; spectra glide with it so
    // each frame betrays how far into the symbol the rendering is
    auto progress = [&](std::int64_t s) {
      return std::clamp(static_cast<double>(s - s0) / std::max<std::int64_t>(1, s1 - s0),
                        0.0, 1.0);
    };
    if (table.voiced[static_cast<std::size_t>(sym)]) {
      const double off = rs.target_side ? table.f0_off_target[static_cast<std::size_t>(sym)]
                                        : table.f0_off_source[static_cast<std::size_t>(sym)];
      const double f0_nom = rs.voice->f0_base_hz * off;
      const int n_harm = std::min<int>(cfg.n_harmonics,
                                       static_cast<int>(0.85 * sr / 2.0 / f0_nom));
      std::vector<double> phase(static_cast<std::size_t>(n_harm));
      std::vector<double> amp(static_cast<std::size_t>(n_harm));
      for (int h = 0; h < n_harm; ++h) phase[static_cast<std::size_t>(h)] = rng.uniform(0.0, kTwoPi);
      std::int64_t next_amp_update = s0;
      for (std::int64_t s = s0; s < s1; ++s) {
        if (s >= next_amp_update) {  // refresh the glide once per frame
          double q = progress(s);
          double mod = (q - 0.5);
          for (int h = 0; h < n_harm; ++h) {
            double tilt_pos = static_cast<double>(h + 1) / n_harm - 0.5;
            amp[static_cast<std::size_t>(h)] =
                env[static_cast<std::size_t>(h)] *
                std::exp(rs.voice->spectral_tilt * (h + 1) +
                         mod * (sym_ramp + sym_glide * tilt_pos));
          }
          next_amp_update += hop;
        }
        double tsec = static_cast<double>(s) / sr;
        double f0 = f0_nom * (1.0 + 0.04 * std::sin(kTwoPi * 1.3 * tsec + drift_phase));
        double ramp = 1.0;
        if (s - s0 < fade) ramp = static_cast<double>(s - s0) / fade;
        if (s1 - s < fade) ramp = std::min(ramp, static_cast<double>(s1 - s) / fade);
        double acc = 0;
        for (int h = 0; h < n_harm; ++h) {
          phase[static_cast<std::size_t>(h)] += kTwoPi * (h + 1) * f0 / sr;
          acc += amp[static_cast<std::size_t>(h)] * std::sin(phase[static_cast<std::size_t>(h)]);
        }
        u.wave.samples[static_cast<std::size_t>(s)] += ramp * acc;
      }
      for (int f = frame0; f < frame0 + frames; ++f) {
        double tsec = static_cast<double>(f) * hop / sr;
        u.f0_track[static_cast<std::size_t>(f)] =
            f0_nom * (1.0 + 0.04 * std::sin(kTwoPi * 1.3 * tsec + drift_phase));
      }
    } else if (sym == cfg.silence_symbol()) {
      // bracket silence: noise floor only
    } else {
      // Noise burst: a bank of sinusoids around the symbol band whose center
      // glides with segment progress.
      const double center = table.noise_center_hz[static_cast<std::size_t>(sym)];
      const int n_comp = 30;
      std::vector<double> offset(static_cast<std::size_t>(n_comp));
      std::vector<double> phase(static_cast<std::size_t>(n_comp));
      for (int c = 0; c < n_comp; ++c) {
        offset[static_cast<std::size_t>(c)] = rng.uniform(-700.0, 700.0);
        phase[static_cast<std::size_t>(c)] = rng.uniform(0.0, kTwoPi);
      }
      for (std::int64_t s = s0; s < s1; ++s) {
        double q = progress(s);
        double shift = 1.0 + 0.20 * (q - 0.5) * (sym_glide > 0 ? 1.0 : -1.0);
        double gain = std::exp((q - 0.5) * sym_ramp);
        double ramp = 1.0;
        if (s - s0 < fade) ramp = static_cast<double>(s - s0) / fade;
        if (s1 - s < fade) ramp = std::min(ramp, static_cast<double>(s1 - s) / fade);
        double acc = 0;
        for (int c = 0; c < n_comp; ++c) {
          double f = std::clamp((center + offset[static_cast<std::size_t>(c)]) * shift,
                                100.0, 0.95 * sr / 2.0);
          phase[static_cast<std::size_t>(c)] += kTwoPi * f / sr;
          acc += std::sin(phase[static_cast<std::size_t>(c)]);
        }
        u.wave.samples[static_cast<std::size_t>(s)] += 0.12 * gain * ramp * acc / std::sqrt(n_comp);
      }
    }
    frame0 += frames;
    u.segment_starts.push_back(frame0);
  }

  for (auto& s : u.wave.samples) s += cfg.noise_floor * rng.normal();
  double peak = 0;
  for (double s : u.wave.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0) {
    for (auto& s : u.wave.samples) s *= 0.5 / peak;
  }

  u.mel = dsp::mel_spectrogram(u.wave, cfg.mel);
  if (u.mel.rows() != total_frames)
    throw NumericError("synth: frame count mismatch against mel analysis");

  // Auxiliary channel on the coarse grid, upsampled by repetition. Segment
  // boundaries are multiples of aux_grid, so every grid cell is pure.
  const int grid_cells = (total_frames + cfg.aux_grid - 1) / cfg.aux_grid;
  FeatureSequence aux_coarse({grid_cells, cfg.alphabet_size});
  const double rest =
      (1.0 - cfg.aux_active_weight) / static_cast<double>(cfg.alphabet_size - 1);
  int seg = 0;
  for (int c = 0; c < grid_cells; ++c) {
    int frame = std::min(c * cfg.aux_grid, total_frames - 1);
    while (seg + 1 < static_cast<int>(symbols.size()) &&
           frame >= u.segment_starts[static_cast<std::size_t>(seg) + 1])
      ++seg;
    int sym = symbols[static_cast<std::size_t>(seg)];
    for (int a = 0; a < cfg.alphabet_size; ++a)
      aux_coarse.at(c, a) = a == sym ? cfg.aux_active_weight : rest;
  }
  FeatureSequence aux_full = dsp::repeat_upsample(aux_coarse, cfg.aux_grid);
  u.aux = FeatureSequence({total_frames, cfg.alphabet_size});
  for (int f = 0; f < total_frames; ++f)
    for (int a = 0; a < cfg.alphabet_size; ++a) u.aux.at(f, a) = aux_full.at(f, a);
  return u;
}

}  // namespace

SyntheticPair generate_pair(const GeneratorConfig& cfg, const SymbolTable& table,
                            const ContentSpec& content, std::uint64_t pair_seed) {
  cfg.validate();
  if (content.symbols.empty() || content.symbols.size() != content.durations.size())
    throw DataError("generate_pair: empty or inconsistent content");
  Rng jitter_rng(Rng::mix(pair_seed, 0x4a495454ULL));

  std::vector<int> tgt_durations(content.durations.size());
  for (std::size_t k = 0; k < content.durations.size(); ++k) {
    double rate = table.rate_target[static_cast<std::size_t>(content.symbols[k])];
    double jit = jitter_rng.uniform(1.0 - cfg.warp.segment_jitter,
                                    1.0 + cfg.warp.segment_jitter);
    if (content.symbols[k] == cfg.silence_symbol()) jit = 1.0;  // fixed brackets
    double want = rate * jit * content.durations[k];
    int units = std::max(1, static_cast<int>(std::lround(want / cfg.aux_grid)));
    tgt_durations[k] = units * cfg.aux_grid;
  }

  RenderSpec src_spec{&cfg, &table, &cfg.source_voice, false};
  RenderSpec tgt_spec{&cfg, &table, &cfg.target_voice, true};
  SyntheticPair pair;
  pair.source = render(src_spec, content.symbols, content.durations, pair_seed);
  pair.target = render(tgt_spec, content.symbols, tgt_durations, pair_seed);

  // Exact piecewise-linear ground truth: target frame j inside segment k maps
  // to source frame a_k + floor((j - b_k) * len_src / len_tgt).
  int t_y = pair.target.mel.rows();
  pair.gt_src_frame.resize(static_cast<std::size_t>(t_y));
  for (std::size_t k = 0; k < content.symbols.size(); ++k) {
    int a0 = pair.source.segment_starts[k];
    int b0 = pair.target.segment_starts[k];
    int len_src = content.durations[k];
    int len_tgt = tgt_durations[k];
    for (int j = 0; j < len_tgt; ++j) {
      int src = a0 + static_cast<int>((static_cast<std::int64_t>(j) * len_src) / len_tgt);
      pair.gt_src_frame[static_cast<std::size_t>(b0 + j)] = src;
    }
  }
  pair.realized_ratio =
      static_cast<double>(pair.target.mel.rows()) / pair.source.mel.rows();
  return pair;
}

io::Manifest build_corpus(const std::string& out_dir, const CorpusSpec& spec,
                          bool force) {
  spec.gen.validate();
  fs::path root(out_dir);
  fs::path manifest_path = root / "manifest.tsv";
  if (fs::exists(manifest_path) && !force)
    throw DataError("corpus already exists at " + out_dir + " (use force to overwrite)");
  fs::create_directories(root / "data");

  SymbolTable table = SymbolTable::build(spec.gen, spec.seed);
  io::Manifest manifest;
  for (const auto& [k, v] : io::mel_config_to_kv(spec.gen.mel)) manifest.header["mel." + k] = v;
  manifest.header["alphabet"] = std::to_string(spec.gen.alphabet_size);
  manifest.header["seed"] = std::to_string(spec.seed);
  manifest.header["warp_ratio"] = std::to_string(spec.gen.warp.global_ratio);
  manifest.header["n_train"] = std::to_string(spec.n_train);
  manifest.header["n_val"] = std::to_string(spec.n_val);
  manifest.header["n_test"] = std::to_string(spec.n_test);

  const int total = spec.n_train + spec.n_val + spec.n_test;
  const double hop_s = spec.gen.mel.hop_ms / 1000.0;
  for (int i = 0; i < total; ++i) {
    // Disjoint per-item streams; the split boundaries never affect content.
    std::uint64_t item_seed = Rng::mix(spec.seed, 0x4954454dULL + static_cast<std::uint64_t>(i));
    ContentSpec content = random_content(spec.gen, item_seed);
    SyntheticPair pair = generate_pair(spec.gen, table, content, item_seed);

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "p%04d", i);
    io::ManifestEntry e;
    e.id = idbuf;
    e.split = i < spec.n_train ? "train" : (i < spec.n_train + spec.n_val ? "val" : "test");
    e.seed = item_seed;
    e.src_frames = pair.source.mel.rows();
    e.tgt_frames = pair.target.mel.rows();
    e.src_dur_s = pair.source.mel.rows() * hop_s;
    e.tgt_dur_s = pair.target.mel.rows() * hop_s;
    e.warp_ratio = pair.realized_ratio;

    auto rel = [&](const std::string& suffix) { return "data/" + e.id + suffix; };
    auto abs = [&](const std::string& suffix) { return (root / rel(suffix)).string(); };

    e.src_mel = rel(".src.mel.fea");
    e.src_aux = rel(".src.aux.fea");
    e.src_f0 = rel(".src.f0.fea");
    e.src_wav = rel(".src.wav");
    e.tgt_mel = rel(".tgt.mel.fea");
    e.tgt_aux = rel(".tgt.aux.fea");
    e.tgt_f0 = rel(".tgt.f0.fea");
    e.tgt_wav = rel(".tgt.wav");
    e.gt_path = rel(".gtpath.tsv");

    io::write_feature_file(abs(".src.mel.fea"), pair.source.mel);
    io::write_feature_file(abs(".src.aux.fea"), pair.source.aux);
    io::write_feature_file(abs(".tgt.mel.fea"), pair.target.mel);
    io::write_feature_file(abs(".tgt.aux.fea"), pair.target.aux);
    Tensor f0_src({pair.source.mel.rows(), 1});
    for (int f = 0; f < pair.source.mel.rows(); ++f)
      f0_src.at(f, 0) = pair.source.f0_track[static_cast<std::size_t>(f)];
    Tensor f0_tgt({pair.target.mel.rows(), 1});
    for (int f = 0; f < pair.target.mel.rows(); ++f)
      f0_tgt.at(f, 0) = pair.target.f0_track[static_cast<std::size_t>(f)];
    io::write_feature_file(abs(".src.f0.fea"), f0_src);
    io::write_feature_file(abs(".tgt.f0.fea"), f0_tgt);
    io::write_wav(abs(".src.wav"), pair.source.wave);
    io::write_wav(abs(".tgt.wav"), pair.target.wave);
    io::write_path_tsv(abs(".gtpath.tsv"), metrics::staircase_path(pair.gt_src_frame));

    manifest.items.push_back(std::move(e));
  }
  io::save_manifest(manifest_path.string(), manifest);
  return manifest;
}

}  // namespace seqvc::synth
