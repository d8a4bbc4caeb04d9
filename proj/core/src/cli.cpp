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

#include "seqvc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "seqvc/align.hpp"
#include "seqvc/dsp.hpp"
#include "seqvc/error.hpp"
#include "seqvc/metrics.hpp"
#include "seqvc/synth.hpp"

namespace seqvc::cli {

namespace fs = std::filesystem;
using num::FeatureSequence;
using num::Tensor;

namespace {

dsp::MelConfig mel_config_from_manifest(const io::Manifest& manifest) {
  io::KvMap kv;
  for (const auto& [k, v] : manifest.header)
    if (k.rfind("mel.", 0) == 0) kv[k.substr(4)] = v;
  if (kv.empty()) throw DataError("manifest lacks mel configuration");
  return io::mel_config_from_kv(kv);
}

int manifest_alphabet(const io::Manifest& manifest) {
  auto it = manifest.header.find("alphabet");
  if (it == manifest.header.end()) throw DataError("manifest lacks alphabet size");
  return std::stoi(it->second);
}

int mcc_coeffs_for(int n_mels) { return std::min(13, n_mels); }

}  // namespace

NormStats compute_norm_stats(const std::string& root, const io::Manifest& manifest,
                             int d_mel) {
  NormStats s;
  s.src_mean.assign(static_cast<std::size_t>(d_mel), 0.0);
  s.src_std.assign(static_cast<std::size_t>(d_mel), 0.0);
  s.tgt_mean.assign(static_cast<std::size_t>(d_mel), 0.0);
  s.tgt_std.assign(static_cast<std::size_t>(d_mel), 0.0);
  std::int64_t n_src = 0, n_tgt = 0;
  std::vector<double> src_sq(static_cast<std::size_t>(d_mel), 0.0);
  std::vector<double> tgt_sq(static_cast<std::size_t>(d_mel), 0.0);
  for (const auto& e : manifest.items) {
    if (e.split != "train") continue;
    Tensor src = io::read_feature_file((fs::path(root) / e.src_mel).string());
    Tensor tgt = io::read_feature_file((fs::path(root) / e.tgt_mel).string());
    if (src.cols() != d_mel || tgt.cols() != d_mel)
      throw DataError("norm stats: mel dimension mismatch");
    for (int i = 0; i < src.rows(); ++i)
      for (int c = 0; c < d_mel; ++c) {
        s.src_mean[static_cast<std::size_t>(c)] += src.at(i, c);
        src_sq[static_cast<std::size_t>(c)] += src.at(i, c) * src.at(i, c);
      }
    n_src += src.rows();
    for (int i = 0; i < tgt.rows(); ++i)
      for (int c = 0; c < d_mel; ++c) {
        s.tgt_mean[static_cast<std::size_t>(c)] += tgt.at(i, c);
        tgt_sq[static_cast<std::size_t>(c)] += tgt.at(i, c) * tgt.at(i, c);
      }
    n_tgt += tgt.rows();
  }
  if (n_src == 0 || n_tgt == 0) throw DataError("norm stats: empty training split");
  for (int c = 0; c < d_mel; ++c) {
    s.src_mean[static_cast<std::size_t>(c)] /= n_src;
    s.tgt_mean[static_cast<std::size_t>(c)] /= n_tgt;
    double vs = src_sq[static_cast<std::size_t>(c)] / n_src -
                s.src_mean[static_cast<std::size_t>(c)] * s.src_mean[static_cast<std::size_t>(c)];
    double vt = tgt_sq[static_cast<std::size_t>(c)] / n_tgt -
                s.tgt_mean[static_cast<std::size_t>(c)] * s.tgt_mean[static_cast<std::size_t>(c)];
    s.src_std[static_cast<std::size_t>(c)] = std::sqrt(std::max(vs, 1e-6));
    s.tgt_std[static_cast<std::size_t>(c)] = std::sqrt(std::max(vt, 1e-6));
  }
  return s;
}

FeatureSequence normalize_mel(const FeatureSequence& mel,
                              const std::vector<double>& mean,
                              const std::vector<double>& stddev) {
  if (static_cast<std::size_t>(mel.cols()) != mean.size())
    throw DataError("normalize_mel: dimension mismatch");
  FeatureSequence out({mel.rows(), mel.cols()});
  for (int i = 0; i < mel.rows(); ++i)
    for (int c = 0; c < mel.cols(); ++c)
      out.at(i, c) = (mel.at(i, c) - mean[static_cast<std::size_t>(c)]) /
                     stddev[static_cast<std::size_t>(c)];
  return out;
}

FeatureSequence denormalize_mel(const FeatureSequence& mel,
                                const std::vector<double>& mean,
                                const std::vector<double>& stddev) {
  if (static_cast<std::size_t>(mel.cols()) != mean.size())
    throw DataError("denormalize_mel: dimension mismatch");
  FeatureSequence out({mel.rows(), mel.cols()});
  for (int i = 0; i < mel.rows(); ++i)
    for (int c = 0; c < mel.cols(); ++c)
      out.at(i, c) = mel.at(i, c) * stddev[static_cast<std::size_t>(c)] +
                     mean[static_cast<std::size_t>(c)];
  return out;
}

double corpus_duration_ratio(const io::Manifest& manifest) {
  std::vector<double> src, tgt;
  for (const auto& e : manifest.items) {
    if (e.split != "train") continue;
    src.push_back(e.src_dur_s);
    tgt.push_back(e.tgt_dur_s);
  }
  return align::duration_ratio(src, tgt);
}

LoadedPairs load_pairs(const std::string& root, const io::Manifest& manifest,
                       const std::string& split, const model::ModelConfig& cfg,
                       const NormStats& stats) {
  LoadedPairs out;
  const int n_coeffs = mcc_coeffs_for(cfg.d_mel);
  for (const auto& e : manifest.items) {
    if (e.split != split) continue;
    Tensor src_mel = io::read_feature_file((fs::path(root) / e.src_mel).string());
    Tensor src_aux = io::read_feature_file((fs::path(root) / e.src_aux).string());
    Tensor tgt_mel = io::read_feature_file((fs::path(root) / e.tgt_mel).string());

    FeatureSequence src_norm = normalize_mel(src_mel, stats.src_mean, stats.src_std);
    FeatureSequence input = model::assemble_input(cfg, src_norm, src_aux);
    if (cfg.attention_mode == model::AttentionMode::kDiagonal) {
      // Frame-by-frame variant: warp inputs onto the target time axis with a
      // mel-cepstral DTW path.
      FeatureSequence mcc_src = metrics::mel_cepstra(src_mel, n_coeffs);
      FeatureSequence mcc_tgt = metrics::mel_cepstra(tgt_mel, n_coeffs);
      align::DtwPath path = align::dtw(mcc_src, mcc_tgt, align::Metric::kEuclidean);
      input = align::warp_to_target(input, path);
    }

    train::PairExample pair;
    pair.source_input = std::move(input);
    pair.target_mel = normalize_mel(tgt_mel, stats.tgt_mean, stats.tgt_std);
    out.items.push_back(std::move(pair));
    out.ids.push_back(e.id);
    out.src_frames.push_back(e.src_frames);
    auto path_pairs = io::read_path_tsv((fs::path(root) / e.gt_path).string());
    std::vector<int> gt(static_cast<std::size_t>(e.tgt_frames), 0);
    for (const auto& [si, tj] : path_pairs)
      if (tj >= 0 && tj < e.tgt_frames) gt[static_cast<std::size_t>(tj)] = si;
    out.gt_src_frame.push_back(std::move(gt));
  }
  if (out.items.empty()) throw DataError("no items in split '" + split + "'");
  return out;
}

namespace {

io::CheckpointMeta make_meta(const TrainRunOptions& opts, const NormStats& stats,
                             const dsp::MelConfig& mel_cfg, int epoch,
                             std::int64_t step, double best_val) {
  io::CheckpointMeta meta;
  meta.model_cfg = opts.model_cfg;
  meta.train_cfg = opts.train_cfg;
  meta.weights = opts.weights;
  meta.epoch = epoch;
  meta.global_step = step;
  meta.extra["norm.src_mean"] = io::encode_double_list(stats.src_mean);
  meta.extra["norm.src_std"] = io::encode_double_list(stats.src_std);
  meta.extra["norm.tgt_mean"] = io::encode_double_list(stats.tgt_mean);
  meta.extra["norm.tgt_std"] = io::encode_double_list(stats.tgt_std);
  meta.extra["best_val"] = std::to_string(best_val);
  for (const auto& [k, v] : io::mel_config_to_kv(mel_cfg)) meta.extra["mel." + k] = v;
  return meta;
}

NormStats stats_from_meta(const io::CheckpointMeta& meta) {
  NormStats s;
  s.src_mean = io::decode_double_list(meta.extra.at("norm.src_mean"));
  s.src_std = io::decode_double_list(meta.extra.at("norm.src_std"));
  s.tgt_mean = io::decode_double_list(meta.extra.at("norm.tgt_mean"));
  s.tgt_std = io::decode_double_list(meta.extra.at("norm.tgt_std"));
  return s;
}

dsp::MelConfig mel_from_meta(const io::CheckpointMeta& meta) {
  io::KvMap kv;
  for (const auto& [k, v] : meta.extra)
    if (k.rfind("mel.", 0) == 0) kv[k.substr(4)] = v;
  if (kv.empty()) throw DataError("checkpoint lacks analysis configuration");
  return io::mel_config_from_kv(kv);
}

}  // namespace

double run_training(const TrainRunOptions& opts) {
  io::Manifest manifest = io::load_manifest((fs::path(opts.data_dir) / "manifest.tsv").string());
  dsp::MelConfig mel_cfg = mel_config_from_manifest(manifest);
  model::ModelConfig cfg = opts.model_cfg;
  if (cfg.d_mel != mel_cfg.n_mels)
    throw ConfigError("model d_mel does not match corpus n_mels");
  if (cfg.use_aux_input && cfg.d_aux != manifest_alphabet(manifest))
    throw ConfigError("model d_aux does not match corpus auxiliary width");

  NormStats stats = compute_norm_stats(opts.data_dir, manifest, cfg.d_mel);
  LoadedPairs train_pairs = load_pairs(opts.data_dir, manifest, "train", cfg, stats);
  LoadedPairs val_pairs = load_pairs(opts.data_dir, manifest, "val", cfg, stats);

  fs::create_directories(opts.out_dir);
  fs::path latest = fs::path(opts.out_dir) / "latest.ckpt";
  fs::path best_path = fs::path(opts.out_dir) / "best.ckpt";

  int start_epoch = 1;
  double best_val = std::numeric_limits<double>::infinity();
  num::ParamStore params;
  train::AdamState opt_state;
  std::int64_t global_step = 0;
  if (opts.resume && fs::exists(latest)) {
    io::LoadedCheckpoint ck = io::load_checkpoint(latest.string());
    if (io::encode_kv(io::model_config_to_kv(ck.meta.model_cfg)) !=
        io::encode_kv(io::model_config_to_kv(cfg)))
      throw ConfigError("resume: checkpoint model configuration differs");
    params = std::move(ck.params);
    opt_state = std::move(ck.opt);
    start_epoch = ck.meta.epoch + 1;
    global_step = ck.meta.global_step;
    auto it = ck.meta.extra.find("best_val");
    if (it != ck.meta.extra.end()) best_val = std::stod(it->second);
  } else {
    params = model::init_params(cfg, opts.train_cfg.seed);
    // The initial state also passes through the 32-bit checkpoint precision.
    io::quantize_to_f32(params);
  }

  train::Trainer trainer(cfg, opts.train_cfg, opts.weights, std::move(params));
  trainer.opt_state() = std::move(opt_state);
  trainer.set_global_step(global_step);

  std::ofstream log((fs::path(opts.out_dir) / "train.log").string(),
                    opts.resume ? std::ios::app : std::ios::trunc);
  trainer.on_step = [&log](std::int64_t step, int epoch, double lr,
                           const train::LossRecord& rec) {
    log << io::format_train_log_line(step, epoch, lr, rec.total, rec.dec, rec.post,
                                     rec.end)
        << '\n';
  };

  for (int epoch = start_epoch; epoch <= opts.train_cfg.epochs; ++epoch) {
    train::LossRecord tr = trainer.run_epoch(train_pairs.items, epoch);
    train::LossRecord val = trainer.evaluate(val_pairs.items);
    io::quantize_to_f32(trainer.params());
    io::quantize_to_f32(trainer.opt_state());
    if (val.total < best_val) best_val = val.total;
    io::CheckpointMeta meta =
        make_meta(opts, stats, mel_cfg, epoch, trainer.global_step(), best_val);
    io::save_checkpoint(latest.string(), meta, trainer.params(), trainer.opt_state());
    if (val.total <= best_val)
      io::save_checkpoint(best_path.string(), meta, trainer.params(), trainer.opt_state());
    if (opts.save_every > 0 && epoch % opts.save_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
      io::save_checkpoint((fs::path(opts.out_dir) / name).string(), meta,
                          trainer.params(), trainer.opt_state());
    }
    if (!opts.quiet) {
      std::fprintf(stderr, "epoch %3d  lr %.3e  train %.6f  val %.6f%s\n", epoch,
                   trainer.lr(), tr.total, val.total,
                   val.total <= best_val ? "  *" : "");
    }
    log.flush();
  }
  return best_val;
}

std::vector<ConvertOutcome> convert_corpus(const io::LoadedCheckpoint& ckpt,
                                           const std::string& data_root,
                                           const io::Manifest& manifest,
                                           const std::string& split,
                                           const std::string& out_dir,
                                           const ConvertOptions& opts) {
  const model::ModelConfig& cfg = ckpt.meta.model_cfg;
  NormStats stats = stats_from_meta(ckpt.meta);
  dsp::MelConfig mel_cfg = mel_from_meta(ckpt.meta);
  fs::create_directories(out_dir);

  double interp = opts.interp_ratio;
  if (interp < 0) interp = corpus_duration_ratio(manifest);

  // ParamStore is read during graph binding only; a local copy keeps this
  // function safe against callers mutating the checkpoint afterwards.
  num::ParamStore params;
  for (const auto& [name, entry] : ckpt.params) params.create(name, entry.value);

  std::vector<ConvertOutcome> outcomes;
  for (const auto& e : manifest.items) {
    if (e.split != split) continue;
    Tensor src_mel = io::read_feature_file((fs::path(data_root) / e.src_mel).string());
    Tensor src_aux = io::read_feature_file((fs::path(data_root) / e.src_aux).string());
    if (interp > 0) {
      src_mel = align::interpolate_source(src_mel, interp);
      src_aux = align::interpolate_source(src_aux, interp);
    }
    FeatureSequence input =
        model::assemble_input(cfg, normalize_mel(src_mel, stats.src_mean, stats.src_std),
                              src_aux);
    model::ConvertLimits limits;
    limits.max_steps = opts.max_steps;
    limits.stop_threshold = cfg.stop_threshold;
    model::ConvertResult res = model::convert(cfg, params, input, limits);

    FeatureSequence mel_out = denormalize_mel(res.mel, stats.tgt_mean, stats.tgt_std);
    io::write_feature_file((fs::path(out_dir) / (e.id + ".mel.fea")).string(), mel_out);
    if (opts.export_alignment) {
      io::write_feature_file((fs::path(out_dir) / (e.id + ".align.fea")).string(),
                             res.alignment);
      io::write_matrix_tsv((fs::path(out_dir) / (e.id + ".align.tsv")).string(),
                           res.alignment);
      Tensor pend({res.steps, 1});
      for (int i = 0; i < res.steps; ++i)
        pend.at(i, 0) = res.p_end_trace[static_cast<std::size_t>(i)];
      io::write_matrix_tsv((fs::path(out_dir) / (e.id + ".pend.tsv")).string(), pend);
    }
    if (opts.griffin_lim_iters > 0) {
      dsp::Waveform wav = dsp::griffin_lim(mel_out, mel_cfg, opts.griffin_lim_iters);
      io::write_wav((fs::path(out_dir) / (e.id + ".wav")).string(), wav);
    }
    ConvertOutcome oc;
    oc.id = e.id;
    oc.steps = res.steps;
    oc.step_cap_hit = res.step_cap_hit;
    oc.output_frames = mel_out.rows();
    outcomes.push_back(oc);
  }
  if (outcomes.empty()) throw DataError("no items converted for split '" + split + "'");
  return outcomes;
}

// --- command implementations -------------------------------------------------

namespace {

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 1;
  int n_train = 200, n_val = 20, n_test = 20;
  int n_mels = 16;
  int min_frames = 80, max_frames = 240;
  double warp_ratio = 0.8;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  synth::CorpusSpec spec;
  spec.n_train = a.n_train;
  spec.n_val = a.n_val;
  spec.n_test = a.n_test;
  spec.seed = a.seed;
  spec.gen = synth::GeneratorConfig::desk();
  spec.gen.mel.n_mels = a.n_mels;
  spec.gen.min_source_frames = a.min_frames;
  spec.gen.max_source_frames = a.max_frames;
  spec.gen.warp.global_ratio = a.warp_ratio;
  io::Manifest m = synth::build_corpus(a.out, spec, a.force);
  std::fprintf(stderr, "wrote %zu pairs under %s\n", m.items.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, out;
  std::string mode = "mse";  // mse | gmm:<m>
  std::vector<std::string> ablate;
  int epochs = 30;
  std::uint64_t seed = 1;
  int batch = 4;
  double lr = 1e-3;
  int lr_decay_after = 50;
  double l2 = 1e-6;
  double zoneout = 0.2;
  int encoder_units = 32, prenet_units = 32, attn_units = 32, decoder_units = 32;
  int attn_filters = 8, attn_kernel = 15, attn_v_dim = 32;
  int frames_per_step = 2;
  double w_dec = -1, w_post = -1, w_end = -1;  // <0: mode defaults
  bool resume = false;
  int save_every = 0;
  bool quiet = false;
};

model::ModelConfig model_config_from_args(const TrainArgs& a, const io::Manifest& manifest) {
  model::ModelConfig cfg = model::ModelConfig::desk();
  dsp::MelConfig mel_cfg = mel_config_from_manifest(manifest);
  cfg.d_mel = mel_cfg.n_mels;
  cfg.d_aux = manifest_alphabet(manifest);
  cfg.encoder_units = a.encoder_units;
  cfg.prenet_units = a.prenet_units;
  cfg.attn_units = a.attn_units;
  cfg.decoder_units = a.decoder_units;
  cfg.attn_filters = a.attn_filters;
  cfg.attn_kernel = a.attn_kernel;
  cfg.attn_v_dim = a.attn_v_dim;
  cfg.frames_per_step = a.frames_per_step;
  cfg.zoneout_p = a.zoneout;
  if (a.mode == "mse") {
    cfg.output_mode = model::OutputMode::kMse;
  } else if (a.mode.rfind("gmm", 0) == 0) {
    cfg.output_mode = model::OutputMode::kGmmMl;
    cfg.mixtures = 2;
    auto colon = a.mode.find(':');
    if (colon != std::string::npos) cfg.mixtures = std::stoi(a.mode.substr(colon + 1));
  } else {
    throw ConfigError("unknown --mode '" + a.mode + "' (use mse or gmm:<m>)");
  }
  for (const std::string& ab : a.ablate) {
    if (ab == "no-att") cfg.attention_mode = model::AttentionMode::kDiagonal;
    else if (ab == "no-locc") cfg.use_location_code = false;
    else if (ab == "no-aux") cfg.use_aux_input = false;
    else if (ab == "no-mel") cfg.use_mel_input = false;
    else throw ConfigError("unknown ablation '" + ab + "'");
  }
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  io::Manifest manifest = io::load_manifest((fs::path(a.data) / "manifest.tsv").string());
  TrainRunOptions opts;
  opts.data_dir = a.data;
  opts.out_dir = a.out;
  opts.model_cfg = model_config_from_args(a, manifest);
  opts.train_cfg.learning_rate = a.lr;
  opts.train_cfg.lr_decay_after_epoch = a.lr_decay_after;
  opts.train_cfg.l2 = a.l2;
  opts.train_cfg.batch_size = a.batch;
  opts.train_cfg.seed = a.seed;
  opts.train_cfg.epochs = a.epochs;
  opts.weights = train::LossWeights::defaults(opts.model_cfg.output_mode);
  if (a.w_dec >= 0) opts.weights.w_dec = a.w_dec;
  if (a.w_post >= 0) opts.weights.w_post = a.w_post;
  if (a.w_end >= 0) opts.weights.w_end = a.w_end;
  opts.resume = a.resume;
  opts.save_every = a.save_every;
  opts.quiet = a.quiet;
  double best = run_training(opts);
  std::fprintf(stderr, "best validation loss %.6f\n", best);
  return 0;
}

struct ConvertArgs {
  std::string checkpoint, data, split = "test", out;
  std::string interp;  // "", "auto", or a number
  int griffin_lim = 0;
  bool export_alignment = false;
  int max_steps = 0;
};

int cmd_convert(const ConvertArgs& a) {
  io::LoadedCheckpoint ckpt = io::load_checkpoint(a.checkpoint);
  io::Manifest manifest = io::load_manifest((fs::path(a.data) / "manifest.tsv").string());
  ConvertOptions opts;
  if (a.interp == "auto") opts.interp_ratio = -1;
  else if (!a.interp.empty()) opts.interp_ratio = std::stod(a.interp);
  opts.griffin_lim_iters = a.griffin_lim;
  opts.export_alignment = a.export_alignment;
  opts.max_steps = a.max_steps;
  auto outcomes = convert_corpus(ckpt, a.data, manifest, a.split, a.out, opts);
  int caps = 0;
  for (const auto& oc : outcomes) {
    if (oc.step_cap_hit) {
      ++caps;
      std::fprintf(stderr, "%s: step cap reached, partial output saved\n", oc.id.c_str());
    }
  }
  std::fprintf(stderr, "converted %zu items (%d step-cap hits)\n", outcomes.size(), caps);
  return caps > 0 ? static_cast<int>(ExitCode::kDecode) : 0;
}

struct ExportRefArgs {
  std::string data, split = "test", out;
};

int cmd_export_ref(const ExportRefArgs& a) {
  io::Manifest manifest = io::load_manifest((fs::path(a.data) / "manifest.tsv").string());
  fs::create_directories(a.out);
  int count = 0;
  for (const auto& e : manifest.items) {
    if (e.split != a.split) continue;
    Tensor mel = io::read_feature_file((fs::path(a.data) / e.tgt_mel).string());
    io::write_feature_file((fs::path(a.out) / (e.id + ".mel.fea")).string(), mel);
    fs::copy_file(fs::path(a.data) / e.tgt_wav, fs::path(a.out) / (e.id + ".wav"),
                  fs::copy_options::overwrite_existing);
    ++count;
  }
  if (count == 0) throw DataError("no items in split '" + a.split + "'");
  std::fprintf(stderr, "exported %d reference items\n", count);
  return 0;
}

struct EvalArgs {
  std::vector<std::string> converted;  // one or more systems to evaluate
  std::string data, split = "test", reference, report;
  int n_coeffs = 0;  // 0: min(25, n_mels)
  double hop_ms = 10.0;
};

struct EvalRow {
  std::string id;
  bool ok = false;
  std::string error;
  double mcd = 0, ddur = 0;
  double f0_rmse = -1;  // <0: not available
  int voiced = 0;
};

int cmd_eval(const EvalArgs& a) {
  struct RefItem {
    std::string id;
    Tensor mel;
    std::string wav_path;  // empty if absent
    double dur_s;
  };
  std::vector<RefItem> refs;
  dsp::MelConfig mel_cfg;
  double hop_s = a.hop_ms / 1000.0;

  if (!a.data.empty()) {
    io::Manifest manifest = io::load_manifest((fs::path(a.data) / "manifest.tsv").string());
    mel_cfg = mel_config_from_manifest(manifest);
    hop_s = mel_cfg.hop_ms / 1000.0;
    for (const auto& e : manifest.items) {
      if (e.split != a.split) continue;
      RefItem r;
      r.id = e.id;
      r.mel = io::read_feature_file((fs::path(a.data) / e.tgt_mel).string());
      r.wav_path = (fs::path(a.data) / e.tgt_wav).string();
      r.dur_s = e.tgt_dur_s;
      refs.push_back(std::move(r));
    }
  } else if (!a.reference.empty()) {
    mel_cfg.n_mels = 0;  // filled per item
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(a.reference)) {
      std::string name = entry.path().filename().string();
      auto pos = name.find(".mel.fea");
      if (pos != std::string::npos && pos + 8 == name.size())
        ids.push_back(name.substr(0, pos));
    }
    std::sort(ids.begin(), ids.end());
    for (const std::string& id : ids) {
      RefItem r;
      r.id = id;
      r.mel = io::read_feature_file((fs::path(a.reference) / (id + ".mel.fea")).string());
      std::string wav = (fs::path(a.reference) / (id + ".wav")).string();
      if (fs::exists(wav)) r.wav_path = wav;
      r.dur_s = r.mel.rows() * hop_s;
      refs.push_back(std::move(r));
    }
    mel_cfg.sample_rate = 16000;
  } else {
    throw ConfigError("eval: provide --data or --reference");
  }
  if (refs.empty()) throw DataError("eval: empty reference set");
  if (a.converted.empty()) throw ConfigError("eval: at least one --converted required");

  struct SystemResult {
    std::string label;
    std::vector<EvalRow> rows;
    double mean_mcd = 0, agg_ddur = 0, mean_f0 = 0;
    std::size_t n = 0, f0_n = 0;
    int errors = 0;
  };

  auto eval_dir = [&](const std::string& dir) {
    SystemResult sys;
    sys.label = fs::path(dir).filename().string();
    if (sys.label.empty()) sys.label = dir;
    std::vector<double> conv_durs, tgt_durs, mcds, f0s;
    for (const auto& r : refs) {
      EvalRow row;
      row.id = r.id;
      std::string conv_mel_path = (fs::path(dir) / (r.id + ".mel.fea")).string();
      if (!fs::exists(conv_mel_path)) {
        row.error = "missing converted features";
        ++sys.errors;
        sys.rows.push_back(row);
        continue;
      }
      Tensor conv = io::read_feature_file(conv_mel_path);
      if (conv.cols() != r.mel.cols()) {
        row.error = "mel dimension mismatch";
        ++sys.errors;
        sys.rows.push_back(row);
        continue;
      }
      int n_coeffs = a.n_coeffs > 0 ? a.n_coeffs : std::min(25, conv.cols());
      row.mcd = metrics::mcd_db(conv, r.mel, n_coeffs);
      row.ddur = std::fabs(conv.rows() * hop_s - r.dur_s);
      conv_durs.push_back(conv.rows() * hop_s);
      tgt_durs.push_back(r.dur_s);
      mcds.push_back(row.mcd);

      std::string conv_wav = (fs::path(dir) / (r.id + ".wav")).string();
      if (!r.wav_path.empty() && fs::exists(conv_wav)) {
        dsp::Waveform wc = io::read_wav(conv_wav);
        dsp::Waveform wr = io::read_wav(r.wav_path);
        dsp::MelConfig mc = mel_cfg.n_mels > 0 ? mel_cfg : dsp::MelConfig{};
        if (mc.n_mels <= 0 || mc.n_mels >= mc.n_bins()) mc.n_mels = 16;
        dsp::F0Config f0c;
        f0c.sample_rate = wc.sample_rate;
        try {
          auto fr = metrics::f0_rmse(wc, wr, mc, f0c, std::min(13, mc.n_mels));
          row.f0_rmse = fr.rmse_hz;
          row.voiced = fr.mutually_voiced;
          f0s.push_back(fr.rmse_hz);
        } catch (const DataError&) {
          row.f0_rmse = -1;  // no mutually voiced frames
        }
      }
      row.ok = true;
      sys.rows.push_back(row);
    }
    for (double v : mcds) sys.mean_mcd += v;
    if (!mcds.empty()) sys.mean_mcd /= static_cast<double>(mcds.size());
    for (double v : f0s) sys.mean_f0 += v;
    if (!f0s.empty()) sys.mean_f0 /= static_cast<double>(f0s.size());
    sys.agg_ddur = conv_durs.empty() ? 0.0 : metrics::ddur_s(conv_durs, tgt_durs);
    sys.n = mcds.size();
    sys.f0_n = f0s.size();
    return sys;
  };

  std::vector<SystemResult> systems;
  for (const std::string& dir : a.converted) systems.push_back(eval_dir(dir));

  std::string out;
  out += "#seqvc-metric-report\tv1\n";
  char buf[256];
  int errors = 0;
  for (const auto& sys : systems) {
    errors += sys.errors;
    if (systems.size() > 1) {
      std::snprintf(buf, sizeof(buf), "#system\t%s\n", sys.label.c_str());
      out += buf;
    }
    for (const auto& row : sys.rows) {
      if (!row.ok) {
        std::snprintf(buf, sizeof(buf), "utt\t%s\terror\t%s\n", row.id.c_str(),
                      row.error.c_str());
        out += buf;
        continue;
      }
      if (row.f0_rmse >= 0) {
        std::snprintf(buf, sizeof(buf),
                      "utt\t%s\tmcd_db\t%.6f\tddur_s\t%.6f\tf0_rmse_hz\t%.6f\tvoiced\t%d\n",
                      row.id.c_str(), row.mcd, row.ddur, row.f0_rmse, row.voiced);
      } else {
        std::snprintf(buf, sizeof(buf), "utt\t%s\tmcd_db\t%.6f\tddur_s\t%.6f\n",
                      row.id.c_str(), row.mcd, row.ddur);
      }
      out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "aggregate\t%s\tn\t%zu\terrors\t%d\tmcd_db\t%.6f\tddur_s\t%.6f",
                  sys.label.c_str(), sys.n, sys.errors, sys.mean_mcd, sys.agg_ddur);
    out += buf;
    if (sys.f0_n > 0) {
      std::snprintf(buf, sizeof(buf), "\tf0_rmse_hz\t%.6f\tf0_n\t%zu", sys.mean_f0,
                    sys.f0_n);
      out += buf;
    }
    out += "\n";
  }
  if (systems.size() > 1) {
    // side-by-side duration block, one line per system
    for (const auto& sys : systems) {
      std::snprintf(buf, sizeof(buf), "compare\t%s\tddur_s\t%.6f\tmcd_db\t%.6f\n",
                    sys.label.c_str(), sys.agg_ddur, sys.mean_mcd);
      out += buf;
    }
  }

  if (!a.report.empty()) {
    std::ofstream f(a.report, std::ios::trunc);
    if (!f) throw DataError("cannot write report: " + a.report);
    f << out;
  } else {
    std::fputs(out.c_str(), stdout);
  }
  return errors > 0 ? static_cast<int>(ExitCode::kData) : 0;
}

struct PlotArgs {
  std::string alignment, out, dtw_path, overlay;
  int r = 2, downsample = 4;
};

int cmd_plot(const PlotArgs& a) {
  Tensor align_mat = io::read_feature_file(a.alignment);  // [steps x T_h]
  const int steps = align_mat.rows();
  const int t_h = align_mat.cols();
  // Image rows = encoder states, columns = decoder steps.
  Tensor img({t_h, steps});
  for (int i = 0; i < steps; ++i)
    for (int n = 0; n < t_h; ++n) img.at(n, i) = align_mat.at(i, n);
  io::write_pgm(a.out, img);
  if (!a.dtw_path.empty()) {
    auto pairs = io::read_path_tsv(a.dtw_path);
    if (pairs.empty()) throw DataError("empty path file");
    int t_y = 0;
    for (const auto& [si, tj] : pairs) t_y = std::max(t_y, tj + 1);
    std::vector<int> src_per_tgt(static_cast<std::size_t>(t_y), 0);
    for (const auto& [si, tj] : pairs) src_per_tgt[static_cast<std::size_t>(tj)] = si;
    auto cols = metrics::downsample_reference_path(src_per_tgt, steps, a.r,
                                                   a.downsample, t_h);
    std::vector<std::pair<int, int>> overlay;
    for (int t = 0; t < steps; ++t) overlay.emplace_back(t, cols[static_cast<std::size_t>(t)]);
    io::write_path_tsv(a.overlay.empty() ? a.out + ".overlay.tsv" : a.overlay, overlay);
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"sequence-to-sequence voice conversion workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "read options from an INI config file");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate a synthetic paired corpus");
  c_gen->fallthrough();
  c_gen->add_option("--out", gen.out, "output corpus directory")->required();
  c_gen->add_option("--seed", gen.seed, "corpus seed")->capture_default_str();
  c_gen->add_option("--n-train", gen.n_train)->capture_default_str();
  c_gen->add_option("--n-val", gen.n_val)->capture_default_str();
  c_gen->add_option("--n-test", gen.n_test)->capture_default_str();
  c_gen->add_option("--n-mels", gen.n_mels)->capture_default_str();
  c_gen->add_option("--min-frames", gen.min_frames)->capture_default_str();
  c_gen->add_option("--max-frames", gen.max_frames)->capture_default_str();
  c_gen->add_option("--warp-ratio", gen.warp_ratio)->capture_default_str();
  c_gen->add_flag("--force", gen.force, "overwrite an existing corpus");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a conversion model");
  c_train->fallthrough();
  c_train->add_option("--data", tr.data, "corpus directory")->required();
  c_train->add_option("--out", tr.out, "run directory for checkpoints/logs")->required();
  c_train->add_option("--mode", tr.mode, "decoder loss: mse or gmm:<mixtures>")
      ->capture_default_str();
  c_train->add_option("--ablate", tr.ablate,
                      "ablations: no-att, no-locc, no-aux, no-mel (repeatable)");
  c_train->add_option("--epochs", tr.epochs)->capture_default_str();
  c_train->add_option("--seed", tr.seed)->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--lr-decay-after", tr.lr_decay_after)->capture_default_str();
  c_train->add_option("--l2", tr.l2)->capture_default_str();
  c_train->add_option("--zoneout", tr.zoneout)->capture_default_str();
  c_train->add_option("--encoder-units", tr.encoder_units)->capture_default_str();
  c_train->add_option("--prenet-units", tr.prenet_units)->capture_default_str();
  c_train->add_option("--attn-units", tr.attn_units)->capture_default_str();
  c_train->add_option("--decoder-units", tr.decoder_units)->capture_default_str();
  c_train->add_option("--attn-filters", tr.attn_filters)->capture_default_str();
  c_train->add_option("--attn-kernel", tr.attn_kernel)->capture_default_str();
  c_train->add_option("--attn-v-dim", tr.attn_v_dim)->capture_default_str();
  c_train->add_option("--frames-per-step", tr.frames_per_step)->capture_default_str();
  c_train->add_option("--w-dec", tr.w_dec, "decoder loss weight (default per mode)");
  c_train->add_option("--w-post", tr.w_post, "postnet loss weight");
  c_train->add_option("--w-end", tr.w_end, "completion loss weight");
  c_train->add_flag("--resume", tr.resume, "resume from latest checkpoint");
  c_train->add_option("--save-every", tr.save_every,
                      "write numbered checkpoints every k epochs");
  c_train->add_flag("--quiet", tr.quiet);

  ConvertArgs cv;
  auto* c_conv = app.add_subcommand("convert", "convert a corpus split");
  c_conv->fallthrough();
  c_conv->add_option("--checkpoint", cv.checkpoint)->required();
  c_conv->add_option("--data", cv.data, "corpus directory")->required();
  c_conv->add_option("--split", cv.split)->capture_default_str();
  c_conv->add_option("--out", cv.out, "output directory")->required();
  c_conv->add_option("--interp", cv.interp,
                     "interpolate source first: 'auto' or a ratio");
  c_conv->add_option("--griffin-lim", cv.griffin_lim,
                     "reconstruct audio with this many iterations");
  c_conv->add_flag("--export-alignment", cv.export_alignment);
  c_conv->add_option("--max-steps", cv.max_steps, "decoder step cap override");

  ExportRefArgs xr;
  auto* c_xref = app.add_subcommand("export-ref",
                                    "export target references for dir-vs-dir eval");
  c_xref->fallthrough();
  c_xref->add_option("--data", xr.data)->required();
  c_xref->add_option("--split", xr.split)->capture_default_str();
  c_xref->add_option("--out", xr.out)->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "objective metrics for converted features");
  c_eval->fallthrough();
  c_eval->add_option("--converted", ev.converted)->required();
  c_eval->add_option("--data", ev.data, "corpus directory (reference side)");
  c_eval->add_option("--split", ev.split)->capture_default_str();
  c_eval->add_option("--reference", ev.reference, "reference directory (alternative)");
  c_eval->add_option("--report", ev.report, "write the report here (default stdout)");
  c_eval->add_option("--n-coeffs", ev.n_coeffs, "cepstral order for MCD");
  c_eval->add_option("--hop-ms", ev.hop_ms, "frame hop for durations (dir mode)")
      ->capture_default_str();

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot", "alignment heatmap and DTW overlay export");
  c_plot->fallthrough();
  c_plot->add_option("--alignment", pl.alignment, "alignment feature file")->required();
  c_plot->add_option("--out", pl.out, "output PGM image")->required();
  c_plot->add_option("--dtw-path", pl.dtw_path, "frame-level path file for overlay");
  c_plot->add_option("--overlay", pl.overlay, "overlay output path");
  c_plot->add_option("--r", pl.r, "frames per decoder step")->capture_default_str();
  c_plot->add_option("--downsample", pl.downsample, "encoder downsampling M")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_conv->parsed()) return cmd_convert(cv);
    if (c_xref->parsed()) return cmd_export_ref(xr);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_plot->parsed()) return cmd_plot(pl);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace seqvc::cli
