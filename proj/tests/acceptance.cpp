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

// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line with
// its measured runtime; the process exits nonzero if any criterion fails.
//
//   1  gradient checks for every op and the composed graphs   (< 2 min)
//   2  forward-attention unit suite                           (< 30 s)
//   3  mixture-density reduction to the squared error         (< 30 s)
//   4  DTW optimality against exhaustive enumeration          (< 30 s)
//   5  desk-scale training reproduction                       (< 30 min)
//   6  ablation direction checks over three seeds             (majority vote)
//   7  DSP suite                                              (< 1 min)
//   8  byte-identical pipeline determinism via the CLI

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "seqvc/align.hpp"
#include "seqvc/autodiff.hpp"
#include "seqvc/cli.hpp"
#include "seqvc/dsp.hpp"
#include "seqvc/error.hpp"
#include "seqvc/io.hpp"
#include "seqvc/metrics.hpp"
#include "seqvc/model.hpp"
#include "seqvc/rng.hpp"
#include "seqvc/synth.hpp"
#include "seqvc/train.hpp"

using namespace seqvc;
using num::ParamBinder;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

fs::path g_work;

model::ModelConfig tiny_cfg(model::OutputMode mode) {
  model::ModelConfig c;
  c.d_mel = 4;
  c.d_aux = 2;
  c.encoder_units = 5;
  c.prenet_units = 5;
  c.attn_units = 5;
  c.attn_filters = 2;
  c.attn_kernel = 3;
  c.attn_v_dim = 5;
  c.decoder_units = 6;
  c.frames_per_step = 2;
  c.mixtures = 2;
  c.output_mode = mode;
  c.postnet_bank_kernels = 3;
  c.postnet_bank_channels = 3;
  c.postnet_channels = 4;
  return c;
}

// ---------------------------------------------------------------- criterion 1

Check criterion_gradients() {
  Check c;
  const double tol = 1e-4;
  const double step = 1e-5;

  auto fd_ok = [&](const char* what, ParamStore& p, const num::GraphFn& g) {
    num::FdReport rep = num::finite_difference_check(p, g, step);
    c.expect(rep.worst < tol,
             std::string(what) + ": worst rel err " + std::to_string(rep.worst) +
                 " at " + rep.worst_param);
  };

  // every supported op in isolation
  {
    Rng rng(123);
    ParamStore p;
    p.create("a", num::random_uniform({3, 4}, 0.2, 1.2, rng));
    p.create("b", num::random_uniform({3, 4}, 0.3, 1.3, rng));
    p.create("m1", num::random_uniform({3, 5}, -1, 1, rng));
    p.create("m2", num::random_uniform({5, 2}, -1, 1, rng));
    p.create("w", num::random_uniform({4, 4}, -1, 1, rng));
    p.create("bias", num::random_uniform({4}, -1, 1, rng));
    p.create("alpha", Tensor({1, 1}, {0.3}));
    p.create("cw", num::random_uniform({2, 4, 3}, -1, 1, rng));
    p.create("cb", num::random_uniform({2}, -0.5, 0.5, rng));
    p.create("scalar", Tensor({1, 1}, {0.7}));
    auto loss = [](Var v) { return num::sum_all(num::mul(v, v)); };
    using P = ParamBinder;
    std::vector<std::pair<const char*, num::GraphFn>> ops = {
        {"add", [&](Tape&, P& q) { return loss(num::add(q("a"), q("b"))); }},
        {"sub", [&](Tape&, P& q) { return loss(num::sub(q("a"), q("b"))); }},
        {"mul", [&](Tape&, P& q) { return loss(num::mul(q("a"), q("b"))); }},
        {"div", [&](Tape&, P& q) { return loss(num::divide(q("a"), q("b"))); }},
        {"scale/neg/add_scalar",
         [&](Tape&, P& q) { return loss(num::add_scalar(num::scale(num::neg(q("a")), 1.7), 0.3)); }},
        {"sigmoid", [&](Tape&, P& q) { return loss(num::sigmoid(q("a"))); }},
        {"tanh", [&](Tape&, P& q) { return loss(num::tanh_op(q("a"))); }},
        {"relu", [&](Tape&, P& q) { return loss(num::relu(q("a"))); }},
        {"prelu", [&](Tape&, P& q) { return loss(num::prelu(q("a"), q("alpha"))); }},
        {"exp", [&](Tape&, P& q) { return loss(num::exp_op(q("a"))); }},
        {"log", [&](Tape&, P& q) { return loss(num::log_op(q("a"))); }},
        {"softplus", [&](Tape&, P& q) { return loss(num::softplus(q("a"))); }},
        {"matmul", [&](Tape&, P& q) { return loss(num::matmul(q("m1"), q("m2"))); }},
        {"matmul_nt", [&](Tape&, P& q) { return loss(num::matmul_nt(q("a"), q("b"))); }},
        {"linear", [&](Tape&, P& q) { return loss(num::linear(q("a"), q("w"), q("bias"))); }},
        {"conv1d", [&](Tape&, P& q) { return loss(num::conv1d_same(q("a"), q("cw"), q("cb"))); }},
        {"softmax", [&](Tape&, P& q) { return loss(num::softmax_rows(q("a"))); }},
        {"logsumexp", [&](Tape&, P& q) { return loss(num::logsumexp_rows(q("a"))); }},
        {"concat/slice",
         [&](Tape&, P& q) {
           Var cc = num::concat_cols({q("a"), q("b")});
           Var rr = num::concat_rows({num::slice_cols(cc, 1, 3), num::slice_cols(cc, 4, 3)});
           return loss(num::slice_rows(rr, 1, 4));
         }},
        {"reshape", [&](Tape&, P& q) { return loss(num::reshape(q("a"), {4, 3})); }},
        {"layer_norm",
         [&](Tape&, P& q) { return loss(num::layer_norm(q("a"), q("bias"), q("bias"))); }},
        {"mask_scale",
         [&](Tape&, P& q) {
           Tensor mask({3, 4});
           for (int i = 0; i < 12; ++i) mask.at(i) = i % 3 == 0 ? 0.0 : 1.0;
           return loss(num::mask_scale(q("a"), mask, 2.0));
         }},
        {"mask_blend",
         [&](Tape&, P& q) {
           Tensor mask({3, 4});
           for (int i = 0; i < 12; ++i) mask.at(i) = i % 2 == 0 ? 0.0 : 1.0;
           return loss(num::mask_blend(q("a"), q("b"), mask));
         }},
        {"mul_scalar_node",
         [&](Tape&, P& q) { return loss(num::mul_scalar_node(q("a"), q("scalar"))); }},
        {"sum/mean",
         [&](Tape&, P& q) { return num::add(num::sum_all(num::mul(q("a"), q("a"))), num::mean_all(q("b"))); }},
    };
    p.create("lstm.x", num::random_uniform({1, 3}, -1, 1, rng));
    p.create("lstm.h", num::random_uniform({1, 4}, -1, 1, rng));
    p.create("lstm.c", num::random_uniform({1, 4}, -1, 1, rng));
    p.create("lstm.W", num::random_uniform({16, 7}, -1, 1, rng));
    p.create("lstm.b", num::random_uniform({16}, -0.5, 0.5, rng));
    p.create("lstm.g", num::random_uniform({16}, 0.5, 1.5, rng));
    ops.emplace_back("lstm_cell_plain", [&](Tape&, P& q) {
      num::LstmOut out = num::lstm_cell_plain(q("lstm.x"), q("lstm.h"), q("lstm.c"),
                                              q("lstm.W"), q("lstm.b"));
      return num::add(loss(out.h), loss(out.c));
    });
    ops.emplace_back("lstm_cell_ln", [&](Tape&, P& q) {
      num::LstmOut out = num::lstm_cell_ln(q("lstm.x"), q("lstm.h"), q("lstm.c"),
                                           q("lstm.W"), q("lstm.g"), q("lstm.b"));
      return num::add(loss(out.h), loss(out.c));
    });
    for (auto& [name, g] : ops) fd_ok(name, p, g);
  }

  // composed decoder-step graph, both output heads
  for (model::OutputMode mode : {model::OutputMode::kMse, model::OutputMode::kGmmMl}) {
    model::ModelConfig cfg = tiny_cfg(mode);
    ParamStore params = model::init_params(cfg, 21);
    Rng rng(22);
    params.create("test.h", num::random_uniform({3, cfg.encoder_out_dim()}, -0.5, 0.5, rng));
    Tensor prev = num::random_uniform({1, cfg.d_mel}, -0.5, 0.5, rng);
    Tensor y_block = num::random_uniform({1, cfg.frame_block()}, -0.5, 0.5, rng);
    num::GraphFn g = [&](Tape& t, ParamBinder& q) -> Var {
      model::NetGraph net(t, q, cfg, nullptr);
      net.reset_decoder(3);
      auto s = net.decode_step(q("test.h"), t.constant(prev));
      Var l = num::sum_all(num::mul(s.feedback, s.feedback));
      l = num::add(l, num::sum_all(num::mul(s.alignment, s.alignment)));
      l = num::add(l, s.p_end);
      if (mode == model::OutputMode::kGmmMl)
        l = num::add(l, model::gmm_nll_g(s.gmm_o, y_block, cfg.mixtures, cfg.frame_block()));
      return l;
    };
    fd_ok(mode == model::OutputMode::kMse ? "decoder step (MSE)" : "decoder step (GMM)",
          params, g);
  }

  // PostNet graph
  {
    model::ModelConfig cfg = tiny_cfg(model::OutputMode::kMse);
    ParamStore params = model::init_params(cfg, 31);
    Rng rng(32);
    Tensor y = num::random_uniform({6, cfg.d_mel}, -0.5, 0.5, rng);
    num::GraphFn g = [&](Tape& t, ParamBinder& q) -> Var {
      model::NetGraph net(t, q, cfg, nullptr);
      Var z = net.postnet(t.constant(y));
      return num::sum_all(num::mul(z, z));
    };
    fd_ok("postnet", params, g);
  }

  // full teacher-forced pair graphs (encoder + decoder + postnet + losses)
  for (model::OutputMode mode : {model::OutputMode::kMse, model::OutputMode::kGmmMl}) {
    model::ModelConfig cfg = tiny_cfg(mode);
    ParamStore params = model::init_params(cfg, 41);
    Rng rng(42);
    train::PairExample pair;
    pair.source_input = num::random_uniform({8, cfg.input_dim()}, -0.5, 0.5, rng);
    pair.target_mel = num::random_uniform({6, cfg.d_mel}, -0.5, 0.5, rng);
    num::GraphFn g = [&](Tape& t, ParamBinder& q) -> Var {
      train::PairLossParts parts = train::build_pair_loss(t, q, cfg, pair, nullptr, 0);
      Var l = num::scale(parts.dec_sum, 1.0 / parts.dec_count);
      l = num::add(l, num::scale(parts.post_sum, 1.0 / parts.post_count));
      l = num::add(l, num::scale(parts.end_sum, 0.005 / parts.end_count));
      return l;
    };
    fd_ok(mode == model::OutputMode::kMse ? "pair loss (MSE)" : "pair loss (GMM)", params, g);
  }
  return c;
}

// ---------------------------------------------------------------- criterion 2

Check criterion_forward_attention() {
  Check c;
  // Eq.-14-style initialization is exact
  Tensor a0 = model::initial_alignment(5);
  c.expect(a0.at(0, 0) == 1.0, "init: first entry must be exactly 1");
  for (int n = 1; n < 5; ++n)
    c.expect(a0.at(0, n) == 0.0, "init: tail entries must be exactly 0");

  // hand-derived case to 1e-12
  Tensor e({1, 3});
  Tensor a1 = model::forward_attention_value(e, model::initial_alignment(3));
  c.expect(std::fabs(a1.at(0, 0) - 0.5) < 1e-12, "hand case entry 0");
  c.expect(std::fabs(a1.at(0, 1) - 0.5) < 1e-12, "hand case entry 1");
  c.expect(std::fabs(a1.at(0, 2)) < 1e-12, "hand case entry 2");

  // 10k random steps: row-stochastic to 1e-6 and one-state support advance
  Rng rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    int t_h = rng.uniform_int(2, 12);
    int support_end = rng.uniform_int(0, t_h - 1);
    Tensor alpha({1, t_h});
    double total = 0;
    for (int n = 0; n <= support_end; ++n) {
      alpha.at(0, n) = rng.uniform(0.01, 1.0);
      total += alpha.at(0, n);
    }
    for (int n = 0; n <= support_end; ++n) alpha.at(0, n) /= total;
    Tensor scores({1, t_h});
    for (int n = 0; n < t_h; ++n) scores.at(0, n) = rng.uniform(-4, 4);
    Tensor next = model::forward_attention_value(scores, alpha);
    double sum = 0;
    for (int n = 0; n < t_h; ++n) {
      sum += next.at(0, n);
      if (n > support_end + 1)
        c.expect(next.at(0, n) == 0.0, "support advanced by more than one state");
    }
    c.expect(std::fabs(sum - 1.0) < 1e-6, "row sum deviates by more than 1e-6");
    if (!c.ok) break;
  }
  return c;
}

// ---------------------------------------------------------------- criterion 3

Check criterion_mdn_reduction() {
  Check c;
  const double o_sigma_unit = std::log(std::exp(1.0) - 1.0);
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int fb = 4 + 2 * (trial % 4);
    Tensor mu = num::random_uniform({1, fb}, -2, 2, rng);
    Tensor y = num::random_uniform({1, fb}, -2, 2, rng);
    Tensor o({1, 2 * fb + 1});
    o.at(0, 0) = rng.uniform(-1, 1);
    for (int j = 0; j < fb; ++j) {
      o.at(0, 1 + j) = o_sigma_unit;
      o.at(0, 1 + fb + j) = mu.at(0, j);
    }
    Tape tape;
    double nll = model::gmm_nll_g(tape.constant(o), y, 1, fb).value().at(0);
    double sse = 0;
    for (int j = 0; j < fb; ++j) {
      double d = y.at(0, j) - mu.at(0, j);
      sse += d * d;
    }
    double norm_const = 0.5 * fb * std::log(2.0 * 3.14159265358979323846);
    c.expect(std::fabs((nll - norm_const) - 0.5 * sse) < 1e-10,
             "NLL minus constant does not equal half squared error");

    ParamStore pa, pb;
    pa.create("theta", mu);
    pb.create("theta", mu);
    num::forward_backward(pa, [&](Tape& t, ParamBinder& q) -> Var {
      Tensor head({1, 1 + fb});
      head.at(0, 0) = o.at(0, 0);
      for (int j = 0; j < fb; ++j) head.at(0, 1 + j) = o_sigma_unit;
      Var ov = num::concat_cols({t.constant(head), q("theta")});
      return model::gmm_nll_g(ov, y, 1, fb);
    });
    num::forward_backward(pb, [&](Tape& t, ParamBinder& q) -> Var {
      Var diff = num::sub(t.constant(y), q("theta"));
      return num::scale(num::sum_all(num::mul(diff, diff)), 0.5);
    });
    for (std::int64_t i = 0; i < fb; ++i)
      c.expect(std::fabs(pa.grad("theta").at(i) - pb.grad("theta").at(i)) < 1e-9,
               "gradient mismatch between NLL and squared-error paths");
  }
  return c;
}

// ---------------------------------------------------------------- criterion 4

namespace dtw_oracle {
double frame_dist(const num::FeatureSequence& a, int i, const num::FeatureSequence& b, int j) {
  double acc = 0;
  for (int c2 = 0; c2 < a.cols(); ++c2) {
    double d = a.at(i, c2) - b.at(j, c2);
    acc += d * d;
  }
  return std::sqrt(acc);
}
double brute(const num::FeatureSequence& a, const num::FeatureSequence& b, int i, int j) {
  double here = frame_dist(a, i, b, j);
  if (i == 0 && j == 0) return here;
  double best = std::numeric_limits<double>::infinity();
  if (i > 0 && j > 0) best = std::min(best, brute(a, b, i - 1, j - 1));
  if (j > 0) best = std::min(best, brute(a, b, i, j - 1));
  if (i > 0) best = std::min(best, brute(a, b, i - 1, j));
  return here + best;
}
}  // namespace dtw_oracle

Check criterion_dtw() {
  Check c;
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    int ta = rng.uniform_int(1, 6);
    int tb = rng.uniform_int(1, 6);
    num::FeatureSequence a = num::random_uniform({ta, 2}, -1, 1, rng);
    num::FeatureSequence b = num::random_uniform({tb, 2}, -1, 1, rng);
    align::DtwPath p = align::dtw(a, b);
    double oracle = dtw_oracle::brute(a, b, ta - 1, tb - 1);
    c.expect(std::fabs(p.total_cost - oracle) < 1e-12 * (1.0 + std::fabs(oracle)),
             "dtw cost differs from exhaustive enumeration");
  }
  return c;
}

// ---------------------------------------------------------------- criterion 5

struct TrainedRun {
  fs::path dir;
  double first_val = 0;
  double best_val = 0;
};

TrainedRun train_variant(const fs::path& data, const fs::path& out,
                         model::OutputMode mode, int mixtures,
                         model::AttentionMode attention, bool use_aux,
                         bool use_locc, int epochs, std::uint64_t seed) {
  io::Manifest manifest = io::load_manifest((data / "manifest.tsv").string());
  cli::TrainRunOptions opts;
  opts.data_dir = data.string();
  opts.out_dir = out.string();
  opts.model_cfg = model::ModelConfig::desk();
  opts.model_cfg.output_mode = mode;
  opts.model_cfg.mixtures = mixtures;
  opts.model_cfg.attention_mode = attention;
  opts.model_cfg.use_aux_input = use_aux;
  opts.model_cfg.use_location_code = use_locc;
  opts.train_cfg.seed = seed;
  opts.train_cfg.epochs = epochs;
  opts.weights = train::LossWeights::defaults(mode);
  opts.quiet = true;
  TrainedRun run;
  run.dir = out;
  run.best_val = cli::run_training(opts);
  // first-epoch validation loss from the log is not recorded; recompute a
  // proxy from the training log instead: first logged step loss.
  std::ifstream log((out / "train.log").string());
  std::string line;
  if (std::getline(log, line)) {
    std::istringstream ls(line);
    std::string tok;
    for (int i = 0; i < 4 && ls >> tok; ++i) run.first_val = std::stod(tok);
  }
  return run;
}

struct EvalStats {
  double mcd = 0;
  double ddur = 0;
  double mean_dev = 0;
  int violations = 0;
  int cap_hits = 0;
};

EvalStats evaluate_conversions(const fs::path& data, const fs::path& conv_dir,
                               const std::vector<cli::ConvertOutcome>& outcomes,
                               bool with_alignment) {
  io::Manifest manifest = io::load_manifest((data / "manifest.tsv").string());
  EvalStats s;
  int n = 0;
  double dev_acc = 0;
  std::vector<double> conv_dur, tgt_dur, mcds;
  for (const auto& e : manifest.items) {
    if (e.split != "test") continue;
    Tensor conv = io::read_feature_file((conv_dir / (e.id + ".mel.fea")).string());
    Tensor ref = io::read_feature_file((data / e.tgt_mel).string());
    mcds.push_back(metrics::mcd_db(conv, ref, std::min(13, conv.cols())));
    conv_dur.push_back(conv.rows() * 0.01);
    tgt_dur.push_back(e.tgt_frames * 0.01);
    if (with_alignment) {
      Tensor alignment = io::read_feature_file((conv_dir / (e.id + ".align.fea")).string());
      auto pairs = io::read_path_tsv((data / e.gt_path).string());
      std::vector<int> src_per_tgt(static_cast<std::size_t>(e.tgt_frames), 0);
      for (const auto& [si, tj] : pairs)
        if (tj >= 0 && tj < e.tgt_frames) src_per_tgt[static_cast<std::size_t>(tj)] = si;
      auto ref_cols = metrics::downsample_reference_path(
          src_per_tgt, alignment.rows(), 2, 4, alignment.cols());
      auto d = metrics::alignment_diagnostics(alignment, ref_cols, 3);
      dev_acc += d.mean_path_deviation;
      s.violations += d.monotonicity_violations;
    }
    ++n;
  }
  for (const auto& oc : outcomes) s.cap_hits += oc.step_cap_hit ? 1 : 0;
  double mcd_acc = 0;
  for (double m : mcds) mcd_acc += m;
  s.mcd = mcd_acc / n;
  s.ddur = metrics::ddur_s(conv_dur, tgt_dur);
  s.mean_dev = with_alignment ? dev_acc / n : 0.0;
  return s;
}

Check criterion_training_reproduction() {
  Check c;
  fs::path data = g_work / "corpus";
  synth::CorpusSpec spec;
  spec.seed = 1;
  spec.gen = synth::GeneratorConfig::desk();
  synth::build_corpus(data.string(), spec, true);
  io::Manifest manifest = io::load_manifest((data / "manifest.tsv").string());

  const int epochs = 110;
  TrainedRun mse = train_variant(data, g_work / "run-mse", model::OutputMode::kMse, 2,
                                 model::AttentionMode::kLearned, true, true, epochs, 1);
  TrainedRun gmm = train_variant(data, g_work / "run-gmm2", model::OutputMode::kGmmMl, 2,
                                 model::AttentionMode::kLearned, true, true, epochs, 1);
  TrainedRun woatt = train_variant(data, g_work / "run-woatt", model::OutputMode::kMse, 2,
                                   model::AttentionMode::kDiagonal, true, true, epochs, 1);

  // convergence: the best validation loss sits well below the first step loss
  c.expect(mse.best_val < 0.4 * mse.first_val, "MSE training did not converge");
  c.expect(gmm.best_val < 0.4 * gmm.first_val || gmm.best_val < mse.best_val * 4,
           "GMM-ML training did not converge");

  cli::ConvertOptions copts;
  copts.export_alignment = true;

  auto convert_with = [&](const fs::path& run, const fs::path& out,
                          const cli::ConvertOptions& o) {
    io::LoadedCheckpoint ck = io::load_checkpoint((run / "best.ckpt").string());
    return cli::convert_corpus(ck, data.string(), manifest, "test", out.string(), o);
  };

  auto conv_mse = convert_with(mse.dir, g_work / "conv-mse", copts);
  auto conv_gmm = convert_with(gmm.dir, g_work / "conv-gmm2", copts);
  EvalStats s_mse = evaluate_conversions(data, g_work / "conv-mse", conv_mse, true);
  EvalStats s_gmm = evaluate_conversions(data, g_work / "conv-gmm2", conv_gmm, true);

  // (a) mean alignment deviation from the ground-truth warp <= 2 states
  c.expect(s_mse.mean_dev <= 2.0, "MSE alignment deviation " + std::to_string(s_mse.mean_dev));
  c.expect(s_gmm.mean_dev <= 2.0, "GMM alignment deviation " + std::to_string(s_gmm.mean_dev));
  // (b) zero monotonicity violations
  c.expect(s_mse.violations == 0, "MSE monotonicity violations " + std::to_string(s_mse.violations));
  c.expect(s_gmm.violations == 0, "GMM monotonicity violations " + std::to_string(s_gmm.violations));

  // baselines from the frame-by-frame variant (the paper's "Proposed" is the
  // 2-mixture model, so the orderings are checked against it)
  cli::ConvertOptions plain;
  auto conv_base = convert_with(woatt.dir, g_work / "conv-base", plain);
  cli::ConvertOptions interp;
  interp.interp_ratio = -1;  // train-split duration ratio
  auto conv_ibase = convert_with(woatt.dir, g_work / "conv-ibase", interp);
  EvalStats s_base = evaluate_conversions(data, g_work / "conv-base", conv_base, false);
  EvalStats s_ibase = evaluate_conversions(data, g_work / "conv-ibase", conv_ibase, false);

  // (c) DDUR ordering: proposed < interpolated baseline < unmodified baseline
  c.expect(s_gmm.ddur < s_ibase.ddur,
           "DDUR(proposed)=" + std::to_string(s_gmm.ddur) +
               " !< DDUR(i-baseline)=" + std::to_string(s_ibase.ddur));
  c.expect(s_ibase.ddur < s_base.ddur,
           "DDUR(i-baseline)=" + std::to_string(s_ibase.ddur) +
               " !< DDUR(baseline)=" + std::to_string(s_base.ddur));
  // (d) MCD ordering: attention model beats the frame-by-frame ablation
  c.expect(s_gmm.mcd < s_base.mcd, "MCD(proposed)=" + std::to_string(s_gmm.mcd) +
                                       " !< MCD(w/o-att)=" + std::to_string(s_base.mcd));

  std::ostringstream os;
  os.precision(4);
  os << "mse{dev " << s_mse.mean_dev << ", mcd " << s_mse.mcd << ", ddur " << s_mse.ddur
     << "} gmm2{dev " << s_gmm.mean_dev << ", mcd " << s_gmm.mcd << ", ddur "
     << s_gmm.ddur << "} w/o-att{mcd " << s_base.mcd << ", ddur " << s_base.ddur
     << "} i-w/o-att{ddur " << s_ibase.ddur << "}";
  if (c.ok) c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------- criterion 6

Check criterion_ablation_directions() {
  Check c;
  fs::path data = g_work / "corpus-small";
  synth::CorpusSpec spec;
  spec.n_train = 60;
  spec.n_val = 8;
  spec.n_test = 10;
  spec.seed = 11;
  spec.gen = synth::GeneratorConfig::desk();
  spec.gen.min_source_frames = 60;
  spec.gen.max_source_frames = 160;
  synth::build_corpus(data.string(), spec, true);
  io::Manifest manifest = io::load_manifest((data / "manifest.tsv").string());

  const int epochs = 40;
  int aux_votes = 0, locc_votes = 0;
  std::ostringstream os;
  os.precision(4);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    auto run_one = [&](const char* tag, bool use_aux, bool use_locc) {
      fs::path out = g_work / ("abl-" + std::to_string(seed) + "-" + tag);
      TrainedRun run = train_variant(data, out, model::OutputMode::kMse, 2,
                                     model::AttentionMode::kLearned, use_aux,
                                     use_locc, epochs, seed);
      io::LoadedCheckpoint ck = io::load_checkpoint((run.dir / "best.ckpt").string());
      fs::path conv = g_work / ("abl-conv-" + std::to_string(seed) + "-" + tag);
      auto outcomes = cli::convert_corpus(ck, data.string(), manifest, "test",
                                          conv.string(), cli::ConvertOptions{});
      return evaluate_conversions(data, conv, outcomes, false);
    };
    EvalStats full = run_one("full", true, true);
    EvalStats woaux = run_one("woaux", false, true);
    EvalStats wolocc = run_one("wolocc", true, false);
    if (full.mcd < woaux.mcd) ++aux_votes;
    if (full.ddur < wolocc.ddur) ++locc_votes;
    os << " seed" << seed << "{mcd " << full.mcd << " vs w/o-aux " << woaux.mcd
       << "; ddur " << full.ddur << " vs w/o-locc " << wolocc.ddur << "}";
  }
  c.expect(aux_votes >= 2, "w/o-aux did not increase MCD in a majority of seeds");
  c.expect(locc_votes >= 2, "w/o-locc did not increase DDUR in a majority of seeds");
  c.detail = "aux votes " + std::to_string(aux_votes) + "/3, locc votes " +
             std::to_string(locc_votes) + "/3;" + os.str();
  return c;
}

// ---------------------------------------------------------------- criterion 7

Check criterion_dsp() {
  Check c;
  // mu-law: exhaustive sweep against the mapped bin-width bound
  {
    const int bits = 10;
    const double mu = 1023.0;
    auto inv = [mu](double m) {
      return (m >= 0 ? 1.0 : -1.0) * (std::pow(1.0 + mu, std::fabs(m)) - 1.0) / mu;
    };
    int prev_level = 0;
    for (int i = 0; i < 10000; ++i) {
      double x = -1.0 + 2.0 * i / 9999.0;
      dsp::Waveform w;
      w.samples = {x};
      int level = dsp::mu_law(w, bits)[0];
      if (i > 0) c.expect(level >= prev_level, "mu-law must be monotone");
      prev_level = level;
      double m_center = 2.0 * level / mu - 1.0;
      double lo = inv(std::max(-1.0, m_center - 1.0 / mu));
      double hi = inv(std::min(1.0, m_center + 1.0 / mu));
      double dec = dsp::mu_law_inverse({level}, bits).samples[0];
      c.expect(std::fabs(x - dec) <= (hi - lo) + 1e-12, "mu-law round trip exceeds bin bound");
    }
  }
  // bin-centered sine lands its STFT peak on the exact bin
  {
    dsp::MelConfig cfg;
    cfg.n_mels = 16;
    const int k = 64;
    dsp::Waveform w;
    w.samples.resize(8000);
    double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = 0.6 * std::sin(2.0 * 3.14159265358979323846 * f * i / cfg.sample_rate);
    Tensor mag = dsp::stft_magnitude(w, cfg);
    for (int t = 5; t < mag.rows() - 5; ++t) {
      int am = 0;
      for (int b = 1; b < mag.cols(); ++b)
        if (mag.at(t, b) > mag.at(t, am)) am = b;
      c.expect(am == k, "sine peak bin mismatch");
    }
  }
  // frame-count law
  {
    dsp::MelConfig cfg;
    cfg.n_mels = 16;
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
      int n = rng.uniform_int(500, 50000);
      dsp::Waveform w;
      w.samples.assign(static_cast<std::size_t>(n), 0.0);
      for (auto& s : w.samples) s = 0.1 * rng.normal();
      Tensor mel = dsp::mel_spectrogram(w, cfg);
      c.expect(mel.rows() == n / cfg.hop_length() + 1, "mel frame-count law violated");
    }
  }
  // pure tones recovered within 3 Hz
  for (double f0 : {120.0, 200.0, 330.0}) {
    dsp::Waveform w;
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = 0.5 * std::sin(2.0 * 3.14159265358979323846 * f0 * i / 16000.0);
    auto track = dsp::extract_f0(w, dsp::F0Config{});
    int voiced = 0, good = 0, interior = 0;
    for (std::size_t t = 5; t + 5 < track.size(); ++t) {
      ++interior;
      if (track[t].voiced) {
        ++voiced;
        if (std::fabs(track[t].f0_hz - f0) <= 3.0) ++good;
      }
    }
    c.expect(voiced >= interior * 95 / 100, "tone mostly voiced");
    c.expect(good == voiced, "tone f0 within 3 Hz");
  }
  return c;
}

// ---------------------------------------------------------------- criterion 8

Check criterion_determinism() {
  Check c;
  const char* bin_env = std::getenv("SEQVC_BIN");
  if (!bin_env) {
    c.expect(false, "SEQVC_BIN not set (path to the seqvc binary)");
    return c;
  }
  std::string bin = bin_env;

  auto pipeline = [&](const fs::path& root) -> std::string {
    fs::remove_all(root);
    fs::create_directories(root);
    auto sh = [&](const std::string& cmd) {
      std::string full = cmd + " > /dev/null 2>&1";
      int rc = std::system(full.c_str());
      // conversions from a 2-epoch model may legitimately hit the step cap
      c.expect(rc == 0 || (cmd.find(" convert ") != std::string::npos &&
                           WEXITSTATUS(rc) == 5),
               "pipeline command failed: " + cmd);
    };
    std::string data = (root / "data").string();
    std::string run = (root / "run").string();
    std::string conv = (root / "conv").string();
    std::string report = (root / "report.tsv").string();
    sh(bin + " gen-data --out " + data +
       " --seed 7 --n-train 6 --n-val 2 --n-test 2 --min-frames 60 --max-frames 90");
    sh(bin + " train --data " + data + " --out " + run +
       " --mode mse --epochs 2 --seed 7 --batch 2 --encoder-units 8 --prenet-units 8"
       " --attn-units 8 --decoder-units 8 --attn-v-dim 8 --quiet");
    sh(bin + " convert --checkpoint " + run + "/latest.ckpt --data " + data +
       " --split test --out " + conv);
    sh(bin + " eval --converted " + conv + " --data " + data +
       " --split test --report " + report);
    std::ifstream in(report, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };

  std::string a = pipeline(g_work / "det-a");
  std::string b = pipeline(g_work / "det-b");
  c.expect(!a.empty(), "first pipeline produced no report");
  c.expect(a == b, "metric reports differ between identical runs");
  return c;
}

// -------------------------------------------------------------------- driver

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Check()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  g_work = fs::current_path() / "acceptance_work";
  fs::create_directories(g_work);

  std::vector<Criterion> criteria = {
      {1, "gradient suite (every op + composed graphs, rel err < 1e-4)", 120, criterion_gradients},
      {2, "forward attention (init, hand case, 10k random steps)", 30, criterion_forward_attention},
      {3, "MDN reduction to squared error (m=1, unit deviations)", 30, criterion_mdn_reduction},
      {4, "DTW optimality vs exhaustive enumeration", 30, criterion_dtw},
      {5, "desk-scale training reproduction (alignment, DDUR, MCD orderings)", 1800,
       criterion_training_reproduction},
      {6, "ablation directions over 3 seeds (w/o-aux MCD, w/o-locc DDUR)", 0,
       criterion_ablation_directions},
      {7, "DSP suite (mu-law sweep, sine bin, frame law, F0 tones)", 60, criterion_dsp},
      {8, "pipeline determinism (byte-identical reports)", 0, criterion_determinism},
  };

  bool all_ok = true;
  for (const auto& cr : criteria) {
    if (only != 0 && cr.id != only) continue;
    auto t0 = std::chrono::steady_clock::now();
    Check result;
    try {
      result = cr.fn();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_budget = cr.budget_s <= 0 || secs < cr.budget_s;
    bool ok = result.ok && in_budget;
    std::printf("[%s] criterion %d: %s (%.1fs%s)%s%s\n", ok ? "PASS" : "FAIL", cr.id,
                cr.name, secs, in_budget ? "" : ", OVER BUDGET",
                result.detail.empty() ? "" : " -- ", result.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
