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

#include "seqvc/model.hpp"

#include <cmath>

#include "seqvc/error.hpp"

namespace seqvc::model {

using namespace seqvc::num;

void ModelConfig::validate() const {
  if (d_mel <= 0 || d_mel % 2 != 0)
    throw ConfigError("d_mel must be positive and even (location code)");
  if (d_aux < 0) throw ConfigError("d_aux must be >= 0");
  if (!use_mel_input && !use_aux_input)
    throw ConfigError("at least one input channel required");
  if (encoder_layers < 1 || per_layer_factor < 1)
    throw ConfigError("bad encoder pyramid configuration");
  if (encoder_units < 1 || prenet_units < 1 || attn_units < 1 || decoder_units < 1 ||
      attn_v_dim < 1 || attn_filters < 1 || attn_kernel < 1)
    throw ConfigError("unit counts must be positive");
  if (frames_per_step < 1) throw ConfigError("frames_per_step (r) must be >= 1");
  if (output_mode == OutputMode::kGmmMl && mixtures < 1)
    throw ConfigError("mixtures (m) must be >= 1 in GMM mode");
  if (zoneout_p < 0 || zoneout_p >= 1 || prenet_dropout < 0 || prenet_dropout >= 1 ||
      postnet_dropout < 0 || postnet_dropout >= 1)
    throw ConfigError("regularization probabilities must lie in [0,1)");
  if (encoder_out_dim() % 2 != 0)
    throw ConfigError("encoder output dim must be even (location code)");
  if (postnet_bank_kernels < 1 || postnet_bank_channels < 1 || postnet_channels < 1)
    throw ConfigError("bad postnet configuration");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.d_mel = 16;
  c.d_aux = 16;
  c.encoder_units = 32;
  c.prenet_units = 32;
  c.attn_units = 32;
  c.attn_filters = 8;
  c.attn_kernel = 15;
  c.attn_v_dim = 32;
  c.decoder_units = 32;
  c.mixtures = 2;
  c.postnet_bank_channels = 8;
  c.postnet_channels = 32;
  return c;
}

Tensor location_code(int n, int d) {
  if (d <= 0 || d % 2 != 0) throw NumericError("location_code: dimension must be even");
  if (n < 0) throw NumericError("location_code: position must be >= 0");
  Tensor out({1, d});
  for (int i = 0; i < d / 2; ++i) {
    double denom = std::pow(10000.0, 2.0 * i / d);
    out.at(0, 2 * i) = std::sin(n / denom);
    out.at(0, 2 * i + 1) = std::cos(n / denom);
  }
  return out;
}

Tensor location_code_rows(int len, int d) {
  Tensor out({len, d});
  for (int n = 0; n < len; ++n) {
    Tensor row = location_code(n, d);
    for (int c = 0; c < d; ++c) out.at(n, c) = row.at(0, c);
  }
  return out;
}

Tensor pad_to_multiple(const Tensor& x, int m) {
  if (x.rank() != 2 || x.rows() < 1) throw DataError("pad_to_multiple: empty input");
  int t = x.rows();
  int padded = ((t + m - 1) / m) * m;
  if (padded == t) return x;
  Tensor out({padded, x.cols()});
  for (int i = 0; i < padded; ++i) {
    int src = std::min(i, t - 1);
    for (int c = 0; c < x.cols(); ++c) out.at(i, c) = x.at(src, c);
  }
  return out;
}

GmmFrameParams gmm_partition(const Tensor& o, int m, int frame_block) {
  const int expected = (2 * frame_block + 1) * m;
  if (o.size() != expected)
    throw NumericError("gmm_partition: expected vector of length " +
                       std::to_string(expected) + ", got " + std::to_string(o.size()));
  GmmFrameParams g;
  g.weights = Tensor({m});
  g.means = Tensor({m, frame_block});
  g.deviations = Tensor({m, frame_block});
  double mx = o.at(0);
  for (int i = 1; i < m; ++i) mx = std::max(mx, o.at(i));
  double z = 0;
  for (int i = 0; i < m; ++i) {
    g.weights.at(i) = std::exp(o.at(i) - mx);
    z += g.weights.at(i);
  }
  for (int i = 0; i < m; ++i) g.weights.at(i) /= z;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < frame_block; ++j) {
      double os = o.at(m + i * frame_block + j);
      g.deviations.at(i, j) =
          (os > 0 ? os : 0.0) + std::log1p(std::exp(-std::fabs(os)));
      g.means.at(i, j) = o.at(m + m * frame_block + i * frame_block + j);
    }
  }
  return g;
}

Tensor gmm_select_mean(const GmmFrameParams& g) {
  const int m = g.weights.dim(0);
  int best = 0;
  for (int i = 1; i < m; ++i)
    if (g.weights.at(i) > g.weights.at(best)) best = i;  // ties: lowest index
  Tensor out({1, g.means.cols()});
  for (int j = 0; j < g.means.cols(); ++j) out.at(0, j) = g.means.at(best, j);
  return out;
}

Tensor MaskSource::bernoulli(std::vector<int> shape, double p_one) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng_.uniform() < p_one ? 1.0 : 0.0;
  return t;
}

// --- parameter initialization ------------------------------------------------

namespace {

Tensor fan_in_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  double s = std::sqrt(1.0 / fan_in);
  return random_uniform(std::move(shape), -s, s, rng);
}

void add_lstm(ParamStore& p, const std::string& prefix, int in_dim, int units,
              bool layer_norm, Rng& rng) {
  p.create(prefix + ".W", fan_in_uniform({4 * units, in_dim + units}, in_dim + units, rng));
  Tensor bias({4 * units});
  for (int i = units; i < 2 * units; ++i) bias.at(i) = 1.0;  // forget-gate bias
  if (layer_norm) {
    p.create(prefix + ".ln_g", Tensor::full({4 * units}, 1.0));
    p.create(prefix + ".ln_b", std::move(bias));
  } else {
    p.create(prefix + ".b", std::move(bias));
  }
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore p;
  Rng rng(Rng::mix(seed, 0x6d6f64656cULL));

  // Encoder pBLSTM stack: layer j consumes per_layer_factor consecutive
  // outputs of the layer below (the raw input for j = 0).
  int in_dim = cfg.input_dim();
  for (int j = 0; j < cfg.encoder_layers; ++j) {
    int layer_in = in_dim * cfg.per_layer_factor;
    for (const char* dir : {"fw", "bw"}) {
      add_lstm(p, "enc.l" + std::to_string(j) + "." + dir, layer_in,
               cfg.encoder_units, /*layer_norm=*/true, rng);
    }
    in_dim = cfg.encoder_out_dim();
  }

  p.create("prenet.l1.W", fan_in_uniform({cfg.prenet_units, cfg.d_mel}, cfg.d_mel, rng));
  p.create("prenet.l1.b", Tensor({cfg.prenet_units}));
  p.create("prenet.l2.W",
           fan_in_uniform({cfg.prenet_units, cfg.prenet_units}, cfg.prenet_units, rng));
  p.create("prenet.l2.b", Tensor({cfg.prenet_units}));

  add_lstm(p, "attn.lstm", cfg.prenet_units, cfg.attn_units, false, rng);

  const int enc_dim = cfg.encoder_out_dim();
  p.create("attn.W", fan_in_uniform({cfg.attn_units, enc_dim}, cfg.attn_units, rng));
  p.create("attn.U", fan_in_uniform({cfg.attn_v_dim, cfg.attn_filters}, cfg.attn_filters, rng));
  p.create("attn.v", fan_in_uniform({1, cfg.attn_v_dim}, cfg.attn_v_dim, rng));
  p.create("attn.b", Tensor({cfg.attn_v_dim}));
  p.create("attn.F",
           fan_in_uniform({cfg.attn_filters, 1, cfg.attn_kernel}, cfg.attn_kernel, rng));

  const int dec_in = enc_dim + cfg.attn_units;
  add_lstm(p, "dec.l1", dec_in, cfg.decoder_units, false, rng);
  add_lstm(p, "dec.l2", cfg.decoder_units, cfg.decoder_units, false, rng);

  const int proj_in = enc_dim + cfg.attn_units + 2 * cfg.decoder_units;
  const int out_dim = cfg.output_mode == OutputMode::kGmmMl ? cfg.gmm_vector_dim()
                                                            : cfg.frame_block();
  p.create("proj.mel.W", fan_in_uniform({out_dim, proj_in}, proj_in, rng));
  p.create("proj.mel.b", Tensor({out_dim}));
  p.create("proj.end.W", fan_in_uniform({1, dec_in}, dec_in, rng));
  p.create("proj.end.b", Tensor({1}));

  for (int k = 1; k <= cfg.postnet_bank_kernels; ++k) {
    std::string pre = "post.bank" + std::to_string(k);
    p.create(pre + ".W", fan_in_uniform({cfg.postnet_bank_channels, cfg.d_mel, k},
                                        cfg.d_mel * k, rng));
    p.create(pre + ".b", Tensor({cfg.postnet_bank_channels}));
    p.create(pre + ".ln_g", Tensor::full({cfg.postnet_bank_channels}, 1.0));
    p.create(pre + ".ln_b", Tensor({cfg.postnet_bank_channels}));
  }
  const int bank_out = cfg.postnet_bank_kernels * cfg.postnet_bank_channels;
  p.create("post.conv1.W",
           fan_in_uniform({cfg.postnet_channels, bank_out, 3}, bank_out * 3, rng));
  p.create("post.conv1.b", Tensor({cfg.postnet_channels}));
  p.create("post.conv1.ln_g", Tensor::full({cfg.postnet_channels}, 1.0));
  p.create("post.conv1.ln_b", Tensor({cfg.postnet_channels}));
  p.create("post.conv2.W", fan_in_uniform({cfg.postnet_channels, cfg.postnet_channels, 3},
                                          cfg.postnet_channels * 3, rng));
  p.create("post.conv2.b", Tensor({cfg.postnet_channels}));
  p.create("post.conv2.ln_g", Tensor::full({cfg.postnet_channels}, 1.0));
  p.create("post.conv2.ln_b", Tensor({cfg.postnet_channels}));
  p.create("post.proj.W",
           fan_in_uniform({cfg.d_mel, cfg.postnet_channels}, cfg.postnet_channels, rng));
  p.create("post.proj.b", Tensor({cfg.d_mel}));
  return p;
}

// --- attention ---------------------------------------------------------------

Var attention_scores_g(Var q, Var h, Var alpha_prev, Var conv_f, Var v, Var b,
                       Var w, Var u) {
  Tape& t = *q.tape();
  const int t_h = h.value().rows();
  if (alpha_prev.value().cols() != t_h)
    throw NumericError("attention: alpha/encoder length mismatch");
  // Location features: k filters of width l over the previous alignment.
  Var alpha_col = reshape(alpha_prev, {t_h, 1});
  Var zero_bias = t.constant(Tensor({conv_f.value().dim(0)}));
  Var f = conv1d_same(alpha_col, conv_f, zero_bias);      // [T_h x k]
  Var loc = tanh_op(linear(f, u, b));                     // [T_h x V]
  Var loc_score = reshape(matmul_nt(loc, v), {1, t_h});   // v^T tanh(.)
  // Content term: q^T W h_n.
  Var content = matmul_nt(matmul(q, w), h);               // [1 x T_h]
  return add(content, loc_score);
}

Tensor initial_alignment(int t_h) {
  Tensor a({1, t_h});
  a.at(0, 0) = 1.0;
  return a;
}

Var forward_attention_g(Var scores, Var alpha_prev) {
  Tape& t = *scores.tape();
  const int t_h = scores.value().cols();
  Var ehat = softmax_rows(scores);
  Var shifted;
  if (t_h == 1) {
    shifted = t.constant(Tensor({1, 1}));
  } else {
    shifted = concat_cols({t.constant(Tensor({1, 1})), slice_cols(alpha_prev, 0, t_h - 1)});
  }
  Var ahat = mul(ehat, add(alpha_prev, shifted));
  Var total = sum_all(ahat);
  if (total.value().at(0) < 1e-12)
    throw DecodeError("degenerate alignment: forward mass vanished");
  // Floor on the denominator only, so exact zeros stay exactly zero and the
  // one-state-advance support property is preserved.
  Var denom = add_scalar(total, 1e-20);
  Var recip = divide(t.constant(Tensor({1, 1}, {1.0})), denom);
  return mul_scalar_node(ahat, recip);
}

Var gmm_select_mean_g(Var o, int m, int frame_block) {
  const Tensor& ov = o.value();
  if (ov.size() != (2 * frame_block + 1) * m)
    throw NumericError("gmm_select_mean: bad vector length");
  int best = 0;
  for (int i = 1; i < m; ++i)
    if (ov.at(i) > ov.at(best)) best = i;  // softmax is monotone; ties: lowest index
  return slice_cols(o, m + m * frame_block + best * frame_block, frame_block);
}

Var gmm_nll_g(Var o, const Tensor& y, int m, int frame_block,
              const Tensor* valid_mask) {
  Tape& t = *o.tape();
  if (y.size() != frame_block) throw NumericError("gmm_nll: target length mismatch");
  double valid_dims = frame_block;
  if (valid_mask) {
    if (valid_mask->size() != frame_block)
      throw NumericError("gmm_nll: mask length mismatch");
    valid_dims = 0;
    for (std::int64_t i = 0; i < valid_mask->size(); ++i) valid_dims += valid_mask->at(i);
  }
  Var yv = t.constant(y);
  Var lse_w = logsumexp_rows(slice_cols(o, 0, m));
  std::vector<Var> terms;
  terms.reserve(static_cast<std::size_t>(m));
  const double norm_const = 0.5 * valid_dims * std::log(2.0 * 3.14159265358979323846);
  for (int i = 0; i < m; ++i) {
    Var logw = sub(slice_cols(o, i, 1), lse_w);
    Var sig = softplus(slice_cols(o, m + i * frame_block, frame_block));
    Var mu = slice_cols(o, m + m * frame_block + i * frame_block, frame_block);
    Var z = divide(sub(yv, mu), sig);
    Var zsq = mul(z, z);
    Var logsig = log_op(sig);
    if (valid_mask) {
      zsq = mask_scale(zsq, *valid_mask, 1.0);
      logsig = mask_scale(logsig, *valid_mask, 1.0);
    }
    Var quad = scale(sum_all(zsq), 0.5);
    Var logdet = sum_all(logsig);
    terms.push_back(add_scalar(sub(sub(logw, quad), logdet), -norm_const));
  }
  Var stacked = concat_cols(terms);
  return neg(logsumexp_rows(stacked));
}

// --- NetGraph ----------------------------------------------------------------

NetGraph::NetGraph(Tape& tape, ParamBinder& params, const ModelConfig& cfg,
                   MaskSource* masks)
    : tape_(tape), params_(params), cfg_(cfg), masks_(masks) {
  cfg_.validate();
}

Var NetGraph::lstm_cell(const std::string& prefix, Var x, LstmState& state,
                        bool layer_norm_cell) {
  const int units = state.h.value().cols();
  num::LstmOut cell;
  if (layer_norm_cell) {
    cell = num::lstm_cell_ln(x, state.h, state.c, params_(prefix + ".W"),
                             params_(prefix + ".ln_g"), params_(prefix + ".ln_b"));
  } else {
    cell = num::lstm_cell_plain(x, state.h, state.c, params_(prefix + ".W"),
                                params_(prefix + ".b"));
  }
  // Zoneout keeps the previous state with probability p (training only).
  if (masks_ && cfg_.zoneout_p > 0) {
    cell.c = mask_blend(cell.c, state.c, masks_->bernoulli({1, units}, cfg_.zoneout_p));
    cell.h = mask_blend(cell.h, state.h, masks_->bernoulli({1, units}, cfg_.zoneout_p));
  }
  state.c = cell.c;
  state.h = cell.h;
  return cell.h;
}

Var NetGraph::encode(const Tensor& x_in) {
  return encode(tape_.constant(pad_to_multiple(x_in, cfg_.downsample())));
}

Var NetGraph::encode(Var x) {
  if (x.value().cols() != cfg_.input_dim())
    throw NumericError("encode: input dim mismatch");
  if (x.value().rows() % cfg_.downsample() != 0)
    throw NumericError("encode: input rows must be padded to a multiple of M");
  Var cur = x;
  for (int j = 0; j < cfg_.encoder_layers; ++j) {
    const int t_in = cur.value().rows();
    const int d_in = cur.value().cols();
    const int f = cfg_.per_layer_factor;
    // Row-major reshape concatenates f consecutive frames per new row.
    cur = reshape(cur, {t_in / f, d_in * f});
    const int t_out = cur.value().rows();
    const std::string base = "enc.l" + std::to_string(j) + ".";
    std::vector<Var> fw_rows(static_cast<std::size_t>(t_out));
    std::vector<Var> bw_rows(static_cast<std::size_t>(t_out));
    LstmState fw{tape_.constant(Tensor({1, cfg_.encoder_units})),
                 tape_.constant(Tensor({1, cfg_.encoder_units}))};
    for (int t = 0; t < t_out; ++t) {
      fw_rows[static_cast<std::size_t>(t)] =
          lstm_cell(base + "fw", slice_rows(cur, t, 1), fw, true);
    }
    LstmState bw{tape_.constant(Tensor({1, cfg_.encoder_units})),
                 tape_.constant(Tensor({1, cfg_.encoder_units}))};
    for (int t = t_out - 1; t >= 0; --t) {
      bw_rows[static_cast<std::size_t>(t)] =
          lstm_cell(base + "bw", slice_rows(cur, t, 1), bw, true);
    }
    std::vector<Var> rows(static_cast<std::size_t>(t_out));
    for (int t = 0; t < t_out; ++t)
      rows[static_cast<std::size_t>(t)] =
          concat_cols({fw_rows[static_cast<std::size_t>(t)], bw_rows[static_cast<std::size_t>(t)]});
    cur = concat_rows(rows);
  }
  t_h_ = cur.value().rows();
  if (cfg_.use_location_code) {
    cur = add(cur, tape_.constant(location_code_rows(t_h_, cfg_.encoder_out_dim())));
  }
  return cur;
}

void NetGraph::reset_decoder(int t_h) {
  if (t_h > 0) t_h_ = t_h;
  if (t_h_ <= 0) throw NumericError("reset_decoder: encode first or pass a length");
  step_index_ = 0;
  alpha_ = tape_.constant(initial_alignment(t_h_));
  attn_state_ = {tape_.constant(Tensor({1, cfg_.attn_units})),
                 tape_.constant(Tensor({1, cfg_.attn_units}))};
  dec1_state_ = {tape_.constant(Tensor({1, cfg_.decoder_units})),
                 tape_.constant(Tensor({1, cfg_.decoder_units}))};
  dec2_state_ = {tape_.constant(Tensor({1, cfg_.decoder_units})),
                 tape_.constant(Tensor({1, cfg_.decoder_units}))};
}

NetGraph::Step NetGraph::decode_step(Var h, Var prev_frame) {
  const int t = step_index_++;
  Var x = prev_frame;
  if (cfg_.use_location_code) {
    x = add(x, tape_.constant(location_code(t, cfg_.d_mel)));
  }
  Var p1 = relu(linear(x, params_("prenet.l1.W"), params_("prenet.l1.b")));
  if (masks_ && cfg_.prenet_dropout > 0) {
    double keep = 1.0 - cfg_.prenet_dropout;
    p1 = mask_scale(p1, masks_->bernoulli({1, cfg_.prenet_units}, keep), 1.0 / keep);
  }
  Var p2 = relu(linear(p1, params_("prenet.l2.W"), params_("prenet.l2.b")));
  if (masks_ && cfg_.prenet_dropout > 0) {
    double keep = 1.0 - cfg_.prenet_dropout;
    p2 = mask_scale(p2, masks_->bernoulli({1, cfg_.prenet_units}, keep), 1.0 / keep);
  }

  Var q = lstm_cell("attn.lstm", p2, attn_state_, false);

  if (cfg_.attention_mode == AttentionMode::kLearned) {
    Var e = attention_scores_g(q, h, alpha_, params_("attn.F"), params_("attn.v"),
                               params_("attn.b"), params_("attn.W"), params_("attn.U"));
    alpha_ = forward_attention_g(e, alpha_);
  } else {
    Tensor a({1, t_h_});
    int n = std::min(t * cfg_.frames_per_step / cfg_.downsample(), t_h_ - 1);
    a.at(0, n) = 1.0;
    alpha_ = tape_.constant(a);
  }
  Var c = matmul(alpha_, h);

  Var d_in = concat_cols({c, q});
  Var d1 = lstm_cell("dec.l1", d_in, dec1_state_, false);
  Var d2 = add(lstm_cell("dec.l2", d1, dec2_state_, false), d1);  // residual skip

  Var proj_in = concat_cols({c, q, d1, d2});
  Step out;
  out.alignment = alpha_;
  out.context = c;
  out.query = q;
  if (cfg_.output_mode == OutputMode::kGmmMl) {
    out.gmm_o = linear(proj_in, params_("proj.mel.W"), params_("proj.mel.b"));
    Var sel = gmm_select_mean_g(out.gmm_o, cfg_.mixtures, cfg_.frame_block());
    out.feedback = reshape(sel, {cfg_.frames_per_step, cfg_.d_mel});
  } else {
    Var flat = linear(proj_in, params_("proj.mel.W"), params_("proj.mel.b"));
    out.feedback = reshape(flat, {cfg_.frames_per_step, cfg_.d_mel});
  }
  out.p_end_logit = linear(d_in, params_("proj.end.W"), params_("proj.end.b"));
  out.p_end = sigmoid(out.p_end_logit);
  return out;
}

Var NetGraph::postnet(Var y) {
  const int t_len = y.value().rows();
  std::vector<Var> bank_outs;
  for (int k = 1; k <= cfg_.postnet_bank_kernels; ++k) {
    std::string pre = "post.bank" + std::to_string(k);
    Var c = conv1d_same(y, params_(pre + ".W"), params_(pre + ".b"));
    c = relu(layer_norm(c, params_(pre + ".ln_g"), params_(pre + ".ln_b")));
    if (masks_ && cfg_.postnet_dropout > 0) {
      double keep = 1.0 - cfg_.postnet_dropout;
      c = mask_scale(c, masks_->bernoulli({t_len, cfg_.postnet_bank_channels}, keep),
                     1.0 / keep);
    }
    bank_outs.push_back(c);
  }
  Var stacked = concat_cols(bank_outs);
  Var c1 = conv1d_same(stacked, params_("post.conv1.W"), params_("post.conv1.b"));
  c1 = relu(layer_norm(c1, params_("post.conv1.ln_g"), params_("post.conv1.ln_b")));
  if (masks_ && cfg_.postnet_dropout > 0) {
    double keep = 1.0 - cfg_.postnet_dropout;
    c1 = mask_scale(c1, masks_->bernoulli({t_len, cfg_.postnet_channels}, keep), 1.0 / keep);
  }
  Var c2 = conv1d_same(c1, params_("post.conv2.W"), params_("post.conv2.b"));
  c2 = relu(layer_norm(c2, params_("post.conv2.ln_g"), params_("post.conv2.ln_b")));
  if (masks_ && cfg_.postnet_dropout > 0) {
    double keep = 1.0 - cfg_.postnet_dropout;
    c2 = mask_scale(c2, masks_->bernoulli({t_len, cfg_.postnet_channels}, keep), 1.0 / keep);
  }
  Var res = linear(c2, params_("post.proj.W"), params_("post.proj.b"));
  return add(y, res);
}

// --- inference ----------------------------------------------------------------

ConvertResult convert(const ModelConfig& cfg, ParamStore& params,
                      const FeatureSequence& x, const ConvertLimits& limits) {
  cfg.validate();
  if (x.rank() != 2 || x.rows() < 1) throw DataError("convert: empty input");
  const int t_x = x.rows();
  const int r = cfg.frames_per_step;

  Tape tape;
  ParamBinder binder(tape, params, /*needs_grad=*/false);
  NetGraph net(tape, binder, cfg, nullptr);
  Var h = net.encode(x);
  net.reset_decoder();

  int cap = limits.max_steps > 0 ? limits.max_steps : 3 * ((t_x + r - 1) / r);
  const bool diagonal = cfg.attention_mode == AttentionMode::kDiagonal;
  if (diagonal) cap = (t_x + r - 1) / r;  // fixed frame-by-frame length

  ConvertResult result;
  std::vector<Var> frame_groups;
  std::vector<Tensor> alignment_rows;
  Var prev = tape.constant(Tensor({1, cfg.d_mel}));  // zero go-frame
  for (int step = 0; step < cap; ++step) {
    NetGraph::Step s = net.decode_step(h, prev);
    frame_groups.push_back(s.feedback);
    alignment_rows.push_back(s.alignment.value());
    double pe = s.p_end.value().at(0, 0);
    result.p_end_trace.push_back(pe);
    prev = slice_rows(s.feedback, r - 1, 1);  // only the last frame is fed back
    result.steps = step + 1;
    if (!diagonal && pe > limits.stop_threshold) break;
  }
  if (!diagonal && result.steps == cap &&
      (result.p_end_trace.empty() || result.p_end_trace.back() <= limits.stop_threshold)) {
    result.step_cap_hit = true;
  }

  Var y_seq = concat_rows(frame_groups);
  Var z = net.postnet(y_seq);
  result.decoder_mel = y_seq.value();
  result.mel = z.value();
  result.alignment = Tensor({result.steps, net.t_h()});
  for (int i = 0; i < result.steps; ++i)
    for (int n = 0; n < net.t_h(); ++n)
      result.alignment.at(i, n) = alignment_rows[static_cast<std::size_t>(i)].at(0, n);
  return result;
}

// --- value wrappers -------------------------------------------------------

Tensor pyramid_encode_value(const ModelConfig& cfg, ParamStore& params,
                            const FeatureSequence& x) {
  Tape tape;
  ParamBinder binder(tape, params, false);
  NetGraph net(tape, binder, cfg, nullptr);
  return net.encode(x).value();
}

Tensor attention_scores_value(const Tensor& q, const Tensor& h,
                              const Tensor& alpha_prev, const Tensor& conv_f,
                              const Tensor& v, const Tensor& b, const Tensor& w,
                              const Tensor& u) {
  Tape tape;
  return attention_scores_g(tape.constant(q), tape.constant(h),
                            tape.constant(alpha_prev), tape.constant(conv_f),
                            tape.constant(v), tape.constant(b), tape.constant(w),
                            tape.constant(u))
      .value();
}

Tensor forward_attention_value(const Tensor& scores, const Tensor& alpha_prev) {
  Tape tape;
  return forward_attention_g(tape.constant(scores), tape.constant(alpha_prev)).value();
}

Tensor context_value(const Tensor& alpha, const Tensor& h) {
  Tape tape;
  return matmul(tape.constant(alpha), tape.constant(h)).value();
}

Tensor postnet_value(const ModelConfig& cfg, ParamStore& params,
                     const FeatureSequence& y) {
  Tape tape;
  ParamBinder binder(tape, params, false);
  NetGraph net(tape, binder, cfg, nullptr);
  return net.postnet(tape.constant(y)).value();
}

FeatureSequence assemble_input(const ModelConfig& cfg, const FeatureSequence& mel,
                               const FeatureSequence& aux) {
  if (cfg.use_mel_input && cfg.use_aux_input && mel.rows() != aux.rows())
    throw DataError("assemble_input: mel/aux frame count mismatch");
  const int t = cfg.use_mel_input ? mel.rows() : aux.rows();
  FeatureSequence out({t, cfg.input_dim()});
  for (int i = 0; i < t; ++i) {
    int c = 0;
    if (cfg.use_mel_input)
      for (int j = 0; j < cfg.d_mel; ++j) out.at(i, c++) = mel.at(i, j);
    if (cfg.use_aux_input)
      for (int j = 0; j < cfg.d_aux; ++j) out.at(i, c++) = aux.at(i, j);
  }
  return out;
}

}  // namespace seqvc::model
