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

#include "seqvc/train.hpp"

#include <algorithm>
#include <cmath>

#include "seqvc/error.hpp"
#include "seqvc/rng.hpp"

namespace seqvc::train {

using namespace seqvc::num;
using model::MaskSource;
using model::NetGraph;

LossWeights LossWeights::defaults(OutputMode mode) {
  LossWeights w;
  w.w_dec = mode == OutputMode::kGmmMl ? 0.01 : 1.0;
  w.w_post = 1.0;
  w.w_end = 0.005;
  return w;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0,1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (l2 < 0) throw ConfigError("l2 must be >= 0");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch <= cfg.lr_decay_after_epoch) return cfg.learning_rate;
  return cfg.learning_rate * std::pow(cfg.lr_decay, epoch - cfg.lr_decay_after_epoch);
}

Tensor end_labels(int decoder_steps) {
  if (decoder_steps < 1) throw DataError("end_labels: need at least one decoder step");
  Tensor labels({decoder_steps});
  labels.at(decoder_steps - 1) = 1.0;
  return labels;
}

double gmm_nll_value(const Tensor& o, const Tensor& y, int m, int frame_block) {
  Tape tape;
  Tensor orow = o.rank() == 2 ? o : Tensor({1, static_cast<int>(o.size())}, o.values());
  Tensor yrow = y.rank() == 2 ? y : Tensor({1, static_cast<int>(y.size())}, y.values());
  return model::gmm_nll_g(tape.constant(orow), yrow, m, frame_block).value().at(0);
}

namespace {

double bce(double p, double label) {
  constexpr double kEps = 1e-12;
  return -(label * std::log(std::max(p, kEps)) +
           (1.0 - label) * std::log(std::max(1.0 - p, kEps)));
}

}  // namespace

LossRecord total_loss_value(const ModelConfig& cfg,
                            const std::vector<Tensor>& dec_steps,
                            const FeatureSequence& postnet_out,
                            const FeatureSequence& target,
                            const std::vector<double>& p_end,
                            const Tensor& labels, const LossWeights& w) {
  const int t_y = target.rows();
  const int d = cfg.d_mel;
  const int r = cfg.frames_per_step;
  const int steps = static_cast<int>(dec_steps.size());
  if (steps < 1 || labels.size() != steps || p_end.size() != static_cast<std::size_t>(steps))
    throw DataError("total_loss: misaligned step counts");
  if (postnet_out.cols() != d || target.cols() != d)
    throw DataError("total_loss: feature dim mismatch");

  double dec = 0;
  if (cfg.output_mode == OutputMode::kMse) {
    std::int64_t count = 0;
    for (int t = 0; t < steps; ++t) {
      const Tensor& pred = dec_steps[static_cast<std::size_t>(t)];
      for (int i = 0; i < r; ++i) {
        int row = t * r + i;
        if (row >= t_y) break;
        for (int c = 0; c < d; ++c) {
          double diff = pred.at(i, c) - target.at(row, c);
          dec += diff * diff;
          ++count;
        }
      }
    }
    dec /= std::max<std::int64_t>(count, 1);
  } else {
    for (int t = 0; t < steps; ++t) {
      Tensor y({1, r * d});
      Tensor mask({1, r * d});
      for (int i = 0; i < r; ++i) {
        int row = t * r + i;
        int src = std::min(row, t_y - 1);
        for (int c = 0; c < d; ++c) {
          y.at(0, i * d + c) = target.at(src, c);
          mask.at(0, i * d + c) = row < t_y ? 1.0 : 0.0;
        }
      }
      Tape tape;
      dec += model::gmm_nll_g(tape.constant(dec_steps[static_cast<std::size_t>(t)]), y,
                              cfg.mixtures, r * d, &mask)
                 .value()
                 .at(0);
    }
    dec /= steps;
  }

  double post = 0;
  std::int64_t post_count = 0;
  const int usable = std::min(t_y, postnet_out.rows());
  for (int row = 0; row < usable; ++row)
    for (int c = 0; c < d; ++c) {
      double diff = postnet_out.at(row, c) - target.at(row, c);
      post += diff * diff;
      ++post_count;
    }
  post /= std::max<std::int64_t>(post_count, 1);

  double end = 0;
  for (int t = 0; t < steps; ++t) end += bce(p_end[static_cast<std::size_t>(t)], labels.at(t));
  end /= steps;

  LossRecord rec;
  rec.dec = dec;
  rec.post = post;
  rec.end = end;
  rec.total = w.w_dec * dec + w.w_post * post + w.w_end * end;
  if (!std::isfinite(rec.total)) throw NumericError("total_loss: non-finite loss");
  return rec;
}

PairLossParts build_pair_loss(Tape& tape, ParamBinder& binder, const ModelConfig& cfg,
                              const PairExample& pair, MaskSource* masks,
                              int pad_to_steps) {
  const int r = cfg.frames_per_step;
  const int d = cfg.d_mel;
  const int t_y = pair.target_mel.rows();
  if (t_y < 1) throw DataError("build_pair_loss: empty target");
  if (pair.target_mel.cols() != d) throw DataError("build_pair_loss: target dim mismatch");
  const int steps_real = (t_y + r - 1) / r;
  const int steps_total = std::max(steps_real, pad_to_steps);

  NetGraph net(tape, binder, cfg, masks);
  Var h = net.encode(pair.source_input);
  net.reset_decoder();

  // Target padded to whole frame groups (and batch padding) by repetition.
  auto target_row = [&](int row) { return std::min(row, t_y - 1); };

  std::vector<Var> dec_terms, end_terms, feedbacks;
  for (int t = 0; t < steps_total; ++t) {
    Tensor prev({1, d});
    if (t > 0) {
      int row = target_row(t * r - 1);
      for (int c = 0; c < d; ++c) prev.at(0, c) = pair.target_mel.at(row, c);
    }
    NetGraph::Step s = net.decode_step(h, tape.constant(prev));
    feedbacks.push_back(s.feedback);
    if (t >= steps_real) continue;  // batch padding: masked out of every loss

    if (cfg.output_mode == OutputMode::kMse) {
      Tensor y({r, d});
      Tensor mask({r, d});
      for (int i = 0; i < r; ++i) {
        int row = t * r + i;
        for (int c = 0; c < d; ++c) {
          y.at(i, c) = pair.target_mel.at(target_row(row), c);
          mask.at(i, c) = row < t_y ? 1.0 : 0.0;
        }
      }
      Var diff = sub(s.feedback, tape.constant(y));
      Var sq = mask_scale(mul(diff, diff), mask, 1.0);
      dec_terms.push_back(sum_all(sq));
    } else {
      Tensor y({1, r * d});
      Tensor mask({1, r * d});
      bool any_pad = false;
      for (int i = 0; i < r; ++i) {
        int row = t * r + i;
        for (int c = 0; c < d; ++c) {
          y.at(0, i * d + c) = pair.target_mel.at(target_row(row), c);
          mask.at(0, i * d + c) = row < t_y ? 1.0 : 0.0;
        }
        if (row >= t_y) any_pad = true;
      }
      dec_terms.push_back(model::gmm_nll_g(s.gmm_o, y, cfg.mixtures, r * d,
                                           any_pad ? &mask : nullptr));
    }
    // Stable binary cross-entropy from the logit: softplus(x) - label * x.
    double label = t == steps_real - 1 ? 1.0 : 0.0;
    Var bce_term = softplus(s.p_end_logit);
    if (label != 0.0) bce_term = sub(bce_term, s.p_end_logit);
    end_terms.push_back(bce_term);
  }

  // PostNet sees the natural-length decoder output: padded frames would leak
  // into the convolution context of valid rows and break padding invariance.
  Var y_seq = slice_rows(concat_rows(feedbacks), 0, t_y);
  Var z = net.postnet(y_seq);
  Var post_diff = sub(z, tape.constant(pair.target_mel));
  Var post_sq = mul(post_diff, post_diff);

  PairLossParts parts;
  Var dec_sum = dec_terms[0];
  for (std::size_t i = 1; i < dec_terms.size(); ++i) dec_sum = add(dec_sum, dec_terms[i]);
  Var end_sum = end_terms[0];
  for (std::size_t i = 1; i < end_terms.size(); ++i) end_sum = add(end_sum, end_terms[i]);
  parts.dec_sum = dec_sum;
  parts.post_sum = sum_all(post_sq);
  parts.end_sum = end_sum;
  parts.dec_count = cfg.output_mode == OutputMode::kMse
                        ? static_cast<std::int64_t>(t_y) * d
                        : steps_real;
  parts.post_count = static_cast<std::int64_t>(t_y) * d;
  parts.end_count = steps_real;
  return parts;
}

void AdamState::ensure_shapes(const ParamStore& params) {
  for (const auto& [name, entry] : params) {
    if (m.find(name) == m.end()) m.emplace(name, Tensor::zeros(entry.value.shape()));
    if (v.find(name) == v.end()) v.emplace(name, Tensor::zeros(entry.value.shape()));
  }
}

void add_l2_gradient(ParamStore& params, double l2) {
  if (l2 == 0) return;
  for (auto& [name, entry] : params) entry.grad.add_scaled(entry.value, 2.0 * l2);
}

double clip_global_norm(ParamStore& params, double max_norm) {
  double sq = 0;
  for (auto& [name, entry] : params)
    for (std::int64_t i = 0; i < entry.grad.size(); ++i) {
      double g = entry.grad.at(i);
      sq += g * g;
    }
  double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) return norm;
  if (max_norm > 0 && norm > max_norm) {
    double s = max_norm / norm;
    for (auto& [name, entry] : params)
      for (std::int64_t i = 0; i < entry.grad.size(); ++i) entry.grad.at(i) *= s;
  }
  return norm;
}

void adam_update(ParamStore& params, AdamState& state, double lr,
                 const TrainConfig& cfg) {
  state.ensure_shapes(params);
  state.t += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, entry] : params) {
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::int64_t i = 0; i < entry.value.size(); ++i) {
      double g = entry.grad.at(i);
      m.at(i) = b1 * m.at(i) + (1.0 - b1) * g;
      v.at(i) = b2 * v.at(i) + (1.0 - b2) * g * g;
      double mhat = m.at(i) / bc1;
      double vhat = v.at(i) / bc2;
      entry.value.at(i) -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

Trainer::Trainer(ModelConfig model_cfg, TrainConfig train_cfg, LossWeights weights,
                 ParamStore params)
    : model_cfg_(model_cfg), train_cfg_(train_cfg), weights_(weights),
      params_(std::move(params)) {
  model_cfg_.validate();
  train_cfg_.validate();
  opt_.ensure_shapes(params_);
}

LossRecord Trainer::train_step(const std::vector<const PairExample*>& batch,
                               std::uint64_t mask_seed) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  const int r = model_cfg_.frames_per_step;
  int max_steps = 0;
  std::int64_t dec_n = 0, post_n = 0, end_n = 0;
  for (const PairExample* p : batch) {
    int steps = (p->target_mel.rows() + r - 1) / r;
    max_steps = std::max(max_steps, steps);
    dec_n += model_cfg_.output_mode == OutputMode::kMse
                 ? static_cast<std::int64_t>(p->target_mel.rows()) * model_cfg_.d_mel
                 : steps;
    post_n += static_cast<std::int64_t>(p->target_mel.rows()) * model_cfg_.d_mel;
    end_n += steps;
  }

  params_.zero_grads();
  LossRecord rec;
  double dec_acc = 0, post_acc = 0, end_acc = 0;
  try {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      MaskSource masks(Rng::mix(mask_seed, static_cast<std::uint64_t>(i)));
      double dec_v = 0, post_v = 0, end_v = 0;
      num::GraphFn graph = [&](Tape& tape, ParamBinder& binder) -> num::Var {
        PairLossParts parts = build_pair_loss(tape, binder, model_cfg_, *batch[i],
                                              &masks, max_steps);
        dec_v = parts.dec_sum.value().at(0);
        post_v = parts.post_sum.value().at(0);
        end_v = parts.end_sum.value().at(0);
        num::Var total = scale(parts.dec_sum, weights_.w_dec / dec_n);
        total = add(total, scale(parts.post_sum, weights_.w_post / post_n));
        total = add(total, scale(parts.end_sum, weights_.w_end / end_n));
        return total;
      };
      // Per-op finite scans are skipped on the hot path; the scalar loss and
      // the global gradient norm are checked instead.
      forward_backward(params_, graph, /*check_finite=*/false);
      if (!std::isfinite(dec_v) || !std::isfinite(post_v) || !std::isfinite(end_v))
        throw NumericError("non-finite loss term");
      dec_acc += dec_v;
      post_acc += post_v;
      end_acc += end_v;
    }
  } catch (const NumericError&) {
    // Non-finite forward/backward: skip this update and report it.
    params_.zero_grads();
    rec.skipped = true;
    return rec;
  }

  add_l2_gradient(params_, train_cfg_.l2);
  double norm = clip_global_norm(params_, train_cfg_.grad_clip_norm);
  if (!std::isfinite(norm)) {
    params_.zero_grads();
    rec.skipped = true;
    return rec;
  }
  adam_update(params_, opt_, lr_, train_cfg_);

  rec.dec = dec_acc / dec_n;
  rec.post = post_acc / post_n;
  rec.end = end_acc / end_n;
  rec.total = weights_.w_dec * rec.dec + weights_.w_post * rec.post + weights_.w_end * rec.end;
  return rec;
}

LossRecord Trainer::run_epoch(const std::vector<PairExample>& items, int epoch) {
  if (items.empty()) throw DataError("run_epoch: empty corpus");
  lr_ = lr_schedule(epoch, train_cfg_);
  // Shuffle and mask streams depend only on (seed, epoch), so an interrupted
  // run resumed from a checkpoint replays identical batches.
  const std::uint64_t epoch_seed =
      Rng::mix(train_cfg_.seed, 0x45504f43ULL + static_cast<std::uint64_t>(epoch));
  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuffle_rng(epoch_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = shuffle_rng.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }

  LossRecord mean;
  int batches = 0, skipped = 0;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(train_cfg_.batch_size)) {
    std::vector<const PairExample*> batch;
    for (std::size_t k = pos;
         k < std::min(order.size(), pos + static_cast<std::size_t>(train_cfg_.batch_size)); ++k)
      batch.push_back(&items[static_cast<std::size_t>(order[k])]);
    LossRecord rec = train_step(batch, Rng::mix(epoch_seed, pos));
    ++global_step_;
    if (on_step) on_step(global_step_, epoch, lr_, rec);
    if (rec.skipped) {
      ++skipped;
      continue;
    }
    mean.total += rec.total;
    mean.dec += rec.dec;
    mean.post += rec.post;
    mean.end += rec.end;
    ++batches;
  }
  if (batches > 0) {
    mean.total /= batches;
    mean.dec /= batches;
    mean.post /= batches;
    mean.end /= batches;
  }
  mean.skipped = skipped > 0 && batches == 0;
  return mean;
}

LossRecord Trainer::evaluate(const std::vector<PairExample>& items) {
  if (items.empty()) throw DataError("evaluate: empty set");
  double dec_acc = 0, post_acc = 0, end_acc = 0;
  std::int64_t dec_n = 0, post_n = 0, end_n = 0;
  for (const PairExample& item : items) {
    Tape tape;
    ParamBinder binder(tape, params_, /*needs_grad=*/false);
    PairLossParts parts = build_pair_loss(tape, binder, model_cfg_, item,
                                          /*masks=*/nullptr, /*pad_to_steps=*/0);
    dec_acc += parts.dec_sum.value().at(0);
    post_acc += parts.post_sum.value().at(0);
    end_acc += parts.end_sum.value().at(0);
    dec_n += parts.dec_count;
    post_n += parts.post_count;
    end_n += parts.end_count;
  }
  LossRecord rec;
  rec.dec = dec_acc / dec_n;
  rec.post = post_acc / post_n;
  rec.end = end_acc / end_n;
  rec.total = weights_.w_dec * rec.dec + weights_.w_post * rec.post + weights_.w_end * rec.end;
  return rec;
}

}  // namespace seqvc::train
