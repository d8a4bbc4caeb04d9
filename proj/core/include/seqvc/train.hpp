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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seqvc/model.hpp"
#include "seqvc/tensor.hpp"

namespace seqvc::train {

using model::ModelConfig;
using model::OutputMode;
using num::FeatureSequence;
using num::ParamStore;
using num::Tensor;

struct LossWeights {
  double w_dec = 1.0;
  double w_post = 1.0;
  double w_end = 0.005;

  // Defaults: w_dec = 1.0 under MSE, 0.01 under GMM-ML.
  static LossWeights defaults(OutputMode mode);
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.95;
  int lr_decay_after_epoch = 50;  // held flat through this epoch
  double l2 = 1e-6;
  int batch_size = 4;
  std::uint64_t seed = 1;
  int epochs = 60;
  double grad_clip_norm = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  void validate() const;
};

// Learning rate for a 1-based epoch index: flat through lr_decay_after_epoch,
// exponential decay afterwards.
double lr_schedule(int epoch, const TrainConfig& cfg);

// Completion labels: exactly one 1, at the final decoder step.
Tensor end_labels(int decoder_steps);

// One source/target pair ready for teacher-forced training. source_input is
// the assembled model input (possibly DTW-warped for the no-attention
// variant); target_mel is the natural target spectrogram.
struct PairExample {
  FeatureSequence source_input;
  FeatureSequence target_mel;
};

struct LossRecord {
  double total = 0;
  double dec = 0;
  double post = 0;
  double end = 0;
  bool skipped = false;  // non-finite gradients: update was not applied
};

// Value-level loss for plain tensors (used by tests and diagnostics).
// dec_steps holds per-step decoder outputs: [r x d_mel] frames under MSE, GMM
// output vectors under GMM-ML.
LossRecord total_loss_value(const ModelConfig& cfg,
                            const std::vector<Tensor>& dec_steps,
                            const FeatureSequence& postnet_out,
                            const FeatureSequence& target,
                            const std::vector<double>& p_end,
                            const Tensor& labels, const LossWeights& w);

// NLL of one frame block under the mixture parameterized by o.
double gmm_nll_value(const Tensor& o, const Tensor& y, int m, int frame_block);

// Adam moment buffers, keyed like the ParamStore.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t t = 0;
  void ensure_shapes(const ParamStore& params);
};

// g += 2 * l2 * theta for every parameter.
void add_l2_gradient(ParamStore& params, double l2);
// Scales gradients so the global norm is at most max_norm; returns the
// pre-clip norm (may be non-finite, in which case nothing is scaled).
double clip_global_norm(ParamStore& params, double max_norm);
void adam_update(ParamStore& params, AdamState& state, double lr,
                 const TrainConfig& cfg);

// Per-pair loss graph pieces: sums plus the counts they should be divided by.
struct PairLossParts {
  num::Var dec_sum, post_sum, end_sum;
  std::int64_t dec_count = 0, post_count = 0, end_count = 0;
};

// Builds the teacher-forced graph for one pair. pad_to_steps >= real step
// count pads the decoder with masked steps (0 = no padding).
PairLossParts build_pair_loss(num::Tape& tape, num::ParamBinder& binder,
                              const ModelConfig& cfg, const PairExample& pair,
                              model::MaskSource* masks, int pad_to_steps = 0);

class Trainer {
 public:
  Trainer(ModelConfig model_cfg, TrainConfig train_cfg, LossWeights weights,
          ParamStore params);

  // One optimizer update over a batch. mask_seed drives dropout/zoneout.
  LossRecord train_step(const std::vector<const PairExample*>& batch,
                        std::uint64_t mask_seed);

  // Deterministic shuffled pass over the corpus; lr follows the schedule.
  // on_step, when set, receives (global_step, epoch, lr, record).
  LossRecord run_epoch(const std::vector<PairExample>& items, int epoch);

  // Teacher-forced loss without masks or updates.
  LossRecord evaluate(const std::vector<PairExample>& items);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  AdamState& opt_state() { return opt_; }
  const ModelConfig& model_config() const { return model_cfg_; }
  const TrainConfig& train_config() const { return train_cfg_; }
  const LossWeights& loss_weights() const { return weights_; }
  std::int64_t global_step() const { return global_step_; }
  void set_global_step(std::int64_t s) { global_step_ = s; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  std::function<void(std::int64_t step, int epoch, double lr, const LossRecord&)> on_step;

 private:
  ModelConfig model_cfg_;
  TrainConfig train_cfg_;
  LossWeights weights_;
  ParamStore params_;
  AdamState opt_;
  std::int64_t global_step_ = 0;
  double lr_ = 1e-3;
};

}  // namespace seqvc::train
