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

#include <optional>
#include <string>
#include <vector>

#include "seqvc/autodiff.hpp"
#include "seqvc/rng.hpp"
#include "seqvc/tensor.hpp"

namespace seqvc::model {

using num::FeatureSequence;
using num::ParamBinder;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;

enum class OutputMode { kMse, kGmmMl };

// kDiagonal replaces learned attention with a fixed diagonal one-hot map,
// turning the network into a frame-by-frame converter (trained on DTW-aligned
// pairs, converted at source length).
enum class AttentionMode { kLearned, kDiagonal };

struct ModelConfig {
  int d_mel = 80;
  int d_aux = 16;
  int encoder_layers = 2;
  int encoder_units = 256;  // per direction
  int per_layer_factor = 2;
  int prenet_units = 256;
  int attn_units = 256;
  int attn_filters = 10;  // k
  int attn_kernel = 32;   // l
  int attn_v_dim = 256;
  int decoder_units = 256;
  int frames_per_step = 2;  // r
  int mixtures = 2;         // m, GMM mode only
  OutputMode output_mode = OutputMode::kMse;
  AttentionMode attention_mode = AttentionMode::kLearned;
  bool use_location_code = true;
  bool use_mel_input = true;
  bool use_aux_input = true;
  double zoneout_p = 0.2;
  double prenet_dropout = 0.5;
  double postnet_dropout = 0.2;
  int postnet_bank_kernels = 8;  // kernel sizes 1..K
  int postnet_bank_channels = 32;
  int postnet_channels = 64;
  double stop_threshold = 0.5;

  int downsample() const {  // M
    int m = 1;
    for (int i = 0; i < encoder_layers; ++i) m *= per_layer_factor;
    return m;
  }
  int encoder_out_dim() const { return 2 * encoder_units; }
  int input_dim() const {
    return (use_mel_input ? d_mel : 0) + (use_aux_input ? d_aux : 0);
  }
  int frame_block() const { return frames_per_step * d_mel; }  // r * d_mel
  int gmm_vector_dim() const { return (2 * frame_block() + 1) * mixtures; }
  void validate() const;

  // Reduced-dimension preset used by the synthetic-corpus experiments.
  static ModelConfig desk();
};

struct EncoderStates {
  Tensor h;  // [T_h x encoder_out_dim], location code already added
  int t_h() const { return h.rows(); }
};

// [decoder steps x T_h]; every row sums to 1.
using AlignmentMatrix = Tensor;

struct GmmFrameParams {
  Tensor weights;     // [m]
  Tensor means;       // [m x r*d_mel]
  Tensor deviations;  // [m x r*d_mel], strictly positive
};

struct DecoderStepOutput {
  Tensor frames;  // [r x d_mel]
  std::optional<GmmFrameParams> gmm;
  double p_end = 0.0;
  Tensor alignment;  // [1 x T_h]
  Tensor context;
  Tensor query;
};

// Sinusoidal location code, entry 2i = sin(n / 10000^(2i/d)),
// entry 2i+1 = cos(n / 10000^(2i/d)). d must be even.
Tensor location_code(int n, int d);

// Rows n = 0..len-1 stacked, [len x d].
Tensor location_code_rows(int len, int d);

// Right-pads x with copies of its last frame to a multiple of m.
Tensor pad_to_multiple(const Tensor& x, int m);

// Splits the GMM output vector o (length (2*r*d_mel+1)*m, layout
// [weights | deviations | means]) into mixture parameters: softmax weights,
// softplus deviations, identity means.
GmmFrameParams gmm_partition(const Tensor& o, int m, int frame_block);

// Mean of the maximum-weight component; ties break to the lowest index.
Tensor gmm_select_mean(const GmmFrameParams& g);

// Fresh parameter bank for the given configuration.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Bernoulli mask source for dropout/zoneout; owned by the trainer so that
// training steps are a pure function of the seed.
class MaskSource {
 public:
  explicit MaskSource(std::uint64_t seed) : rng_(seed) {}
  Tensor bernoulli(std::vector<int> shape, double p_one);

 private:
  Rng rng_;
};

// --- graph-level building blocks (shared by training and inference) --------

// Raw attention scores e_t, [1 x T_h]: content term q^T W h_n plus location
// term v^T tanh(U f_n + b) with f = F * alpha_prev (same-length zero padding).
Var attention_scores_g(Var q, Var h, Var alpha_prev, Var conv_f, Var v, Var b,
                       Var w, Var u);

// Forward-attention update, Eq.-style recursion: softmax of scores, multiply
// by (alpha_prev + shifted alpha_prev), renormalize. The normalizer gets a
// 1e-20 floor added to the denominator only, so exact zeros stay zero; if the
// unfloored sum falls below 1e-12 a DecodeError is thrown.
Var forward_attention_g(Var scores, Var alpha_prev);

// One-hot initial alignment, mass on state 0.
Tensor initial_alignment(int t_h);

// Negative log-likelihood of a frame block under the mixture parameterized by
// o; y is [1 x r*d_mel]. Returns [1 x 1]. valid_mask (same shape as y, 0/1)
// restricts the Gaussian to the valid dimensions of a padded final block.
Var gmm_nll_g(Var o, const Tensor& y, int m, int frame_block,
              const Tensor* valid_mask = nullptr);

// Mean of the argmax-weight component as a graph node. Gradient flows only
// through the selected mean slice.
Var gmm_select_mean_g(Var o, int m, int frame_block);

// Whole-network graph builder. One instance per tape and utterance.
class NetGraph {
 public:
  NetGraph(Tape& tape, ParamBinder& params, const ModelConfig& cfg,
           MaskSource* masks);

  // Pyramid encoder over x_in [T_x x input_dim] (pre-padding applied inside).
  // Returns [T_h x encoder_out_dim] with location codes added.
  Var encode(const Tensor& x_in);
  Var encode(Var x);

  int t_h() const { return t_h_; }

  // Resets decoder state (call after encode, before the first step). An
  // explicit encoder length supports driving decode_step on externally built
  // states.
  void reset_decoder(int t_h = 0);

  struct Step {
    Var feedback;     // [r x d_mel] frames fed to PostNet / next PreNet
    Var alignment;    // [1 x T_h]
    Var p_end_logit;  // [1 x 1]
    Var p_end;        // [1 x 1]
    Var gmm_o;        // [1 x gmm_vector_dim], GMM mode only
    Var context;
    Var query;
  };

  // One decoder step; prev_frame is [1 x d_mel] (natural frame under teacher
  // forcing, or the model's own last frame at conversion time).
  Step decode_step(Var h, Var prev_frame);

  // Residual convolutional refiner; y [T x d_mel] -> same shape.
  Var postnet(Var y);

  const ModelConfig& cfg() const { return cfg_; }

 private:
  struct LstmState {
    Var h, c;
  };
  Var lstm_cell(const std::string& prefix, Var x, LstmState& state, bool layer_norm);

  Tape& tape_;
  ParamBinder& params_;
  ModelConfig cfg_;
  MaskSource* masks_;
  int t_h_ = 0;
  int step_index_ = 0;
  Var alpha_;
  LstmState attn_state_;
  LstmState dec1_state_, dec2_state_;
};

struct ConvertLimits {
  int max_steps = 0;  // 0: 3 * ceil(T_x / r)
  double stop_threshold = 0.5;
};

struct ConvertResult {
  FeatureSequence mel;          // PostNet output
  FeatureSequence decoder_mel;  // pre-PostNet decoder output
  AlignmentMatrix alignment;    // [steps x T_h]
  std::vector<double> p_end_trace;
  bool step_cap_hit = false;
  int steps = 0;
};

// Autoregressive conversion of a source feature matrix [T_x x input_dim].
// Feeds back the last predicted frame of each step; stops once p_end exceeds
// the threshold or the step cap is reached (reported via step_cap_hit).
ConvertResult convert(const ModelConfig& cfg, ParamStore& params,
                      const FeatureSequence& x, const ConvertLimits& limits = {});

// Convenience value-level wrappers used by tests and tools (no gradients).
Tensor pyramid_encode_value(const ModelConfig& cfg, ParamStore& params,
                            const FeatureSequence& x);
Tensor attention_scores_value(const Tensor& q, const Tensor& h,
                              const Tensor& alpha_prev, const Tensor& conv_f,
                              const Tensor& v, const Tensor& b, const Tensor& w,
                              const Tensor& u);
Tensor forward_attention_value(const Tensor& scores, const Tensor& alpha_prev);
Tensor context_value(const Tensor& alpha, const Tensor& h);
Tensor postnet_value(const ModelConfig& cfg, ParamStore& params,
                     const FeatureSequence& y);

// Builds the model input matrix from mel and auxiliary channels, honoring the
// ablation flags.
FeatureSequence assemble_input(const ModelConfig& cfg, const FeatureSequence& mel,
                               const FeatureSequence& aux);

}  // namespace seqvc::model
