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

#include <benchmark/benchmark.h>

#include <cmath>

#include "seqvc/align.hpp"
#include "seqvc/autodiff.hpp"
#include "seqvc/dsp.hpp"
#include "seqvc/model.hpp"
#include "seqvc/rng.hpp"
#include "seqvc/train.hpp"

using namespace seqvc;

namespace {

model::ModelConfig desk_cfg() {
  model::ModelConfig cfg = model::ModelConfig::desk();
  return cfg;
}

train::PairExample synthetic_pair(const model::ModelConfig& cfg, int t_x, int t_y) {
  Rng rng(1);
  train::PairExample p;
  p.source_input = num::random_normal({t_x, cfg.input_dim()}, 0, 0.5, rng);
  p.target_mel = num::random_normal({t_y, cfg.d_mel}, 0, 0.5, rng);
  return p;
}

}  // namespace

static void BM_MelSpectrogram(benchmark::State& state) {
  dsp::MelConfig cfg;
  cfg.n_mels = 16;
  Rng rng(7);
  dsp::Waveform w;
  w.samples.resize(static_cast<std::size_t>(state.range(0)));
  for (auto& s : w.samples) s = 0.3 * rng.normal();
  for (auto _ : state) {
    auto mel = dsp::mel_spectrogram(w, cfg);
    benchmark::DoNotOptimize(mel);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MelSpectrogram)->Arg(16000)->Arg(38400);

static void BM_Dtw(benchmark::State& state) {
  Rng rng(3);
  const int t = static_cast<int>(state.range(0));
  num::FeatureSequence a = num::random_normal({t, 12}, 0, 1, rng);
  num::FeatureSequence b = num::random_normal({t * 4 / 5, 12}, 0, 1, rng);
  for (auto _ : state) {
    auto path = align::dtw(a, b);
    benchmark::DoNotOptimize(path);
  }
}
BENCHMARK(BM_Dtw)->Arg(120)->Arg(240);

static void BM_ForwardAttentionStep(benchmark::State& state) {
  const int t_h = static_cast<int>(state.range(0));
  Rng rng(5);
  num::Tensor scores = num::random_normal({1, t_h}, 0, 1, rng);
  num::Tensor alpha = model::initial_alignment(t_h);
  for (auto _ : state) {
    num::Tensor next = model::forward_attention_value(scores, alpha);
    benchmark::DoNotOptimize(next);
  }
}
BENCHMARK(BM_ForwardAttentionStep)->Arg(30)->Arg(60);

static void BM_TeacherForcedStep(benchmark::State& state) {
  model::ModelConfig cfg = desk_cfg();
  cfg.output_mode = state.range(0) ? model::OutputMode::kGmmMl : model::OutputMode::kMse;
  num::ParamStore params = model::init_params(cfg, 11);
  train::PairExample pair = synthetic_pair(cfg, 120, 96);
  train::Trainer trainer(cfg, train::TrainConfig{},
                         train::LossWeights::defaults(cfg.output_mode),
                         std::move(params));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    train::LossRecord rec = trainer.train_step({&pair}, seed++);
    benchmark::DoNotOptimize(rec);
  }
}
BENCHMARK(BM_TeacherForcedStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Convert(benchmark::State& state) {
  model::ModelConfig cfg = desk_cfg();
  num::ParamStore params = model::init_params(cfg, 13);
  Rng rng(17);
  num::FeatureSequence x = num::random_normal({120, cfg.input_dim()}, 0, 0.5, rng);
  model::ConvertLimits limits;
  limits.max_steps = 48;
  for (auto _ : state) {
    auto res = model::convert(cfg, params, x, limits);
    benchmark::DoNotOptimize(res);
  }
  state.SetLabel("120 source frames, cap 48 steps");
}
BENCHMARK(BM_Convert)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
