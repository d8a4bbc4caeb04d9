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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqvc/error.hpp"
#include "seqvc/model.hpp"
#include "seqvc/rng.hpp"

using namespace seqvc;
using namespace seqvc::model;
using num::FdReport;
using num::ParamBinder;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

// Tiny configuration for gradient checks and structural tests.
ModelConfig tiny_cfg(OutputMode mode = OutputMode::kMse) {
  ModelConfig c;
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

Tensor random_mat(int r, int c, Rng& rng, double s = 1.0) {
  Tensor t({r, c});
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = s * rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("location code basics") {
  Tensor z = location_code(0, 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(z.at(0, 2 * i) == doctest::Approx(0.0));
    CHECK(z.at(0, 2 * i + 1) == doctest::Approx(1.0));
  }
  Tensor one = location_code(1, 4);
  CHECK(one.at(0, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(one.at(0, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(one.at(0, 2) == doctest::Approx(std::sin(0.01)).epsilon(1e-9));
  CHECK(one.at(0, 3) == doctest::Approx(std::cos(0.01)).epsilon(1e-9));
  CHECK(one.at(0, 0) == doctest::Approx(0.84147).epsilon(1e-4));
  CHECK(one.at(0, 1) == doctest::Approx(0.54030).epsilon(1e-4));

  for (int n : {0, 17, 999, 1000000}) {
    Tensor c = location_code(n, 8);
    for (std::int64_t i = 0; i < c.size(); ++i) {
      CHECK(c.at(i) <= 1.0);
      CHECK(c.at(i) >= -1.0);
    }
  }
  CHECK_THROWS_AS(location_code(0, 3), NumericError);
}

TEST_CASE("pyramid encoder length law") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 11);
  Rng rng(2);

  auto t_h_of = [&](int t_x) {
    FeatureSequence x = random_mat(t_x, cfg.input_dim(), rng, 0.3);
    return pyramid_encode_value(cfg, params, x).rows();
  };
  CHECK(t_h_of(8) == 2);
  CHECK(t_h_of(9) == 3);  // padded to 12
  for (int t_x = 1; t_x <= 100; ++t_x) {
    CHECK(t_h_of(t_x) == (t_x + 3) / 4);
  }
}

TEST_CASE("zero input and zero parameters leave only the location codes") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 1);
  for (const auto& name : params.names()) params.value(name).fill(0.0);
  FeatureSequence x({8, cfg.input_dim()});
  Tensor h = pyramid_encode_value(cfg, params, x);
  Tensor codes = location_code_rows(2, cfg.encoder_out_dim());
  REQUIRE(h.rows() == 2);
  for (std::int64_t i = 0; i < h.size(); ++i)
    CHECK(h.at(i) == doctest::Approx(codes.at(i)).epsilon(1e-12));
}

TEST_CASE("attention scores: degenerate parameter cases") {
  Rng rng(5);
  const int t_h = 5, a_dim = 4, e_dim = 6, v_dim = 3, k = 2, l = 3;
  Tensor q = random_mat(1, a_dim, rng);
  Tensor h = random_mat(t_h, e_dim, rng);
  Tensor alpha({1, t_h});
  alpha.at(0, 0) = 0.25;
  alpha.at(0, 2) = 0.75;
  Tensor conv_f({k, 1, l});
  for (std::int64_t i = 0; i < conv_f.size(); ++i) conv_f.at(i) = rng.uniform(-1, 1);
  Tensor v = random_mat(1, v_dim, rng);
  Tensor b({v_dim});
  for (int i = 0; i < v_dim; ++i) b.at(i) = rng.uniform(-1, 1);
  Tensor w = random_mat(a_dim, e_dim, rng);
  Tensor u = random_mat(v_dim, k, rng);

  SUBCASE("W=0 and v=0 give identically zero scores") {
    Tensor w0({a_dim, e_dim});
    Tensor v0({1, v_dim});
    Tensor e = attention_scores_value(q, h, alpha, conv_f, v0, b, w0, u);
    for (int n = 0; n < t_h; ++n) CHECK(e.at(0, n) == doctest::Approx(0.0));
  }

  SUBCASE("U=0 and W=0 give a constant v^T tanh(b)") {
    Tensor w0({a_dim, e_dim});
    Tensor u0({v_dim, k});
    Tensor e = attention_scores_value(q, h, alpha, conv_f, v, b, w0, u0);
    double expected = 0;
    for (int i = 0; i < v_dim; ++i) expected += v.at(0, i) * std::tanh(b.at(i));
    for (int n = 0; n < t_h; ++n)
      CHECK(e.at(0, n) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("matches an independent direct summation") {
    Tensor e = attention_scores_value(q, h, alpha, conv_f, v, b, w, u);
    const int pad = (l - 1) / 2;
    for (int n = 0; n < t_h; ++n) {
      double content = 0;
      for (int a = 0; a < a_dim; ++a)
        for (int d = 0; d < e_dim; ++d)
          content += q.at(0, a) * w.at(a, d) * h.at(n, d);
      double loc = 0;
      for (int vi = 0; vi < v_dim; ++vi) {
        double pre = b.at(vi);
        for (int kk = 0; kk < k; ++kk) {
          double f = 0;
          for (int j = 0; j < l; ++j) {
            int src = n + j - pad;
            if (src < 0 || src >= t_h) continue;
            f += conv_f.at((kk * 1 + 0) * l + j) * alpha.at(0, src);
          }
          pre += u.at(vi, kk) * f;
        }
        loc += v.at(0, vi) * std::tanh(pre);
      }
      CHECK(e.at(0, n) == doctest::Approx(content + loc).epsilon(1e-10));
    }
  }
}

TEST_CASE("forward attention: initialization, hand case, support advance") {
  CHECK(initial_alignment(4).at(0, 0) == 1.0);
  CHECK(initial_alignment(4).at(0, 3) == 0.0);

  SUBCASE("uniform scores from the one-hot start give [0.5, 0.5, 0]") {
    Tensor e({1, 3});  // equal scores -> uniform softmax
    Tensor a0 = initial_alignment(3);
    Tensor a1 = forward_attention_value(e, a0);
    CHECK(a1.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a1.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a1.at(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("support advances at most one state per step, rows stay stochastic") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
      int t_h = rng.uniform_int(2, 9);
      int support_end = rng.uniform_int(0, t_h - 1);  // inclusive
      Tensor alpha({1, t_h});
      double total = 0;
      for (int n = 0; n <= support_end; ++n) {
        alpha.at(0, n) = rng.uniform(0.01, 1.0);
        total += alpha.at(0, n);
      }
      for (int n = 0; n <= support_end; ++n) alpha.at(0, n) /= total;
      Tensor e = random_mat(1, t_h, rng, 3.0);
      Tensor next = forward_attention_value(e, alpha);
      double sum = 0;
      for (int n = 0; n < t_h; ++n) {
        sum += next.at(0, n);
        if (n > support_end + 1) CHECK(next.at(0, n) == 0.0);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
  }

  SUBCASE("vanished forward mass raises a decode error") {
    Tensor alpha({1, 3});
    alpha.at(0, 2) = 1.0;  // all mass at the last state
    Tensor e({1, 3});
    e.at(0, 2) = -800.0;   // exp underflows to exactly zero
    CHECK_THROWS_AS(forward_attention_value(e, alpha), DecodeError);
  }
}

TEST_CASE("context vector: selection, averaging, direct summation") {
  Rng rng(9);
  Tensor h = random_mat(4, 6, rng);

  Tensor onehot({1, 4});
  onehot.at(0, 2) = 1.0;
  Tensor c = context_value(onehot, h);
  for (int d = 0; d < 6; ++d) CHECK(c.at(0, d) == doctest::Approx(h.at(2, d)));

  Tensor uniform({1, 4});
  uniform.fill(0.25);
  Tensor cm = context_value(uniform, h);
  for (int d = 0; d < 6; ++d) {
    double mean = (h.at(0, d) + h.at(1, d) + h.at(2, d) + h.at(3, d)) / 4.0;
    CHECK(cm.at(0, d) == doctest::Approx(mean).epsilon(1e-12));
  }

  Tensor alpha({1, 4});
  double total = 0;
  for (int n = 0; n < 4; ++n) {
    alpha.at(0, n) = rng.uniform(0.0, 1.0);
    total += alpha.at(0, n);
  }
  for (int n = 0; n < 4; ++n) alpha.at(0, n) /= total;
  Tensor cr = context_value(alpha, h);
  for (int d = 0; d < 6; ++d) {
    double acc = 0;
    for (int n = 0; n < 4; ++n) acc += alpha.at(0, n) * h.at(n, d);
    CHECK(cr.at(0, d) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("gmm partition: analytic cases") {
  const int m = 2, fb = 4;
  Tensor o({(2 * fb + 1) * m});

  SUBCASE("all-zero vector") {
    GmmFrameParams g = gmm_partition(o, m, fb);
    CHECK(g.weights.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.weights.at(1) == doctest::Approx(0.5).epsilon(1e-12));
    for (std::int64_t i = 0; i < g.deviations.size(); ++i)
      CHECK(g.deviations.at(i) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    for (std::int64_t i = 0; i < g.means.size(); ++i) CHECK(g.means.at(i) == 0.0);
  }

  SUBCASE("weights follow the softmax of the weight block") {
    o.at(0) = std::log(3.0);
    o.at(1) = 0.0;
    GmmFrameParams g = gmm_partition(o, m, fb);
    CHECK(g.weights.at(0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(g.weights.at(1) == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("softplus keeps deviations strictly positive") {
    for (int i = 0; i < m * fb; ++i) o.at(m + i) = -100.0;
    GmmFrameParams g = gmm_partition(o, m, fb);
    for (std::int64_t i = 0; i < g.deviations.size(); ++i)
      CHECK(g.deviations.at(i) > 0.0);
  }

  SUBCASE("wrong length is rejected") {
    Tensor bad({(2 * fb + 1) * m + 1});
    CHECK_THROWS_AS(gmm_partition(bad, m, fb), NumericError);
  }

  SUBCASE("random vectors keep the invariants (1000 trials)") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
      Tensor ov({(2 * fb + 1) * m});
      for (std::int64_t i = 0; i < ov.size(); ++i) ov.at(i) = rng.uniform(-6, 6);
      GmmFrameParams g = gmm_partition(ov, m, fb);
      double sum = 0;
      for (int i = 0; i < m; ++i) {
        sum += g.weights.at(i);
        for (int j = 0; j < fb; ++j) CHECK(g.deviations.at(i, j) > 0.0);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("gmm mean selection and tie handling") {
  GmmFrameParams g;
  g.weights = Tensor({2}, {0.3, 0.7});
  g.means = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  g.deviations = Tensor({2, 3}, {1, 1, 1, 1, 1, 1});
  Tensor sel = gmm_select_mean(g);
  CHECK(sel.at(0, 0) == 4.0);

  g.weights = Tensor({2}, {0.5, 0.5});
  sel = gmm_select_mean(g);
  CHECK(sel.at(0, 0) == 1.0);  // tie: lowest index

  GmmFrameParams one;
  one.weights = Tensor({1}, {1.0});
  one.means = Tensor({1, 2}, {8.0, 9.0});
  one.deviations = Tensor({1, 2}, {1.0, 1.0});
  Tensor s1 = gmm_select_mean(one);
  CHECK(s1.at(0, 1) == 9.0);
}

TEST_CASE("decoder step with zero projection parameters") {
  ModelConfig cfg = tiny_cfg(OutputMode::kMse);
  ParamStore params = init_params(cfg, 3);
  params.value("proj.mel.W").fill(0.0);
  params.value("proj.mel.b").fill(0.0);
  params.value("proj.end.W").fill(0.0);
  params.value("proj.end.b").fill(0.0);

  Tape tape;
  ParamBinder binder(tape, params, false);
  NetGraph net(tape, binder, cfg, nullptr);
  Rng rng(4);
  Var h = tape.constant(random_mat(3, cfg.encoder_out_dim(), rng));
  net.reset_decoder(3);
  auto step = net.decode_step(h, tape.constant(Tensor({1, cfg.d_mel})));
  for (std::int64_t i = 0; i < step.feedback.value().size(); ++i)
    CHECK(step.feedback.value().at(i) == 0.0);
  CHECK(step.p_end.value().at(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("postnet is the identity when its parameters are zero") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 5);
  for (const auto& name : params.names())
    if (name.rfind("post.", 0) == 0 && name.find(".ln_g") == std::string::npos)
      params.value(name).fill(0.0);
  Rng rng(6);
  for (int t_len : {1, 7, 64}) {
    FeatureSequence y = random_mat(t_len, cfg.d_mel, rng);
    Tensor z = postnet_value(cfg, params, y);
    REQUIRE(z.rows() == t_len);
    REQUIRE(z.cols() == cfg.d_mel);
    for (std::int64_t i = 0; i < y.size(); ++i)
      CHECK(z.at(i) == doctest::Approx(y.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("postnet output length equals input length with random parameters") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 8);
  Rng rng(61);
  for (int t_len : {1, 7, 64}) {
    FeatureSequence y = random_mat(t_len, cfg.d_mel, rng, 0.3);
    Tensor z = postnet_value(cfg, params, y);
    CHECK(z.rows() == t_len);
    CHECK(z.cols() == cfg.d_mel);
  }
}

TEST_CASE("finite differences: one full decoder step (both output modes)") {
  for (OutputMode mode : {OutputMode::kMse, OutputMode::kGmmMl}) {
    ModelConfig cfg = tiny_cfg(mode);
    ParamStore params = init_params(cfg, 21);
    Rng rng(22);
    params.create("test.h", random_mat(3, cfg.encoder_out_dim(), rng, 0.5));
    Tensor prev = random_mat(1, cfg.d_mel, rng, 0.5);
    Tensor y_block = random_mat(1, cfg.frame_block(), rng, 0.5);

    num::GraphFn graph = [&](Tape& t, ParamBinder& p) -> Var {
      NetGraph net(t, p, cfg, nullptr);
      net.reset_decoder(3);
      auto s = net.decode_step(p("test.h"), t.constant(prev));
      Var loss = sum_all(mul(s.feedback, s.feedback));
      loss = add(loss, sum_all(mul(s.alignment, s.alignment)));
      loss = add(loss, s.p_end);
      if (mode == OutputMode::kGmmMl)
        loss = add(loss, gmm_nll_g(s.gmm_o, y_block, cfg.mixtures, cfg.frame_block()));
      return loss;
    };
    FdReport rep = num::finite_difference_check(params, graph, 1e-5);
    INFO("worst param: ", rep.worst_param, " err ", rep.worst);
    CHECK(rep.worst < 1e-4);
  }
}

TEST_CASE("finite differences: postnet graph") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 31);
  Rng rng(32);
  Tensor y = random_mat(6, cfg.d_mel, rng, 0.5);
  num::GraphFn graph = [&](Tape& t, ParamBinder& p) -> Var {
    NetGraph net(t, p, cfg, nullptr);
    Var z = net.postnet(t.constant(y));
    return sum_all(mul(z, z));
  };
  FdReport rep = num::finite_difference_check(params, graph, 1e-5);
  INFO("worst param: ", rep.worst_param, " err ", rep.worst);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("finite differences: pyramid encoder graph") {
  ModelConfig cfg = tiny_cfg();
  ParamStore params = init_params(cfg, 41);
  Rng rng(42);
  params.create("test.x", random_mat(8, cfg.input_dim(), rng, 0.5));
  num::GraphFn graph = [&](Tape& t, ParamBinder& p) -> Var {
    NetGraph net(t, p, cfg, nullptr);
    Var h = net.encode(p("test.x"));
    return sum_all(mul(h, h));
  };
  FdReport rep = num::finite_difference_check(params, graph, 1e-5);
  INFO("worst param: ", rep.worst_param, " err ", rep.worst);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("MDN reduction: m=1 with unit deviations recovers the squared error") {
  // o_sigma set so softplus(o) = 1 exactly; weights are a single logit.
  const int fb = 6;
  const double o_sigma_unit = std::log(std::exp(1.0) - 1.0);
  Rng rng(55);
  Tensor mu = random_mat(1, fb, rng);
  Tensor y = random_mat(1, fb, rng);
  Tensor o({1, 2 * fb + 1});
  o.at(0, 0) = 0.37;  // arbitrary weight logit; softmax of one entry is 1
  for (int j = 0; j < fb; ++j) {
    o.at(0, 1 + j) = o_sigma_unit;
    o.at(0, 1 + fb + j) = mu.at(0, j);
  }
  Tape tape;
  Var nll = gmm_nll_g(tape.constant(o), y, 1, fb);
  double sse = 0;
  for (int j = 0; j < fb; ++j) {
    double d = y.at(0, j) - mu.at(0, j);
    sse += d * d;
  }
  const double norm_const = 0.5 * fb * std::log(2.0 * 3.14159265358979323846);
  CHECK(nll.value().at(0) - norm_const == doctest::Approx(0.5 * sse).epsilon(1e-10));

  // Gradients through a shared parameter vector must agree to 1e-9.
  ParamStore pa, pb;
  pa.create("theta", mu);
  pb.create("theta", mu);
  num::forward_backward(pa, [&](Tape& t, ParamBinder& p) -> Var {
    Var theta = p("theta");
    Tensor head({1, 1 + fb});
    head.at(0, 0) = 0.37;
    for (int j = 0; j < fb; ++j) head.at(0, 1 + j) = o_sigma_unit;
    Var ov = num::concat_cols({t.constant(head), theta});
    return gmm_nll_g(ov, y, 1, fb);
  });
  num::forward_backward(pb, [&](Tape& t, ParamBinder& p) -> Var {
    Var diff = sub(t.constant(y), p("theta"));
    return scale(sum_all(mul(diff, diff)), 0.5);
  });
  for (std::int64_t i = 0; i < pa.grad("theta").size(); ++i)
    CHECK(pa.grad("theta").at(i) == doctest::Approx(pb.grad("theta").at(i)).epsilon(1e-9));
}

TEST_CASE("convert: step cap semantics and row-stochastic alignments") {
  ModelConfig cfg = tiny_cfg(OutputMode::kMse);
  ParamStore params = init_params(cfg, 71);
  Rng rng(72);
  FeatureSequence x = random_mat(12, cfg.input_dim(), rng, 0.4);

  ConvertLimits limits;
  limits.max_steps = 1;
  ConvertResult res = convert(cfg, params, x, limits);
  CHECK(res.steps == 1);
  CHECK(res.mel.rows() == cfg.frames_per_step);
  CHECK(res.step_cap_hit);

  ConvertLimits full;
  ConvertResult r2 = convert(cfg, params, x, full);
  for (int t = 0; t < r2.alignment.rows(); ++t) {
    double sum = 0;
    for (int n = 0; n < r2.alignment.cols(); ++n) sum += r2.alignment.at(t, n);
    CHECK(std::fabs(sum - 1.0) < 1e-6);
  }
  CHECK(r2.p_end_trace.size() == static_cast<std::size_t>(r2.steps));
}

TEST_CASE("diagonal attention mode emits exactly the input length") {
  ModelConfig cfg = tiny_cfg(OutputMode::kMse);
  cfg.attention_mode = AttentionMode::kDiagonal;
  ParamStore params = init_params(cfg, 81);
  Rng rng(82);
  FeatureSequence x = random_mat(10, cfg.input_dim(), rng, 0.4);
  ConvertResult res = convert(cfg, params, x);
  CHECK(res.steps == 5);  // ceil(10 / r)
  CHECK(res.mel.rows() == 10);
  CHECK_FALSE(res.step_cap_hit);
  // one-hot alignments on the fixed diagonal
  for (int t = 0; t < res.alignment.rows(); ++t) {
    int expect = std::min(t * cfg.frames_per_step / cfg.downsample(),
                          res.alignment.cols() - 1);
    for (int n = 0; n < res.alignment.cols(); ++n)
      CHECK(res.alignment.at(t, n) == (n == expect ? 1.0 : 0.0));
  }
}

TEST_CASE("assemble_input honors the channel ablation flags") {
  ModelConfig cfg = tiny_cfg();
  Rng rng(91);
  FeatureSequence mel = random_mat(5, cfg.d_mel, rng);
  FeatureSequence aux = random_mat(5, cfg.d_aux, rng);

  FeatureSequence both = assemble_input(cfg, mel, aux);
  CHECK(both.cols() == cfg.d_mel + cfg.d_aux);
  CHECK(both.at(2, 0) == mel.at(2, 0));
  CHECK(both.at(2, cfg.d_mel) == aux.at(2, 0));

  cfg.use_aux_input = false;
  FeatureSequence mel_only = assemble_input(cfg, mel, aux);
  CHECK(mel_only.cols() == cfg.d_mel);

  cfg.use_aux_input = true;
  cfg.use_mel_input = false;
  FeatureSequence aux_only = assemble_input(cfg, mel, aux);
  CHECK(aux_only.cols() == cfg.d_aux);
}
