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
#include <limits>

#include "seqvc/align.hpp"
#include "seqvc/error.hpp"
#include "seqvc/rng.hpp"

using namespace seqvc;
using namespace seqvc::align;
using num::FeatureSequence;

namespace {

double frame_dist(const FeatureSequence& a, int i, const FeatureSequence& b, int j) {
  double acc = 0;
  for (int c = 0; c < a.cols(); ++c) {
    double d = a.at(i, c) - b.at(j, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Exhaustive enumeration over every monotone path, for the oracle.
double brute_force_cost(const FeatureSequence& a, const FeatureSequence& b, int i,
                        int j) {
  double here = frame_dist(a, i, b, j);
  if (i == 0 && j == 0) return here;
  double best = std::numeric_limits<double>::infinity();
  if (i > 0 && j > 0) best = std::min(best, brute_force_cost(a, b, i - 1, j - 1));
  if (j > 0) best = std::min(best, brute_force_cost(a, b, i, j - 1));
  if (i > 0) best = std::min(best, brute_force_cost(a, b, i - 1, j));
  return here + best;
}

FeatureSequence random_seq(int t, int d, Rng& rng) {
  FeatureSequence s({t, d});
  for (std::int64_t i = 0; i < s.size(); ++i) s.at(i) = rng.uniform(-1, 1);
  return s;
}

}  // namespace

TEST_CASE("identical sequences align on the pure diagonal with zero cost") {
  Rng rng(5);
  FeatureSequence a = random_seq(7, 3, rng);
  DtwPath p = dtw(a, a);
  CHECK(p.total_cost == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(p.pairs.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(p.pairs[static_cast<std::size_t>(i)].first == i);
    CHECK(p.pairs[static_cast<std::size_t>(i)].second == i);
  }
}

TEST_CASE("degenerate one-frame source expands over the target") {
  FeatureSequence a({1, 1}, {0.0});
  FeatureSequence b({3, 1}, {0.0, 0.0, 0.0});
  DtwPath p = dtw(a, b);
  CHECK(p.total_cost == doctest::Approx(0.0));
  REQUIRE(p.pairs.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(p.pairs[static_cast<std::size_t>(j)].first == 0);
    CHECK(p.pairs[static_cast<std::size_t>(j)].second == j);
  }
}

TEST_CASE("dtw matches exhaustive path enumeration on 100 random short pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    int ta = rng.uniform_int(1, 6);
    int tb = rng.uniform_int(1, 6);
    FeatureSequence a = random_seq(ta, 2, rng);
    FeatureSequence b = random_seq(tb, 2, rng);
    DtwPath p = dtw(a, b);
    double oracle = brute_force_cost(a, b, ta - 1, tb - 1);
    CHECK(p.total_cost == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("dtw path obeys the step and boundary constraints") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureSequence a = random_seq(rng.uniform_int(2, 12), 3, rng);
    FeatureSequence b = random_seq(rng.uniform_int(2, 12), 3, rng);
    DtwPath p = dtw(a, b);
    REQUIRE_FALSE(p.pairs.empty());
    CHECK(p.pairs.front() == std::make_pair(0, 0));
    CHECK(p.pairs.back() == std::make_pair(a.rows() - 1, b.rows() - 1));
    for (std::size_t k = 1; k < p.pairs.size(); ++k) {
      int di = p.pairs[k].first - p.pairs[k - 1].first;
      int dj = p.pairs[k].second - p.pairs[k - 1].second;
      CHECK(di >= 0);
      CHECK(dj >= 0);
      CHECK(di + dj >= 1);
      CHECK(di <= 1);
      CHECK(dj <= 1);
    }
  }
}

TEST_CASE("dtw cost is symmetric under argument swap") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    FeatureSequence a = random_seq(rng.uniform_int(2, 9), 2, rng);
    FeatureSequence b = random_seq(rng.uniform_int(2, 9), 2, rng);
    CHECK(dtw(a, b).total_cost == doctest::Approx(dtw(b, a).total_cost).epsilon(1e-9));
  }
}

TEST_CASE("dtw rejects empty and mismatched inputs") {
  FeatureSequence a({2, 3});
  FeatureSequence b({2, 4});
  CHECK_THROWS_AS(dtw(a, b), DataError);
}

TEST_CASE("warp_to_target: diagonal path is the identity") {
  Rng rng(3);
  FeatureSequence a = random_seq(5, 2, rng);
  DtwPath p = dtw(a, a);
  FeatureSequence w = warp_to_target(a, p);
  REQUIRE(w.rows() == a.rows());
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(w.at(i) == doctest::Approx(a.at(i)));
}

TEST_CASE("warp_to_target: single-source path yields a constant sequence") {
  FeatureSequence a({1, 2}, {3.0, -1.0});
  DtwPath p;
  p.pairs = {{0, 0}, {0, 1}, {0, 2}, {0, 3}};
  FeatureSequence w = warp_to_target(a, p);
  REQUIRE(w.rows() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(w.at(j, 0) == 3.0);
    CHECK(w.at(j, 1) == -1.0);
  }
}

TEST_CASE("warping toward the target does not increase dtw cost") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    FeatureSequence a = random_seq(rng.uniform_int(4, 10), 3, rng);
    FeatureSequence b = random_seq(rng.uniform_int(4, 10), 3, rng);
    DtwPath p = dtw(a, b);
    FeatureSequence w = warp_to_target(a, p);
    DtwPath p2 = dtw(w, b);
    CHECK(p2.total_cost <= p.total_cost + 1e-9);
  }
}

TEST_CASE("interpolate_source: identity, doubling, constants") {
  Rng rng(7);
  FeatureSequence a = random_seq(6, 2, rng);
  FeatureSequence same = interpolate_source(a, 1.0);
  REQUIRE(same.rows() == 6);
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(same.at(i) == doctest::Approx(a.at(i)));

  FeatureSequence two({2, 1}, {0.0, 1.0});
  FeatureSequence dbl = interpolate_source(two, 2.0);
  REQUIRE(dbl.rows() == 4);
  CHECK(dbl.at(0, 0) == doctest::Approx(0.0));
  CHECK(dbl.at(3, 0) == doctest::Approx(1.0));
  for (int i = 1; i < 3; ++i) {
    double pos = i / 3.0;
    CHECK(dbl.at(i, 0) == doctest::Approx(pos));
  }

  FeatureSequence c({4, 1}, {2.0, 2.0, 2.0, 2.0});
  for (double rho : {0.3, 0.77, 1.9}) {
    FeatureSequence out = interpolate_source(c, rho);
    for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(2.0));
  }
}

TEST_CASE("interpolation stays within per-dimension bounds") {
  Rng rng(51);
  FeatureSequence a = random_seq(9, 3, rng);
  double lo[3], hi[3];
  for (int c = 0; c < 3; ++c) {
    lo[c] = hi[c] = a.at(0, c);
    for (int i = 1; i < a.rows(); ++i) {
      lo[c] = std::min(lo[c], a.at(i, c));
      hi[c] = std::max(hi[c], a.at(i, c));
    }
  }
  for (double rho : {0.4, 1.3, 2.0}) {
    FeatureSequence out = interpolate_source(a, rho);
    for (int i = 0; i < out.rows(); ++i)
      for (int c = 0; c < 3; ++c) {
        CHECK(out.at(i, c) >= lo[c] - 1e-12);
        CHECK(out.at(i, c) <= hi[c] + 1e-12);
      }
  }
}

TEST_CASE("interpolate_source rejects bad ratios") {
  FeatureSequence a({2, 1}, {0.0, 1.0});
  CHECK_THROWS_AS(interpolate_source(a, 0.0), ConfigError);
  CHECK_THROWS_AS(interpolate_source(a, 0.1), DataError);  // rounds to zero frames
}

TEST_CASE("duration_ratio basics") {
  CHECK(duration_ratio({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(duration_ratio({1, 2, 3}, {2, 4, 6}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(duration_ratio({}, {}), DataError);
  CHECK_THROWS_AS(duration_ratio({1.0}, {1.0, 2.0}), DataError);
}
