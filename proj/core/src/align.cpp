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

#include "seqvc/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqvc/error.hpp"

namespace seqvc::align {

namespace {

double frame_distance(const FeatureSequence& a, int i, const FeatureSequence& b,
                      int j, Metric metric) {
  const int d = a.cols();
  double acc = 0;
  const double* ra = a.data() + static_cast<std::size_t>(i) * d;
  const double* rb = b.data() + static_cast<std::size_t>(j) * d;
  for (int c = 0; c < d; ++c) {
    double diff = ra[c] - rb[c];
    acc += diff * diff;
  }
  return metric == Metric::kEuclidean ? std::sqrt(acc) : acc;
}

}  // namespace

DtwPath dtw(const FeatureSequence& a, const FeatureSequence& b, Metric metric) {
  if (a.rank() != 2 || b.rank() != 2) throw DataError("dtw: rank-2 inputs required");
  if (a.rows() < 1 || b.rows() < 1) throw DataError("dtw: empty input");
  if (a.cols() != b.cols()) throw DataError("dtw: feature dimension mismatch");
  const int n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> acc(static_cast<std::size_t>(n) * m, inf);
  auto idx = [m](int i, int j) { return static_cast<std::size_t>(i) * m + j; };
  acc[idx(0, 0)] = frame_distance(a, 0, b, 0, metric);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == 0 && j == 0) continue;
      double best = inf;
      if (i > 0 && j > 0) best = std::min(best, acc[idx(i - 1, j - 1)]);
      if (j > 0) best = std::min(best, acc[idx(i, j - 1)]);
      if (i > 0) best = std::min(best, acc[idx(i - 1, j)]);
      acc[idx(i, j)] = best + frame_distance(a, i, b, j, metric);
    }
  }

  DtwPath path;
  path.total_cost = acc[idx(n - 1, m - 1)];
  int i = n - 1, j = m - 1;
  path.pairs.emplace_back(i, j);
  while (i > 0 || j > 0) {
    // Tie preference: diagonal, then (0,1), then (1,0).
    double diag = (i > 0 && j > 0) ? acc[idx(i - 1, j - 1)] : inf;
    double left = j > 0 ? acc[idx(i, j - 1)] : inf;
    double up = i > 0 ? acc[idx(i - 1, j)] : inf;
    if (diag <= left && diag <= up) {
      --i; --j;
    } else if (left <= up) {
      --j;
    } else {
      --i;
    }
    path.pairs.emplace_back(i, j);
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

FeatureSequence warp_to_target(const FeatureSequence& a, const DtwPath& path) {
  if (path.pairs.empty()) throw DataError("warp_to_target: empty path");
  const int ty = path.pairs.back().second + 1;
  const int d = a.cols();
  FeatureSequence out({ty, d});
  std::vector<int> counts(static_cast<std::size_t>(ty), 0);
  for (const auto& [si, tj] : path.pairs) {
    if (si < 0 || si >= a.rows() || tj < 0 || tj >= ty)
      throw DataError("warp_to_target: path index out of range");
    for (int c = 0; c < d; ++c) out.at(tj, c) += a.at(si, c);
    counts[static_cast<std::size_t>(tj)]++;
  }
  for (int j = 0; j < ty; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0)
      throw DataError("warp_to_target: target index not covered by path");
    for (int c = 0; c < d; ++c) out.at(j, c) /= counts[static_cast<std::size_t>(j)];
  }
  return out;
}

FeatureSequence interpolate_source(const FeatureSequence& a, double ratio) {
  if (ratio <= 0) throw ConfigError("interpolate_source: ratio must be > 0");
  const int t_in = a.rows();
  const int d = a.cols();
  const int t_out = static_cast<int>(std::lround(ratio * t_in));
  if (t_out < 1) throw DataError("interpolate_source: output would be empty");
  FeatureSequence out({t_out, d});
  if (t_out == 1) {
    for (int c = 0; c < d; ++c) out.at(0, c) = a.at(0, c);
    return out;
  }
  for (int i = 0; i < t_out; ++i) {
    double pos = static_cast<double>(i) * (t_in - 1) / (t_out - 1);
    int lo = static_cast<int>(pos);
    int hi = std::min(lo + 1, t_in - 1);
    double frac = pos - lo;
    for (int c = 0; c < d; ++c)
      out.at(i, c) = (1.0 - frac) * a.at(lo, c) + frac * a.at(hi, c);
  }
  return out;
}

double duration_ratio(const std::vector<double>& source_durations,
                      const std::vector<double>& target_durations) {
  if (source_durations.empty() || source_durations.size() != target_durations.size())
    throw DataError("duration_ratio: empty or mismatched training split");
  double src = 0, tgt = 0;
  for (double v : source_durations) src += v;
  for (double v : target_durations) tgt += v;
  if (src <= 0) throw DataError("duration_ratio: zero source duration");
  return tgt / src;
}

}  // namespace seqvc::align
