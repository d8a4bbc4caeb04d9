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
#include <utility>
#include <vector>

#include "seqvc/tensor.hpp"

namespace seqvc::align {

using num::FeatureSequence;

enum class Metric {
  kEuclidean,         // L2 over feature dims
  kSquaredEuclidean,  // squared L2
};

// Monotone alignment path between two sequences. Starts at (0,0), ends at
// (T_a-1, T_b-1); each step advances (1,0), (0,1) or (1,1).
struct DtwPath {
  std::vector<std::pair<int, int>> pairs;  // (source index, target index)
  double total_cost = 0.0;
};

// Globally optimal path under the step set above. Ties during backtracking
// prefer the diagonal step, then (0,1), then (1,0).
DtwPath dtw(const FeatureSequence& a, const FeatureSequence& b,
            Metric metric = Metric::kEuclidean);

// Re-times `a` onto the target axis of the path: output row j collects the
// source frames paired with target index j, averaged when there are several.
FeatureSequence warp_to_target(const FeatureSequence& a, const DtwPath& path);

// Linear time interpolation to round(ratio * T) frames, endpoints preserved.
FeatureSequence interpolate_source(const FeatureSequence& a, double ratio);

// Total target duration over total source duration for a training split.
double duration_ratio(const std::vector<double>& source_durations,
                      const std::vector<double>& target_durations);

}  // namespace seqvc::align
