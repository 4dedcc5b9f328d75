// Copyright 2026 The MoMent Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MOMENT_METRICS_HPP_
#define MOMENT_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace moment::metrics {

// Mann-Whitney statistic (#{pos > neg} + 0.5 #{pos = neg}) / (P N), computed
// from mid-ranks in O(n log n). Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

// Mean, over positives in descending score order, of the precision at each
// positive's rank. Equal scores keep their input order.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Sum over classes of (support / N) * precision; a class that is never
// predicted has precision 0.
double weighted_precision(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::size_t num_classes);

// Spearman rank correlation with mid-ranks for ties. Returns 0 when either
// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// Mid-ranks (1-based) of the values.
std::vector<double> mid_ranks(std::span<const double> values);

}  // namespace moment::metrics

#endif  // MOMENT_METRICS_HPP_
