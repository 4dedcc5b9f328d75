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

// Synthetic dynamic text-attributed graphs and density analysis of modality
// values.

#ifndef MOMENT_SYNTH_HPP_
#define MOMENT_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moment/graph_store.hpp"
#include "moment/trainer.hpp"

namespace moment::synth {

struct SynthConfig {
  std::size_t num_nodes = 300;
  std::size_t num_communities = 6;
  std::size_t num_events = 6000;
  std::size_t feat_dim = 64;
  double intra_community_edge_prob = 0.8;
  double rate_low = 1.0;
  double rate_high = 4.0;
  double noise_sigma = 0.3;
  double inductive_fraction = 0.1;
  // Destination weight multiplier when both endpoints share a rate class.
  double rate_match_boost = 4.0;
  // Destinations are weighted by rate^rate_popularity_power.
  double rate_popularity_power = 2.0;
  // Edge labels are (c_src + c_dst) mod label_buckets.
  std::size_t label_buckets = 4;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthTruth {
  std::vector<std::uint32_t> community;
  std::vector<std::uint8_t> rate_class;  // 0 = low, 1 = high
  std::vector<std::uint8_t> inductive;
  double horizon = 0.0;
};

struct SynthOutput {
  graph::DyTagDataset dataset;
  SynthTruth truth;
};

SynthOutput generate(const SynthConfig& config);

void write_truth_json(const std::filesystem::path& path, const SynthTruth& truth);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// Silverman bandwidth 0.9 * min(sd, IQR / 1.34) * n^(-1/5), floored at 1e-6.
// A zero IQR falls back to sd alone.
double silverman_bandwidth(std::span<const double> values);
// Gaussian kernel density at x.
double kde_at(std::span<const double> values, double bandwidth, double x);
// Density on `grid_points` evenly spaced points over [min - 3h, max + 3h].
KdeCurve kde(std::span<const double> values, std::size_t grid_points = 512);

double trapezoid(std::span<const double> x, std::span<const double> y);

// Maps values to [0, 1] by (v - lo) / (hi - lo); constant input maps to 0.
std::vector<double> min_max_normalize(std::span<const double> values);

// Integral of min(f_a, f_b) for the KDEs of a and b, both first scaled by the
// min and max of their union.
double overlap_coefficient(std::span<const double> a, std::span<const double> b,
                           std::size_t grid_points = 512);

void write_kde_csv(const std::filesystem::path& path, const KdeCurve& curve);

// Pooled per-dimension scalars of each modality for the events of `range`,
// queried as (src, t). Orig mode: node features, behavior rows
// [phi(t) || phi(t')], neighbor rows [edge_feat || phi(dt)].
std::map<std::string, std::vector<double>> original_populations(const graph::DyTagDataset& dataset,
                                                                graph::IndexRange range,
                                                                const nn::EncoderConfig& config);

// Token mode: Zx, Ztau, Zs, Zpi from the model in fixed chronological batches.
std::map<std::string, std::vector<double>> token_populations(train::MomentModel& model,
                                                             const graph::DyTagDataset& dataset,
                                                             graph::IndexRange range);

// Min-max normalises each population, runs kde and writes
// kde_<modality>_<mode>.csv under out_dir. Returns the curves by modality.
std::map<std::string, KdeCurve> export_modality_distributions(
    const std::map<std::string, std::vector<double>>& populations, const std::string& mode,
    const std::filesystem::path& out_dir, std::size_t grid_points = 512);

}  // namespace moment::synth

#endif  // MOMENT_SYNTH_HPP_
