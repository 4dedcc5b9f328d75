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

#include "moment/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "moment/common.hpp"

namespace moment::synth {

void SynthConfig::validate() const {
  if (num_nodes < 2) throw ValidationError("num_nodes must be at least 2");
  if (num_communities == 0) throw ValidationError("num_communities must be positive");
  if (num_communities > num_nodes) throw ValidationError("infeasible config: more communities than nodes");
  if (num_events == 0) throw ValidationError("num_events must be positive");
  if (feat_dim == 0) throw ValidationError("feat_dim must be positive");
  if (!(intra_community_edge_prob >= 0.0 && intra_community_edge_prob <= 1.0)) {
    throw ValidationError("intra_community_edge_prob must lie in [0, 1]");
  }
  if (!(rate_low > 0.0) || !(rate_high > 0.0)) throw ValidationError("rates must be positive");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
  if (!(inductive_fraction > 0.0 && inductive_fraction < 1.0)) {
    throw ValidationError("inductive_fraction must lie in (0, 1)");
  }
  if (!(rate_match_boost > 0.0)) throw ValidationError("rate_match_boost must be positive");
  if (!std::isfinite(rate_popularity_power)) throw ValidationError("rate_popularity_power must be finite");
  if (label_buckets == 0) throw ValidationError("label_buckets must be positive");
  const auto held_out = static_cast<std::size_t>(std::floor(inductive_fraction * num_nodes + 1e-9));
  if (held_out == 0 || held_out + 2 > num_nodes) {
    throw ValidationError("infeasible config: inductive_fraction leaves no held-out or no active nodes");
  }
}

namespace {

std::size_t split_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

// Draws an index with probability proportional to weights; all-zero weights
// are a caller error.
std::size_t draw_weighted(std::span<const double> weights, double total, CounterRng& rng) {
  double target = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (target < weights[i]) return i;
    target -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  throw RuntimeFailure("draw_weighted: no positive weight");
}

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.num_nodes;
  const std::size_t c = config.num_communities;
  const std::size_t d = config.feat_dim;
  SynthOutput out;
  SynthTruth& truth = out.truth;

  CounterRng assign_rng(config.seed, stream_id("synth.assign"));
  std::vector<std::uint32_t> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = static_cast<std::uint32_t>(i % c);
  for (std::size_t i = n; i-- > 1;) std::swap(slots[i], slots[assign_rng.below(i + 1)]);
  truth.community = slots;
  truth.rate_class.resize(n);
  for (auto& r : truth.rate_class) r = static_cast<std::uint8_t>(assign_rng.below(2));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[assign_rng.below(i + 1)]);
  const auto held_out = static_cast<std::size_t>(std::floor(config.inductive_fraction * n + 1e-9));
  truth.inductive.assign(n, 0);
  for (std::size_t i = 0; i < held_out; ++i) truth.inductive[order[i]] = 1;

  std::vector<double> rate(n);
  for (std::size_t u = 0; u < n; ++u) rate[u] = truth.rate_class[u] ? config.rate_high : config.rate_low;

  // Node features: community centroid plus isotropic noise.
  CounterRng feat_rng(config.seed, stream_id("synth.features"));
  std::vector<double> centroids(c * d);
  for (double& v : centroids) v = feat_rng.normal();
  graph::FeatureTable node_feat{n, d, std::vector<double>(n * d)};
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t j = 0; j < d; ++j) {
      node_feat.data[u * d + j] =
          as_float(centroids[truth.community[u] * d + j] + config.noise_sigma * feat_rng.normal());
    }
  }

  // Superposed per-node Poisson processes: with the horizon below, each node
  // emits source events at its own rate.
  const double total_rate = std::accumulate(rate.begin(), rate.end(), 0.0);
  truth.horizon = static_cast<double>(config.num_events) / total_rate;
  const double cut = 0.85 * truth.horizon;
  const std::size_t n_early =
      split_count(config.num_events, 0.7) + split_count(config.num_events, 0.15);

  CounterRng time_rng(config.seed, stream_id("synth.times"));
  std::vector<double> times(config.num_events);
  for (std::size_t i = 0; i < config.num_events; ++i) {
    times[i] = i < n_early ? time_rng.uniform() * cut : cut + time_rng.uniform() * (truth.horizon - cut);
  }
  std::sort(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n_early));
  std::sort(times.begin() + static_cast<std::ptrdiff_t>(n_early), times.end());

  CounterRng edge_rng(config.seed, stream_id("synth.edges"));
  std::vector<graph::TemporalEvent> events;
  events.reserve(config.num_events);
  std::vector<double> edge_data;
  edge_data.reserve(config.num_events * d);
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < config.num_events; ++i) {
    const bool late = i >= n_early;
    double total = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      weights[u] = (late || !truth.inductive[u]) ? rate[u] : 0.0;
      total += weights[u];
    }
    const std::size_t src = draw_weighted(weights, total, edge_rng);
    const bool intra = edge_rng.uniform() < config.intra_community_edge_prob;
    const std::uint32_t target = intra ? truth.community[src] : static_cast<std::uint32_t>((truth.community[src] + 1) % c);

    const auto fill = [&](bool restrict_community) {
      total = 0.0;
      for (std::size_t v = 0; v < n; ++v) {
        double w = 0.0;
        if (v != src && (late || !truth.inductive[v]) && (!restrict_community || truth.community[v] == target)) {
          w = std::pow(rate[v], config.rate_popularity_power);
          if (truth.rate_class[v] == truth.rate_class[src]) w *= config.rate_match_boost;
        }
        weights[v] = w;
        total += w;
      }
    };
    fill(true);
    if (total <= 0.0) fill(false);
    const std::size_t dst = draw_weighted(weights, total, edge_rng);

    for (std::size_t j = 0; j < d; ++j) {
      const double mean = 0.5 * (centroids[truth.community[src] * d + j] + centroids[truth.community[dst] * d + j]);
      edge_data.push_back(as_float(mean + config.noise_sigma * edge_rng.normal()));
    }
    graph::TemporalEvent e;
    e.src = static_cast<graph::NodeId>(src);
    e.dst = static_cast<graph::NodeId>(dst);
    e.t = times[i];
    e.edge_feat_row = i;
    e.label = static_cast<std::uint32_t>((truth.community[src] + truth.community[dst]) % config.label_buckets);
    events.push_back(e);
  }

  graph::FeatureTable edge_feat{config.num_events, d, std::move(edge_data)};
  out.dataset = graph::make_dataset(std::move(events), std::move(node_feat), std::move(edge_feat));
  return out;
}

void write_truth_json(const std::filesystem::path& path, const SynthTruth& truth) {
  nlohmann::json j;
  j["horizon"] = truth.horizon;
  j["community"] = truth.community;
  j["rate_class"] = truth.rate_class;
  j["inductive"] = truth.inductive;
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> values) {
  if (values.empty()) throw ValidationError("kde: empty input");
  const double n = static_cast<double>(values.size());
  double sd = 0.0;
  if (values.size() > 1) {
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return std::max(0.9 * spread * std::pow(n, -0.2), 1e-6);
}

double kde_at(std::span<const double> values, double bandwidth, double x) {
  const double norm = 1.0 / (static_cast<double>(values.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double total = 0.0;
  for (double v : values) {
    const double z = (x - v) / bandwidth;
    total += std::exp(-0.5 * z * z);
  }
  return total * norm;
}

KdeCurve kde(std::span<const double> values, std::size_t grid_points) {
  if (values.empty()) throw ValidationError("kde: empty input");
  if (grid_points < 2) throw ValidationError("kde: need at least two grid points");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("kde: non-finite value");
  }
  KdeCurve curve;
  curve.bandwidth = silverman_bandwidth(values);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it - 3.0 * curve.bandwidth;
  const double hi = *hi_it + 3.0 * curve.bandwidth;
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  curve.grid.resize(grid_points);
  curve.density.resize(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    curve.grid[i] = lo + step * static_cast<double>(i);
    curve.density[i] = kde_at(values, curve.bandwidth, curve.grid[i]);
  }
  return curve;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("trapezoid: length mismatch");
  double total = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) total += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return total;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
  }
  return out;
}

double overlap_coefficient(std::span<const double> a, std::span<const double> b, std::size_t grid_points) {
  if (a.empty() || b.empty()) throw ValidationError("overlap_coefficient: empty input");
  std::vector<double> joint(a.begin(), a.end());
  joint.insert(joint.end(), b.begin(), b.end());
  const std::vector<double> scaled = min_max_normalize(joint);
  const std::span<const double> sa(scaled.data(), a.size());
  const std::span<const double> sb(scaled.data() + a.size(), b.size());
  const double ha = silverman_bandwidth(sa), hb = silverman_bandwidth(sb);
  const double lo = std::min(-3.0 * ha, -3.0 * hb);
  const double hi = 1.0 + std::max(3.0 * ha, 3.0 * hb);
  std::vector<double> x(grid_points), y(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    y[i] = std::min(kde_at(sa, ha, x[i]), kde_at(sb, hb, x[i]));
  }
  return trapezoid(x, y);
}

void write_kde_csv(const std::filesystem::path& path, const KdeCurve& curve) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os << "x,density\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    os.write(buf, std::to_chars(buf, buf + sizeof buf, curve.grid[i]).ptr - buf);
    os << ',';
    os.write(buf, std::to_chars(buf, buf + sizeof buf, curve.density[i]).ptr - buf);
    os << '\n';
  }
  if (!os) throw RuntimeFailure("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

std::map<std::string, std::vector<double>> original_populations(const graph::DyTagDataset& dataset,
                                                                graph::IndexRange range,
                                                                const nn::EncoderConfig& config) {
  if (range.size() == 0) throw ValidationError("original_populations: empty event range");
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  const nn::TimeEncoder phi("phi", config.d_t);
  std::map<std::string, std::vector<double>> pops;
  auto& textual = pops["textual"];
  auto& temporal = pops["temporal"];
  auto& structural = pops["structural"];
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const graph::TemporalEvent& e = dataset.events[i];
    const auto feat = dataset.node_features.row(e.src);
    textual.insert(textual.end(), feat.begin(), feat.end());
    const std::vector<double> now = phi.encode(e.t);
    for (double tb : index.recent_behaviors(e.src, e.t, config.iota, config.l_behaviors,
                                            config.include_current_behavior)) {
      const std::vector<double> enc = phi.encode(tb);
      temporal.insert(temporal.end(), now.begin(), now.end());
      temporal.insert(temporal.end(), enc.begin(), enc.end());
    }
    for (const graph::Incidence& inc : index.recent_neighbors(e.src, e.t, config.k_neighbors)) {
      const auto edge = dataset.edge_features.row(inc.edge_feat_row);
      const std::vector<double> enc = phi.encode(e.t - inc.t);
      structural.insert(structural.end(), edge.begin(), edge.end());
      structural.insert(structural.end(), enc.begin(), enc.end());
    }
  }
  return pops;
}

std::map<std::string, std::vector<double>> token_populations(train::MomentModel& model,
                                                             const graph::DyTagDataset& dataset,
                                                             graph::IndexRange range) {
  if (range.size() == 0) throw ValidationError("token_populations: empty event range");
  const graph::NeighborIndex index(dataset.events, dataset.num_nodes);
  const train::GraphContext ctx{&dataset, &index};
  const std::size_t batch_size = model.config().batch_size;
  std::map<std::string, std::vector<double>> pops;
  const auto append = [](std::vector<double>& dst, const ad::Tensor& t) {
    dst.insert(dst.end(), t.data().begin(), t.data().end());
  };
  for (std::size_t begin = range.begin; begin < range.end; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, range.end);
    std::vector<graph::NodeId> nodes;
    std::vector<double> times;
    for (std::size_t i = begin; i < end; ++i) {
      nodes.push_back(dataset.events[i].src);
      times.push_back(dataset.events[i].t);
    }
    ad::Tape tape(false, model.config().seed, 0, false);
    const fusion::ModalityTokens tokens = model.encode(tape, ctx, nodes, times);
    append(pops["textual"], tokens.zx.value());
    append(pops["temporal"], tokens.ztau.value());
    append(pops["structural"], tokens.zs.value());
    append(pops["internal"], tokens.zpi.value());
  }
  return pops;
}

std::map<std::string, KdeCurve> export_modality_distributions(
    const std::map<std::string, std::vector<double>>& populations, const std::string& mode,
    const std::filesystem::path& out_dir, std::size_t grid_points) {
  if (mode != "orig" && mode != "token") throw ValidationError("kde mode must be 'orig' or 'token'");
  std::filesystem::create_directories(out_dir);
  std::map<std::string, KdeCurve> curves;
  for (const auto& [modality, values] : populations) {
    if (values.empty()) throw ValidationError("modality '" + modality + "' has no values");
    KdeCurve curve = kde(min_max_normalize(values), grid_points);
    write_kde_csv(out_dir / ("kde_" + modality + "_" + mode + ".csv"), curve);
    curves.emplace(modality, std::move(curve));
  }
  return curves;
}

}  // namespace moment::synth
