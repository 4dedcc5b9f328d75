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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "moment/common.hpp"
#include "moment/synth.hpp"

namespace moment::synth {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path p = fs::temp_directory_path() / (std::string("moment_sy_") + info->name() + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Generate, ZeroNoiseGivesIdenticalCommunityFeatures) {
  SynthConfig c;
  c.noise_sigma = 0.0;
  c.num_events = 500;
  const SynthOutput out = generate(c);
  const auto& f = out.dataset.node_features;
  for (std::size_t u = 0; u < c.num_nodes; ++u)
    for (std::size_t v = u + 1; v < c.num_nodes; ++v)
      if (out.truth.community[u] == out.truth.community[v]) {
        ASSERT_TRUE(std::equal(f.row(u).begin(), f.row(u).end(), f.row(v).begin())) << u << " " << v;
      }
}

TEST(Generate, ExactlyThirtyNodesHeldOut) {
  const SynthOutput out = generate(SynthConfig{});
  const double cut = 0.85 * out.truth.horizon;
  std::vector<bool> early(300, false);
  for (const auto& e : out.dataset.events)
    if (e.t < cut) early[e.src] = early[e.dst] = true;
  std::size_t absent = 0;
  for (std::size_t u = 0; u < 300; ++u) {
    absent += !early[u];
    if (out.truth.inductive[u]) EXPECT_FALSE(early[u]) << u;
  }
  EXPECT_EQ(absent, 30u);
  EXPECT_EQ(std::count(out.truth.inductive.begin(), out.truth.inductive.end(), 1), 30);
}

TEST(Generate, DatasetInvariantsAndInductiveSplit) {
  const SynthOutput out = generate(SynthConfig{});
  EXPECT_NO_THROW(out.dataset.validate());
  EXPECT_EQ(out.dataset.events.size(), 6000u);
  EXPECT_EQ(out.dataset.num_nodes, 300u);
  EXPECT_EQ(out.dataset.node_features.cols, 64u);
  EXPECT_EQ(out.dataset.edge_features.rows, 6000u);
  EXPECT_EQ(out.dataset.num_classes, 4u);
  const auto split = graph::chronological_split(out.dataset);
  EXPECT_FALSE(split.inductive_nodes.empty());
  for (graph::NodeId u : split.inductive_nodes) EXPECT_EQ(out.truth.inductive[u], 1);
  for (std::size_t i = 0; i < split.test.begin; ++i) {
    EXPECT_FALSE(split.is_inductive(out.dataset.events[i].src));
    EXPECT_FALSE(split.is_inductive(out.dataset.events[i].dst));
  }
}

TEST(Generate, PlantedStructureIsPresent) {
  const SynthOutput out = generate(SynthConfig{});
  const auto& comm = out.truth.community;
  std::size_t intra = 0, partner = 0, match = 0;
  for (const auto& e : out.dataset.events) {
    intra += comm[e.src] == comm[e.dst];
    partner += comm[e.dst] == (comm[e.src] + 1) % 6;
    match += out.truth.rate_class[e.src] == out.truth.rate_class[e.dst];
    EXPECT_NE(e.src, e.dst);
    EXPECT_EQ(e.label, (comm[e.src] + comm[e.dst]) % 4);
  }
  const double n = 6000.0;
  EXPECT_NEAR(intra / n, 0.8, 0.03);
  EXPECT_NEAR(partner / n, 0.2, 0.03);
  EXPECT_GT(match / n, 0.6);
  // High-rate nodes emit about four times as many source events.
  std::vector<double> per_class(2, 0.0), nodes(2, 0.0);
  for (std::size_t u = 0; u < 300; ++u) nodes[out.truth.rate_class[u]] += 1.0;
  for (const auto& e : out.dataset.events) per_class[out.truth.rate_class[e.src]] += 1.0;
  EXPECT_NEAR((per_class[1] / nodes[1]) / (per_class[0] / nodes[0]), 4.0, 0.5);
}

TEST(Generate, DeterministicBytes) {
  const fs::path a = temp_dir("a"), b = temp_dir("b");
  SynthConfig c;
  c.num_events = 800;
  graph::save_dataset(a, generate(c).dataset);
  graph::save_dataset(b, generate(c).dataset);
  for (const char* f : {"edges.csv", "node_feat.fbin", "edge_feat.fbin"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  c.seed = 8;
  graph::save_dataset(b, generate(c).dataset);
  EXPECT_NE(slurp(a / "edges.csv"), slurp(b / "edges.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Generate, InfeasibleConfigsRejected) {
  SynthConfig c;
  c.num_communities = 301;
  EXPECT_THROW(generate(c), ValidationError);
  c = SynthConfig{};
  c.intra_community_edge_prob = 1.5;
  EXPECT_THROW(generate(c), ValidationError);
  c = SynthConfig{};
  c.rate_low = 0.0;
  EXPECT_THROW(generate(c), ValidationError);
  c = SynthConfig{};
  c.inductive_fraction = 1.0;
  EXPECT_THROW(generate(c), ValidationError);
}

TEST(Generate, TruthSidecar) {
  SynthConfig c;
  c.num_events = 300;
  const SynthOutput out = generate(c);
  const fs::path dir = temp_dir("truth");
  write_truth_json(dir / "truth.json", out.truth);
  const auto j = nlohmann::json::parse(slurp(dir / "truth.json"));
  EXPECT_EQ(j.at("community").size(), 300u);
  EXPECT_EQ(j.at("rate_class").size(), 300u);
  EXPECT_EQ(j.at("community").get<std::vector<std::uint32_t>>(), out.truth.community);
  EXPECT_DOUBLE_EQ(j.at("horizon").get<double>(), out.truth.horizon);
  fs::remove_all(dir);
}

// Multinomial logistic regression on node features, trained on every other
// node and scored on the rest.
TEST(Generate, TextualSignalRecoverableByLinearProbe) {
  const SynthOutput out = generate(SynthConfig{});
  const auto& f = out.dataset.node_features;
  const std::size_t d = f.cols, k = 6;
  std::vector<double> w((d + 1) * k, 0.0);
  const auto logits = [&](std::size_t u) {
    std::vector<double> z(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = w[d * k + c];
      for (std::size_t j = 0; j < d; ++j) z[c] += f.row(u)[j] * w[j * k + c];
    }
    return z;
  };
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t u = 0; u < 300; u += 2) {
      auto z = logits(u);
      const double mx = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double& v : z) s += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < k; ++c) {
        const double err = z[c] / s - (out.truth.community[u] == c ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) g[j * k + c] += err * f.row(u)[j];
        g[d * k + c] += err;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.05 * g[i] / 150.0;
  }
  std::size_t correct = 0;
  for (std::size_t u = 1; u < 300; u += 2) {
    const auto z = logits(u);
    correct += static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == out.truth.community[u];
  }
  EXPECT_GT(correct / 150.0, 0.9);
}

TEST(Kde, SingleValuePeaksAtValue) {
  const std::vector<double> v{0.37};
  const KdeCurve k = kde(v, 401);
  const auto peak = std::max_element(k.density.begin(), k.density.end()) - k.density.begin();
  EXPECT_NEAR(k.grid[static_cast<std::size_t>(peak)], 0.37, 1e-12);
  for (std::size_t i = 1; i < k.density.size(); ++i) {
    if (k.grid[i] <= 0.37) EXPECT_GE(k.density[i], k.density[i - 1]);
    else EXPECT_LE(k.density[i], k.density[i - 1]);
  }
  EXPECT_EQ(k.bandwidth, 1e-6);
}

TEST(Kde, SymmetricPair) {
  const std::vector<double> v{-1.0, 1.0};
  const KdeCurve k = kde(v, 513);
  const std::size_t n = k.grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(k.grid[i], -k.grid[n - 1 - i], 1e-12);
    EXPECT_NEAR(k.density[i], k.density[n - 1 - i], 1e-12);
  }
}

TEST(Kde, MatchesKernelSumOracle) {
  CounterRng rng(2, stream_id("synth.kde"));
  std::vector<double> v(50);
  for (double& x : v) x = rng.normal() * (rng.uniform() < 0.3 ? 3.0 : 1.0);
  const KdeCurve k = kde(v, 300);

  // Silverman rule with sample sd and linear-interpolation quartiles.
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const auto q = [&](double p) {
    const double pos = p * 49.0;
    const auto lo = static_cast<std::size_t>(pos);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[std::min<std::size_t>(lo + 1, 49)] - s[lo]);
  };
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x / 50.0;
  for (double x : v) var += (x - mean) * (x - mean) / 49.0;
  const double h = 0.9 * std::min(std::sqrt(var), (q(0.75) - q(0.25)) / 1.34) * std::pow(50.0, -0.2);
  EXPECT_NEAR(k.bandwidth, h, 1e-12);
  EXPECT_NEAR(k.grid.front(), s.front() - 3 * h, 1e-12);
  EXPECT_NEAR(k.grid.back(), s.back() + 3 * h, 1e-12);
  for (std::size_t i = 0; i < k.grid.size(); ++i) {
    double want = 0.0;
    for (double x : v) {
      const double z = (k.grid[i] - x) / h;
      want += std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * std::numbers::pi));
    }
    ASSERT_NEAR(k.density[i], want / 50.0, 1e-12) << i;
  }
}

TEST(Kde, IntegratesToOne) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    CounterRng rng(3, stream_id("synth.kde.int"), trial);
    std::vector<double> v(5 + trial * 20);
    for (double& x : v) x = rng.uniform() < 0.5 ? rng.normal() : 4.0 + 0.2 * rng.normal();
    const KdeCurve k = kde(v, 512);
    EXPECT_NEAR(trapezoid(k.grid, k.density), 1.0, 0.02) << trial;
    for (double d : k.density) EXPECT_GE(d, 0.0);
  }
}

TEST(Kde, EmptyRejected) { EXPECT_THROW(kde(std::vector<double>{}, 10), ValidationError); }

TEST(Kde, ZeroIqrFallsBackToSd) {
  const std::vector<double> v{0, 0, 0, 0, 0, 0, 0, 10};
  double mean = 10.0 / 8.0, var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean) / 7.0;
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * std::sqrt(var) * std::pow(8.0, -0.2), 1e-12);
}

TEST(MinMax, NormalizesAndHandlesConstants) {
  EXPECT_EQ(min_max_normalize(std::vector<double>{2, 4, 3}), (std::vector<double>{0, 1, 0.5}));
  EXPECT_EQ(min_max_normalize(std::vector<double>{7, 7}), (std::vector<double>{0, 0}));
}

TEST(Overlap, IdenticalIsOneAndDisjointIsSmall) {
  CounterRng rng(4, stream_id("synth.overlap"));
  std::vector<double> a(200), far(200);
  for (std::size_t i = 0; i < 200; ++i) {
    a[i] = rng.normal();
    far[i] = 100.0 + rng.normal();
  }
  EXPECT_NEAR(overlap_coefficient(a, a), 1.0, 0.02);
  EXPECT_LT(overlap_coefficient(a, far), 0.01);
}

TEST(Export, ConstantPopulationsGiveNarrowPeaks) {
  const fs::path dir = temp_dir("const");
  const std::map<std::string, std::vector<double>> pops{{"textual", std::vector<double>(30, 2.5)},
                                                        {"temporal", std::vector<double>(10, -1.0)}};
  const auto curves = export_modality_distributions(pops, "orig", dir, 101);
  ASSERT_EQ(curves.size(), 2u);
  for (const auto& [name, k] : curves) {
    EXPECT_EQ(k.bandwidth, 1e-6) << name;
    std::size_t local_max = 0;
    for (std::size_t i = 1; i + 1 < k.density.size(); ++i)
      local_max += k.density[i] > k.density[i - 1] && k.density[i] >= k.density[i + 1];
    EXPECT_EQ(local_max, 1u) << name;
  }
  std::ifstream in(dir / "kde_textual_orig.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x,density");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 101u);
  EXPECT_TRUE(fs::exists(dir / "kde_temporal_orig.csv"));
  EXPECT_THROW(export_modality_distributions(pops, "bogus", dir, 10), ValidationError);
  fs::remove_all(dir);
}

TEST(Export, OriginalModesAreSeparated) {
  SynthConfig c;
  c.num_events = 1500;
  const SynthOutput out = generate(c);
  nn::EncoderConfig ec;
  ec.d_t = 16;
  ec.k_neighbors = 10;
  ec.l_behaviors = 10;
  const auto split = graph::chronological_split(out.dataset);
  const auto pops = original_populations(out.dataset, split.test, ec);
  ASSERT_EQ(pops.size(), 3u);
  const fs::path dir = temp_dir("orig");
  const auto curves = export_modality_distributions(pops, "orig", dir, 512);
  std::vector<std::pair<double, double>> modes;
  for (const auto& [name, k] : curves) {
    const auto at = std::max_element(k.density.begin(), k.density.end()) - k.density.begin();
    modes.push_back({k.grid[static_cast<std::size_t>(at)], k.bandwidth});
  }
  for (std::size_t i = 0; i < modes.size(); ++i)
    for (std::size_t j = i + 1; j < modes.size(); ++j)
      EXPECT_GT(std::abs(modes[i].first - modes[j].first), std::max(modes[i].second, modes[j].second))
          << i << " vs " << j;
  fs::remove_all(dir);
}

}  // namespace
}  // namespace moment::synth
