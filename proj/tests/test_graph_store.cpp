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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "moment/common.hpp"
#include "moment/graph_store.hpp"

namespace moment::graph {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("moment_gs_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

FeatureTable table(std::size_t rows, std::size_t cols, double base = 0.0) {
  FeatureTable t{rows, cols, std::vector<double>(rows * cols)};
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = base + 0.25 * static_cast<double>(i);
  return t;
}

std::vector<TemporalEvent> random_events(std::size_t n, std::size_t nodes, std::uint64_t step) {
  CounterRng rng(5, stream_id("gs.events"), step);
  std::vector<TemporalEvent> ev;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse steps produce timestamp ties.
    t += static_cast<double>(rng.below(3));
    ev.push_back({static_cast<NodeId>(rng.below(nodes)), static_cast<NodeId>(rng.below(nodes)), t, i, 0});
  }
  return ev;
}

TEST(LoadDataset, HandBuiltFixture) {
  TempDir dir;
  write_text(dir.path() / "edges.csv", "src,dst,t,label,edge_feat_row\n0,1,1.0,0,0\n1,2,2.0,0,1\n0,2,3.0,1,2\n");
  write_feature_table(dir.path() / "node.fbin", table(3, 4));
  write_feature_table(dir.path() / "edge.fbin", table(3, 2));
  const DyTagDataset ds = load_dataset(dir.path() / "edges.csv", dir.path() / "node.fbin", dir.path() / "edge.fbin");
  ASSERT_EQ(ds.events.size(), 3u);
  EXPECT_EQ(ds.num_nodes, 3u);
  EXPECT_EQ(ds.num_classes, 2u);
  EXPECT_EQ(ds.events[0], (TemporalEvent{0, 1, 1.0, 0, 0}));
  EXPECT_EQ(ds.events[1], (TemporalEvent{1, 2, 2.0, 1, 0}));
  EXPECT_EQ(ds.events[2], (TemporalEvent{0, 2, 3.0, 2, 1}));
  EXPECT_EQ(ds.node_features.rows, 3u);
  EXPECT_EQ(ds.node_features.cols, 4u);
}

TEST(LoadDataset, UnsortedRowsAreStablySorted) {
  TempDir dir;
  write_text(dir.path() / "edges.csv",
             "src,dst,t,label,edge_feat_row\n0,1,5.0,0,0\n1,0,1.0,0,1\n1,1,5.0,0,2\n");
  write_feature_table(dir.path() / "node.fbin", table(2, 2));
  write_feature_table(dir.path() / "edge.fbin", table(3, 2));
  const DyTagDataset ds = load_dataset(dir.path() / "edges.csv", dir.path() / "node.fbin", dir.path() / "edge.fbin");
  EXPECT_EQ(ds.events[0].t, 1.0);
  EXPECT_EQ(ds.events[1].edge_feat_row, 0u);
  EXPECT_EQ(ds.events[2].edge_feat_row, 2u);
}

TEST(LoadDataset, FeatureRowOutOfRange) {
  TempDir dir;
  write_text(dir.path() / "edges.csv", "src,dst,t,label,edge_feat_row\n0,1,1.0,0,7\n");
  write_feature_table(dir.path() / "node.fbin", table(2, 2));
  write_feature_table(dir.path() / "edge.fbin", table(5, 2));
  try {
    load_dataset(dir.path() / "edges.csv", dir.path() / "node.fbin", dir.path() / "edge.fbin");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("feature row out of range"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, FeatureTableRowsWinOverMaxNodeId) {
  const DyTagDataset ds = make_dataset({{0, 1, 1.0, 0, 0}}, table(6, 2), table(1, 2));
  EXPECT_EQ(ds.num_nodes, 6u);
}

TEST(LoadDataset, TooFewNodeRowsRejected) {
  EXPECT_THROW(make_dataset({{0, 4, 1.0, 0, 0}}, table(3, 2), table(1, 2)), ValidationError);
}

TEST(LoadDataset, MalformedHeaderRejected) {
  TempDir dir;
  write_text(dir.path() / "edges.csv", "a,b,c\n0,1,1.0,0,0\n");
  EXPECT_THROW(read_events_csv(dir.path() / "edges.csv"), ValidationError);
}

TEST(LoadDataset, BadRowReportsLine) {
  TempDir dir;
  write_text(dir.path() / "edges.csv", "src,dst,t,label,edge_feat_row\n0,1,1.0,0,0\n0,x,2.0,0,0\n");
  try {
    read_events_csv(dir.path() / "edges.csv");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, NonFiniteTimestampRejected) {
  TempDir dir;
  write_text(dir.path() / "edges.csv", "src,dst,t,label,edge_feat_row\n0,1,nan,0,0\n");
  EXPECT_THROW(read_events_csv(dir.path() / "edges.csv"), ValidationError);
}

TEST(FeatureTableFile, BadMagicAndTruncation) {
  TempDir dir;
  write_text(dir.path() / "bad.fbin", "XXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_feature_table(dir.path() / "bad.fbin"), ValidationError);
  write_feature_table(dir.path() / "ok.fbin", table(4, 3));
  fs::resize_file(dir.path() / "ok.fbin", fs::file_size(dir.path() / "ok.fbin") - 4);
  EXPECT_THROW(read_feature_table(dir.path() / "ok.fbin"), ValidationError);
}

TEST(FeatureTableFile, HeaderLayout) {
  TempDir dir;
  write_feature_table(dir.path() / "t.fbin", table(2, 3));
  std::ifstream in(dir.path() / "t.fbin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 24u + 6u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DYTF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[16], 3);
}

TEST(RoundTrip, SaveThenLoadIsIdentity) {
  TempDir dir;
  std::vector<TemporalEvent> ev = random_events(60, 9, 1);
  for (std::size_t i = 0; i < ev.size(); ++i) ev[i].label = static_cast<std::uint32_t>(i % 3);
  // Values exactly representable in float32 survive the narrowing.
  const DyTagDataset ds = make_dataset(ev, table(9, 4, -1.0), table(60, 3, 2.0));
  save_dataset(dir.path(), ds);
  const DyTagDataset back =
      load_dataset(dir.path() / "edges.csv", dir.path() / "node_feat.fbin", dir.path() / "edge_feat.fbin");
  EXPECT_EQ(back, ds);
}

TEST(Split, SizesFollowFloorThenRemainder) {
  const auto sizes = [](std::size_t n) {
    std::vector<TemporalEvent> ev;
    for (std::size_t i = 0; i < n; ++i) ev.push_back({0, 1, static_cast<double>(i), 0, 0});
    const SplitView s = chronological_split(make_dataset(ev, table(2, 1), table(1, 1)));
    return std::array<std::size_t, 3>{s.train.size(), s.val.size(), s.test.size()};
  };
  EXPECT_EQ(sizes(20), (std::array<std::size_t, 3>{14, 3, 3}));
  EXPECT_EQ(sizes(10), (std::array<std::size_t, 3>{7, 1, 2}));
}

TEST(Split, BadRatiosRejected) {
  const DyTagDataset ds = make_dataset({{0, 1, 1.0, 0, 0}}, table(2, 1), table(1, 1));
  EXPECT_THROW(chronological_split(ds, {0.7, 0.2, 0.2}), ValidationError);
  EXPECT_THROW(chronological_split(ds, {1.0, 0.0, 0.0}), ValidationError);
}

std::vector<TemporalEvent> late_node_events(std::size_t first_late) {
  std::vector<TemporalEvent> ev;
  for (std::size_t i = 0; i < 20; ++i) {
    const NodeId other = static_cast<NodeId>(i % 5);
    ev.push_back({other, i >= first_late ? NodeId{9} : static_cast<NodeId>(5 + i % 4), static_cast<double>(i), 0, 0});
  }
  return ev;
}

TEST(Split, NodeSeenOnlyInTestIsInductive) {
  const SplitView s = chronological_split(make_dataset(late_node_events(17), table(10, 1), table(1, 1)));
  EXPECT_EQ(s.inductive_nodes, std::vector<NodeId>{9});
  EXPECT_FALSE(s.is_inductive(0));
}

TEST(Split, NodeSeenInValIsNotInductive) {
  // Events 15 and 16 belong to val under the 14/3/3 split.
  const SplitView s = chronological_split(make_dataset(late_node_events(15), table(10, 1), table(1, 1)));
  EXPECT_FALSE(s.is_inductive(9));
}

TEST(Split, PropertiesOnRandomGraphs) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const DyTagDataset ds = make_dataset(random_events(20 + trial * 3, 25, trial), table(25, 1), table(200, 1));
    const SplitView s = chronological_split(ds);
    ASSERT_EQ(s.train.begin, 0u);
    ASSERT_EQ(s.train.end, s.val.begin);
    ASSERT_EQ(s.val.end, s.test.begin);
    ASSERT_EQ(s.test.end, ds.events.size());
    ASSERT_TRUE(std::is_sorted(s.inductive_nodes.begin(), s.inductive_nodes.end()));
    std::vector<bool> seen_early(ds.num_nodes, false), seen_test(ds.num_nodes, false);
    for (std::size_t i = 0; i < ds.events.size(); ++i) {
      auto& seen = i < s.test.begin ? seen_early : seen_test;
      seen[ds.events[i].src] = seen[ds.events[i].dst] = true;
    }
    for (NodeId u = 0; u < ds.num_nodes; ++u)
      ASSERT_EQ(s.is_inductive(u), seen_test[u] && !seen_early[u]) << "trial " << trial << " node " << u;
  }
}

TEST(NeighborIndex, SingleIncidence) {
  const std::vector<TemporalEvent> ev{{0, 1, 1.0, 4, 0}};
  const NeighborIndex idx(ev, 2);
  ASSERT_EQ(idx.history(0).size(), 1u);
  EXPECT_EQ(idx.history(0)[0], (Incidence{1, 1.0, 4}));
  EXPECT_EQ(idx.history(1)[0], (Incidence{0, 1.0, 4}));
}

TEST(NeighborIndex, EmptyEvents) {
  const NeighborIndex idx(std::vector<TemporalEvent>{}, 3);
  EXPECT_EQ(idx.total_entries(), 0u);
  for (NodeId u = 0; u < 3; ++u) EXPECT_TRUE(idx.history(u).empty());
}

TEST(NeighborIndex, MatchesPerNodeFilter) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const std::vector<TemporalEvent> ev = random_events(5 + trial, 4, 100 + trial);
    const NeighborIndex idx(ev, 4);
    EXPECT_EQ(idx.total_entries(), 2 * ev.size());
    for (NodeId u = 0; u < 4; ++u) {
      std::vector<Incidence> expect;
      for (const auto& e : ev) {
        if (e.src == u) expect.push_back({e.dst, e.t, e.edge_feat_row});
        if (e.dst == u) expect.push_back({e.src, e.t, e.edge_feat_row});
      }
      const auto got = idx.history(u);
      ASSERT_EQ(std::vector<Incidence>(got.begin(), got.end()), expect);
    }
  }
}

TEST(RecentNeighbors, Examples) {
  const std::vector<TemporalEvent> ev{{0, 1, 1.0, 0, 0}, {0, 2, 2.0, 1, 0}, {0, 3, 3.0, 2, 0}};
  const NeighborIndex idx(ev, 5);
  EXPECT_EQ(idx.recent_neighbors(0, 2.5, 2), (std::vector<Incidence>{{1, 1.0, 0}, {2, 2.0, 1}}));
  EXPECT_EQ(idx.recent_neighbors(0, 2.0, 5), (std::vector<Incidence>{{1, 1.0, 0}}));
  EXPECT_TRUE(idx.recent_neighbors(4, 10.0, 3).empty());
  EXPECT_TRUE(idx.recent_neighbors(99, 10.0, 3).empty());
}

TEST(RecentNeighbors, MatchesLinearScanOracle) {
  std::size_t nonempty = 0;
  for (std::uint64_t q = 0; q < 1000; ++q) {
    const std::uint64_t graph = q / 50;
    const std::vector<TemporalEvent> ev = random_events(20 + graph * 9, 12, 500 + graph);
    const NeighborIndex idx(ev, 12);
    CounterRng rng(6, stream_id("gs.queries"), q);
    const NodeId u = static_cast<NodeId>(rng.below(12));
    const double t = static_cast<double>(rng.below(static_cast<std::uint64_t>(ev.back().t) + 2));
    const std::size_t k = 1 + rng.below(8);
    std::vector<Incidence> all;
    for (const auto& e : ev) {
      if (!(e.t < t)) continue;
      if (e.src == u) all.push_back({e.dst, e.t, e.edge_feat_row});
      if (e.dst == u) all.push_back({e.src, e.t, e.edge_feat_row});
    }
    const std::vector<Incidence> expect(all.end() - static_cast<std::ptrdiff_t>(std::min(k, all.size())), all.end());
    LeakageAudit audit;
    const auto got = idx.recent_neighbors(u, t, k, &audit);
    ASSERT_EQ(got, expect) << "query " << q;
    ASSERT_EQ(audit.violations, 0u);
    nonempty += !got.empty();
  }
  EXPECT_GT(nonempty, 500u);
}

std::vector<TemporalEvent> events_at(NodeId u, const std::vector<double>& times) {
  std::vector<TemporalEvent> ev;
  for (std::size_t i = 0; i < times.size(); ++i) ev.push_back({u, u + 1, times[i], i, 0});
  return ev;
}

TEST(RecentBehaviors, Examples) {
  {
    const auto ev = events_at(0, {1, 2, 3, 9});
    EXPECT_TRUE(NeighborIndex(ev, 2).recent_behaviors(0, 9, 3, 10).empty());
  }
  {
    const auto ev = events_at(0, {1, 2, 7, 8});
    EXPECT_EQ(NeighborIndex(ev, 2).recent_behaviors(0, 9, 3, 10), (std::vector<double>{7, 8}));
  }
  {
    const auto ev = events_at(0, {1, 2, 3});
    EXPECT_EQ(NeighborIndex(ev, 2).recent_behaviors(0, 4, 10, 2), (std::vector<double>{2, 3}));
  }
  EXPECT_TRUE(NeighborIndex(std::vector<TemporalEvent>{}, 2).recent_behaviors(0, 4, 10, 2).empty());
}

TEST(RecentBehaviors, IncludeCurrentFlag) {
  const auto ev = events_at(0, {7, 8, 9});
  const NeighborIndex idx(ev, 2);
  EXPECT_EQ(idx.recent_behaviors(0, 9, 3, 10), (std::vector<double>{7, 8}));
  EXPECT_EQ(idx.recent_behaviors(0, 9, 3, 10, true), (std::vector<double>{7, 8, 9}));
}

TEST(RecentBehaviors, MatchesWindowOracle) {
  for (std::uint64_t q = 0; q < 500; ++q) {
    const std::vector<TemporalEvent> ev = random_events(80, 6, 900 + q / 25);
    const NeighborIndex idx(ev, 6);
    CounterRng rng(8, stream_id("gs.behaviors"), q);
    const NodeId u = static_cast<NodeId>(rng.below(6));
    const double t = static_cast<double>(rng.below(static_cast<std::uint64_t>(ev.back().t) + 2));
    const double iota = 0.5 + static_cast<double>(rng.below(20));
    const std::size_t limit = 1 + rng.below(6);
    std::vector<double> all;
    for (const auto& e : ev) {
      if (!(e.t < t && e.t > t - iota)) continue;
      if (e.src == u) all.push_back(e.t);
      if (e.dst == u) all.push_back(e.t);
    }
    const std::vector<double> expect(all.end() - static_cast<std::ptrdiff_t>(std::min(limit, all.size())), all.end());
    LeakageAudit audit;
    ASSERT_EQ(idx.recent_behaviors(u, t, iota, limit, false, &audit), expect) << "query " << q;
    ASSERT_EQ(audit.violations, 0u);
  }
}

TEST(LeakageAudit, CountsViolations) {
  LeakageAudit a;
  a.observe(5.0, 4.0);
  a.observe(5.0, 5.0);
  EXPECT_EQ(a.returned, 2u);
  EXPECT_EQ(a.violations, 1u);
}

}  // namespace
}  // namespace moment::graph
