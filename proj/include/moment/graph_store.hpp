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

// Dynamic text-attributed graphs stored as time-ordered event streams.
//
// Text attributes arrive as precomputed embedding tables (one row per node,
// one row per edge). Events reference edge rows by index. The on-disk formats
// are an `edges.csv` event list and the `.fbin` float table:
//
//   bytes 0-3   magic "DYTF"
//   bytes 4-7   u32 version (1), little endian
//   bytes 8-15  u64 rows
//   bytes 16-23 u64 cols
//   then rows*cols little-endian float32, row-major.

#ifndef MOMENT_GRAPH_STORE_HPP_
#define MOMENT_GRAPH_STORE_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace moment::graph {

using NodeId = std::uint32_t;

struct TemporalEvent {
  NodeId src = 0;
  NodeId dst = 0;
  double t = 0.0;
  std::size_t edge_feat_row = 0;
  std::uint32_t label = 0;

  bool operator==(const TemporalEvent&) const = default;
};

struct FeatureTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  void validate() const;

  bool operator==(const FeatureTable&) const = default;
};

struct DyTagDataset {
  std::vector<TemporalEvent> events;
  FeatureTable node_features;
  FeatureTable edge_features;
  std::size_t num_nodes = 0;
  std::size_t num_classes = 0;

  void validate() const;

  bool operator==(const DyTagDataset&) const = default;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SplitView {
  IndexRange train;
  IndexRange val;
  IndexRange test;
  // Sorted ascending.
  std::vector<NodeId> inductive_nodes;

  bool is_inductive(NodeId u) const;
};

FeatureTable read_feature_table(const std::filesystem::path& path);
void write_feature_table(const std::filesystem::path& path, const FeatureTable& table);

std::vector<TemporalEvent> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, std::span<const TemporalEvent> events);

// Reads and validates a dataset. Events are stably sorted by time.
DyTagDataset load_dataset(const std::filesystem::path& edges_path,
                          const std::filesystem::path& node_feat_path,
                          const std::filesystem::path& edge_feat_path);

// Builds a dataset from in-memory parts, inferring num_nodes and num_classes
// the same way load_dataset does.
DyTagDataset make_dataset(std::vector<TemporalEvent> events, FeatureTable node_features,
                          FeatureTable edge_features);

// Writes edges.csv, node_feat.fbin and edge_feat.fbin under `dir`.
void save_dataset(const std::filesystem::path& dir, const DyTagDataset& dataset);

// Floor-then-remainder chronological split; the remainder goes to test.
SplitView chronological_split(const DyTagDataset& dataset, std::array<double, 3> ratios = {0.7, 0.15, 0.15});

struct Incidence {
  NodeId neighbor = 0;
  double t = 0.0;
  std::size_t edge_feat_row = 0;

  bool operator==(const Incidence&) const = default;
};

// Records every timestamp returned by a query so evaluation can prove that no
// feature was built from an event at or after the query time.
struct LeakageAudit {
  std::size_t queries = 0;
  std::size_t returned = 0;
  std::size_t violations = 0;

  void observe(double query_t, double returned_t) {
    ++returned;
    if (!(returned_t < query_t)) ++violations;
  }
};

// Per-node, time-sorted incidence lists. Every event contributes one entry to
// each endpoint. Immutable after construction.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  NeighborIndex(std::span<const TemporalEvent> events, std::size_t num_nodes);

  std::size_t num_nodes() const { return lists_.size(); }
  std::size_t total_entries() const { return total_; }
  std::span<const Incidence> history(NodeId u) const;

  // The k most recent entries with timestamp strictly below t, ascending.
  std::vector<Incidence> recent_neighbors(NodeId u, double t, std::size_t k,
                                          LeakageAudit* audit = nullptr) const;

  // Timestamps t' with t - iota < t' < t (t' <= t when include_current),
  // keeping the latest `limit`, ascending.
  std::vector<double> recent_behaviors(NodeId u, double t, double iota, std::size_t limit,
                                       bool include_current = false,
                                       LeakageAudit* audit = nullptr) const;

 private:
  std::vector<std::vector<Incidence>> lists_;
  std::size_t total_ = 0;
};

}  // namespace moment::graph

#endif  // MOMENT_GRAPH_STORE_HPP_
