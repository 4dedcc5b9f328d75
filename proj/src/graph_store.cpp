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

#include "moment/graph_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "moment/common.hpp"

namespace moment::graph {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::string_view kEdgesHeader = "src,dst,t,label,edge_feat_row";

std::uint64_t read_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    os.put(static_cast<char>(v & 0xFF));
    v >>= 8;
  }
}

template <typename T>
T parse_field(std::string_view field, const std::string& where, const char* name) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(where + ": cannot parse " + name + " from '" + std::string(field) + "'");
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace

void FeatureTable::validate() const {
  if (data.size() != rows * cols) throw ValidationError("feature table: data length != rows x cols");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError("feature table: non-finite value at row " + std::to_string(i / cols) +
                            " col " + std::to_string(i % cols));
    }
  }
}

void DyTagDataset::validate() const {
  node_features.validate();
  edge_features.validate();
  if (node_features.rows != num_nodes) {
    throw ValidationError("dataset: node feature rows (" + std::to_string(node_features.rows) +
                          ") != num_nodes (" + std::to_string(num_nodes) + ")");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TemporalEvent& e = events[i];
    const std::string where = "event " + std::to_string(i);
    if (!std::isfinite(e.t)) throw ValidationError(where + ": non-finite timestamp");
    if (e.src >= num_nodes || e.dst >= num_nodes) throw ValidationError(where + ": node id out of range");
    if (e.label >= num_classes) throw ValidationError(where + ": label out of range");
    if (e.edge_feat_row >= edge_features.rows) {
      throw ValidationError(where + ": feature row out of range");
    }
    if (i > 0 && e.t < events[i - 1].t) throw ValidationError(where + ": events not sorted by time");
  }
}

FeatureTable read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open feature file");
  unsigned char header[24];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(header))) {
    throw ValidationError(path.string() + ": truncated header (offset 0)");
  }
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw ValidationError(path.string() + ": malformed header, bad magic at offset 0");
  }
  const auto version = static_cast<std::uint32_t>(read_le(header + 4, 4));
  if (version != kVersion) {
    throw ValidationError(path.string() + ": malformed header, unsupported version " +
                          std::to_string(version) + " at offset 4");
  }
  FeatureTable table;
  table.rows = read_le(header + 8, 8);
  table.cols = read_le(header + 16, 8);
  const std::size_t count = table.rows * table.cols;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ValidationError(path.string() + ": truncated payload, expected " +
                          std::to_string(raw.size()) + " bytes at offset 24");
  }
  table.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits = static_cast<std::uint32_t>(read_le(raw.data() + 4 * i, 4));
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    if (!std::isfinite(f)) {
      throw ValidationError(path.string() + ": non-finite value at offset " +
                            std::to_string(24 + 4 * i) + " (row " +
                            std::to_string(i / std::max<std::size_t>(table.cols, 1)) + ")");
    }
    table.data[i] = static_cast<double>(f);
  }
  return table;
}

void write_feature_table(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  write_le(out, kVersion, 4);
  write_le(out, table.rows, 8);
  write_le(out, table.cols, 8);
  for (double v : table.data) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    write_le(out, bits, 4);
  }
}

std::vector<TemporalEvent> read_events_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open edge file");
  std::string line;
  if (!std::getline(in, line) || trim(line) != kEdgesHeader) {
    throw ValidationError(path.string() + " line 1: malformed header, expected '" +
                          std::string(kEdgesHeader) + "'");
  }
  std::vector<TemporalEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    std::array<std::string_view, 5> fields;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const std::size_t comma = rest.find(',');
      if ((comma == std::string_view::npos) != (f == fields.size() - 1)) {
        throw ValidationError(where + ": expected 5 comma-separated fields");
      }
      fields[f] = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    TemporalEvent e;
    e.src = parse_field<NodeId>(fields[0], where, "src");
    e.dst = parse_field<NodeId>(fields[1], where, "dst");
    e.t = parse_field<double>(fields[2], where, "t");
    if (!std::isfinite(e.t)) throw ValidationError(where + ": non-finite timestamp");
    e.label = parse_field<std::uint32_t>(fields[3], where, "label");
    e.edge_feat_row = parse_field<std::size_t>(fields[4], where, "edge_feat_row");
    events.push_back(e);
  }
  return events;
}

void write_events_csv(const std::filesystem::path& path, std::span<const TemporalEvent> events) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  out << kEdgesHeader << '\n';
  char buf[64];
  for (const TemporalEvent& e : events) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), e.t);
    out << e.src << ',' << e.dst << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf))
        << ',' << e.label << ',' << e.edge_feat_row << '\n';
  }
}

DyTagDataset make_dataset(std::vector<TemporalEvent> events, FeatureTable node_features,
                          FeatureTable edge_features) {
  std::stable_sort(events.begin(), events.end(),
                   [](const TemporalEvent& a, const TemporalEvent& b) { return a.t < b.t; });
  DyTagDataset ds;
  std::size_t max_node = 0;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TemporalEvent& e = events[i];
    if (e.edge_feat_row >= edge_features.rows) {
      throw ValidationError("event " + std::to_string(i) + ": feature row out of range (" +
                            std::to_string(e.edge_feat_row) + " >= " +
                            std::to_string(edge_features.rows) + ")");
    }
    max_node = std::max<std::size_t>({max_node, e.src + std::size_t{1}, e.dst + std::size_t{1}});
    max_label = std::max<std::size_t>(max_label, e.label + std::size_t{1});
  }
  if (node_features.rows < max_node) {
    throw ValidationError("node feature table has " + std::to_string(node_features.rows) +
                          " rows but events reference node " + std::to_string(max_node - 1));
  }
  ds.num_nodes = node_features.rows;
  ds.num_classes = std::max<std::size_t>(max_label, 1);
  ds.events = std::move(events);
  ds.node_features = std::move(node_features);
  ds.edge_features = std::move(edge_features);
  ds.validate();
  return ds;
}

DyTagDataset load_dataset(const std::filesystem::path& edges_path,
                          const std::filesystem::path& node_feat_path,
                          const std::filesystem::path& edge_feat_path) {
  return make_dataset(read_events_csv(edges_path), read_feature_table(node_feat_path),
                      read_feature_table(edge_feat_path));
}

void save_dataset(const std::filesystem::path& dir, const DyTagDataset& dataset) {
  std::filesystem::create_directories(dir);
  write_events_csv(dir / "edges.csv", dataset.events);
  write_feature_table(dir / "node_feat.fbin", dataset.node_features);
  write_feature_table(dir / "edge_feat.fbin", dataset.edge_features);
}

bool SplitView::is_inductive(NodeId u) const {
  return std::binary_search(inductive_nodes.begin(), inductive_nodes.end(), u);
}

SplitView chronological_split(const DyTagDataset& dataset, std::array<double, 3> ratios) {
  const std::size_t n = dataset.events.size();
  if (n == 0) throw ValidationError("chronological_split: empty dataset");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ValidationError("chronological_split: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ValidationError("chronological_split: ratios must sum to 1");
  }
  // The small offset keeps products like 20 * 0.7 from flooring to 13.
  auto part = [n](double r) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
  };
  const std::size_t n_train = part(ratios[0]);
  const std::size_t n_val = part(ratios[1]);
  SplitView split;
  split.train = {0, n_train};
  split.val = {n_train, n_train + n_val};
  split.test = {n_train + n_val, n};

  std::vector<std::uint8_t> seen_early(dataset.num_nodes, 0);
  std::vector<std::uint8_t> seen_test(dataset.num_nodes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& seen = i < split.test.begin ? seen_early : seen_test;
    seen[dataset.events[i].src] = 1;
    seen[dataset.events[i].dst] = 1;
  }
  for (std::size_t u = 0; u < dataset.num_nodes; ++u) {
    if (seen_test[u] && !seen_early[u]) split.inductive_nodes.push_back(static_cast<NodeId>(u));
  }
  return split;
}

NeighborIndex::NeighborIndex(std::span<const TemporalEvent> events, std::size_t num_nodes)
    : lists_(num_nodes) {
  for (const TemporalEvent& e : events) {
    const std::size_t need = std::max<std::size_t>(e.src, e.dst) + 1;
    if (need > lists_.size()) lists_.resize(need);
    lists_[e.src].push_back({e.dst, e.t, e.edge_feat_row});
    lists_[e.dst].push_back({e.src, e.t, e.edge_feat_row});
    total_ += 2;
  }
  // Input is time sorted, so appends keep each list sorted. Sort anyway to
  // honour the invariant for callers that pass unsorted events.
  for (auto& list : lists_) {
    std::stable_sort(list.begin(), list.end(),
                     [](const Incidence& a, const Incidence& b) { return a.t < b.t; });
  }
}

std::span<const Incidence> NeighborIndex::history(NodeId u) const {
  if (u >= lists_.size()) return {};
  return lists_[u];
}

std::vector<Incidence> NeighborIndex::recent_neighbors(NodeId u, double t, std::size_t k,
                                                       LeakageAudit* audit) const {
  if (audit) ++audit->queries;
  const auto list = history(u);
  const auto end = std::lower_bound(list.begin(), list.end(), t,
                                    [](const Incidence& a, double value) { return a.t < value; });
  const auto available = static_cast<std::size_t>(end - list.begin());
  const std::size_t take = std::min(k, available);
  std::vector<Incidence> out(end - static_cast<std::ptrdiff_t>(take), end);
  if (audit) {
    for (const Incidence& inc : out) audit->observe(t, inc.t);
  }
  return out;
}

std::vector<double> NeighborIndex::recent_behaviors(NodeId u, double t, double iota,
                                                    std::size_t limit, bool include_current,
                                                    LeakageAudit* audit) const {
  if (audit) ++audit->queries;
  const auto list = history(u);
  const auto end =
      include_current
          ? std::upper_bound(list.begin(), list.end(), t,
                             [](double value, const Incidence& a) { return value < a.t; })
          : std::lower_bound(list.begin(), list.end(), t,
                             [](const Incidence& a, double value) { return a.t < value; });
  std::vector<double> out;
  for (auto it = end; it != list.begin() && out.size() < limit;) {
    --it;
    if (!(it->t > t - iota)) break;
    out.push_back(it->t);
  }
  std::reverse(out.begin(), out.end());
  if (audit && !include_current) {
    for (double ts : out) audit->observe(t, ts);
  }
  return out;
}

}  // namespace moment::graph
