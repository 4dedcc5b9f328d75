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

// Model assembly, chronological training and link/edge evaluation.

#ifndef MOMENT_TRAINER_HPP_
#define MOMENT_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moment/common.hpp"
#include "moment/encoders.hpp"
#include "moment/fusion_loss.hpp"
#include "moment/graph_store.hpp"
#include "moment/tensor.hpp"

namespace moment::train {

using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using graph::NodeId;

enum class Variant { kFull, kNoTemporal, kNoTextual, kStructuralOnly, kNoAlignD, kNoAlignI, kNoAlign };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
// full followed by the six ablations, in table order.
std::vector<Variant> all_variants();

struct TrainConfig {
  std::size_t batch_size = 200;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  double lr = 1e-5;
  double alpha = 0.2;
  std::size_t decoder_hidden = 128;
  nn::EncoderConfig encoder;
  Variant variant = Variant::kFull;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double align_loss = 0.0;
  double dev_auc = 0.0;
};

// Read-only graph state shared by every forward pass.
struct GraphContext {
  const graph::DyTagDataset* dataset = nullptr;
  const graph::NeighborIndex* index = nullptr;
};

class MomentModel {
 public:
  MomentModel(const TrainConfig& config, std::size_t d_node_feat, std::size_t d_edge_feat);

  MomentModel(const MomentModel&) = delete;
  MomentModel& operator=(const MomentModel&) = delete;

  // Tokens for the given (node, query time) pairs, all rows fused.
  fusion::ModalityTokens encode(Tape& tape, const GraphContext& ctx, std::span<const NodeId> nodes,
                                std::span<const double> times, graph::LeakageAudit* audit = nullptr);
  // One logit per row of (zu, zv).
  Var link_logits(Tape& tape, Var zu, Var zv) { return link_decoder_.forward(tape, zu, zv); }

  // Every parameter in a fixed order.
  std::vector<Param*> params();
  const TrainConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  fusion::FusionParams& fusion() { return fusion_; }
  fusion::LossConfig loss_config() const;

  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& values);

  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  nn::TextualEncoder textual_;
  nn::TemporalEncoder temporal_;
  nn::StructuralEncoder structural_;
  fusion::FusionParams fusion_;
  fusion::PairDecoder link_decoder_;
};

// One uniform destination per event, re-drawn while equal to the true one.
std::vector<NodeId> sample_negatives(std::span<const graph::TemporalEvent> batch, std::size_t num_nodes,
                                     CounterRng& rng);

struct BatchLoss {
  Var total;
  Var task;
  Var dist;
  Var inst;
};

// Training objective for one batch: BCE over (src, dst) against (src, neg)
// plus the alpha-weighted alignment terms. Sources, destinations and
// negatives are encoded together as a single 3B-row batch.
BatchLoss batch_loss(MomentModel& model, Tape& tape, const GraphContext& ctx,
                     std::span<const graph::TemporalEvent> batch, std::span<const NodeId> negatives);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_dev_auc = 0.0;
};

// Trains in place and leaves the best-dev parameters in the model.
TrainResult train(MomentModel& model, const graph::DyTagDataset& dataset, const graph::SplitView& split);

enum class EvalMode { kTransductive, kInductive };

struct LinkMetrics {
  std::size_t events = 0;
  double auc = 0.0;
  double ap = 0.0;
};

struct LinkReport {
  LinkMetrics transductive;
  // Empty when the test range has no event touching an inductive node.
  std::optional<LinkMetrics> inductive;
  graph::LeakageAudit audit;
  // Per-event scores in range order.
  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
  std::vector<std::uint8_t> inductive_mask;
};

// Scores every event in `range` and its 1:1 negative in fixed-size
// chronological batches, encoded the same way as in training. The inductive
// block covers the events with at least one endpoint in
// split.inductive_nodes.
LinkReport evaluate_range(MomentModel& model, const graph::DyTagDataset& dataset,
                          const graph::NeighborIndex& index, const graph::SplitView& split,
                          graph::IndexRange range);

// Test-range metrics for one mode. Throws ValidationError for an empty
// inductive set.
LinkMetrics evaluate_link(MomentModel& model, const graph::DyTagDataset& dataset,
                          const graph::SplitView& split, EvalMode mode);

struct EdgeClassReport {
  std::size_t events = 0;
  double weighted_precision = 0.0;
};

// Fits a pair classifier on frozen node embeddings of the training events and
// reports weighted precision over the test events.
EdgeClassReport evaluate_edge_classification(MomentModel& model, const graph::DyTagDataset& dataset,
                                             const graph::SplitView& split, std::size_t epochs);

struct VariantResult {
  Variant variant = Variant::kFull;
  TrainResult training;
  LinkReport link;
};

// Trains a fresh model per variant with identical seeds.
std::vector<VariantResult> run_ablation(const graph::DyTagDataset& dataset, const graph::SplitView& split,
                                        const TrainConfig& base, std::span<const Variant> variants);

struct AlphaPoint {
  double alpha = 0.0;
  double inductive_auc = 0.0;
};

std::vector<AlphaPoint> run_alpha_sweep(const graph::DyTagDataset& dataset, const graph::SplitView& split,
                                        const TrainConfig& base, std::span<const double> alphas);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

}  // namespace moment::train

#endif  // MOMENT_TRAINER_HPP_
