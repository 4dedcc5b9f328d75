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

#include "moment/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "moment/common.hpp"

namespace moment::checks {

using ad::Param;
using ad::Tape;
using graph::NodeId;

graph::DyTagDataset tiny_dataset(std::uint64_t seed) {
  CounterRng rng(seed, stream_id("checks.tiny"));
  constexpr std::size_t kNodes = 4, kNodeDim = 5, kEdgeDim = 4, kEvents = 12;
  graph::FeatureTable nodes{kNodes, kNodeDim, std::vector<double>(kNodes * kNodeDim)};
  for (double& v : nodes.data) v = rng.normal();
  graph::FeatureTable edges{kEvents, kEdgeDim, std::vector<double>(kEvents * kEdgeDim)};
  for (double& v : edges.data) v = rng.normal();
  std::vector<graph::TemporalEvent> events;
  double t = 0.0;
  for (std::size_t i = 0; i < kEvents; ++i) {
    t += 0.1 + 0.4 * rng.uniform();
    const auto src = static_cast<graph::NodeId>(i % kNodes);
    const auto dst = static_cast<graph::NodeId>((src + 1 + rng.below(kNodes - 1)) % kNodes);
    events.push_back({src, dst, t, i, static_cast<std::uint32_t>(i % 2)});
  }
  return graph::make_dataset(std::move(events), std::move(nodes), std::move(edges));
}

train::TrainConfig tiny_config(std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.decoder_hidden = 5;
  nn::EncoderConfig& e = cfg.encoder;
  e.d_t = 3;
  e.d_internal = 4;
  e.d_struct = 6;
  e.k_neighbors = 3;
  e.l_behaviors = 3;
  e.iota = 1.0;
  e.heads = 2;
  e.attn_ffn_hidden = 8;
  e.dropout = 0.1;
  return cfg;
}

GradCheckResult grad_check_full_model(std::uint64_t seed, double epsilon) {
  const auto start = std::chrono::steady_clock::now();
  const graph::DyTagDataset ds = tiny_dataset(seed);
  const graph::NeighborIndex index(ds.events, ds.num_nodes);
  const train::GraphContext ctx{&ds, &index};
  train::MomentModel model(tiny_config(seed), ds.node_features.cols, ds.edge_features.cols);

  // The last four events form the batch; every node has history by then.
  const std::span<const graph::TemporalEvent> batch(ds.events.data() + ds.events.size() - 4, 4);
  CounterRng neg_rng(seed, stream_id("checks.negatives"));
  const std::vector<NodeId> negatives = train::sample_negatives(batch, ds.num_nodes, neg_rng);

  const auto loss_fn = [&](Tape& tape) { return train::batch_loss(model, tape, ctx, batch, negatives).total; };
  std::vector<Param*> params = model.params();
  GradCheckResult r;
  for (const Param* p : params) r.entries += p->value.size();
  {
    Tape tape;
    r.loss = loss_fn(tape).value().item();
  }
  r.max_rel_error = ad::finite_diff_check(loss_fn, params, epsilon);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

fusion::DiscreteJoint random_joint(CounterRng& rng) {
  fusion::DiscreteJoint j;
  j.n_s = 2 + rng.below(3);
  j.n_pi = 2 + rng.below(3);
  j.n_y = 2 + rng.below(3);
  j.p.resize(j.n_s * j.n_pi * j.n_y);
  for (double& v : j.p) v = rng.uniform() < 0.15 ? 0.0 : rng.exponential(1.0);
  if (std::all_of(j.p.begin(), j.p.end(), [](double v) { return v == 0.0; })) j.p[0] = 1.0;
  const double total = std::accumulate(j.p.begin(), j.p.end(), 0.0);
  for (double& v : j.p) v /= total;
  return j;
}

MiCheckResult mi_check(std::size_t trials, std::uint64_t seed) {
  MiCheckResult r;
  r.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    CounterRng rng(seed, stream_id("checks.mi"), trial);
    const fusion::DiscreteJoint j = random_joint(rng);
    std::vector<std::size_t> relabel(j.n_pi);
    std::iota(relabel.begin(), relabel.end(), 0);
    for (std::size_t i = relabel.size(); i-- > 1;) std::swap(relabel[i], relabel[rng.below(i + 1)]);
    const fusion::MiChainResult m = fusion::mi_chain_check(j, relabel);
    r.max_chain_gap = std::max(r.max_chain_gap, std::abs(m.lhs - m.rhs));
    r.max_relabel_gap = std::max(r.max_relabel_gap, std::abs(m.conditional_term - m.relabeled_conditional));
  }
  return r;
}

fusion::DiscreteJoint xor_joint() {
  fusion::DiscreteJoint j{2, 2, 2, std::vector<double>(8, 0.0)};
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t pi = 0; pi < 2; ++pi) j.p[(s * 2 + pi) * 2 + (s ^ pi)] = 0.25;
  return j;
}

}  // namespace moment::checks
