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

#include "moment/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "moment/common.hpp"

namespace moment::nn {

Tensor InitContext::glorot(const std::string& name, std::size_t in, std::size_t out) const {
  CounterRng rng(seed, stream_id(prefix + name));
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor t(in, out);
  for (double& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

// ---------------------------------------------------------------------------

Linear::Linear(const InitContext& init, const std::string& name, std::size_t in, std::size_t out,
               bool bias)
    : weight_(init.prefix + name + ".weight", init.glorot(name + ".weight", in, out)),
      bias_(init.prefix + name + ".bias", Tensor(1, out)),
      has_bias_(bias) {}

Var Linear::forward(Tape& tape, Var x) {
  Var y = ad::matmul(x, tape.param(weight_));
  return has_bias_ ? ad::add(y, tape.param(bias_)) : y;
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

FFNLayer::FFNLayer(const InitContext& init, const std::string& name, std::size_t in,
                   std::size_t out, Activation act)
    : linear_(init, name, in, out), act_(act) {}

Var FFNLayer::forward(Tape& tape, Var x) {
  Var y = linear_.forward(tape, x);
  return act_ == Activation::kRelu ? ad::relu(y) : y;
}

// ---------------------------------------------------------------------------

TimeEncoder::TimeEncoder(const std::string& name, std::size_t dim)
    : omega_(name + ".omega", Tensor(1, dim)), phase_(name + ".phase", Tensor(1, dim)) {
  // Geometric frequency ladder from 1 down to 1e-9.
  for (std::size_t i = 0; i < dim; ++i) {
    const double frac = dim > 1 ? static_cast<double>(i) / static_cast<double>(dim - 1) : 0.0;
    omega_.value(0, i) = std::pow(10.0, -9.0 * frac);
  }
}

Var TimeEncoder::forward(Tape& tape, const std::vector<double>& values) {
  Var x = tape.constant(Tensor(values.size(), 1, values));
  return ad::cos(ad::add(ad::matmul(x, tape.param(omega_)), tape.param(phase_)));
}

std::vector<double> TimeEncoder::encode(double x) const {
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::cos(omega_.value(0, i) * x + phase_.value(0, i));
  }
  return out;
}

void TimeEncoder::collect(std::vector<Param*>& out) {
  out.push_back(&omega_);
  out.push_back(&phase_);
}

// ---------------------------------------------------------------------------

SelfAttentionBlock::SelfAttentionBlock(const InitContext& init, const std::string& name,
                                       const AttentionConfig& config)
    : config_(config) {
  if (config.heads == 0 || config.d_model % config.heads != 0) {
    throw ValidationError(name + ": d_model must be divisible by the head count");
  }
  const InitContext sub = init.sub(name);
  const std::size_t d = config.d_model;
  wq_ = Linear(sub, "wq", d, d);
  wk_ = Linear(sub, "wk", d, d);
  wv_ = Linear(sub, "wv", d, d);
  wo_ = Linear(sub, "wo", d, d);
  ffn1_ = Linear(sub, "ffn1", d, config.ffn_hidden);
  ffn2_ = Linear(sub, "ffn2", config.ffn_hidden, d);
}

Var SelfAttentionBlock::forward(Tape& tape, Var x, std::size_t block, const Mask& row_valid) {
  const std::size_t n = x.rows();
  if (x.cols() != config_.d_model) {
    throw ValidationError("attention: input width " + std::to_string(x.cols()) +
                          " != d_model " + std::to_string(config_.d_model));
  }
  if (block == 0 || n % block != 0) throw ValidationError("attention: bad block size");
  Mask key_mask;
  if (!row_valid.empty()) {
    key_mask.resize(n * block);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i / block) * block;
      for (std::size_t j = 0; j < block; ++j) key_mask[i * block + j] = row_valid[base + j];
    }
  }
  Var q = wq_.forward(tape, x);
  Var k = wk_.forward(tape, x);
  Var v = wv_.forward(tape, x);
  const std::size_t dh = config_.d_model / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var heads;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    Var weights = ad::softmax_rows(ad::scale(ad::block_scores(qh, kh, block), inv_sqrt), key_mask);
    if (h == 0) last_weights_ = weights.value();
    Var out = ad::block_apply(weights, vh, block);
    heads = h == 0 ? out : ad::concat_cols(heads, out);
  }
  Var attended = ad::dropout(wo_.forward(tape, heads), config_.dropout);
  Var x1 = ad::add(x, attended);
  Var ff = ffn2_.forward(tape, ad::relu(ffn1_.forward(tape, x1)));
  return ad::add(x1, ad::dropout(ff, config_.dropout));
}

void SelfAttentionBlock::collect(std::vector<Param*>& out) {
  for (Linear* l : {&wq_, &wk_, &wv_, &wo_, &ffn1_, &ffn2_}) l->collect(out);
}

// ---------------------------------------------------------------------------

void EncoderConfig::validate() const {
  if (d_node_feat == 0 || d_edge_feat == 0 || d_t == 0 || d_internal == 0 || d_struct == 0 ||
      k_neighbors == 0 || l_behaviors == 0 || heads == 0 || attn_ffn_hidden == 0) {
    throw ValidationError("encoder config: all sizes must be positive");
  }
  if (!(iota > 0.0) || !std::isfinite(iota)) throw ValidationError("encoder config: iota must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("encoder config: dropout in [0, 1)");
  if (d_internal % heads != 0 || d_struct % heads != 0) {
    throw ValidationError("encoder config: token widths must be divisible by heads");
  }
}

TemporalInput make_temporal_input(const std::vector<std::vector<double>>& behaviors,
                                  std::span<const double> times, std::size_t slots) {
  if (behaviors.size() != times.size()) throw ValidationError("temporal input: size mismatch");
  TemporalInput in;
  in.batch = behaviors.size();
  in.slots = slots;
  const std::size_t total = in.batch * slots;
  in.current_times.assign(total, 0.0);
  in.behavior_times.assign(total, 0.0);
  in.is_behavior.assign(total, 0.0);
  in.valid.assign(total, 0);
  for (std::size_t i = 0; i < in.batch; ++i) {
    const auto& list = behaviors[i];
    if (list.size() > slots) throw ValidationError("temporal input: more behaviors than slots");
    for (std::size_t s = 0; s < slots; ++s) in.current_times[i * slots + s] = times[i];
    for (std::size_t s = 0; s < list.size(); ++s) {
      in.behavior_times[i * slots + s] = list[s];
      in.is_behavior[i * slots + s] = 1.0;
      in.valid[i * slots + s] = 1;
    }
    if (list.empty()) in.valid[i * slots] = 1;
  }
  return in;
}

TemporalInput build_temporal_input(const graph::NeighborIndex& index,
                                   std::span<const graph::NodeId> nodes,
                                   std::span<const double> times, const EncoderConfig& config,
                                   graph::LeakageAudit* audit) {
  std::vector<std::vector<double>> lists(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    lists[i] = index.recent_behaviors(nodes[i], times[i], config.iota, config.l_behaviors,
                                      config.include_current_behavior, audit);
  }
  return make_temporal_input(lists, times, config.l_behaviors);
}

StructuralInput make_structural_input(const std::vector<std::vector<NeighborRow>>& neighbors,
                                      const graph::FeatureTable& edge_features, std::size_t slots) {
  StructuralInput in;
  in.batch = neighbors.size();
  in.slots = slots;
  const std::size_t total = in.batch * slots;
  in.edge_rows = Tensor(total, edge_features.cols);
  in.deltas.assign(total, 0.0);
  in.is_neighbor.assign(total, 0.0);
  in.valid.assign(total, 0);
  for (std::size_t i = 0; i < in.batch; ++i) {
    const auto& list = neighbors[i];
    if (list.size() > slots) throw ValidationError("structural input: more neighbors than slots");
    for (std::size_t s = 0; s < list.size(); ++s) {
      const std::size_t slot = i * slots + s;
      if (list[s].edge_feat_row >= edge_features.rows) {
        throw ValidationError("structural input: feature row out of range");
      }
      const auto src = edge_features.row(list[s].edge_feat_row);
      std::copy(src.begin(), src.end(), in.edge_rows.row(slot).begin());
      in.deltas[slot] = list[s].delta;
      in.is_neighbor[slot] = 1.0;
      in.valid[slot] = 1;
    }
    if (list.empty()) in.valid[i * slots] = 1;
  }
  return in;
}

StructuralInput build_structural_input(const graph::NeighborIndex& index,
                                       const graph::FeatureTable& edge_features,
                                       std::span<const graph::NodeId> nodes,
                                       std::span<const double> times, const EncoderConfig& config,
                                       graph::LeakageAudit* audit) {
  std::vector<std::vector<NeighborRow>> lists(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const graph::Incidence& inc :
         index.recent_neighbors(nodes[i], times[i], config.k_neighbors, audit)) {
      lists[i].push_back({inc.edge_feat_row, times[i] - inc.t});
    }
  }
  return make_structural_input(lists, edge_features, config.k_neighbors);
}

Tensor gather_rows(const graph::FeatureTable& table, std::span<const graph::NodeId> ids) {
  Tensor out(ids.size(), table.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows) throw ValidationError("gather_rows: row out of range");
    const auto src = table.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

AttentionConfig attention_config(const EncoderConfig& c, std::size_t width) {
  return {width, c.heads, c.attn_ffn_hidden, c.dropout};
}

// Broadcasts a per-row 0/1 flag across `cols` columns.
Tensor row_flags(const std::vector<double>& flags, std::size_t cols) {
  Tensor t(flags.size(), cols);
  for (std::size_t r = 0; r < flags.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = flags[r];
  return t;
}

}  // namespace

TextualEncoder::TextualEncoder(const InitContext& init, const EncoderConfig& config)
    : ffn_(init.sub("textual"), "ffn", config.d_node_feat, config.d_internal),
      sam_(init.sub("textual"), "sam", attention_config(config, config.d_internal)) {}

Var TextualEncoder::forward(Tape& tape, const Tensor& node_rows) {
  if (node_rows.rows() == 0) throw ValidationError("encode_textual: empty batch");
  Var projected = ffn_.forward(tape, tape.constant(node_rows));
  return sam_.forward(tape, projected, node_rows.rows());
}

void TextualEncoder::collect(std::vector<Param*>& out) {
  ffn_.collect(out);
  sam_.collect(out);
}

TemporalEncoder::TemporalEncoder(const InitContext& init, const EncoderConfig& config)
    : phi_(init.prefix + "temporal.phi", config.d_t),
      ffn_(init.sub("temporal"), "ffn", 2 * config.d_t, config.d_internal),
      sam_(init.sub("temporal"), "sam", attention_config(config, config.d_internal)) {}

Var TemporalEncoder::pooled(Tape& tape, const TemporalInput& input) {
  if (input.batch == 0) throw ValidationError("encode_temporal: empty batch");
  Var current = phi_.forward(tape, input.current_times);
  Var behavior = ad::mul(phi_.forward(tape, input.behavior_times),
                         tape.constant(row_flags(input.is_behavior, phi_.dim())));
  Var rows = ffn_.forward(tape, ad::concat_cols(current, behavior));
  return ad::group_mean_rows(rows, input.slots, input.valid);
}

Var TemporalEncoder::forward(Tape& tape, const TemporalInput& input) {
  return sam_.forward(tape, pooled(tape, input), input.batch);
}

void TemporalEncoder::collect(std::vector<Param*>& out) {
  phi_.collect(out);
  ffn_.collect(out);
  sam_.collect(out);
}

StructuralEncoder::StructuralEncoder(const InitContext& init, const EncoderConfig& config)
    : phi_(init.prefix + "structural.phi", config.d_t),
      proj_(init.sub("structural"), "proj", config.d_edge_feat + config.d_t, config.d_struct),
      sam_(init.sub("structural"), "sam", attention_config(config, config.d_struct)) {}

Var StructuralEncoder::forward(Tape& tape, const StructuralInput& input) {
  if (input.batch == 0) throw ValidationError("encode_structural: empty batch");
  Var time = ad::mul(phi_.forward(tape, input.deltas),
                     tape.constant(row_flags(input.is_neighbor, phi_.dim())));
  Var rows = proj_.forward(tape, ad::concat_cols(tape.constant(input.edge_rows), time));
  Var attended = sam_.forward(tape, rows, input.slots, input.valid);
  return ad::group_mean_rows(attended, input.slots, input.valid);
}

void StructuralEncoder::collect(std::vector<Param*>& out) {
  phi_.collect(out);
  proj_.collect(out);
  sam_.collect(out);
}

}  // namespace moment::nn
