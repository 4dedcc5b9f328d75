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

// Modality encoders: textual, temporal and structural node tokens.
//
// The textual and temporal encoders produce one token per batch node and run
// self-attention across the batch rows. The structural encoder attends within
// each node's own sequence of recent neighbors and mean-pools the result.
// Variable-length inputs are zero-padded and carried with a validity mask;
// masked rows never receive attention weight and never enter a mean pool.

#ifndef MOMENT_ENCODERS_HPP_
#define MOMENT_ENCODERS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moment/graph_store.hpp"
#include "moment/tensor.hpp"

namespace moment::nn {

using ad::Mask;
using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// Deterministic initialisation streams derive from (seed, param name).
struct InitContext {
  std::uint64_t seed = 0;
  std::string prefix;

  InitContext sub(const std::string& name) const { return {seed, prefix + name + "."}; }
  Tensor glorot(const std::string& name, std::size_t in, std::size_t out) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(const InitContext& init, const std::string& name, std::size_t in, std::size_t out,
         bool bias = true);

  Var forward(Tape& tape, Var x);
  void collect(std::vector<Param*>& out);
  std::size_t in() const { return weight_.value.rows(); }
  std::size_t out() const { return weight_.value.cols(); }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
  bool has_bias_ = true;
};

enum class Activation { kRelu, kIdentity };

class FFNLayer {
 public:
  FFNLayer() = default;
  FFNLayer(const InitContext& init, const std::string& name, std::size_t in, std::size_t out,
           Activation act = Activation::kRelu);

  Var forward(Tape& tape, Var x);
  void collect(std::vector<Param*>& out) { linear_.collect(out); }
  Linear& linear() { return linear_; }

 private:
  Linear linear_;
  Activation act_ = Activation::kRelu;
};

// phi(x)_i = cos(omega_i * x + phase_i), with learnable omega and phase.
class TimeEncoder {
 public:
  TimeEncoder() = default;
  TimeEncoder(const std::string& name, std::size_t dim);

  std::size_t dim() const { return omega_.value.cols(); }
  // Encodes a column of scalars into values.size() x dim rows.
  Var forward(Tape& tape, const std::vector<double>& values);
  std::vector<double> encode(double x) const;
  void collect(std::vector<Param*>& out);
  Param& omega() { return omega_; }
  Param& phase() { return phase_; }

 private:
  Param omega_;
  Param phase_;
};

struct AttentionConfig {
  std::size_t d_model = 128;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 512;
  double dropout = 0.1;
};

// One self-attention layer: multi-head attention with a residual connection
// followed by a ReLU feed-forward with a residual connection.
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(const InitContext& init, const std::string& name, const AttentionConfig& config);

  // x is (groups * block) x d_model; every row attends to the valid rows of
  // its own block. An empty row_valid means every row is valid.
  Var forward(Tape& tape, Var x, std::size_t block, const Mask& row_valid = {});

  // Attention weights of the last forward pass for head 0, for inspection.
  const Tensor& last_weights() const { return last_weights_; }
  void collect(std::vector<Param*>& out);

 private:
  AttentionConfig config_;
  Linear wq_, wk_, wv_, wo_;
  Linear ffn1_, ffn2_;
  Tensor last_weights_;
};

struct EncoderConfig {
  std::size_t d_node_feat = 768;
  std::size_t d_edge_feat = 768;
  std::size_t d_t = 100;
  std::size_t d_internal = 128;
  std::size_t d_struct = 768;
  std::size_t k_neighbors = 20;
  std::size_t l_behaviors = 20;
  double iota = 1.0;
  std::size_t heads = 2;
  std::size_t attn_ffn_hidden = 512;
  double dropout = 0.1;
  // Counts an incidence at exactly the query time as a behavior.
  bool include_current_behavior = false;

  void validate() const;
};

// Padded behavior rows for B nodes: B * L slots.
struct TemporalInput {
  std::size_t batch = 0;
  std::size_t slots = 0;
  std::vector<double> current_times;   // per slot, the node's query time
  std::vector<double> behavior_times;  // per slot, 0 when not a real behavior
  std::vector<double> is_behavior;     // 1 for real behaviors, else 0
  Mask valid;                          // real behaviors, or the fallback row
};

// Padded neighbor rows for B nodes: B * k slots.
struct StructuralInput {
  std::size_t batch = 0;
  std::size_t slots = 0;
  Tensor edge_rows;                 // (B * k) x d_edge_feat, zero when padded
  std::vector<double> deltas;       // query time minus neighbor time
  std::vector<double> is_neighbor;  // 1 for real neighbors, else 0
  Mask valid;                       // real neighbors, or the fallback row
};

TemporalInput build_temporal_input(const graph::NeighborIndex& index,
                                   std::span<const graph::NodeId> nodes,
                                   std::span<const double> times, const EncoderConfig& config,
                                   graph::LeakageAudit* audit = nullptr);

// Direct construction from behavior lists (one list per node).
TemporalInput make_temporal_input(const std::vector<std::vector<double>>& behaviors,
                                  std::span<const double> times, std::size_t slots);

StructuralInput build_structural_input(const graph::NeighborIndex& index,
                                       const graph::FeatureTable& edge_features,
                                       std::span<const graph::NodeId> nodes,
                                       std::span<const double> times, const EncoderConfig& config,
                                       graph::LeakageAudit* audit = nullptr);

struct NeighborRow {
  std::size_t edge_feat_row = 0;
  double delta = 0.0;
};

StructuralInput make_structural_input(const std::vector<std::vector<NeighborRow>>& neighbors,
                                      const graph::FeatureTable& edge_features, std::size_t slots);

// Zx = SAM_x(FFN_x(node_rows)).
class TextualEncoder {
 public:
  TextualEncoder() = default;
  TextualEncoder(const InitContext& init, const EncoderConfig& config);

  Var forward(Tape& tape, const Tensor& node_rows);
  void collect(std::vector<Param*>& out);
  SelfAttentionBlock& attention() { return sam_; }
  FFNLayer& ffn() { return ffn_; }

 private:
  FFNLayer ffn_;
  SelfAttentionBlock sam_;
};

// Ztau = SAM_tau(masked mean over slots of FFN_tau([phi(t_u) || phi(t')])).
class TemporalEncoder {
 public:
  TemporalEncoder() = default;
  TemporalEncoder(const InitContext& init, const EncoderConfig& config);

  Var forward(Tape& tape, const TemporalInput& input);
  // Masked mean of the FFN rows, before attention (B x d_internal).
  Var pooled(Tape& tape, const TemporalInput& input);
  void collect(std::vector<Param*>& out);
  TimeEncoder& time_encoder() { return phi_; }
  FFNLayer& ffn() { return ffn_; }
  SelfAttentionBlock& attention() { return sam_; }

 private:
  TimeEncoder phi_;
  FFNLayer ffn_;
  SelfAttentionBlock sam_;
};

// Zs = masked mean over slots of SAM_s(W [edge_feat || phi(dt)]), with the
// attention confined to each node's own slots.
class StructuralEncoder {
 public:
  StructuralEncoder() = default;
  StructuralEncoder(const InitContext& init, const EncoderConfig& config);

  Var forward(Tape& tape, const StructuralInput& input);
  void collect(std::vector<Param*>& out);
  TimeEncoder& time_encoder() { return phi_; }
  Linear& projection() { return proj_; }
  SelfAttentionBlock& attention() { return sam_; }

 private:
  TimeEncoder phi_;
  Linear proj_;
  SelfAttentionBlock sam_;
};

// Gathers feature-table rows into a tensor.
Tensor gather_rows(const graph::FeatureTable& table, std::span<const graph::NodeId> ids);

}  // namespace moment::nn

#endif  // MOMENT_ENCODERS_HPP_
