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

#ifndef MOMENT_FUSION_LOSS_HPP_
#define MOMENT_FUSION_LOSS_HPP_

#include <cstddef>
#include <vector>

#include "moment/encoders.hpp"
#include "moment/tensor.hpp"

namespace moment::fusion {

using ad::Param;
using ad::Tape;
using ad::Tensor;
using ad::Var;

// Per-batch token matrices. zpi and z are filled by fuse().
struct ModalityTokens {
  Var zx;    // B x d_internal
  Var ztau;  // B x d_internal
  Var zs;    // B x d_struct
  Var zpi;   // B x d_struct
  Var z;     // B x d_struct
};

class FusionParams {
 public:
  FusionParams() = default;
  FusionParams(const nn::InitContext& init, std::size_t d_internal, std::size_t d_struct,
               nn::Activation act = nn::Activation::kRelu);

  Param& beta() { return beta_; }
  Param& gamma() { return gamma_; }
  nn::FFNLayer& ffn_pi() { return ffn_pi_; }
  void collect(std::vector<Param*>& out);

 private:
  Param beta_;
  Param gamma_;
  nn::FFNLayer ffn_pi_;
};

// zpi = ffn_pi(zx + gamma * ztau); z = zs + beta * zpi.
void fuse(Tape& tape, ModalityTokens& tokens, FusionParams& params);

// || mean_row(ztau) - mean_row(zx) ||^2
Var distribution_loss(Var ztau, Var zx);
// 1 - mean_i cos(zpi_i, zs_i); a zero-norm row counts as cosine 0.
Var instance_loss(Var zpi, Var zs);
// Mean BCE with positives labelled 1 and negatives 0.
Var bce_link_loss(Var pos_logits, Var neg_logits);

struct LossConfig {
  double alpha = 0.2;
  bool use_distribution = true;
  bool use_instance = true;
};

double total_loss(double task_loss, double dist, double inst, const LossConfig& config);
Var total_loss(Var task_loss, Var dist, Var inst, const LossConfig& config);

// Two-layer ReLU network over [z_u || z_v]; order sensitive.
class PairDecoder {
 public:
  PairDecoder() = default;
  PairDecoder(const nn::InitContext& init, const std::string& name, std::size_t d_embed,
              std::size_t hidden, std::size_t outputs);

  Var forward(Tape& tape, Var zu, Var zv);
  void collect(std::vector<Param*>& out);
  nn::Linear& hidden() { return hidden_; }
  nn::Linear& output() { return output_; }

 private:
  nn::Linear hidden_;
  nn::Linear output_;
};

// Returns the mean softmax cross-entropy of logits rows vs labels.
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);

// Joint distribution over finite supports of (zs, zpi, y), stored with y
// varying fastest: p[(s * n_pi + pi) * n_y + y].
struct DiscreteJoint {
  std::size_t n_s = 0;
  std::size_t n_pi = 0;
  std::size_t n_y = 0;
  std::vector<double> p;

  double at(std::size_t s, std::size_t pi, std::size_t y) const { return p[(s * n_pi + pi) * n_y + y]; }
  void validate() const;
};

struct MiChainResult {
  double lhs = 0.0;                  // I((Zs, Zpi); Y)
  double rhs = 0.0;                  // I(Zs; Y) + I(Zpi; Y | Zs)
  double structural_term = 0.0;      // I(Zs; Y)
  double conditional_term = 0.0;     // I(Zpi; Y | Zs)
  double relabeled_conditional = 0.0;  // I(c * Zpi; Y | Zs) for a bijective relabeling
};

// Exact enumeration in nats. `relabel` maps each Zpi support index to a new
// index (a permutation); identity when empty.
MiChainResult mi_chain_check(const DiscreteJoint& joint, const std::vector<std::size_t>& relabel = {});

}  // namespace moment::fusion

#endif  // MOMENT_FUSION_LOSS_HPP_
