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

#include "moment/fusion_loss.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#include "moment/common.hpp"

namespace moment::fusion {

FusionParams::FusionParams(const nn::InitContext& init, std::size_t d_internal,
                           std::size_t d_struct, nn::Activation act)
    : beta_(init.prefix + "fusion.beta", Tensor::scalar(1.0)),
      gamma_(init.prefix + "fusion.gamma", Tensor::scalar(1.0)),
      ffn_pi_(init.sub("fusion"), "ffn_pi", d_internal, d_struct, act) {}

void FusionParams::collect(std::vector<Param*>& out) {
  out.push_back(&beta_);
  out.push_back(&gamma_);
  ffn_pi_.collect(out);
}

void fuse(Tape& tape, ModalityTokens& tokens, FusionParams& params) {
  if (!tokens.zx.value().same_shape(tokens.ztau.value())) {
    throw ValidationError("fuse: zx and ztau shapes differ");
  }
  if (tokens.zs.rows() != tokens.zx.rows()) throw ValidationError("fuse: batch sizes differ");
  Var internal = ad::add_scaled(tokens.zx, tokens.ztau, tape.param(params.gamma()));
  tokens.zpi = params.ffn_pi().forward(tape, internal);
  if (!tokens.zpi.value().same_shape(tokens.zs.value())) {
    throw ValidationError("fuse: ffn_pi output does not match zs");
  }
  tokens.z = ad::add_scaled(tokens.zs, tokens.zpi, tape.param(params.beta()));
}

Var distribution_loss(Var ztau, Var zx) {
  if (!ztau.value().same_shape(zx.value())) throw ValidationError("distribution_loss: shape mismatch");
  if (ztau.rows() == 0) throw ValidationError("distribution_loss: empty batch");
  return ad::sum(ad::square(ad::sub(ad::mean_rows(ztau), ad::mean_rows(zx))));
}

Var instance_loss(Var zpi, Var zs) {
  if (!zpi.value().same_shape(zs.value())) throw ValidationError("instance_loss: shape mismatch");
  if (zpi.rows() == 0) throw ValidationError("instance_loss: empty batch");
  Var cosines = ad::cosine_rows(zpi, zs);
  // Zero-norm rows are legal (cosine 0) but usually point at a dead branch.
  static std::atomic<bool> warned{false};
  if (!warned.load(std::memory_order_relaxed)) {
    const auto zero = [](std::span<const double> row) {
      return std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
    };
    for (std::size_t r = 0; r < zpi.rows(); ++r) {
      if (zero(zpi.value().row(r)) || zero(zs.value().row(r))) {
        if (!warned.exchange(true)) {
          std::cerr << "warning: instance_loss saw a zero-norm row; treating its cosine as 0\n";
        }
        break;
      }
    }
  }
  Tape& tape = *zpi.tape();
  return ad::sub(tape.constant(Tensor::scalar(1.0)), ad::mean(cosines));
}

Var bce_link_loss(Var pos_logits, Var neg_logits) {
  if (pos_logits.value().size() == 0) throw ValidationError("bce_link_loss: empty input");
  if (pos_logits.value().size() != neg_logits.value().size()) {
    throw ValidationError("bce_link_loss: positive and negative counts differ");
  }
  std::vector<double> targets(pos_logits.value().size(), 1.0);
  targets.resize(2 * pos_logits.value().size(), 0.0);
  const Var parts[] = {pos_logits, neg_logits};
  return ad::bce_with_logits(ad::concat_rows(parts), targets);
}

double total_loss(double task_loss, double dist, double inst, const LossConfig& config) {
  double align = 0.0;
  if (config.use_distribution) align += dist;
  if (config.use_instance) align += inst;
  return task_loss + config.alpha * align;
}

Var total_loss(Var task_loss, Var dist, Var inst, const LossConfig& config) {
  if (config.use_distribution && config.use_instance) {
    return ad::add(task_loss, ad::scale(ad::add(dist, inst), config.alpha));
  }
  if (config.use_distribution) return ad::add(task_loss, ad::scale(dist, config.alpha));
  if (config.use_instance) return ad::add(task_loss, ad::scale(inst, config.alpha));
  return task_loss;
}

PairDecoder::PairDecoder(const nn::InitContext& init, const std::string& name, std::size_t d_embed,
                         std::size_t hidden, std::size_t outputs)
    : hidden_(init.sub(name), "hidden", 2 * d_embed, hidden),
      output_(init.sub(name), "output", hidden, outputs) {}

Var PairDecoder::forward(Tape& tape, Var zu, Var zv) {
  return output_.forward(tape, ad::relu(hidden_.forward(tape, ad::concat_cols(zu, zv))));
}

void PairDecoder::collect(std::vector<Param*>& out) {
  hidden_.collect(out);
  output_.collect(out);
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  return ad::cross_entropy_rows(logits, labels);
}

// ---------------------------------------------------------------------------

void DiscreteJoint::validate() const {
  if (n_s == 0 || n_pi == 0 || n_y == 0 || p.size() != n_s * n_pi * n_y) {
    throw ValidationError("DiscreteJoint: table size does not match supports");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("DiscreteJoint: negative or non-finite mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("DiscreteJoint: masses do not sum to 1");
}

namespace {

double plogp_ratio(double joint, double numerator_scale, double denominator) {
  return joint > 0.0 ? joint * std::log(joint * numerator_scale / denominator) : 0.0;
}

double conditional_mi(const DiscreteJoint& j) {
  std::vector<double> ps(j.n_s, 0.0), psp(j.n_s * j.n_pi, 0.0), psy(j.n_s * j.n_y, 0.0);
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t pi = 0; pi < j.n_pi; ++pi)
      for (std::size_t y = 0; y < j.n_y; ++y) {
        const double v = j.at(s, pi, y);
        ps[s] += v;
        psp[s * j.n_pi + pi] += v;
        psy[s * j.n_y + y] += v;
      }
  double total = 0.0;
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t pi = 0; pi < j.n_pi; ++pi)
      for (std::size_t y = 0; y < j.n_y; ++y) {
        total += plogp_ratio(j.at(s, pi, y), ps[s], psp[s * j.n_pi + pi] * psy[s * j.n_y + y]);
      }
  return total;
}

}  // namespace

MiChainResult mi_chain_check(const DiscreteJoint& joint, const std::vector<std::size_t>& relabel) {
  joint.validate();
  const DiscreteJoint& j = joint;
  std::vector<double> py(j.n_y, 0.0), ps(j.n_s, 0.0), psp(j.n_s * j.n_pi, 0.0),
      psy(j.n_s * j.n_y, 0.0);
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t pi = 0; pi < j.n_pi; ++pi)
      for (std::size_t y = 0; y < j.n_y; ++y) {
        const double v = j.at(s, pi, y);
        py[y] += v;
        ps[s] += v;
        psp[s * j.n_pi + pi] += v;
        psy[s * j.n_y + y] += v;
      }

  MiChainResult r;
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t pi = 0; pi < j.n_pi; ++pi)
      for (std::size_t y = 0; y < j.n_y; ++y)
        r.lhs += plogp_ratio(j.at(s, pi, y), 1.0, psp[s * j.n_pi + pi] * py[y]);
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t y = 0; y < j.n_y; ++y)
      r.structural_term += plogp_ratio(psy[s * j.n_y + y], 1.0, ps[s] * py[y]);
  r.conditional_term = conditional_mi(j);
  r.rhs = r.structural_term + r.conditional_term;

  DiscreteJoint moved = j;
  if (!relabel.empty()) {
    if (relabel.size() != j.n_pi) throw ValidationError("mi_chain_check: relabel size != |Zpi|");
    std::vector<std::uint8_t> hit(j.n_pi, 0);
    for (std::size_t target : relabel) {
      if (target >= j.n_pi || hit[target]) throw ValidationError("mi_chain_check: relabel is not a bijection");
      hit[target] = 1;
    }
    for (std::size_t s = 0; s < j.n_s; ++s)
      for (std::size_t pi = 0; pi < j.n_pi; ++pi)
        for (std::size_t y = 0; y < j.n_y; ++y)
          moved.p[(s * j.n_pi + relabel[pi]) * j.n_y + y] = j.at(s, pi, y);
  }
  r.relabeled_conditional = conditional_mi(moved);
  return r;
}

}  // namespace moment::fusion
