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

// Self-checks exposed as commands: full-model gradient check and the mutual
// information chain rule on random discrete joints.

#ifndef MOMENT_CHECKS_HPP_
#define MOMENT_CHECKS_HPP_

#include <cstddef>
#include <cstdint>

#include "moment/fusion_loss.hpp"
#include "moment/graph_store.hpp"
#include "moment/trainer.hpp"

namespace moment::checks {

// A 4-node graph with a short event history and tiny feature widths.
graph::DyTagDataset tiny_dataset(std::uint64_t seed);
// Matching small-width training config.
train::TrainConfig tiny_config(std::uint64_t seed);

struct GradCheckResult {
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
};

// BCE plus both alignment terms over one batch of the tiny dataset, compared
// against central differences for every parameter entry.
GradCheckResult grad_check_full_model(std::uint64_t seed, double epsilon = 1e-6);

// Random joint over supports of 2..4 values each, masses from normalised
// exponentials, a few exact zeros.
fusion::DiscreteJoint random_joint(CounterRng& rng);

struct MiCheckResult {
  std::size_t trials = 0;
  double max_chain_gap = 0.0;     // max |lhs - rhs|
  double max_relabel_gap = 0.0;   // max |I(Zpi;Y|Zs) - I(c Zpi;Y|Zs)|
};

MiCheckResult mi_check(std::size_t trials, std::uint64_t seed);

// Zs independent fair bit, Zpi fair bit, Y = Zs xor Zpi.
fusion::DiscreteJoint xor_joint();

}  // namespace moment::checks

#endif  // MOMENT_CHECKS_HPP_
