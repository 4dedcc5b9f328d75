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

// Dense rank-2 tensors, a reverse-mode tape and the Adam optimizer.
//
// Every value is a rows x cols matrix of doubles; vectors are 1 x n and
// scalars 1 x 1. Ops are free functions taking and returning `Var` handles
// that point into the `Tape` which recorded them. Calling `Tape::backward`
// on a scalar walks the record in reverse and accumulates gradients into the
// `Param`s that were bound with `Tape::param`.

#ifndef MOMENT_TENSOR_HPP_
#define MOMENT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace moment::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double item() const;

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  void fill(double v);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A trainable tensor with its gradient and Adam moments.
struct Param {
  Param() = default;
  Param(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;
  // Frozen params still receive gradients but adam_step leaves them alone.
  bool frozen = false;

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

void adam_step(std::span<Param* const> params, const AdamConfig& config);

class Tape;

// Handle to a value recorded on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Per-entry validity flags (1 = keep).
using Mask = std::vector<std::uint8_t>;

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  // `seed` and `step` key the dropout streams; `training` enables dropout.
  // With grad_enabled false nothing is recorded for backward (inference).
  explicit Tape(bool training = false, std::uint64_t seed = 0, std::uint64_t step = 0,
                bool grad_enabled = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  // Binds a parameter. Repeated calls for the same Param return the same leaf.
  Var param(Param& p);

  // Populates Param::grad (accumulating) for every bound param. Params not
  // reachable from `loss` receive nothing, so a zeroed grad stays zero.
  void backward(Var loss);

  bool training() const { return training_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t next_stochastic_op() { return stochastic_ops_++; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, std::span<const Var> inputs, Backprop backprop);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backprop));
  }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_slot(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backprop backprop;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> param_ids_;
  bool training_;
  bool grad_enabled_;
  std::uint64_t seed_;
  std::uint64_t step_;
  std::uint64_t stochastic_ops_ = 0;
};

// ---------------------------------------------------------------------------
// Differentiable ops.

Var matmul(Var a, Var b);
// b may have the same shape as a, or a single row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var square(Var a);
// Multiply every entry by the learnable 1 x 1 scalar s.
Var scale(Var a, Var s);
Var scale(Var a, double s);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var relu(Var a);
Var cos(Var a);
// a + s * b for a learnable 1 x 1 scalar s. When s is exactly zero the
// forward value is a bit-for-bit copy of a.
Var add_scaled(Var a, Var b, Var s);
// Inverted dropout; identity when p == 0 or the tape is not training.
Var dropout(Var a, double p);
// Row-wise softmax. Masked entries (mask[i] == 0) get exactly zero weight; an
// empty mask means no masking. A row with every entry masked is an error.
Var softmax_rows(Var a, const Mask& mask = {});
// Mean over the rows whose flag is set, producing 1 x cols.
Var mean_rows_masked(Var a, const Mask& row_mask);
// Groups consecutive blocks of `group` rows and mean-pools the flagged rows of
// each, producing (rows / group) x cols.
Var group_mean_rows(Var a, std::size_t group, const Mask& row_mask);
Var mean_rows(Var a);
Var l2_normalize_rows(Var a);
// Cosine similarity of matching rows, rows x 1. Zero-norm rows give 0.
Var cosine_rows(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
// Block-diagonal attention helpers. Rows are split into consecutive blocks of
// `block` rows; block_scores returns, for each row i, the dot products of q_i
// with every k row of the same block (rows x block). block_apply multiplies
// such a rows x block weight matrix by the value rows of each block.
Var block_scores(Var q, Var k, std::size_t block);
Var block_apply(Var weights, Var v, std::size_t block);
// Mean binary cross-entropy of logits against 0/1 targets, stable form.
Var bce_with_logits(Var logits, const std::vector<double>& targets);
// Mean softmax cross-entropy of each logits row against its class label.
Var cross_entropy_rows(Var logits, const std::vector<std::size_t>& labels);

// ---------------------------------------------------------------------------

// Builds a loss on a fresh tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

// Maximum over every entry of every param of
// |g_tape - g_central| / max(1, |g_central|). Param values are restored.
double finite_diff_check(const LossFn& f, std::span<Param* const> params, double epsilon = 1e-6);

}  // namespace moment::ad

#endif  // MOMENT_TENSOR_HPP_
