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

#include "moment/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "moment/common.hpp"

namespace moment::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
     << b.cols();
  throw ValidationError(os.str());
}

// C += A * B with A m x k, B k x n. The accumulation order for every output
// entry is p = 0..k-1 regardless of m, so a row's result never depends on how
// many other rows are in the batch.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T with A m x n, B k x n, C m x k. B is transposed once so the
// inner loop runs over contiguous memory.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(a, bt.data(), c, m, n, k);
}

// C += A^T * B with A m x k, B m x n, C k x n.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void check_mask(const char* op, const Mask& mask, std::size_t expected) {
  if (!mask.empty() && mask.size() != expected) {
    std::ostringstream os;
    os << op << ": mask has " << mask.size() << " entries, expected " << expected;
    throw ValidationError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ValidationError("Tensor: data length does not match shape");
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ValidationError("Tensor::item on non-scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

// ---------------------------------------------------------------------------
// Param / Adam

Param::Param(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(eps > 0.0)) {
    throw ValidationError("AdamConfig: lr >= 0, 0 <= beta < 1 and eps > 0 required");
  }
}

void adam_step(std::span<Param* const> params, const AdamConfig& config) {
  for (Param* p : params) {
    if (p->frozen) {
      p->zero_grad();
      continue;
    }
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    auto& v = p->value.data();
    auto& g = p->grad.data();
    auto& m1 = p->adam_m.data();
    auto& m2 = p->adam_v.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
      m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      v[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
      g[i] = 0.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Tape::Tape(bool training, std::uint64_t seed, std::uint64_t step, bool grad_enabled)
    : training_(training), grad_enabled_(grad_enabled), seed_(seed), step_(step) {}

Var Tape::constant(Tensor t) {
  if (!t.all_finite()) throw RuntimeFailure("constant: non-finite input");
  nodes_.push_back(Node{std::move(t), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backprop backprop) {
  if (!value.all_finite()) throw RuntimeFailure("tape: op produced a non-finite value");
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw ValidationError("tape: mixing values from different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backprop) : Backprop{}, nullptr,
                        needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ValidationError("backward: loss recorded on another tape");
  if (loss.value().size() != 1) throw ValidationError("backward: loss must be a scalar");
  grad_slot(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (!pg.same_shape(n.value)) pg = Tensor(n.value.rows(), n.value.cols());
      for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += n.grad.data()[i];
    } else if (n.backprop) {
      n.backprop(*this, id);
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), av.rows(), av.cols(), bv.cols());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    const Tensor& bv = t.value(b.id());
    if (t.requires_grad(a.id())) {
      gemm_nt(g.data().data(), bv.data().data(), t.grad_slot(a.id()).data().data(), g.rows(),
              g.cols(), bv.rows());
    }
    if (t.requires_grad(b.id())) {
      gemm_tn(av.data().data(), g.data().data(), t.grad_slot(b.id()).data().data(), av.rows(),
              av.cols(), g.cols());
    }
  });
}

namespace {

enum class Elementwise { kAdd, kSub, kMul };

Var binary(Var a, Var b, Elementwise kind) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && (kind != Elementwise::kAdd || bv.rows() != 1 || bv.cols() != av.cols())) {
    shape_error(kind == Elementwise::kAdd ? "add" : kind == Elementwise::kSub ? "sub" : "mul", av,
                bv);
  }
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) {
      const double x = av(r, c);
      const double y = broadcast ? bv(0, c) : bv(r, c);
      out(r, c) = kind == Elementwise::kAdd ? x + y : kind == Elementwise::kSub ? x - y : x * y;
    }
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, kind, broadcast](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.grad_slot(a.id());
      const Tensor& bv = t.value(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.data()[i] += kind == Elementwise::kMul ? g.data()[i] * bv.data()[i] : g.data()[i];
      }
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.grad_slot(b.id());
      const Tensor& av = t.value(a.id());
      if (broadcast) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double gi = g.data()[i];
          gb.data()[i] += kind == Elementwise::kAdd   ? gi
                          : kind == Elementwise::kSub ? -gi
                                                      : gi * av.data()[i];
        }
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Elementwise::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, Elementwise::kSub); }
Var mul(Var a, Var b) { return binary(a, b, Elementwise::kMul); }

Var square(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= x;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += 2.0 * av.data()[i] * g.data()[i];
  });
}

Var scale(Var a, Var s) {
  if (s.value().size() != 1) shape_error("scale", a.value(), s.value());
  const double sv = s.value().item();
  Tensor out = a.value();
  for (double& x : out.data()) x *= sv;
  return a.tape()->record(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    if (t.requires_grad(a.id())) {
      const double sv = t.value(s.id()).item();
      Tensor& ga = t.grad_slot(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += sv * g.data()[i];
    }
    if (t.requires_grad(s.id())) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * av.data()[i];
      t.grad_slot(s.id()).data()[0] += acc;
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += s * g.data()[i];
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + ca);
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.grad_slot(a.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.grad_slot(b.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  Tape* tape = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  auto dst = out.data().begin();
  for (const Var& p : parts) dst = std::copy(p.value().data().begin(), p.value().data().end(), dst);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [inputs, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t n = p.rows() * cols;
      if (t.requires_grad(p.id())) {
        Tensor& gp = t.grad_slot(p.id());
        for (std::size_t i = 0; i < n; ++i) gp.data()[i] += g.data()[offset + i];
      }
      offset += n;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin >= end || end > av.cols()) throw ValidationError("slice_cols: bad column range");
  const std::size_t w = end - begin;
  Tensor out(av.rows(), w);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = av(r, begin + c);
  return a.tape()->record(std::move(out), {a}, [a, begin, w](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < w; ++c) ga(r, begin + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin >= end || end > av.rows()) throw ValidationError("slice_rows: bad row range");
  const std::size_t cols = av.cols();
  Tensor out(end - begin, cols,
             std::vector<double>(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                 av.data().begin() + static_cast<std::ptrdiff_t>(end * cols)));
  return a.tape()->record(std::move(out), {a}, [a, begin, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[begin * cols + i] += g.data()[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av.data()[i] > 0.0) ga.data()[i] += g.data()[i];
  });
}

Var cos(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = std::cos(x);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] -= std::sin(av.data()[i]) * g.data()[i];
  });
}

Var add_scaled(Var a, Var b, Var s) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add_scaled", av, bv);
  if (s.value().size() != 1) shape_error("add_scaled", av, s.value());
  const double sv = s.value().item();
  Tensor out = av;
  if (sv != 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += sv * bv.data()[i];
  }
  return a.tape()->record(std::move(out), {a, b, s}, [a, b, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const double sv = t.value(s.id()).item();
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.grad_slot(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.grad_slot(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += sv * g.data()[i];
    }
    if (t.requires_grad(s.id())) {
      const Tensor& bv = t.value(b.id());
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * bv.data()[i];
      t.grad_slot(s.id()).data()[0] += acc;
    }
  });
}

Var dropout(Var a, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout: p must be in [0, 1)");
  Tape& tape = *a.tape();
  if (!tape.training() || p == 0.0) return a;
  CounterRng rng(tape.seed(), stream_id("dropout") ^ tape.next_stochastic_op(), tape.step());
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(a.value().size());
  for (double& f : factor) f = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= factor[i];
  return tape.record(std::move(out), {a}, [a, factor = std::move(factor)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * factor[i];
  });
}

Var softmax_rows(Var a, const Mask& mask) {
  const Tensor& av = a.value();
  check_mask("softmax_rows", mask, av.size());
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const std::size_t base = r * av.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < av.cols(); ++c)
      if (mask.empty() || mask[base + c]) mx = std::max(mx, av(r, c));
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ValidationError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      if (mask.empty() || mask[base + c]) {
        out(r, c) = std::exp(av(r, c) - mx);
        total += out(r, c);
      }
    }
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= total;
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var group_mean_rows(Var a, std::size_t group, const Mask& row_mask) {
  const Tensor& av = a.value();
  if (group == 0 || av.rows() % group != 0) {
    throw ValidationError("group_mean_rows: rows not divisible by group size");
  }
  check_mask("group_mean_rows", row_mask, av.rows());
  const std::size_t groups = av.rows() / group;
  const std::size_t cols = av.cols();
  std::vector<double> counts(groups, 0.0);
  Tensor out(groups, cols);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t j = 0; j < group; ++j) {
      const std::size_t r = gi * group + j;
      if (!row_mask.empty() && !row_mask[r]) continue;
      counts[gi] += 1.0;
      for (std::size_t c = 0; c < cols; ++c) out(gi, c) += av(r, c);
    }
    if (counts[gi] == 0.0) {
      throw ValidationError("group_mean_rows: group " + std::to_string(gi) + " is fully masked");
    }
    for (std::size_t c = 0; c < cols; ++c) out(gi, c) /= counts[gi];
  }
  return a.tape()->record(
      std::move(out), {a}, [a, group, row_mask, counts = std::move(counts)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_slot(a.id());
        for (std::size_t r = 0; r < ga.rows(); ++r) {
          if (!row_mask.empty() && !row_mask[r]) continue;
          const std::size_t gi = r / group;
          for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(gi, c) / counts[gi];
        }
      });
}

Var mean_rows_masked(Var a, const Mask& row_mask) {
  return group_mean_rows(a, a.rows(), row_mask);
}

Var mean_rows(Var a) { return group_mean_rows(a, a.rows(), {}); }

Var l2_normalize_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double x : av.row(r)) s += x * x;
    norms[r] = std::sqrt(s);
    if (norms[r] > 0.0)
      for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) / norms[r];
  }
  return a.tape()->record(std::move(out), {a}, [a, norms = std::move(norms)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_slot(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (norms[r] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * dot) / norms[r];
    }
  });
}

Var cosine_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("cosine_rows", av, bv);
  const std::size_t n = av.rows();
  std::vector<double> na(n), nb(n), dots(n);
  Tensor out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double sa = 0.0, sb = 0.0, d = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      sa += av(r, c) * av(r, c);
      sb += bv(r, c) * bv(r, c);
      d += av(r, c) * bv(r, c);
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    dots[r] = d;
    out(r, 0) = (na[r] > 0.0 && nb[r] > 0.0) ? d / (na[r] * nb[r]) : 0.0;
  }
  return a.tape()->record(
      std::move(out), {a, b},
      [a, b, na = std::move(na), nb = std::move(nb)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        const Tensor& av = t.value(a.id());
        const Tensor& bv = t.value(b.id());
        const bool ga_on = t.requires_grad(a.id());
        const bool gb_on = t.requires_grad(b.id());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          if (na[r] == 0.0 || nb[r] == 0.0) continue;
          const double gr = g(r, 0);
          const double cosv = y(r, 0);
          const double inv = 1.0 / (na[r] * nb[r]);
          if (ga_on) {
            Tensor& ga = t.grad_slot(a.id());
            for (std::size_t c = 0; c < av.cols(); ++c)
              ga(r, c) += gr * (bv(r, c) * inv - cosv * av(r, c) / (na[r] * na[r]));
          }
          if (gb_on) {
            Tensor& gb = t.grad_slot(b.id());
            for (std::size_t c = 0; c < av.cols(); ++c)
              gb(r, c) += gr * (av(r, c) * inv - cosv * bv(r, c) / (nb[r] * nb[r]));
          }
        }
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape()->record(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    for (double& x : t.grad_slot(a.id()).data()) x += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var block_scores(Var q, Var k, std::size_t block) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  if (!qv.same_shape(kv)) shape_error("block_scores", qv, kv);
  if (block == 0 || qv.rows() % block != 0) {
    throw ValidationError("block_scores: rows not divisible by block size");
  }
  const std::size_t d = qv.cols();
  Tensor out(qv.rows(), block);
  for (std::size_t i = 0; i < qv.rows(); ++i) {
    const std::size_t base = (i / block) * block;
    for (std::size_t j = 0; j < block; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qv(i, c) * kv(base + j, c);
      out(i, j) = s;
    }
  }
  return q.tape()->record(std::move(out), {q, k}, [q, k, block](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& qv = t.value(q.id());
    const Tensor& kv = t.value(k.id());
    const bool gq_on = t.requires_grad(q.id());
    const bool gk_on = t.requires_grad(k.id());
    const std::size_t d = qv.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const std::size_t base = (i / block) * block;
      for (std::size_t j = 0; j < block; ++j) {
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        if (gq_on) {
          Tensor& gq = t.grad_slot(q.id());
          for (std::size_t c = 0; c < d; ++c) gq(i, c) += gij * kv(base + j, c);
        }
        if (gk_on) {
          Tensor& gk = t.grad_slot(k.id());
          for (std::size_t c = 0; c < d; ++c) gk(base + j, c) += gij * qv(i, c);
        }
      }
    }
  });
}

Var block_apply(Var weights, Var v, std::size_t block) {
  const Tensor& wv = weights.value();
  const Tensor& vv = v.value();
  if (wv.rows() != vv.rows() || wv.cols() != block || block == 0 || vv.rows() % block != 0) {
    shape_error("block_apply", wv, vv);
  }
  const std::size_t d = vv.cols();
  Tensor out(vv.rows(), d);
  for (std::size_t i = 0; i < wv.rows(); ++i) {
    const std::size_t base = (i / block) * block;
    for (std::size_t j = 0; j < block; ++j) {
      const double w = wv(i, j);
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out(i, c) += w * vv(base + j, c);
    }
  }
  return weights.tape()->record(std::move(out), {weights, v}, [weights, v, block](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& wv = t.value(weights.id());
    const Tensor& vv = t.value(v.id());
    const bool gw_on = t.requires_grad(weights.id());
    const bool gv_on = t.requires_grad(v.id());
    const std::size_t d = vv.cols();
    for (std::size_t i = 0; i < wv.rows(); ++i) {
      const std::size_t base = (i / block) * block;
      for (std::size_t j = 0; j < block; ++j) {
        if (gw_on) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += g(i, c) * vv(base + j, c);
          t.grad_slot(weights.id())(i, j) += s;
        }
        const double w = wv(i, j);
        if (gv_on && w != 0.0) {
          Tensor& gv = t.grad_slot(v.id());
          for (std::size_t c = 0; c < d; ++c) gv(base + j, c) += w * g(i, c);
        }
      }
    }
  });
}

Var bce_with_logits(Var logits, const std::vector<double>& targets) {
  const Tensor& x = logits.value();
  if (x.size() == 0) throw ValidationError("bce_with_logits: empty input");
  if (x.size() != targets.size()) throw ValidationError("bce_with_logits: target count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x.data()[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(x.size());
  return logits.tape()->record(Tensor::scalar(total / n), {logits},
                               [logits, targets, n](Tape& t, std::size_t self) {
                                 const double g = t.grad(self).item();
                                 const Tensor& x = t.value(logits.id());
                                 Tensor& gx = t.grad_slot(logits.id());
                                 for (std::size_t i = 0; i < x.size(); ++i) {
                                   const double z = x.data()[i];
                                   const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                               : std::exp(z) / (1.0 + std::exp(z));
                                   gx.data()[i] += g * (sig - targets[i]) / n;
                                 }
                               });
}

Var cross_entropy_rows(Var logits, const std::vector<std::size_t>& labels) {
  const Tensor& x = logits.value();
  if (x.rows() == 0) throw ValidationError("cross_entropy_rows: empty input");
  if (x.rows() != labels.size()) throw ValidationError("cross_entropy_rows: label count mismatch");
  Tensor probs(x.rows(), x.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (labels[r] >= x.cols()) throw ValidationError("cross_entropy_rows: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x.row(r)) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      probs(r, c) = std::exp(x(r, c) - mx);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) probs(r, c) /= z;
    total += mx + std::log(z) - x(r, labels[r]);
  }
  const double n = static_cast<double>(x.rows());
  return logits.tape()->record(
      Tensor::scalar(total / n), {logits},
      [logits, labels, n, probs = std::move(probs)](Tape& t, std::size_t self) {
        const double g = t.grad(self).item();
        Tensor& gx = t.grad_slot(logits.id());
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double target = c == labels[r] ? 1.0 : 0.0;
            gx(r, c) += g * (probs(r, c) - target) / n;
          }
        }
      });
}

// ---------------------------------------------------------------------------

double finite_diff_check(const LossFn& f, std::span<Param* const> params, double epsilon) {
  for (Param* p : params) p->grad = Tensor(p->value.rows(), p->value.cols());
  std::vector<Tensor> analytic;
  {
    Tape tape(false);
    Var loss = f(tape);
    tape.backward(loss);
    for (Param* p : params) analytic.push_back(p->grad);
  }
  auto evaluate = [&f]() {
    Tape tape(false);
    return f(tape).value().item();
  };
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value.data()[i];
      p.value.data()[i] = original + epsilon;
      const double up = evaluate();
      p.value.data()[i] = original - epsilon;
      const double down = evaluate();
      p.value.data()[i] = original;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err =
          std::abs(analytic[pi].data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace moment::ad
