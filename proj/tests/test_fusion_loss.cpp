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


#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "moment/checks.hpp"
#include "moment/common.hpp"
#include "moment/fusion_loss.hpp"

namespace moment::fusion {
namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t step) {
  CounterRng rng(31, stream_id("fusion.test"), step);
  Tensor t(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// 2 -> 2 fusion with an identity feed-forward.
FusionParams identity_fusion() {
  FusionParams f(nn::InitContext{1, ""}, 2, 2, nn::Activation::kIdentity);
  f.ffn_pi().linear().weight().value = Tensor::identity(2);
  f.ffn_pi().linear().bias().value.fill(0.0);
  return f;
}

TEST(Fuse, WorkedExample) {
  FusionParams f = identity_fusion();
  f.gamma().value(0, 0) = 2.0;
  f.beta().value(0, 0) = 1.0;
  Tape tape;
  ModalityTokens t;
  t.zs = tape.constant(Tensor(1, 2, std::vector<double>{1, 0}));
  t.zx = tape.constant(Tensor(1, 2, std::vector<double>{0, 1}));
  t.ztau = tape.constant(Tensor(1, 2, std::vector<double>{1, 0}));
  fuse(tape, t, f);
  EXPECT_EQ(t.zpi.value().data(), (std::vector<double>{2, 1}));
  EXPECT_EQ(t.z.value().data(), (std::vector<double>{3, 1}));
}

TEST(Fuse, ZeroGammaPassesTextThrough) {
  FusionParams f = identity_fusion();
  f.gamma().value(0, 0) = 0.0;
  Tape tape;
  ModalityTokens t;
  const Tensor zx = random_tensor(4, 2, 1);
  t.zs = tape.constant(random_tensor(4, 2, 2));
  t.zx = tape.constant(zx);
  t.ztau = tape.constant(random_tensor(4, 2, 3));
  fuse(tape, t, f);
  EXPECT_EQ(t.zpi.value().data(), zx.data());
}

TEST(Fuse, ZeroBetaIsBitwiseStructural) {
  FusionParams f(nn::InitContext{2, ""}, 3, 5);
  f.beta().value(0, 0) = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Tape tape;
    ModalityTokens t;
    const Tensor zs = random_tensor(6, 5, 10 + trial);
    t.zs = tape.constant(zs);
    t.zx = tape.constant(random_tensor(6, 3, 40 + trial));
    t.ztau = tape.constant(random_tensor(6, 3, 70 + trial));
    fuse(tape, t, f);
    ASSERT_EQ(std::memcmp(t.z.value().data().data(), zs.data().data(), zs.size() * sizeof(double)), 0);
  }
}

TEST(Fuse, ShapeMismatchRejected) {
  FusionParams f(nn::InitContext{2, ""}, 3, 5);
  Tape tape;
  ModalityTokens t;
  t.zs = tape.constant(random_tensor(2, 5, 1));
  t.zx = tape.constant(random_tensor(2, 3, 2));
  t.ztau = tape.constant(random_tensor(2, 4, 3));
  EXPECT_THROW(fuse(tape, t, f), ValidationError);
  t.ztau = tape.constant(random_tensor(2, 3, 3));
  t.zs = tape.constant(random_tensor(2, 4, 1));
  EXPECT_THROW(fuse(tape, t, f), ValidationError);
}

TEST(DistributionLoss, Examples) {
  Tape tape;
  const Tensor a = random_tensor(5, 4, 4);
  EXPECT_EQ(distribution_loss(tape.constant(a), tape.constant(a)).value().item(), 0.0);
  const Var u = tape.constant(Tensor(2, 2, std::vector<double>{1, 0, 1, 0}));
  const Var v = tape.constant(Tensor(2, 2, std::vector<double>{0, 1, 0, 1}));
  EXPECT_NEAR(distribution_loss(u, v).value().item(), 2.0, 1e-15);
}

TEST(DistributionLoss, MatchesScalarLoopAndIsSymmetric) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor(7, 6, 100 + trial), b = random_tensor(7, 6, 200 + trial);
    double want = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t r = 0; r < 7; ++r) {
        ma += a(r, c) / 7.0;
        mb += b(r, c) / 7.0;
      }
      want += (ma - mb) * (ma - mb);
    }
    Tape tape;
    const double ab = distribution_loss(tape.constant(a), tape.constant(b)).value().item();
    const double ba = distribution_loss(tape.constant(b), tape.constant(a)).value().item();
    ASSERT_NEAR(ab, want, 1e-12);
    ASSERT_NEAR(ab, ba, 1e-12);
  }
}

TEST(DistributionLoss, ZeroWhenMeansCoincide) {
  // Different rows, identical column means.
  Tape tape;
  const Var u = tape.constant(Tensor(2, 2, std::vector<double>{1, 3, 3, 1}));
  const Var v = tape.constant(Tensor(2, 2, std::vector<double>{2, 2, 2, 2}));
  EXPECT_NEAR(distribution_loss(u, v).value().item(), 0.0, 1e-12);
}

TEST(InstanceLoss, Examples) {
  Tape tape;
  const Tensor a = random_tensor(4, 3, 5);
  Tensor neg = a;
  for (double& v : neg.data()) v = -v;
  EXPECT_NEAR(instance_loss(tape.constant(a), tape.constant(a)).value().item(), 0.0, 1e-15);
  EXPECT_NEAR(instance_loss(tape.constant(neg), tape.constant(a)).value().item(), 2.0, 1e-15);
  const Var x = tape.constant(Tensor(2, 2, std::vector<double>{1, 0, 0, 2}));
  const Var y = tape.constant(Tensor(2, 2, std::vector<double>{0, 3, -1, 0}));
  EXPECT_NEAR(instance_loss(x, y).value().item(), 1.0, 1e-15);
}

TEST(InstanceLoss, ZeroRowCountsAsCosineZero) {
  Tape tape;
  const Var x = tape.constant(Tensor(2, 2, std::vector<double>{0, 0, 1, 1}));
  const Var y = tape.constant(Tensor(2, 2, std::vector<double>{1, 2, 1, 1}));
  EXPECT_NEAR(instance_loss(x, y).value().item(), 0.5, 1e-15);
}

TEST(InstanceLoss, BoundedAndScaleInvariant) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor(5, 4, 300 + trial), b = random_tensor(5, 4, 400 + trial);
    CounterRng rng(9, stream_id("fusion.scale"), trial);
    Tensor as = a;
    for (std::size_t r = 0; r < 5; ++r) {
      const double s = 0.01 + 100.0 * rng.uniform();
      for (std::size_t c = 0; c < 4; ++c) as(r, c) *= s;
    }
    Tape tape;
    const double l = instance_loss(tape.constant(a), tape.constant(b)).value().item();
    const double ls = instance_loss(tape.constant(as), tape.constant(b)).value().item();
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 2.0);
    ASSERT_NEAR(l, ls, 1e-12);
  }
}

double bce_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
  double total = 0.0;
  for (double x : pos) total += std::log1p(std::exp(-x));
  for (double x : neg) total += std::log1p(std::exp(x));
  return total / static_cast<double>(pos.size() + neg.size());
}

TEST(BceLinkLoss, Examples) {
  Tape tape;
  const Var zeros = tape.constant(Tensor(3, 1));
  EXPECT_NEAR(bce_link_loss(zeros, zeros).value().item(), std::log(2.0), 1e-15);
  const Var pos = tape.constant(Tensor(3, 1, 20.0));
  const Var neg = tape.constant(Tensor(3, 1, -20.0));
  EXPECT_LT(bce_link_loss(pos, neg).value().item(), 1e-8);
  const Var big = tape.constant(Tensor(1, 1, 800.0));
  const Var small = tape.constant(Tensor(1, 1, -800.0));
  EXPECT_NEAR(bce_link_loss(small, big).value().item(), 800.0, 1e-9);
}

TEST(BceLinkLoss, MatchesScalarLoop) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const Tensor p = random_tensor(9, 1, 500 + trial), n = random_tensor(9, 1, 600 + trial);
    Tape tape;
    ASSERT_NEAR(bce_link_loss(tape.constant(p), tape.constant(n)).value().item(), bce_oracle(p.data(), n.data()), 1e-12);
  }
}

TEST(BceLinkLoss, Errors) {
  Tape tape;
  EXPECT_THROW(bce_link_loss(tape.constant(Tensor(0, 1)), tape.constant(Tensor(0, 1))), ValidationError);
  EXPECT_THROW(bce_link_loss(tape.constant(Tensor(2, 1)), tape.constant(Tensor(3, 1))), ValidationError);
}

TEST(TotalLoss, Identities) {
  LossConfig c;
  c.alpha = 0.2;
  EXPECT_NEAR(total_loss(0.5, 0.1, 0.3, c), 0.58, 1e-15);
  c.alpha = 0.0;
  EXPECT_EQ(total_loss(0.5, 0.1, 0.3, c), 0.5);
  c.alpha = 0.2;
  c.use_distribution = false;
  EXPECT_NEAR(total_loss(0.5, 0.1, 0.3, c), 0.5 + 0.2 * 0.3, 1e-15);
  c.use_distribution = true;
  c.use_instance = false;
  EXPECT_NEAR(total_loss(0.5, 0.1, 0.3, c), 0.5 + 0.2 * 0.1, 1e-15);
  c.use_distribution = false;
  EXPECT_EQ(total_loss(0.5, 0.1, 0.3, c), 0.5);
}

TEST(TotalLoss, TapeFormAgreesWithScalarForm) {
  for (int mask = 0; mask < 4; ++mask) {
    LossConfig c;
    c.alpha = 0.35;
    c.use_distribution = mask & 1;
    c.use_instance = mask & 2;
    Tape tape;
    const Var l = total_loss(tape.constant(Tensor::scalar(0.7)), tape.constant(Tensor::scalar(0.25)),
                             tape.constant(Tensor::scalar(0.4)), c);
    EXPECT_NEAR(l.value().item(), total_loss(0.7, 0.25, 0.4, c), 1e-15);
  }
}

TEST(PairDecoder, ZeroWeightsGiveZeroLogit) {
  PairDecoder d(nn::InitContext{3, ""}, "dec", 4, 6, 1);
  std::vector<Param*> p;
  d.collect(p);
  for (Param* q : p) q->value.fill(0.0);
  Tape tape;
  const Var l = d.forward(tape, tape.constant(random_tensor(2, 4, 1)), tape.constant(random_tensor(2, 4, 2)));
  EXPECT_EQ(l.value().data(), (std::vector<double>{0.0, 0.0}));
}

TEST(PairDecoder, MatchesScalarLoopAndIsOrderSensitive) {
  PairDecoder d(nn::InitContext{4, ""}, "dec", 3, 5, 2);
  const Tensor u = random_tensor(3, 3, 3), v = random_tensor(3, 3, 4);
  Tape tape;
  const Tensor got = d.forward(tape, tape.constant(u), tape.constant(v)).value();
  const Tensor swapped = d.forward(tape, tape.constant(v), tape.constant(u)).value();
  const Tensor& w1 = d.hidden().weight().value;
  const Tensor& b1 = d.hidden().bias().value;
  const Tensor& w2 = d.output().weight().value;
  const Tensor& b2 = d.output().bias().value;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> in;
    for (std::size_t c = 0; c < 3; ++c) in.push_back(u(r, c));
    for (std::size_t c = 0; c < 3; ++c) in.push_back(v(r, c));
    std::vector<double> h(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double s = b1(0, j);
      for (std::size_t k = 0; k < 6; ++k) s += in[k] * w1(k, j);
      h[j] = std::max(0.0, s);
    }
    for (std::size_t o = 0; o < 2; ++o) {
      double s = b2(0, o);
      for (std::size_t j = 0; j < 5; ++j) s += h[j] * w2(j, o);
      EXPECT_NEAR(got(r, o), s, 1e-12);
    }
  }
  EXPECT_NE(got.data(), swapped.data());
}

TEST(CrossEntropy, Examples) {
  Tape tape;
  EXPECT_NEAR(cross_entropy(tape.constant(Tensor(1, 10, 0.3)), {4}).value().item(), std::log(10.0), 1e-14);
  // ln(1 + 3 e^-20) with four classes.
  Tensor peaked(1, 4);
  peaked(0, 2) = 20.0;
  const double ce = cross_entropy(tape.constant(peaked), {2}).value().item();
  EXPECT_LT(ce, 1e-8);
  EXPECT_NEAR(ce, std::log1p(3.0 * std::exp(-20.0)), 1e-14);
  const Tensor logits = random_tensor(5, 4, 8);
  const std::vector<std::size_t> labels{0, 3, 2, 1, 3};
  double want = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(r, c));
    want += std::log(z) - logits(r, labels[r]);
  }
  EXPECT_NEAR(cross_entropy(tape.constant(logits), labels).value().item(), want / 5.0, 1e-12);
}

// Entropy-based oracle, independent of the chain-rule code path.
double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

struct Marginals {
  std::vector<double> s, y, sy, spi, spiy;
};

Marginals marginals(const DiscreteJoint& j) {
  Marginals m{std::vector<double>(j.n_s), std::vector<double>(j.n_y), std::vector<double>(j.n_s * j.n_y),
              std::vector<double>(j.n_s * j.n_pi), j.p};
  for (std::size_t s = 0; s < j.n_s; ++s)
    for (std::size_t pi = 0; pi < j.n_pi; ++pi)
      for (std::size_t y = 0; y < j.n_y; ++y) {
        const double v = j.at(s, pi, y);
        m.s[s] += v;
        m.y[y] += v;
        m.sy[s * j.n_y + y] += v;
        m.spi[s * j.n_pi + pi] += v;
      }
  return m;
}

TEST(MiChain, XorFixture) {
  const MiChainResult r = mi_chain_check(checks::xor_joint());
  EXPECT_NEAR(r.structural_term, 0.0, 1e-15);
  EXPECT_NEAR(r.conditional_term, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.lhs, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.rhs, std::log(2.0), 1e-15);
}

TEST(MiChain, IndependentInternalTokenAddsNothing) {
  // p(s, pi, y) = p(s, y) p(pi).
  const std::vector<double> sy{0.3, 0.1, 0.15, 0.45}, pi{0.2, 0.5, 0.3};
  DiscreteJoint j{2, 3, 2, std::vector<double>(12)};
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t y = 0; y < 2; ++y) j.p[(s * 3 + q) * 2 + y] = sy[s * 2 + y] * pi[q];
  const MiChainResult r = mi_chain_check(j);
  EXPECT_NEAR(r.conditional_term, 0.0, 1e-15);
  EXPECT_NEAR(r.lhs, r.structural_term, 1e-15);
}

TEST(MiChain, RandomJointsMatchEntropyOracle) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    CounterRng rng(12, stream_id("fusion.mi"), trial);
    DiscreteJoint j{3, 3, 2, std::vector<double>(18)};
    for (double& v : j.p) v = rng.exponential(1.0);
    const double total = std::accumulate(j.p.begin(), j.p.end(), 0.0);
    for (double& v : j.p) v /= total;
    std::vector<std::size_t> relabel{2, 0, 1};
    const MiChainResult r = mi_chain_check(j, relabel);
    const Marginals m = marginals(j);
    const double joint_mi = entropy(m.spi) + entropy(m.y) - entropy(m.spiy);
    const double struct_mi = entropy(m.s) + entropy(m.y) - entropy(m.sy);
    const double cond_mi = entropy(m.spi) + entropy(m.sy) - entropy(m.s) - entropy(m.spiy);
    ASSERT_LT(std::abs(r.lhs - r.rhs), 1e-10);
    ASSERT_NEAR(r.lhs, joint_mi, 1e-12);
    ASSERT_NEAR(r.structural_term, struct_mi, 1e-12);
    ASSERT_NEAR(r.conditional_term, cond_mi, 1e-12);
    ASSERT_NEAR(r.relabeled_conditional, r.conditional_term, 1e-12);
    ASSERT_GE(r.conditional_term, -1e-15);
  }
}

TEST(MiChain, VaryingSupportsViaCheckHelper) {
  const checks::MiCheckResult r = checks::mi_check(50, 3);
  EXPECT_EQ(r.trials, 50u);
  EXPECT_LT(r.max_chain_gap, 1e-10);
  EXPECT_LT(r.max_relabel_gap, 1e-10);
}

TEST(MiChain, InvalidJointRejected) {
  EXPECT_THROW(mi_chain_check(DiscreteJoint{2, 2, 2, std::vector<double>(8, 0.1)}), ValidationError);
  EXPECT_THROW(mi_chain_check(DiscreteJoint{2, 2, 2, std::vector<double>(7, 1.0 / 7)}), ValidationError);
  std::vector<double> neg(8, 0.25);
  neg[0] = -0.5;
  neg[1] = 0.25 + 0.5;
  EXPECT_THROW(mi_chain_check(DiscreteJoint{2, 2, 2, neg}), ValidationError);
}

TEST(MiChain, NonBijectiveRelabelRejected) {
  EXPECT_THROW(mi_chain_check(checks::xor_joint(), {0, 0}), ValidationError);
}

}  // namespace
}  // namespace moment::fusion
