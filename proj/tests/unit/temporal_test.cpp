#include <gtest/gtest.h>

#include <random>

#include "tempodet/numkit/grad_check.hpp"
#include "tempodet/numkit/ops.hpp"
#include "tempodet/temporal.hpp"
#include "test_util.hpp"

namespace tempodet::temporal {
namespace {

using testing::dot;
using testing::random_tensor;

ConvLstmParams<double> random_params(int cin, int ch, int k, std::mt19937_64& rng, double scale = 0.5) {
  auto p = zero_convlstm_params<double>({cin, ch, k}, "lstm");
  for (auto* q : p.params()) q->value = random_tensor(q->value.shape(), rng, -scale, scale);
  return p;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Eight separate convolutions, one per gate and source.
ConvLstmState<double> reference_cell(const Tensor<double>& x, const ConvLstmState<double>& s,
                                     const ConvLstmParams<double>& p) {
  const int pad = (p.config.kernel - 1) / 2;
  std::array<Tensor<double>, 4> pre;
  for (int g = 0; g < 4; ++g) {
    pre[static_cast<std::size_t>(g)] = numkit::conv2d(x, p.wx[static_cast<std::size_t>(g)].value, &p.b[static_cast<std::size_t>(g)].value, {1, pad});
    pre[static_cast<std::size_t>(g)] += numkit::conv2d(s.h, p.wh[static_cast<std::size_t>(g)].value, nullptr, {1, pad});
  }
  ConvLstmState<double> out{Tensor<double>(s.h.shape()), Tensor<double>(s.c.shape())};
  for (std::size_t e = 0; e < s.c.size(); ++e) {
    const double i = sig(pre[0][e]), f = sig(pre[1][e]), o = sig(pre[2][e]), g = std::tanh(pre[3][e]);
    out.c[e] = f * s.c[e] + i * g;
    out.h[e] = o * std::tanh(out.c[e]);
  }
  return out;
}

TEST(ConvLstm, SaturatedGatesFixture) {
  auto p = zero_convlstm_params<double>({2, 3, 3}, "lstm");
  p.b[kInputGate].value.fill(10.0);
  p.b[kCandidate].value.fill(10.0);
  const Tensor<double> x({1, 2, 4, 4}, 0.7);
  const auto next = convlstm_cell(x, zero_state<double>(1, 3, 4, 4), p);
  const double c_expected = sig(10.0) * std::tanh(10.0);
  for (std::size_t e = 0; e < next.h.size(); ++e) {
    EXPECT_NEAR(next.c[e], c_expected, 1e-12);
    EXPECT_NEAR(next.h[e], 0.3808, 1e-4);
  }
}

TEST(ConvLstm, ZeroParamsZeroStateStaysZero) {
  std::mt19937_64 rng(41);
  const auto p = zero_convlstm_params<double>({3, 4, 3}, "lstm");
  const auto next = convlstm_cell(random_tensor({2, 3, 5, 5}, rng), zero_state<double>(2, 4, 5, 5), p);
  for (double v : next.h.values()) EXPECT_EQ(v, 0.0);
  for (double v : next.c.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvLstm, ForgetGateOnlyCarriesHalfTheCell) {
  std::mt19937_64 rng(42);
  const auto p = zero_convlstm_params<double>({2, 2, 3}, "lstm");
  ConvLstmState<double> s{random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 2, 4, 4}, rng, -3.0, 3.0)};
  const auto next = convlstm_cell(random_tensor({1, 2, 4, 4}, rng), s, p);
  // All gates sit at 0.5 and the candidate at 0.
  for (std::size_t e = 0; e < s.c.size(); ++e) {
    EXPECT_NEAR(next.c[e], 0.5 * s.c[e], 1e-15);
    EXPECT_NEAR(next.h[e], 0.5 * std::tanh(0.5 * s.c[e]), 1e-15);
  }
}

TEST(ConvLstm, MatchesEightConvolutionReference) {
  std::mt19937_64 rng(43);
  for (int k : {1, 3, 5}) {
    const auto p = random_params(3, 4, k, rng);
    const auto x = random_tensor({2, 3, 6, 5}, rng);
    ConvLstmState<double> s{random_tensor({2, 4, 6, 5}, rng), random_tensor({2, 4, 6, 5}, rng)};
    const auto fast = convlstm_cell(x, s, p);
    const auto ref = reference_cell(x, s, p);
    EXPECT_LT(testing::max_abs_diff(fast.h, ref.h), 1e-12);
    EXPECT_LT(testing::max_abs_diff(fast.c, ref.c), 1e-12);
  }
}

TEST(ConvLstm, HiddenStateBoundedAndCellGrowthLimited) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(2, 3, 3, rng, 3.0);
    ConvLstmState<double> s{random_tensor({1, 3, 5, 5}, rng), random_tensor({1, 3, 5, 5}, rng, -5.0, 5.0)};
    const auto next = convlstm_cell(random_tensor({1, 2, 5, 5}, rng, -5.0, 5.0), s, p);
    for (std::size_t e = 0; e < next.h.size(); ++e) {
      EXPECT_LT(std::abs(next.h[e]), 1.0);
      EXPECT_LE(std::abs(next.c[e]), std::abs(s.c[e]) + 1.0);
    }
  }
}

TEST(ConvLstm, RejectsEvenKernelAndMismatchedState) {
  EXPECT_THROW(zero_convlstm_params<double>({2, 2, 4}, "x"), ShapeError);
  const auto p = zero_convlstm_params<double>({2, 3, 3}, "x");
  EXPECT_THROW(convlstm_cell(Tensor<double>({1, 2, 4, 4}), zero_state<double>(1, 3, 5, 4), p), ShapeError);
  EXPECT_THROW(convlstm_cell(Tensor<double>({1, 3, 4, 4}), zero_state<double>(1, 3, 4, 4), p), ShapeError);
}

TEST(ConvLstm, RolloutCountsCellsAndEqualsManualFold) {
  std::mt19937_64 rng(45);
  const auto p = random_params(2, 2, 3, rng);
  std::vector<Tensor<double>> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(random_tensor({1, 2, 4, 4}, rng));
  const auto before = cell_invocations();
  const auto states = convlstm_rollout(seq, p);
  EXPECT_EQ(cell_invocations() - before, 4u);
  ASSERT_EQ(states.size(), 4u);
  auto s = zero_state<double>(1, 2, 4, 4);
  for (int t = 0; t < 4; ++t) {
    s = convlstm_cell(seq[static_cast<std::size_t>(t)], s, p);
    EXPECT_EQ(s.h, states[static_cast<std::size_t>(t)].h);
  }
}

TEST(ConvLstm, RolloutIsCausal) {
  std::mt19937_64 rng(46);
  const auto p = random_params(2, 2, 3, rng);
  std::vector<Tensor<double>> seq;
  for (int t = 0; t < 3; ++t) seq.push_back(random_tensor({1, 2, 4, 4}, rng));
  const auto a = convlstm_rollout(seq, p);
  seq[2] = random_tensor({1, 2, 4, 4}, rng);
  const auto b = convlstm_rollout(seq, p);
  EXPECT_EQ(a[0].h, b[0].h);
  EXPECT_EQ(a[1].h, b[1].h);
  EXPECT_NE(a[2].h, b[2].h);
}

TEST(ConvLstm, CellBackwardMatchesCentralDifferences) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_params(2, 3, 3, rng);
    auto x = random_tensor({2, 2, 4, 4}, rng);
    ConvLstmState<double> s{random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)};
    const auto ph = random_tensor(s.h.shape(), rng), pc = random_tensor(s.c.shape(), rng);
    numkit::Differentiable obj{[&] {
                                 const auto n = convlstm_cell(x, s, p);
                                 return dot(n.h, ph) + dot(n.c, pc);
                               },
                               [&] {
                                 for (auto* q : p.params()) q->zero_grad();
                                 CellCache<double> cache;
                                 convlstm_cell(x, s, p, &cache);
                                 auto g = convlstm_cell_backward(cache, p, ph, pc);
                                 std::vector<Tensor<double>> out{g.dx, g.dh_prev, g.dc_prev};
                                 for (auto* q : p.params()) out.push_back(q->grad);
                                 return out;
                               }};
    std::vector<Tensor<double>*> inputs{&x, &s.h, &s.c};
    for (auto* q : p.params()) inputs.push_back(&q->value);
    EXPECT_LT(numkit::grad_check(obj, inputs), 1e-4);
  }
}

TEST(ConvLstm, RolloutBackwardMatchesCentralDifferences) {
  std::mt19937_64 rng(48);
  auto p = random_params(2, 2, 3, rng);
  std::vector<Tensor<double>> seq;
  for (int t = 0; t < 3; ++t) seq.push_back(random_tensor({1, 2, 4, 4}, rng));
  std::vector<Tensor<double>> proj;
  for (int t = 0; t < 3; ++t) proj.push_back(random_tensor({1, 2, 4, 4}, rng));
  proj[1] = Tensor<double>();
  numkit::Differentiable obj{[&] {
                               const auto st = convlstm_rollout(seq, p);
                               return dot(st[0].h, proj[0]) + dot(st[2].h, proj[2]);
                             },
                             [&] {
                               for (auto* q : p.params()) q->zero_grad();
                               RolloutCache<double> cache;
                               convlstm_rollout(seq, p, nullptr, &cache);
                               auto dx = convlstm_rollout_backward(cache, p, proj);
                               for (auto* q : p.params()) dx.push_back(q->grad);
                               return dx;
                             }};
  std::vector<Tensor<double>*> inputs{&seq[0], &seq[1], &seq[2]};
  for (auto* q : p.params()) inputs.push_back(&q->value);
  EXPECT_LT(numkit::grad_check(obj, inputs), 1e-4);
}

}  // namespace
}  // namespace tempodet::temporal
