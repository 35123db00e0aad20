// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../support/reference.hpp"
#include "egru/lstm_cell.hpp"
#include "egru/metrics.hpp"

namespace egru {
namespace {

using testing::random_lstm;
using testing::random_vector;

LstmParams<double> zero_lstm(std::size_t d, std::size_t n) {
  LstmParams<double> p;
  for (auto* w : {&p.w_ix, &p.w_fx, &p.w_gx, &p.w_ox}) *w = MaskedMatrix<double>(DenseMatrix<double>(n, d));
  for (auto* w : {&p.w_ih, &p.w_fh, &p.w_gh, &p.w_oh}) *w = MaskedMatrix<double>(DenseMatrix<double>(n, n));
  for (auto* b : {&p.b_i, &p.b_f, &p.b_g, &p.b_o}) b->assign(n, 0.0);
  return p;
}

TEST(LstmForward, ZeroParamsZeroState) {
  const auto p = zero_lstm(3, 4);
  const std::vector<double> x{1.0, 2.0, -1.0};
  const auto out = lstm_forward_step(p, std::span<const double>(x), LstmState<double>::zeros(4));
  EXPECT_EQ(out.state.h, std::vector<double>(4, 0.0));
}

TEST(LstmForward, SaturatedGatesCarryCell) {
  auto p = zero_lstm(2, 3);
  p.b_f.assign(3, 1000.0);
  p.b_i.assign(3, -1000.0);
  LstmState<double> s{{0.1, 0.2, 0.3}, {0.5, -0.7, 0.9}};
  const std::vector<double> x{0.4, -0.3};
  const auto out = lstm_forward_step(p, std::span<const double>(x), s);
  EXPECT_EQ(out.state.cell, s.cell);
}

TEST(LstmForward, MatchesNaiveReference) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.below(8), n = 1 + rng.below(8);
    const auto p = random_lstm(d, n, rng, rng.uniform(0.0, 0.7));
    auto s = LstmState<double>::zeros(n);
    testing::RefLstmState rs{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (int t = 0; t < 6; ++t) {
      const auto x = random_vector(d, rng);
      const auto out = lstm_forward_step(p, std::span<const double>(x), s);
      const auto ref = testing::ref_lstm_step(p, x, rs);
      ASSERT_EQ(out.state.h, ref.h);
      ASSERT_EQ(out.state.cell, ref.cell);
      s = out.state;
      rs = ref;
    }
  }
}

TEST(LstmForward, DenseMacCountIsSumOfNnz) {
  Rng rng(2);
  const auto p = random_lstm(5, 7, rng, 0.4);
  MacCounter counter;
  const auto x = random_vector(5, rng);
  lstm_forward_step(p, std::span<const double>(x), LstmState<double>::zeros(7), &counter);
  std::uint64_t expected = 0;
  for (const auto* w : {&p.w_ix, &p.w_fx, &p.w_gx, &p.w_ox, &p.w_ih, &p.w_fh, &p.w_gh, &p.w_oh}) {
    expected += count_macs_dense(*w);
  }
  EXPECT_EQ(counter.multiplies, expected);
}

TEST(LstmForward, ShapeMismatch) {
  Rng rng(3);
  const auto p = random_lstm(3, 4, rng);
  const std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(lstm_forward_step(p, std::span<const double>(x), LstmState<double>::zeros(4)), ShapeError);
}

TEST(LstmSequence, MatchesStepLoop) {
  Rng rng(4);
  const auto p = random_lstm(4, 6, rng, 0.3);
  std::vector<std::vector<double>> xs;
  for (int t = 0; t < 7; ++t) xs.push_back(random_vector(4, rng));
  const auto seq = lstm_forward_seq(p, std::span<const std::vector<double>>(xs), LstmState<double>::zeros(6));
  auto s = LstmState<double>::zeros(6);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s = lstm_forward_step(p, std::span<const double>(xs[t]), s).state;
    EXPECT_EQ(seq.outputs[t], s.h);
  }
}

TEST(LstmBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  const auto p = random_lstm(3, 4, rng);
  std::vector<std::vector<double>> xs(3, random_vector(3, rng));
  const auto seq = lstm_forward_seq(p, std::span<const std::vector<double>>(xs), LstmState<double>::zeros(4));
  const std::vector<std::vector<double>> gh(3, std::vector<double>(4, 0.0));
  const auto back = lstm_backward_seq(p, std::span<const LstmStepCache<double>>(seq.caches),
                                      std::span<const std::vector<double>>(gh));
  for (const auto* m : {&back.grads.w_ix, &back.grads.w_fh, &back.grads.w_oh}) {
    for (double v : m->values()) EXPECT_EQ(v, 0.0);
  }
  for (double v : back.grads.b_f) EXPECT_EQ(v, 0.0);
}

TEST(LstmBackward, LengthMismatch) {
  Rng rng(6);
  const auto p = random_lstm(3, 4, rng);
  std::vector<std::vector<double>> xs(2, std::vector<double>(3, 0.1));
  const auto seq = lstm_forward_seq(p, std::span<const std::vector<double>>(xs), LstmState<double>::zeros(4));
  const std::vector<std::vector<double>> gh(1, std::vector<double>(4, 0.0));
  EXPECT_THROW(lstm_backward_seq(p, std::span<const LstmStepCache<double>>(seq.caches),
                                 std::span<const std::vector<double>>(gh)),
               UsageError);
}

TEST(LstmBackward, SingleUnitHandDerivation) {
  const double wix = 0.3, wfx = -0.2, wgx = 0.6, wox = 0.4;
  const double wih = 0.5, wfh = 0.1, wgh = -0.7, woh = 0.2;
  const double bi = 0.1, bf = 1.0, bg = -0.1, bo = 0.05;
  const double x = 0.9, h0 = -0.3, c0 = 0.5, gh = 0.8;
  auto m = [](double v) {
    return MaskedMatrix<double>(DenseMatrix<double>::from_row_major(1, 1, std::vector<double>{v}));
  };
  LstmParams<double> p;
  p.w_ix = m(wix);
  p.w_fx = m(wfx);
  p.w_gx = m(wgx);
  p.w_ox = m(wox);
  p.w_ih = m(wih);
  p.w_fh = m(wfh);
  p.w_gh = m(wgh);
  p.w_oh = m(woh);
  p.b_i = {bi};
  p.b_f = {bf};
  p.b_g = {bg};
  p.b_o = {bo};

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(wix * x + wih * h0 + bi);
  const double f = sig(wfx * x + wfh * h0 + bf);
  const double g = std::tanh(wgx * x + wgh * h0 + bg);
  const double o = sig(wox * x + woh * h0 + bo);
  const double c1 = f * c0 + i * g;
  const double tc = std::tanh(c1);
  const double d_c = gh * o * (1.0 - tc * tc);
  const double a_o = gh * tc * o * (1.0 - o);
  const double a_i = d_c * g * i * (1.0 - i);
  const double a_f = d_c * c0 * f * (1.0 - f);
  const double a_g = d_c * i * (1.0 - g * g);

  const std::vector<std::vector<double>> xs{{x}};
  const auto seq = lstm_forward_seq(p, std::span<const std::vector<double>>(xs), LstmState<double>{{h0}, {c0}});
  const std::vector<std::vector<double>> up{{gh}};
  const auto back = lstm_backward_seq(p, std::span<const LstmStepCache<double>>(seq.caches),
                                      std::span<const std::vector<double>>(up));
  const auto& G = back.grads;
  EXPECT_NEAR(G.b_i[0], a_i, 1e-12);
  EXPECT_NEAR(G.b_f[0], a_f, 1e-12);
  EXPECT_NEAR(G.b_g[0], a_g, 1e-12);
  EXPECT_NEAR(G.b_o[0], a_o, 1e-12);
  EXPECT_NEAR(G.w_ix(0, 0), a_i * x, 1e-12);
  EXPECT_NEAR(G.w_fh(0, 0), a_f * h0, 1e-12);
  EXPECT_NEAR(G.w_gx(0, 0), a_g * x, 1e-12);
  EXPECT_NEAR(G.w_oh(0, 0), a_o * h0, 1e-12);
  EXPECT_NEAR(back.grad_x[0][0], a_i * wix + a_f * wfx + a_g * wgx + a_o * wox, 1e-12);
}

TEST(LstmInit, ForgetBiasOffset) {
  Rng rng(7);
  const auto p = init_lstm_params<double>(3, 16, rng, 1.0);
  const double k = 1.0 / std::sqrt(16.0);
  for (double b : p.b_f) {
    EXPECT_GE(b, 1.0 - k);
    EXPECT_LT(b, 1.0 + k);
  }
  for (double b : p.b_i) EXPECT_LT(std::abs(b), k + 1e-15);
}

}  // namespace
}  // namespace egru
