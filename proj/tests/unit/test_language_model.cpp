// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "../support/reference.hpp"
#include "egru/language_model.hpp"

namespace egru {
namespace {

LmConfig tiny_config(CellKind kind, std::size_t v = 11) {
  LmConfig cfg;
  cfg.vocab_size = v;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 6;
  cfg.cell_kind = kind;
  return cfg;
}

double hand_cross_entropy(const std::vector<double>& logits, std::int32_t target) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return -(logits[static_cast<std::size_t>(target)] - m - std::log(z));
}

TEST(Embed, TokenSelectsItsRow) {
  Rng rng(1);
  LanguageModel<double> model(tiny_config(CellKind::kLstm), rng);
  const std::vector<std::int32_t> toks{0, 3};
  const auto out = model.embed(toks, false, nullptr);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(out[0][e], model.embedding()(e, 0));
    EXPECT_EQ(out[1][e], model.embedding()(e, 3));
  }
}

TEST(Embed, InitFollowsConfiguredStd) {
  for (double sd : {1.0, 0.25}) {
    auto cfg = tiny_config(CellKind::kLstm, 5000);
    cfg.embed_init_std = sd;
    Rng rng(14);
    LanguageModel<double> model(cfg, rng);
    double sum = 0.0, sq = 0.0;
    for (double v : model.embedding().values()) {
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(model.embedding().values().size());
    EXPECT_NEAR(sum / n, 0.0, 5.0 * sd / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(sq / n), sd, 0.03 * sd);
  }
}

TEST(Embed, EvalModeIsDeterministic) {
  auto cfg = tiny_config(CellKind::kEgru);
  cfg.dropout_in_p = 0.5;
  Rng rng(2);
  LanguageModel<double> model(cfg, rng);
  const std::vector<std::int32_t> toks{1, 2, 5};
  EXPECT_EQ(model.embed(toks, false, nullptr), model.embed(toks, false, nullptr));
}

TEST(Embed, FullInputDropoutGivesZeros) {
  auto cfg = tiny_config(CellKind::kEgru);
  cfg.dropout_in_p = 1.0;
  Rng rng(3);
  LanguageModel<double> model(cfg, rng);
  const std::vector<std::int32_t> toks{1, 2, 5};
  for (const auto& v : model.embed(toks, true, &rng)) EXPECT_EQ(v, std::vector<double>(4, 0.0));
}

TEST(Embed, OutOfRangeIsDataError) {
  Rng rng(4);
  LanguageModel<double> model(tiny_config(CellKind::kLstm), rng);
  const std::vector<std::int32_t> toks{11};
  EXPECT_THROW(model.embed(toks, false, nullptr), DataError);
}

TEST(DropConnect, ZeroProbabilityKeepsEverything) {
  Rng rng(5);
  LanguageModel<double> model(tiny_config(CellKind::kEgru), rng);
  const auto masks = model.sample_dropconnect(0.0, rng);
  for (const auto& m : masks.masks) {
    EXPECT_TRUE(std::all_of(m.begin(), m.end(), [](std::uint8_t k) { return k == 1; }));
  }
}

TEST(DropConnect, HighProbabilityDropsNearlyAll) {
  Rng rng(6);
  LanguageModel<double> model(tiny_config(CellKind::kLstm), rng);
  const auto masks = model.sample_dropconnect(0.999, rng);
  std::size_t kept = 0, total = 0;
  for (const auto& m : masks.masks) {
    for (auto k : m) kept += k;
    total += m.size();
  }
  EXPECT_LT(static_cast<double>(kept) / static_cast<double>(total), 0.01);
}

TEST(DropConnect, FixedSeedReplays) {
  Rng init(7);
  LanguageModel<double> model(tiny_config(CellKind::kEgru), init);
  Rng a(42), b(42);
  EXPECT_EQ(model.sample_dropconnect(0.3, a).masks, model.sample_dropconnect(0.3, b).masks);
}

TEST(LmForward, UniformLogitsGiveLogV) {
  for (auto kind : {CellKind::kEgru, CellKind::kLstm}) {
    Rng rng(8);
    LanguageModel<double> model(tiny_config(kind, 17), rng);
    model.embedding().fill(0.0);
    std::fill(model.decoder_bias().begin(), model.decoder_bias().end(), 0.0);
    const std::vector<std::int32_t> in{1, 2, 3, 4}, tgt{2, 3, 4, 5};
    auto state = model.initial_state();
    const auto seg = model.run_segment(in, tgt, state, {}, nullptr);
    EXPECT_NEAR(seg.loss_sum / 4.0, std::log(17.0), 1e-12);
  }
}

TEST(LmForward, SingleTokenHandSoftmaxLstm) {
  Rng rng(9);
  LanguageModel<double> model(tiny_config(CellKind::kLstm), rng);
  for (auto& b : model.decoder_bias()) b = rng.uniform(-1, 1);
  const std::int32_t x = 3, y = 7;
  // Push the token through the layers by hand.
  std::vector<double> h(model.embedding_row(x).begin(), model.embedding_row(x).end());
  for (const auto& p : model.cells().lstm) {
    h = lstm_forward_step(p, std::span<const double>(h), LstmState<double>::zeros(p.hidden_dim())).state.h;
  }
  std::vector<double> logits(11);
  for (std::size_t k = 0; k < 11; ++k) {
    double s = model.decoder_bias()[k];
    for (std::size_t e = 0; e < 4; ++e) s += model.embedding()(e, k) * h[e];
    logits[k] = s;
  }
  const std::vector<std::int32_t> in{x}, tgt{y};
  auto state = model.initial_state();
  const auto seg = model.run_segment(in, tgt, state, {}, nullptr);
  EXPECT_EQ(seg.tokens, 1u);
  EXPECT_NEAR(seg.loss_sum, hand_cross_entropy(logits, y), 1e-12);
}

TEST(LmForward, SilentEgruStillFinite) {
  Rng rng(10);
  LanguageModel<double> model(tiny_config(CellKind::kEgru), rng);
  for (auto& p : model.cells().egru) p.threshold.assign(p.threshold.size(), 1e9);
  for (auto& b : model.decoder_bias()) b = rng.uniform(-2, 2);
  const std::vector<std::int32_t> in{1, 4, 2}, tgt{4, 2, 9};
  auto state = model.initial_state();
  const auto seg = model.run_segment(in, tgt, state, {}, nullptr);
  const std::vector<double> bias(model.decoder_bias().begin(), model.decoder_bias().end());
  const double expected = hand_cross_entropy(bias, 4) + hand_cross_entropy(bias, 2) + hand_cross_entropy(bias, 9);
  EXPECT_TRUE(std::isfinite(seg.loss_sum));
  EXPECT_NEAR(seg.loss_sum, expected, 1e-12);
  for (auto a : seg.active) EXPECT_EQ(a, 0u);
}

TEST(LmForward, TiedDecoderUsesEmbedding) {
  Rng rng(11);
  LanguageModel<double> model(tiny_config(CellKind::kEgru), rng);
  const std::vector<double> hidden{0.5, -1.0, 0.25, 2.0};
  const auto before = model.logits(hidden);
  model.embedding()(2, 6) += 1.0;
  const auto after = model.logits(hidden);
  EXPECT_NEAR(after[6] - before[6], hidden[2], 1e-12);
  for (std::size_t k = 0; k < 11; ++k) {
    if (k != 6) {
      EXPECT_EQ(after[k], before[k]);
    }
  }
}

TEST(LmForward, StateCarriesAcrossSegments) {
  for (auto kind : {CellKind::kEgru, CellKind::kLstm}) {
    Rng rng(12);
    LanguageModel<double> model(tiny_config(kind), rng);
    const std::vector<std::int32_t> in{1, 2, 3, 4, 5, 6}, tgt{2, 3, 4, 5, 6, 7};
    auto whole = model.initial_state();
    const auto full = model.run_segment(in, tgt, whole, {}, nullptr);
    auto split = model.initial_state();
    const std::span<const std::int32_t> i(in), t(tgt);
    const auto a = model.run_segment(i.first(2), t.first(2), split, {}, nullptr);
    const auto b = model.run_segment(i.subspan(2), t.subspan(2), split, {}, nullptr);
    EXPECT_NEAR(a.loss_sum + b.loss_sum, full.loss_sum, 1e-12);
  }
}

TEST(LmConfig, LayerDims) {
  const auto cfg = tiny_config(CellKind::kEgru);
  EXPECT_EQ(cfg.layer_input_dim(0), 4u);
  EXPECT_EQ(cfg.layer_output_dim(0), 6u);
  EXPECT_EQ(cfg.layer_input_dim(2), 6u);
  EXPECT_EQ(cfg.layer_output_dim(2), 4u);
}

TEST(LmThresholds, ClampRaisesToFloor) {
  Rng rng(13);
  LanguageModel<double> model(tiny_config(CellKind::kEgru), rng);
  model.cells().egru[1].threshold[0] = -0.3;
  model.cells().egru[2].threshold[1] = 0.7;
  model.clamp_thresholds(0.0);
  EXPECT_EQ(model.cells().egru[1].threshold[0], 0.0);
  EXPECT_EQ(model.cells().egru[2].threshold[1], 0.7);
  model.cells().egru[0].threshold[0] = -5.0;
  model.clamp_thresholds(-INFINITY);
  EXPECT_EQ(model.cells().egru[0].threshold[0], -5.0);
}

}  // namespace
}  // namespace egru
