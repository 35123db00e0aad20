// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../support/reference.hpp"
#include "egru/metrics.hpp"
#include "egru/pruning.hpp"

namespace egru {
namespace {

TEST(CountMacs, EmptyEventIsZero) {
  Rng rng(1);
  const auto w = testing::random_masked(4, 4, 0.3, rng);
  EXPECT_EQ(count_macs_event(w, EventVector<double>(4)), 0u);
}

TEST(CountMacs, TwoPerColumnTwoActive) {
  // Column j keeps rows j and (j + 1) mod 4.
  std::vector<std::uint8_t> mask(16, 0);
  for (std::size_t j = 0; j < 4; ++j) {
    mask[j * 4 + j] = 1;
    mask[j * 4 + (j + 1) % 4] = 1;
  }
  MaskedMatrix<double> w(DenseMatrix<double>(4, 4, 1.0), mask);
  EventVector<double> e(4);
  e.push_back(1, 1.0);
  e.push_back(3, -2.0);
  EXPECT_EQ(count_macs_event(w, e), 4u);
  MacCounter counter;
  matvec_event(w, e, &counter);
  EXPECT_EQ(counter.multiplies, 4u);
}

TEST(CountMacs, DenseUpperBound) {
  MaskedMatrix<double> w(DenseMatrix<double>(5, 7, 0.5));
  const std::vector<double> a(7, 1.0);
  EXPECT_EQ(count_macs_event(w, to_event(a)), 35u);
  EXPECT_EQ(count_macs_dense(w), 35u);
}

TEST(TheoreticalFraction, Examples) {
  EXPECT_EQ(theoretical_fraction(1.0, 1.0), 1.0);
  EXPECT_EQ(theoretical_fraction(0.5, 0.5), 0.25);
  EXPECT_NEAR(theoretical_fraction(0.2, 0.05), 0.01, 1e-17);
  EXPECT_THROW(theoretical_fraction(1.5, 0.5), UsageError);
}

TEST(Perplexity, Examples) {
  EXPECT_EQ(perplexity(0.0), 1.0);
  EXPECT_NEAR(perplexity(std::log(10000.0)), 10000.0, 1e-9);
  EXPECT_NEAR(perplexity(std::log(2.0)), 2.0, 1e-15);
  EXPECT_LT(perplexity(1.0), perplexity(1.0 + 1e-9));
  EXPECT_THROW(perplexity(NAN), NumericError);
}

std::vector<EventVector<double>> seq_with(std::size_t steps, std::size_t dim, std::size_t active) {
  std::vector<EventVector<double>> out;
  for (std::size_t t = 0; t < steps; ++t) {
    EventVector<double> e(dim);
    for (std::size_t j = 0; j < active; ++j) e.push_back(j, 1.0);
    out.push_back(std::move(e));
  }
  return out;
}

TEST(ActivitySparsity, Counting) {
  using Seqs = std::vector<std::vector<EventVector<double>>>;
  const Seqs empty{seq_with(3, 4, 0)};
  const Seqs dense{seq_with(3, 4, 4)};
  const Seqs half{seq_with(3, 4, 2), seq_with(2, 4, 2)};
  EXPECT_EQ(activity_sparsity(std::span<const std::vector<EventVector<double>>>(empty)), 1.0);
  EXPECT_EQ(activity_sparsity(std::span<const std::vector<EventVector<double>>>(dense)), 0.0);
  EXPECT_EQ(activity_sparsity(std::span<const std::vector<EventVector<double>>>(half)), 0.5);
  const Seqs none;
  EXPECT_THROW(activity_sparsity(std::span<const std::vector<EventVector<double>>>(none)), UsageError);
}

TEST(DistributionStats, KnownValues) {
  const auto s = distribution_stats({1.0, 2.0, 3.0, 4.0, 5.0});
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(s.q50, 3.0);
  EXPECT_DOUBLE_EQ(s.q10, 1.4);
  EXPECT_DOUBLE_EQ(s.q90, 4.6);
}

LanguageModel<double> tiny_model(CellKind kind, std::uint64_t seed, std::size_t v = 13) {
  LmConfig cfg;
  cfg.vocab_size = v;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 7;
  cfg.cell_kind = kind;
  Rng rng(seed);
  return LanguageModel<double>(cfg, rng);
}

Batch random_batch(std::size_t b, std::size_t l, std::size_t v, Rng& rng) {
  Batch batch;
  batch.batch_size = b;
  batch.length = l;
  for (std::size_t k = 0; k < b * l; ++k) {
    batch.inputs.push_back(static_cast<std::int32_t>(rng.below(v)));
    batch.targets.push_back(static_cast<std::int32_t>(rng.below(v)));
  }
  return batch;
}

TEST(ModelStepMacs, LedgerEqualsInstrumentedCount) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = tiny_model(trial % 2 ? CellKind::kLstm : CellKind::kEgru, 100 + trial);
    auto scope = model.prune_scope();
    global_magnitude_prune(scope, rng.uniform(0.0, 0.9));
    const auto batch = random_batch(3, 6, 13, rng);
    const auto ledger = model_step_macs(model, batch);
    std::uint64_t sum = 0;
    for (const auto& e : ledger.entries) sum += e.macs;
    EXPECT_EQ(ledger.total, sum);
    EXPECT_EQ(ledger.total, ledger.instrumented);
    EXPECT_EQ(ledger.steps_counted, 18u);
  }
}

TEST(ModelStepMacs, UnprunedLstmIsShapeArithmetic) {
  Rng rng(3);
  const auto model = tiny_model(CellKind::kLstm, 4);
  const auto batch = random_batch(2, 4, 13, rng);
  const auto ledger = model_step_macs(model, batch);
  // Layers 5->7, 7->7, 7->5; four gates, input and recurrent matrices each.
  const std::uint64_t per_step = 4 * (7 * 5 + 7 * 7) + 4 * (7 * 7 + 7 * 7) + 4 * (5 * 7 + 5 * 5);
  EXPECT_EQ(dense_step_macs(model), per_step);
  EXPECT_EQ(ledger.total, per_step * 8);
  EXPECT_EQ(ledger.macs_per_step(), static_cast<double>(per_step));
  EXPECT_EQ(ledger.activity_sparsity(), 0.0);
}

TEST(ModelStepMacs, SilentEgruKeepsOnlyLayerOneInputPath) {
  Rng rng(5);
  auto model = tiny_model(CellKind::kEgru, 6);
  for (auto& p : model.cells().egru) p.threshold.assign(p.threshold.size(), 1e9);
  const auto batch = random_batch(2, 5, 13, rng);
  const auto ledger = model_step_macs(model, batch);
  std::uint64_t layer0_input = 0;
  for (const auto& e : ledger.entries) {
    if (e.layer == 0 && e.matrix.ends_with("x")) {
      layer0_input += e.macs;
    } else {
      EXPECT_EQ(e.macs, 0u) << e.layer << " " << e.matrix;
    }
  }
  EXPECT_GT(layer0_input, 0u);
  EXPECT_EQ(ledger.total, layer0_input);
  EXPECT_EQ(ledger.activity_sparsity(), 1.0);
}

TEST(ModelStepMacs, ReadoutOptIn) {
  Rng rng(7);
  const auto model = tiny_model(CellKind::kLstm, 8);
  const auto batch = random_batch(1, 3, 13, rng);
  const auto without = model_step_macs(model, batch);
  const auto with = model_step_macs<double>(model, batch, nullptr, LedgerOptions{.include_readout = true});
  EXPECT_EQ(with.total - without.total, 3u * 5u * 13u);
}

TEST(ModelStepMacs, MergeAddsUp) {
  Rng rng(9);
  const auto model = tiny_model(CellKind::kEgru, 10);
  const auto b1 = random_batch(2, 4, 13, rng);
  const auto b2 = random_batch(2, 4, 13, rng);
  auto l1 = model_step_macs(model, b1);
  const auto l2 = model_step_macs(model, b2);
  const auto t1 = l1.total;
  l1.merge(l2);
  EXPECT_EQ(l1.total, t1 + l2.total);
  EXPECT_EQ(l1.steps_counted, 16u);
  EXPECT_EQ(l1.instrumented, l1.total);
}

TEST(WeightStats, MatchesRecomputation) {
  auto model = tiny_model(CellKind::kEgru, 11);
  std::vector<double> w, b;
  for (const auto& p : model.cells().egru) {
    for (const auto* m : {&p.w_ux, &p.w_uy, &p.w_rx, &p.w_ry, &p.w_zx, &p.w_zy}) {
      w.insert(w.end(), m->values().begin(), m->values().end());
    }
    for (const auto* v : {&p.b_u, &p.b_r, &p.b_z}) b.insert(b.end(), v->begin(), v->end());
  }
  EXPECT_NEAR(weight_stats(model).mean, distribution_stats(w).mean, 1e-15);
  EXPECT_NEAR(weight_stats(model).std, distribution_stats(w).std, 1e-15);
  EXPECT_NEAR(bias_stats(model).mean, distribution_stats(b).mean, 1e-15);
  EXPECT_NEAR(bias_stats(model).q90, distribution_stats(b).q90, 1e-15);
}

}  // namespace
}  // namespace egru
