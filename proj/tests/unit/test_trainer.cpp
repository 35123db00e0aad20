// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "egru/checkpoint.hpp"
#include "egru/trainer.hpp"

namespace egru {
namespace {

// Text from a small first-order chain so there is something to learn.
std::string chain_text(std::uint64_t seed, std::size_t words) {
  static const char* kWords[] = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  Rng rng(seed);
  std::string out;
  std::size_t w = 0;
  for (std::size_t k = 0; k < words; ++k) {
    w = rng.uniform() < 0.7 ? (w + 1) % 10 : rng.below(10);
    out += kWords[w];
    out += (k % 12 == 11) ? "\n" : " ";
  }
  return out;
}

DataSplits tiny_splits() {
  DataSplits d;
  const std::string train = chain_text(1, 1500);
  d.vocab = Vocab::build(train);
  d.train = d.vocab.encode(train);
  d.valid = d.vocab.encode(chain_text(2, 300));
  d.test = d.vocab.encode(chain_text(3, 300));
  return d;
}

RunConfig tiny_config(const std::string& kind) {
  RunConfig cfg;
  cfg.cell_kind = kind;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 10;
  cfg.batch_size = 4;
  cfg.bptt_len = 8;
  cfg.eval_batch_size = 3;
  cfg.lr = 5e-3;
  cfg.dropconnect_p = 0.1;
  cfg.dropout_in_p = 0.1;
  cfg.epochs = 2;
  cfg.precision = "f64";
  return cfg;
}

LanguageModel<double> fresh(const RunConfig& cfg, const DataSplits& d) {
  Rng rng(model_init_seed(cfg.seed));
  return LanguageModel<double>(cfg.lm_config(d.vocab.size()), rng);
}

TEST(ParallelFor, CoversEveryIndexOnce) {
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ParallelFor, LowestIndexExceptionWins) {
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7) throw std::runtime_error("seven");
      if (i == 2) throw std::runtime_error("two");
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "two");
  }
}

TEST(Training, OneEpochBeatsUniformBaseline) {
  const auto d = tiny_splits();
  for (const char* kind : {"egru", "lstm"}) {
    auto cfg = tiny_config(kind);
    auto model = fresh(cfg, d);
    const auto out = train_model(cfg, model, d, 1);
    ASSERT_EQ(out.log.size(), 1u);
    EXPECT_LT(out.log[0].val_ppl, static_cast<double>(d.vocab.size())) << kind;
  }
}

TEST(Training, SameSeedSameLog) {
  const auto d = tiny_splits();
  const auto cfg = tiny_config("egru");
  auto m1 = fresh(cfg, d), m2 = fresh(cfg, d);
  const auto a = train_model(cfg, m1, d, 2);
  const auto b = train_model(cfg, m2, d, 2);
  EXPECT_EQ(train_log_csv(a.log), train_log_csv(b.log));
}

TEST(Training, ThreadCountDoesNotChangeResults) {
  const auto d = tiny_splits();
  for (const char* kind : {"egru", "lstm"}) {
    auto one = tiny_config(kind);
    auto many = one;
    many.threads = 3;
    auto m1 = fresh(one, d), m2 = fresh(many, d);
    const auto a = train_model(one, m1, d, 1);
    const auto b = train_model(many, m2, d, 1);
    EXPECT_EQ(train_log_csv(a.log), train_log_csv(b.log)) << kind;
    EXPECT_EQ(m1.embedding(), m2.embedding());
  }
}

TEST(Training, LstmActivityColumnIsZero) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("lstm");
  auto model = fresh(cfg, d);
  const auto out = train_model(cfg, model, d, 1);
  EXPECT_EQ(out.log[0].activity_sparsity, 0.0);
}

TEST(Training, KeepsBestValidationModel) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("egru");
  auto model = fresh(cfg, d);
  const auto out = train_model(cfg, model, d, 2);
  const auto ev = evaluate(model, d.valid, cfg.eval_batch_size, cfg.bptt_len, 1);
  EXPECT_EQ(ev.ppl, out.best_val_ppl);
}

TEST(Evaluate, RepeatableAndThreadIndependent) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("egru");
  auto model = fresh(cfg, d);
  train_model(cfg, model, d, 1);
  const auto a = evaluate(model, d.test, 3, 8, 1);
  const auto b = evaluate(model, d.test, 3, 8, 1);
  const auto c = evaluate(model, d.test, 3, 8, 3);
  EXPECT_EQ(a.ppl, b.ppl);
  EXPECT_EQ(a.ppl, c.ppl);
  EXPECT_EQ(a.macs_per_step, c.macs_per_step);
  EXPECT_EQ(a.activity_sparsity, c.activity_sparsity);
  EXPECT_EQ(a.ledger.total, a.ledger.instrumented);
  EXPECT_GT(a.activity_sparsity, 0.0);
}

TEST(PruneSchedule, EmptyScheduleLeavesModelUnchanged) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("lstm");
  auto model = fresh(cfg, d);
  const auto before = model;
  const auto rows = run_prune_schedule(cfg, model, d, PruneSchedule{});
  EXPECT_TRUE(rows.empty());
  EXPECT_EQ(model.embedding(), before.embedding());
  EXPECT_EQ(model.cells().lstm[0].w_ih.dense(), before.cells().lstm[0].w_ih.dense());
}

TEST(PruneSchedule, SingleStepWithoutFinetuneIsPlainPrune) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("egru");
  auto a = fresh(cfg, d);
  auto b = a;
  run_prune_schedule(cfg, a, d, PruneSchedule{{{0.5, 0}}});
  auto scope = b.prune_scope();
  global_magnitude_prune(scope, 0.5);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(a.cells().egru[l].w_zy.mask(), b.cells().egru[l].w_zy.mask());
    EXPECT_EQ(a.cells().egru[l].w_ux.dense(), b.cells().egru[l].w_ux.dense());
  }
}

TEST(PruneSchedule, SparsityTraceIsExact) {
  const auto d = tiny_splits();
  for (const char* kind : {"egru", "lstm"}) {
    auto cfg = tiny_config(kind);
    cfg.max_train_batches = 3;
    auto model = fresh(cfg, d);
    const std::size_t n = model.prune_scope().total();
    std::vector<double> seen;
    const auto rows = run_prune_schedule<double>(cfg, model, d, PruneSchedule{{{0.2, 1}, {0.4, 1}, {0.6, 1}}},
                                         [&](const PruneTraceRow&, const LanguageModel<double>& m) {
                                           seen.push_back(m.weight_sparsity());
                                         });
    ASSERT_EQ(rows.size(), 3u);
    const double want[] = {0.2, 0.4, 0.6};
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = static_cast<double>(prune_count(want[k], n)) / static_cast<double>(n);
      EXPECT_EQ(rows[k].achieved_sparsity, exact);
      EXPECT_EQ(seen[k], exact);
      EXPECT_NEAR(exact, want[k], 1.0 / static_cast<double>(n));
    }
  }
}

TEST(DecaySweep, SingleCellEqualsTrainPlusEval) {
  const auto d = tiny_splits();
  auto cfg = tiny_config("egru");
  cfg.epochs = 1;
  cfg.sweep_decay_w = {0.14};
  cfg.sweep_decay_b = {0.01};
  const auto rows = run_decay_sweep<double>(cfg, d);
  ASSERT_EQ(rows.size(), 1u);
  auto direct = cfg;
  direct.decay_w = 0.14;
  direct.decay_b = 0.01;
  auto model = fresh(direct, d);
  train_model(direct, model, d, 1);
  const auto ev = evaluate(model, d.test, cfg.eval_batch_size, cfg.bptt_len, 1);
  EXPECT_EQ(rows[0].test_ppl, ev.ppl);
  EXPECT_EQ(rows[0].activity_sparsity, ev.activity_sparsity);
  EXPECT_EQ(rows[0].weights.mean, weight_stats(model).mean);
}

TEST(Checkpoint, RoundTripPreservesModel) {
  const auto d = tiny_splits();
  for (const char* kind : {"egru", "lstm"}) {
    auto cfg = tiny_config(kind);
    cfg.max_train_batches = 5;
    auto model = fresh(cfg, d);
    train_model(cfg, model, d, 1);
    auto scope = model.prune_scope();
    global_magnitude_prune(scope, 0.3);
    const auto path = (std::filesystem::temp_directory_path() / ("egru_ckpt_" + std::string(kind))).string();
    CheckpointMeta meta;
    meta.config = cfg;
    meta.seed = cfg.seed;
    meta.step = 5;
    meta.epoch = 1;
    meta.vocab_size = d.vocab.size();
    meta.vocab_text = d.vocab.serialize();
    save_checkpoint(path, model, meta);
    const auto loaded = load_checkpoint<double>(path);
    EXPECT_EQ(loaded.meta.step, 5u);
    EXPECT_EQ(loaded.meta.vocab_text, meta.vocab_text);
    EXPECT_EQ(config_to_json(loaded.meta.config), config_to_json(cfg));
    EXPECT_EQ(loaded.model.weight_sparsity(), model.weight_sparsity());
    const auto a = evaluate(model, d.test, 3, 8, 1);
    const auto b = evaluate(loaded.model, d.test, 3, 8, 1);
    EXPECT_EQ(a.ppl, b.ppl);
    EXPECT_EQ(a.ledger.total, b.ledger.total);
    EXPECT_EQ(read_checkpoint_meta(path).vocab_size, d.vocab.size());
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = (std::filesystem::temp_directory_path() / "egru_garbage.ckpt").string();
  write_text_file(path, "not a checkpoint at all");
  EXPECT_THROW(load_checkpoint<double>(path), DataError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint<double>(path), IoError);
}

TEST(Csv, HeadersAndRows) {
  const std::vector<TrainLogRow> log{{1, 10.0, 9.5, 0.25, 1234.0}};
  const auto s = train_log_csv(log);
  EXPECT_EQ(s.substr(0, s.find('\n')), "epoch,train_ppl,val_ppl,activity_sparsity,macs_per_step");
  EXPECT_NE(s.find("1,10,9.5,0.25,1234"), std::string::npos);
  const auto curve = prune_curve_csv({PruneTraceRow{}});
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "weight_sparsity,macs,test_ppl");
  const auto sweep = sweep_csv({SweepRecord{}});
  EXPECT_NE(sweep.find("decay_w,decay_b,test_ppl,activity_sparsity,weight_mean,weight_std,bias_mean,bias_std"),
            std::string::npos);
}

}  // namespace
}  // namespace egru
