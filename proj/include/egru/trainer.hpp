// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Training, evaluation, pruning schedules and decay sweeps.
//
// Determinism: every batch element is processed into its own gradient
// buffer and the buffers are summed in element order, so results depend on
// the seed but not on the thread count. Random draws come from streams
// derived from (seed, purpose, step, element).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egru/adamw.hpp"
#include "egru/config.hpp"
#include "egru/corpus.hpp"
#include "egru/language_model.hpp"
#include "egru/metrics.hpp"

namespace egru {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Exceptions are
// rethrown on the caller (the one from the lowest index wins).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Seed of the parameter-initialization stream for a run seed.
std::uint64_t model_init_seed(std::uint64_t seed);

struct DataSplits {
  Vocab vocab;
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> valid;
  std::vector<std::int32_t> test;
};

// Reads the three splits. The vocabulary is `vocab` when given, else
// cfg.vocab_path when set, else built from the training split.
DataSplits load_splits(const RunConfig& cfg, const Vocab* vocab = nullptr);

struct EvalReport {
  double mean_ce = 0.0;
  double ppl = 0.0;
  double activity_sparsity = 0.0;
  double macs_per_step = 0.0;
  double weight_sparsity = 0.0;
  std::uint64_t tokens = 0;
  MacLedger ledger;
};

// Eval-mode pass over `ids` in eval_batch_size streams.
template <typename T>
EvalReport evaluate(const LanguageModel<T>& model, std::span<const std::int32_t> ids,
                    std::size_t batch_size, std::size_t bptt_len, int threads,
                    bool include_readout = false);

struct EpochStats {
  double mean_ce = 0.0;
  double ppl = 0.0;
  std::size_t batches = 0;
  std::uint64_t tokens = 0;
  double mean_grad_norm = 0.0;
};

template <typename T>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, LanguageModel<T>& model);

  // One pass over `ids` (at most cfg.max_train_batches batches when set).
  EpochStats train_epoch(std::span<const std::int32_t> ids);

  AdamW<T>& optimizer() { return optimizer_; }
  const RunConfig& config() const { return cfg_; }
  std::uint64_t step() const { return step_; }
  int epoch() const { return epoch_; }

 private:
  RunConfig cfg_;
  LanguageModel<T>& model_;
  AdamW<T> optimizer_;
  std::uint64_t step_ = 0;
  int epoch_ = 0;
};

struct TrainLogRow {
  int epoch = 0;
  double train_ppl = 0.0;
  double val_ppl = 0.0;
  double activity_sparsity = 0.0;
  double macs_per_step = 0.0;
};

struct TrainOutcome {
  std::vector<TrainLogRow> log;
  int best_epoch = 0;
  double best_val_ppl = 0.0;
  std::uint64_t steps = 0;
};

// Called after each epoch; `improved` is set when validation perplexity is
// the best so far.
template <typename T>
using EpochCallback = std::function<void(const TrainLogRow&, const LanguageModel<T>&, bool improved)>;

// Trains for `epochs` epochs, validating after each, and leaves the
// best-validation parameters in `model`.
template <typename T>
TrainOutcome train_model(const RunConfig& cfg, LanguageModel<T>& model, const DataSplits& data,
                         int epochs, const EpochCallback<T>& on_epoch = {});

struct PruneTraceRow {
  std::size_t step = 0;
  double target_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  double val_ppl = 0.0;
  double test_ppl = 0.0;
  double activity_sparsity = 0.0;
  double macs_per_step = 0.0;
};

template <typename T>
using PruneCallback = std::function<void(const PruneTraceRow&, const LanguageModel<T>&)>;

// Prunes `model` step by step, fine-tuning after each step. The model keeps
// the mask of each step; fine-tuning restores the best validation epoch of
// that step (the step's pruned-but-untuned state counts as epoch 0).
template <typename T>
std::vector<PruneTraceRow> run_prune_schedule(const RunConfig& cfg, LanguageModel<T>& model,
                                              const DataSplits& data, const PruneSchedule& schedule,
                                              const PruneCallback<T>& on_step = {});

struct SweepRecord {
  double decay_w = 0.0;
  double decay_b = 0.0;
  double test_ppl = 0.0;
  double activity_sparsity = 0.0;
  DistributionStats weights;
  DistributionStats biases;
};

template <typename T>
using SweepCallback = std::function<void(const SweepRecord&, const LanguageModel<T>&)>;

// One fresh model per (decay_w, decay_b) pair, trained cfg.epochs epochs
// from the same seed and evaluated on the test split.
template <typename T>
std::vector<SweepRecord> run_decay_sweep(const RunConfig& cfg, const DataSplits& data,
                                         const SweepCallback<T>& on_record = {});

// CSV writers. Numbers use round-trip precision.
std::string train_log_csv(const std::vector<TrainLogRow>& rows);
std::string prune_trace_csv(const std::vector<PruneTraceRow>& rows);
// Weight sparsity, MACs per step and test perplexity, one row per model.
std::string prune_curve_csv(const std::vector<PruneTraceRow>& rows);
std::string sweep_csv(const std::vector<SweepRecord>& rows);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace egru
