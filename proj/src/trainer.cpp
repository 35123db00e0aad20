// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/trainer.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

#include "egru/errors.hpp"
#include "egru/random.hpp"

namespace egru {

namespace {

// Seed stream tags.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropConnectStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

}  // namespace

std::uint64_t model_init_seed(std::uint64_t seed) { return derive_seed(seed, kInitStream); }

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

DataSplits load_splits(const RunConfig& cfg, const Vocab* vocab) {
  DataSplits d;
  const std::string train_text = read_text_file(cfg.train_path);
  if (vocab) {
    d.vocab = *vocab;
  } else {
    d.vocab = cfg.vocab_path.empty() ? Vocab::build(train_text) : Vocab::load(cfg.vocab_path);
  }
  d.train = d.vocab.encode(train_text);
  d.valid = d.vocab.encode(read_text_file(cfg.valid_path));
  d.test = d.vocab.encode(read_text_file(cfg.test_path));
  return d;
}

template <typename T>
EvalReport evaluate(const LanguageModel<T>& model, std::span<const std::int32_t> ids,
                    std::size_t batch_size, std::size_t bptt_len, int threads, bool include_readout) {
  BatchCursor cursor(ids, batch_size, bptt_len);
  std::vector<LmState<T>> states(batch_size, model.initial_state());
  std::vector<MacLedger> parts(batch_size);
  EvalReport report;
  LedgerOptions opts;
  opts.include_readout = include_readout;
  while (auto batch = cursor.next()) {
    parallel_for(batch_size, threads, [&](std::size_t b) {
      Batch row;
      row.batch_size = 1;
      row.length = batch->length;
      const auto in = batch->input_row(b);
      const auto tg = batch->target_row(b);
      row.inputs.assign(in.begin(), in.end());
      row.targets.assign(tg.begin(), tg.end());
      std::vector<LmState<T>> s{std::move(states[b])};
      parts[b] = model_step_macs(model, row, &s, opts);
      states[b] = std::move(s[0]);
    });
    for (const auto& p : parts) report.ledger.merge(p);
  }
  report.tokens = report.ledger.steps_counted;
  if (report.tokens == 0) throw DataError("evaluate: split yields no tokens");
  report.mean_ce = report.ledger.loss_sum / static_cast<double>(report.tokens);
  report.ppl = perplexity(report.mean_ce);
  report.activity_sparsity = report.ledger.activity_sparsity();
  report.macs_per_step = report.ledger.macs_per_step();
  report.weight_sparsity = model.weight_sparsity();
  return report;
}

template <typename T>
Trainer<T>::Trainer(const RunConfig& cfg, LanguageModel<T>& model)
    : cfg_(cfg), model_(model), optimizer_(cfg.adamw_config()) {}

template <typename T>
EpochStats Trainer<T>::train_epoch(std::span<const std::int32_t> ids) {
  const std::size_t B = cfg_.batch_size;
  const std::size_t L = cfg_.bptt_len;
  BatchCursor cursor(ids, B, L);
  std::size_t num_batches = cursor.num_batches();
  if (cfg_.max_train_batches > 0) num_batches = std::min(num_batches, cfg_.max_train_batches);
  ++epoch_;

  const std::size_t wave = static_cast<std::size_t>(std::max(cfg_.threads, 1));
  std::vector<LmState<T>> states(B, model_.initial_state());
  LmGrads<T> total = LmGrads<T>::zeros_like(model_);
  std::vector<LmGrads<T>> scratch(std::min(wave, B), total);
  std::vector<double> losses(B, 0.0);
  const T loss_scale = static_cast<T>(1.0 / static_cast<double>(B * L));

  EpochStats stats;
  double loss_sum = 0.0;
  double norm_sum = 0.0;
  for (std::size_t n = 0; n < num_batches; ++n) {
    const auto batch = cursor.next();
    Rng dc_rng(derive_seed(cfg_.seed, kDropConnectStream, step_));
    const DropConnectMasks masks = model_.sample_dropconnect(cfg_.dropconnect_p, dc_rng);
    const CellStack<T> cells = model_.apply_dropconnect(masks);

    total.zero();
    try {
      for (std::size_t start = 0; start < B; start += wave) {
        const std::size_t count = std::min(wave, B - start);
        parallel_for(count, cfg_.threads, [&](std::size_t i) {
          const std::size_t b = start + i;
          scratch[i].zero();
          Rng rng(derive_seed(derive_seed(cfg_.seed, kDropoutStream, step_), b));
          SegmentOptions<T> opt;
          opt.training = true;
          opt.rng = &rng;
          opt.loss_scale = loss_scale;
          const auto res = model_.run_segment(cells, batch->input_row(b), batch->target_row(b),
                                              states[b], opt, &scratch[i]);
          losses[b] = res.loss_sum;
        });
        for (std::size_t i = 0; i < count; ++i) total.add(scratch[i]);
      }
      for (double l : losses) loss_sum += l;
      model_.dropconnect_backward(masks, total);
      auto params = model_.parameters();
      auto grads = total.spans();
      norm_sum += clip_grad_norm(std::span<const std::span<T>>(grads), cfg_.clip_norm);
      optimizer_.step(std::span<const ParamSlot<T>>(params), std::span<const std::span<T>>(grads));
      model_.clamp_thresholds(cfg_.threshold_floor);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(n) + ": " + e.what());
    }
    ++step_;
    stats.tokens += B * L;
  }
  stats.batches = num_batches;
  if (stats.tokens == 0) throw DataError("train_epoch: no batches");
  stats.mean_ce = loss_sum / static_cast<double>(stats.tokens);
  if (!std::isfinite(stats.mean_ce)) throw NumericError("training diverged: non-finite epoch loss");
  stats.ppl = perplexity(stats.mean_ce);
  stats.mean_grad_norm = norm_sum / static_cast<double>(num_batches);
  return stats;
}

template <typename T>
TrainOutcome train_model(const RunConfig& cfg, LanguageModel<T>& model, const DataSplits& data,
                         int epochs, const EpochCallback<T>& on_epoch) {
  TrainOutcome out;
  Trainer<T> trainer(cfg, model);
  LanguageModel<T> best = model;
  out.best_val_ppl = std::numeric_limits<double>::infinity();
  for (int e = 1; e <= epochs; ++e) {
    const EpochStats st = trainer.train_epoch(data.train);
    const EvalReport ev = evaluate(model, data.valid, cfg.eval_batch_size, cfg.bptt_len, cfg.threads,
                                   cfg.include_readout_macs);
    TrainLogRow row{e, st.ppl, ev.ppl, ev.activity_sparsity, ev.macs_per_step};
    const bool improved = ev.ppl < out.best_val_ppl;
    if (improved) {
      out.best_val_ppl = ev.ppl;
      out.best_epoch = e;
      best = model;
    }
    out.log.push_back(row);
    if (on_epoch) on_epoch(row, model, improved);
  }
  out.steps = trainer.step();
  if (epochs > 0) {
    model = std::move(best);
  } else {
    out.best_val_ppl =
        evaluate(model, data.valid, cfg.eval_batch_size, cfg.bptt_len, cfg.threads).ppl;
  }
  return out;
}

template <typename T>
std::vector<PruneTraceRow> run_prune_schedule(const RunConfig& cfg, LanguageModel<T>& model,
                                              const DataSplits& data, const PruneSchedule& schedule,
                                              const PruneCallback<T>& on_step) {
  schedule.validate();
  std::vector<PruneTraceRow> rows;
  Trainer<T> trainer(cfg, model);
  auto eval = [&](std::span<const std::int32_t> ids) {
    return evaluate(model, ids, cfg.eval_batch_size, cfg.bptt_len, cfg.threads,
                    cfg.include_readout_macs);
  };
  for (std::size_t k = 0; k < schedule.steps.size(); ++k) {
    const PruneStep& step = schedule.steps[k];
    auto scope = model.prune_scope();
    const PruneResult pr = global_magnitude_prune(scope, step.target_sparsity);
    auto params = model.parameters();
    trainer.optimizer().clear_masked_moments(std::span<const ParamSlot<T>>(params));

    double best_val = eval(data.valid).ppl;
    LanguageModel<T> best = model;
    for (int e = 0; e < step.finetune_epochs; ++e) {
      trainer.train_epoch(data.train);
      const double v = eval(data.valid).ppl;
      if (v < best_val) {
        best_val = v;
        best = model;
      }
    }
    model = std::move(best);

    const EvalReport test = eval(data.test);
    PruneTraceRow row;
    row.step = k + 1;
    row.target_sparsity = step.target_sparsity;
    row.achieved_sparsity = pr.sparsity();
    row.val_ppl = best_val;
    row.test_ppl = test.ppl;
    row.activity_sparsity = test.activity_sparsity;
    row.macs_per_step = test.macs_per_step;
    rows.push_back(row);
    if (on_step) on_step(row, model);
  }
  return rows;
}

template <typename T>
std::vector<SweepRecord> run_decay_sweep(const RunConfig& cfg, const DataSplits& data,
                                         const SweepCallback<T>& on_record) {
  if (cfg.sweep_decay_w.empty() || cfg.sweep_decay_b.empty()) {
    throw ConfigError("decay sweep needs at least one decay_w and one decay_b value");
  }
  std::vector<SweepRecord> out;
  for (double dw : cfg.sweep_decay_w) {
    for (double db : cfg.sweep_decay_b) {
      if (dw < 0.0 || db < 0.0) throw ConfigError("decay sweep values must be non-negative");
      RunConfig c = cfg;
      c.decay_w = dw;
      c.decay_b = db;
      Rng rng(model_init_seed(c.seed));
      LanguageModel<T> model(c.lm_config(data.vocab.size()), rng);
      train_model(c, model, data, c.epochs);
      const EvalReport ev = evaluate(model, data.test, c.eval_batch_size, c.bptt_len, c.threads,
                                     c.include_readout_macs);
      SweepRecord r;
      r.decay_w = dw;
      r.decay_b = db;
      r.test_ppl = ev.ppl;
      r.activity_sparsity = ev.activity_sparsity;
      r.weights = weight_stats(model);
      r.biases = bias_stats(model);
      out.push_back(r);
      if (on_record) on_record(r, model);
    }
  }
  return out;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string s = "epoch,train_ppl,val_ppl,activity_sparsity,macs_per_step\n";
  for (const auto& r : rows) {
    s += std::to_string(r.epoch) + "," + fmt(r.train_ppl) + "," + fmt(r.val_ppl) + "," +
         fmt(r.activity_sparsity) + "," + fmt(r.macs_per_step) + "\n";
  }
  return s;
}

std::string prune_trace_csv(const std::vector<PruneTraceRow>& rows) {
  std::string s = "step,target_sparsity,achieved_sparsity,val_ppl,test_ppl,activity_sparsity,macs_per_step\n";
  for (const auto& r : rows) {
    s += std::to_string(r.step) + "," + fmt(r.target_sparsity) + "," + fmt(r.achieved_sparsity) + "," +
         fmt(r.val_ppl) + "," + fmt(r.test_ppl) + "," + fmt(r.activity_sparsity) + "," +
         fmt(r.macs_per_step) + "\n";
  }
  return s;
}

std::string prune_curve_csv(const std::vector<PruneTraceRow>& rows) {
  std::string s = "weight_sparsity,macs,test_ppl\n";
  for (const auto& r : rows) {
    s += fmt(r.achieved_sparsity) + "," + fmt(r.macs_per_step) + "," + fmt(r.test_ppl) + "\n";
  }
  return s;
}

std::string sweep_csv(const std::vector<SweepRecord>& rows) {
  std::string s =
      "decay_w,decay_b,test_ppl,activity_sparsity,weight_mean,weight_std,bias_mean,bias_std,"
      "weight_q10,weight_q50,weight_q90,bias_q10,bias_q50,bias_q90\n";
  for (const auto& r : rows) {
    s += fmt(r.decay_w) + "," + fmt(r.decay_b) + "," + fmt(r.test_ppl) + "," + fmt(r.activity_sparsity) +
         "," + fmt(r.weights.mean) + "," + fmt(r.weights.std) + "," + fmt(r.biases.mean) + "," +
         fmt(r.biases.std) + "," + fmt(r.weights.q10) + "," + fmt(r.weights.q50) + "," +
         fmt(r.weights.q90) + "," + fmt(r.biases.q10) + "," + fmt(r.biases.q50) + "," +
         fmt(r.biases.q90) + "\n";
  }
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("failed writing " + path);
}

#define EGRU_INSTANTIATE(T)                                                                        \
  template EvalReport evaluate(const LanguageModel<T>&, std::span<const std::int32_t>, std::size_t, \
                               std::size_t, int, bool);                                            \
  template class Trainer<T>;                                                                       \
  template TrainOutcome train_model(const RunConfig&, LanguageModel<T>&, const DataSplits&, int,   \
                                    const EpochCallback<T>&);                                      \
  template std::vector<PruneTraceRow> run_prune_schedule(const RunConfig&, LanguageModel<T>&,      \
                                                         const DataSplits&, const PruneSchedule&,  \
                                                         const PruneCallback<T>&);                 \
  template std::vector<SweepRecord> run_decay_sweep(const RunConfig&, const DataSplits&,           \
                                                    const SweepCallback<T>&);

EGRU_INSTANTIATE(float)
EGRU_INSTANTIATE(double)

#undef EGRU_INSTANTIATE

}  // namespace egru
