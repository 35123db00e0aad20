// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// egru-lm: vocabulary building, training, pruning, evaluation and decay
// sweeps for event-based GRU and LSTM word-level language models.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or config error,
// 3 data error, 4 numeric error (divergence), 5 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "egru/checkpoint.hpp"
#include "egru/config.hpp"
#include "egru/corpus.hpp"
#include "egru/errors.hpp"
#include "egru/random.hpp"
#include "egru/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4, kIo = 5 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir = "out";
  bool include_readout = false;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (flat key set)");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--threads", f.threads, "Worker threads; results do not depend on it");
  cmd->add_option("--out", f.out_dir, "Output directory")->capture_default_str();
  cmd->add_flag("--include-readout-macs", f.include_readout, "Count decoder MACs as well");
  cmd->add_option("--set", f.overrides, "Config override key=value (repeatable)");
}

// defaults < base (checkpoint) < config file < EGRU_* env < flags
egru::RunConfig resolve(const CommonFlags& f, egru::RunConfig base = {}) {
  egru::RunConfig cfg = std::move(base);
  if (!f.config_path.empty()) cfg = egru::load_config_file(f.config_path, cfg);
  egru::apply_env_overrides(cfg);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw egru::ConfigError("--set expects key=value, got '" + kv + "'");
    egru::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.include_readout) cfg.include_readout_macs = true;
  cfg.validate();
  return cfg;
}

// Model-shape keys always come from the checkpoint.
void keep_model_keys(egru::RunConfig& cfg, const egru::RunConfig& ckpt) {
  cfg.cell_kind = ckpt.cell_kind;
  cfg.embed_dim = ckpt.embed_dim;
  cfg.hidden_dim = ckpt.hidden_dim;
  cfg.num_layers = ckpt.num_layers;
  cfg.tie_weights = ckpt.tie_weights;
}

std::string out_path(const CommonFlags& f, const std::string& name) {
  return (fs::path(f.out_dir) / name).string();
}

void prepare_out(const CommonFlags& f, const egru::RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(f.out_dir, ec);
  if (ec) throw egru::IoError("cannot create output directory " + f.out_dir + ": " + ec.message());
  egru::write_text_file(out_path(f, "config.resolved.json"), egru::config_to_json(cfg, true) + "\n");
}

egru::CheckpointMeta make_meta(const egru::RunConfig& cfg, const egru::DataSplits& data,
                               std::uint64_t step, int epoch) {
  egru::CheckpointMeta m;
  m.config = cfg;
  m.seed = cfg.seed;
  m.step = step;
  m.epoch = epoch;
  m.vocab_size = data.vocab.size();
  m.vocab_text = data.vocab.serialize();
  return m;
}

template <typename T>
egru::LoadedCheckpoint<T> open_checkpoint(const std::string& path, egru::Vocab& vocab) {
  auto loaded = egru::load_checkpoint<T>(path);
  if (loaded.meta.vocab_text.empty()) throw egru::DataError(path + " carries no vocabulary");
  vocab = egru::Vocab::parse(loaded.meta.vocab_text, path);
  if (vocab.size() != loaded.meta.vocab_size) throw egru::DataError(path + ": vocabulary size mismatch");
  return loaded;
}

json eval_json(const egru::EvalReport& r, const std::string& split, const egru::RunConfig& cfg) {
  json j;
  j["split"] = split;
  j["test_ppl"] = r.ppl;
  j["mean_cross_entropy"] = r.mean_ce;
  j["macs_per_step"] = r.macs_per_step;
  j["activity_sparsity"] = r.activity_sparsity;
  j["weight_sparsity"] = r.weight_sparsity;
  j["tokens"] = r.tokens;
  j["include_readout_macs"] = cfg.include_readout_macs;
  j["code_version"] = egru::kCodeVersion;
  j["config"] = json::parse(egru::config_to_json(cfg));
  return j;
}

int cmd_build_vocab(const CommonFlags& f, const std::string& corpus, std::string output) {
  egru::RunConfig cfg = resolve(f);
  const std::string source = corpus.empty() ? cfg.train_path : corpus;
  prepare_out(f, cfg);
  if (output.empty()) output = out_path(f, "vocab.txt");
  const egru::Vocab v = egru::Vocab::build(egru::read_text_file(source));
  v.save(output);
  std::cerr << "vocabulary: " << v.size() << " tokens -> " << output << "\n";
  return kOk;
}

template <typename T>
int train_impl(const CommonFlags& f, const egru::RunConfig& cfg) {
  prepare_out(f, cfg);
  const egru::DataSplits data = egru::load_splits(cfg);
  data.vocab.save(out_path(f, "vocab.txt"));
  egru::Rng rng(egru::model_init_seed(cfg.seed));
  egru::LanguageModel<T> model(cfg.lm_config(data.vocab.size()), rng);
  const std::string ckpt = out_path(f, "model.ckpt");
  std::vector<egru::TrainLogRow> rows;
  const auto outcome = egru::train_model<T>(
      cfg, model, data, cfg.epochs,
      [&](const egru::TrainLogRow& row, const egru::LanguageModel<T>& m, bool improved) {
        rows.push_back(row);
        egru::write_text_file(out_path(f, "train_log.csv"), egru::train_log_csv(rows));
        std::fprintf(stderr, "epoch %d  train_ppl %.3f  val_ppl %.3f  activity_sparsity %.4f  macs/step %.1f%s\n",
                     row.epoch, row.train_ppl, row.val_ppl, row.activity_sparsity, row.macs_per_step,
                     improved ? "  *" : "");
        if (improved) {
          egru::save_checkpoint(ckpt, m,
                                make_meta(cfg, data, 0, row.epoch));
        }
      });
  if (cfg.epochs == 0) {
    egru::write_text_file(out_path(f, "train_log.csv"), egru::train_log_csv(rows));
    egru::save_checkpoint(ckpt, model, make_meta(cfg, data, 0, 0));
  }
  std::fprintf(stderr, "best val_ppl %.3f at epoch %d -> %s\n", outcome.best_val_ppl, outcome.best_epoch,
               ckpt.c_str());
  return kOk;
}

template <typename T>
int prune_impl(const CommonFlags& f, const egru::RunConfig& cfg, const std::string& checkpoint) {
  egru::Vocab vocab;
  auto loaded = open_checkpoint<T>(checkpoint, vocab);
  const egru::PruneSchedule schedule = cfg.prune_schedule();
  prepare_out(f, cfg);
  if (schedule.steps.empty()) {
    std::cerr << "warning: empty prune schedule, nothing to do\n";
    return kOk;
  }
  const egru::DataSplits data = egru::load_splits(cfg, &vocab);
  auto& model = loaded.model;

  const auto dense = egru::evaluate(model, data.test, cfg.eval_batch_size, cfg.bptt_len, cfg.threads,
                                    cfg.include_readout_macs);
  egru::PruneTraceRow start;
  start.achieved_sparsity = dense.weight_sparsity;
  start.test_ppl = dense.ppl;
  start.val_ppl = egru::evaluate(model, data.valid, cfg.eval_batch_size, cfg.bptt_len, cfg.threads).ppl;
  start.activity_sparsity = dense.activity_sparsity;
  start.macs_per_step = dense.macs_per_step;
  std::vector<egru::PruneTraceRow> curve{start};
  std::vector<egru::PruneTraceRow> trace;
  egru::run_prune_schedule<T>(
      cfg, model, data, schedule, [&](const egru::PruneTraceRow& row, const egru::LanguageModel<T>& m) {
        trace.push_back(row);
        curve.push_back(row);
        egru::write_text_file(out_path(f, "prune_trace.csv"), egru::prune_trace_csv(trace));
        egru::write_text_file(out_path(f, "prune_curve.csv"), egru::prune_curve_csv(curve));
        egru::save_checkpoint(out_path(f, "prune_step_" + std::to_string(row.step) + ".ckpt"),
                              m, make_meta(cfg, data, 0, 0));
        std::fprintf(stderr, "step %zu  target %.3f  achieved %.4f  val_ppl %.3f  test_ppl %.3f  macs/step %.1f\n",
                     row.step, row.target_sparsity, row.achieved_sparsity, row.val_ppl, row.test_ppl,
                     row.macs_per_step);
      });
  return kOk;
}

template <typename T>
int eval_impl(const CommonFlags& f, const egru::RunConfig& cfg, const std::string& checkpoint,
              const std::string& split) {
  egru::Vocab vocab;
  auto loaded = open_checkpoint<T>(checkpoint, vocab);
  prepare_out(f, cfg);
  const egru::DataSplits data = egru::load_splits(cfg, &vocab);
  const auto& ids = split == "train" ? data.train : split == "valid" ? data.valid : data.test;
  const auto report = egru::evaluate(loaded.model, ids, cfg.eval_batch_size, cfg.bptt_len, cfg.threads,
                                     cfg.include_readout_macs);
  const std::string text = eval_json(report, split, cfg).dump(2) + "\n";
  egru::write_text_file(out_path(f, "eval.json"), text);
  std::cout << text;
  return kOk;
}

template <typename T>
int sweep_impl(const CommonFlags& f, const egru::RunConfig& cfg) {
  prepare_out(f, cfg);
  const egru::DataSplits data = egru::load_splits(cfg);
  std::vector<egru::SweepRecord> rows;
  egru::run_decay_sweep<T>(cfg, data, [&](const egru::SweepRecord& r, const egru::LanguageModel<T>& m) {
    rows.push_back(r);
    egru::write_text_file(out_path(f, "sweep.csv"), egru::sweep_csv(rows));
    egru::RunConfig c = cfg;
    c.decay_w = r.decay_w;
    c.decay_b = r.decay_b;
    egru::save_checkpoint(out_path(f, "sweep_" + std::to_string(rows.size()) + ".ckpt"),
                          m, make_meta(c, data, 0, c.epochs));
    std::fprintf(stderr, "decay_w %g  decay_b %g  test_ppl %.3f  activity_sparsity %.4f\n", r.decay_w,
                 r.decay_b, r.test_ppl, r.activity_sparsity);
  });
  return kOk;
}

bool use_f64(const egru::RunConfig& cfg) { return cfg.precision == "f64"; }

int cmd_train(const CommonFlags& f) {
  const egru::RunConfig cfg = resolve(f);
  return use_f64(cfg) ? train_impl<double>(f, cfg) : train_impl<float>(f, cfg);
}

// Stored config, then the usual overrides; the model shape stays fixed.
egru::RunConfig resolve_from_checkpoint(const CommonFlags& f, const std::string& checkpoint) {
  const egru::CheckpointMeta meta = egru::read_checkpoint_meta(checkpoint);
  egru::RunConfig cfg = resolve(f, meta.config);
  keep_model_keys(cfg, meta.config);
  return cfg;
}

int cmd_prune(const CommonFlags& f, const std::string& checkpoint) {
  const egru::RunConfig cfg = resolve_from_checkpoint(f, checkpoint);
  return use_f64(cfg) ? prune_impl<double>(f, cfg, checkpoint) : prune_impl<float>(f, cfg, checkpoint);
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& split) {
  const egru::RunConfig cfg = resolve_from_checkpoint(f, checkpoint);
  return use_f64(cfg) ? eval_impl<double>(f, cfg, checkpoint, split)
                      : eval_impl<float>(f, cfg, checkpoint, split);
}

int cmd_sweep(const CommonFlags& f, const std::vector<double>& decay_w, const std::vector<double>& decay_b) {
  egru::RunConfig cfg = resolve(f);
  if (!decay_w.empty()) cfg.sweep_decay_w = decay_w;
  if (!decay_b.empty()) cfg.sweep_decay_b = decay_b;
  return use_f64(cfg) ? sweep_impl<double>(f, cfg) : sweep_impl<float>(f, cfg);
}

int run(int argc, char** argv) {
  CLI::App app{"Event-based GRU / LSTM word-level language models"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a vocabulary file from a corpus");
  add_common(vocab_cmd, flags);
  std::string corpus, vocab_out;
  vocab_cmd->add_option("--corpus", corpus, "Corpus file (default: train_path)");
  vocab_cmd->add_option("--output", vocab_out, "Vocabulary file (default: <out>/vocab.txt)");

  auto* train_cmd = app.add_subcommand("train", "Train a model; writes train_log.csv and model.ckpt");
  add_common(train_cmd, flags);

  auto* prune_cmd = app.add_subcommand("prune", "Prune a trained model along a schedule");
  add_common(prune_cmd, flags);
  std::string checkpoint;
  prune_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; writes eval.json");
  add_common(eval_cmd, flags);
  std::string split = "test";
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  eval_cmd->add_option("--split", split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep-decay", "Train one model per weight-decay pair");
  add_common(sweep_cmd, flags);
  std::vector<double> decay_w, decay_b;
  sweep_cmd->add_option("--decay-w", decay_w, "decay_w values (default: sweep_decay_w)")->delimiter(',');
  sweep_cmd->add_option("--decay-b", decay_b, "decay_b values (default: sweep_decay_b)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*vocab_cmd) return cmd_build_vocab(flags, corpus, vocab_out);
  if (*train_cmd) return cmd_train(flags);
  if (*prune_cmd) return cmd_prune(flags, checkpoint);
  if (*eval_cmd) return cmd_eval(flags, checkpoint, split);
  return cmd_sweep(flags, decay_w, decay_b);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const egru::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const egru::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const egru::ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kUsage;
  } catch (const egru::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const egru::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const egru::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
