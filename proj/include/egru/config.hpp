// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one flat key set shared by the config file (JSON
// object), environment overrides (EGRU_<KEY>, upper case) and CLI flags.
// Unknown keys are rejected; "code_version" is accepted and ignored.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "egru/adamw.hpp"
#include "egru/language_model.hpp"
#include "egru/pruning.hpp"

namespace egru {

inline constexpr const char* kCodeVersion = "egru-lm 0.1.0";
inline constexpr const char* kEnvPrefix = "EGRU_";

struct RunConfig {
  // model
  std::string cell_kind = "egru";
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t num_layers = 3;
  double dropconnect_p = 0.0;
  double dropout_in_p = 0.0;
  double dropout_out_p = 0.0;
  bool tie_weights = true;
  double surrogate_scale = 1.0;
  double surrogate_width = 1.0;
  double forget_bias = 1.0;
  double embed_init_std = 1.0;
  // EGRU thresholds are projected onto [threshold_floor, inf) after every
  // optimizer step. Below zero the reset adds to c and the state can grow
  // without bound; -inf disables the projection.
  double threshold_floor = 0.0;
  // optimizer
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double decay_w = 0.0;
  double decay_b = 0.0;
  double clip_norm = 0.25;
  // training
  std::size_t batch_size = 32;
  std::size_t bptt_len = 35;
  std::size_t eval_batch_size = 10;
  int epochs = 6;
  std::size_t max_train_batches = 0;  // 0 = whole epoch
  // data
  std::string train_path = "data/desk/train.txt";
  std::string valid_path = "data/desk/valid.txt";
  std::string test_path = "data/desk/test.txt";
  std::string vocab_path;  // empty: build from train_path
  // pruning
  double prune_target = 0.6;
  int prune_finetune_epochs = 2;
  std::vector<double> prune_steps;  // explicit targets; empty = 10-point increments
  // decay sweep
  std::vector<double> sweep_decay_w = {0.0, 0.05, 0.14, 0.3};
  std::vector<double> sweep_decay_b = {0.01};
  // run
  std::uint64_t seed = 1;
  int threads = 1;
  bool include_readout_macs = false;
  std::string precision = "f32";  // f32 or f64 parameters and arithmetic

  LmConfig lm_config(std::size_t vocab_size) const;
  AdamWConfig adamw_config() const;
  PruneSchedule prune_schedule() const;
  void validate() const;
};

// Documented key list, in serialization order.
std::vector<std::string> config_keys();

// Sets `key` from its string form (as written in env vars or on the CLI).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig config_from_json_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});
// Applies EGRU_<KEY> overrides found through `getenv` (std::getenv by default).
void apply_env_overrides(RunConfig& cfg,
                         const std::function<const char*(const char*)>& getenv = nullptr);
// Flat JSON object of all keys; `with_version` adds the informational
// "code_version" key, which config loading skips.
std::string config_to_json(const RunConfig& cfg, bool with_version = false);

}  // namespace egru
