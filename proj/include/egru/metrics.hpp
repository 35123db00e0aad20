// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Operation accounting and quality metrics.
//
// One MAC is one scalar multiply inside a matrix-vector product. Elementwise
// gate arithmetic and nonlinearities are not counted. By default only the
// recurrent cells are counted; the token read-out (decoder) can be added.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egru/corpus.hpp"
#include "egru/language_model.hpp"
#include "egru/tensor.hpp"

namespace egru {

// Multiplies performed by matvec_event(w, e).
template <typename T>
std::uint64_t count_macs_event(const MaskedMatrix<T>& w, const EventVector<T>& e) {
  std::uint64_t n = 0;
  for (auto j : e.indices()) n += w.nnz_column(j);
  return n;
}

// Multiplies performed by matvec_masked(w, a).
template <typename T>
std::uint64_t count_macs_dense(const MaskedMatrix<T>& w) {
  return w.nnz();
}

// Fraction of operations left when a fraction active_fraction of inputs is
// nonzero and a fraction weight_fraction of weights is kept.
double theoretical_fraction(double active_fraction, double weight_fraction);

double perplexity(double mean_cross_entropy);

// 1 - (active entries) / (total entries) over a set of event sequences.
template <typename T>
double activity_sparsity(std::span<const std::vector<EventVector<T>>> sequences) {
  std::uint64_t active = 0;
  std::uint64_t total = 0;
  for (const auto& seq : sequences) {
    for (const auto& e : seq) {
      active += e.active_count();
      total += e.dim();
    }
  }
  if (total == 0) throw UsageError("activity_sparsity: no entries");
  return 1.0 - static_cast<double>(active) / static_cast<double>(total);
}

struct MacEntry {
  std::size_t layer = 0;
  std::string matrix;
  std::uint64_t macs = 0;
};

struct MacLedger {
  std::vector<MacEntry> entries;
  std::uint64_t total = 0;
  std::uint64_t steps_counted = 0;        // stream-timesteps covered
  std::vector<double> activity_fraction;  // per layer, lambda_a of its output
  std::vector<std::pair<std::string, double>> weight_fraction;  // per matrix, lambda_w
  std::uint64_t instrumented = 0;  // multiply counter observed in the kernels
  std::vector<std::uint64_t> active;  // per layer: nonzero outputs
  std::vector<std::uint64_t> slots;   // per layer: outputs produced
  double loss_sum = 0.0;              // summed cross-entropy of the forward pass

  void add(std::size_t layer, const std::string& matrix, std::uint64_t macs);
  // Adds another ledger over the same model (e.g. another stream).
  void merge(const MacLedger& other);
  // Overall activity sparsity over all layers: 1 - sum(active) / sum(slots).
  double activity_sparsity() const;
  double macs_per_step() const {
    return steps_counted == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(steps_counted);
  }
};

struct LedgerOptions {
  bool include_readout = false;
};

// Runs an eval-mode forward over every stream of the batch starting from
// `states` (advanced in place; pass nullptr to start from zero state) and
// accounts each cell product from the recorded step inputs. The kernels'
// own multiply counter is stored in `instrumented` for cross-checking.
template <typename T>
MacLedger model_step_macs(const LanguageModel<T>& model, const Batch& batch,
                          std::vector<LmState<T>>* states = nullptr, LedgerOptions options = {});

// Dense-equivalent MACs per step: every cell matrix fully multiplied.
template <typename T>
std::uint64_t dense_step_macs(const LanguageModel<T>& model, bool include_readout = false);

struct DistributionStats {
  double mean = 0.0;
  double std = 0.0;
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
};

DistributionStats distribution_stats(std::vector<double> values);

// Statistics over the recurrent weight matrices (masked entries included)
// and over the gate biases of all layers (thresholds excluded).
template <typename T>
DistributionStats weight_stats(const LanguageModel<T>& model);
template <typename T>
DistributionStats bias_stats(const LanguageModel<T>& model);

}  // namespace egru
