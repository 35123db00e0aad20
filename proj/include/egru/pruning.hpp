// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Global unstructured magnitude pruning.
//
// All scoped matrices are ranked together by |w|; the globally smallest
// entries are masked until the requested fraction of the scope is pruned.
// Masks only ever grow. Equal magnitudes are ordered by (tensor id, row-major
// flat index), and entries that are already masked rank first.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "egru/errors.hpp"
#include "egru/tensor.hpp"

namespace egru {

// The prunable tensors of a model. Embeddings and a tied decoder are never
// part of a scope.
template <typename T>
struct PruneScope {
  std::vector<std::string> names;
  std::vector<MaskedMatrix<T>*> tensors;

  void add(std::string name, MaskedMatrix<T>& m) {
    names.push_back(std::move(name));
    tensors.push_back(&m);
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto* t : tensors) n += t->size();
    return n;
  }
  std::size_t masked() const {
    std::size_t n = 0;
    for (const auto* t : tensors) n += t->size() - t->nnz();
    return n;
  }
  double sparsity() const {
    const std::size_t n = total();
    return n == 0 ? 0.0 : static_cast<double>(masked()) / static_cast<double>(n);
  }
};

struct PruneStep {
  double target_sparsity = 0.0;
  int finetune_epochs = 0;
};

struct PruneSchedule {
  std::vector<PruneStep> steps;

  void validate() const {
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const double s = steps[k].target_sparsity;
      if (!(s >= 0.0 && s < 1.0)) throw UsageError("prune schedule: target sparsity must be in [0, 1)");
      if (k > 0 && !(s > steps[k - 1].target_sparsity)) {
        throw UsageError("prune schedule: targets must be strictly increasing");
      }
      if (steps[k].finetune_epochs < 0) throw UsageError("prune schedule: negative fine-tune epochs");
    }
  }

  // 10-point increments from 20% up to `target` (inclusive). A target of 0
  // gives an empty schedule.
  static PruneSchedule increments(double target, int finetune_epochs, double start = 0.2,
                                  double stride = 0.1) {
    PruneSchedule s;
    if (target <= 0.0) return s;
    for (int k = 0;; ++k) {
      const double v = std::round((start + stride * k) * 1e6) / 1e6;
      if (v >= target - 1e-9) break;
      s.steps.push_back({v, finetune_epochs});
    }
    s.steps.push_back({target, finetune_epochs});
    return s;
  }
};

// Number of entries to mask for a target fraction of n. The product is
// nudged down by a relative 1e-12 before ceil so values like 0.7 * 10 that
// land a rounding error above an integer are not bumped up by one.
inline std::size_t prune_count(double target_sparsity, std::size_t n) {
  const long double raw = static_cast<long double>(target_sparsity) * static_cast<long double>(n);
  const long double c = std::ceil(raw * (1.0L - 1e-12L));
  return static_cast<std::size_t>(std::max<long double>(0.0L, std::min<long double>(c, n)));
}

struct PruneResult {
  std::size_t total = 0;
  std::size_t masked_before = 0;
  std::size_t masked_after = 0;
  double max_pruned_magnitude = 0.0;  // among entries newly masked by this call
  double min_kept_magnitude = 0.0;

  double sparsity() const {
    return total == 0 ? 0.0 : static_cast<double>(masked_after) / static_cast<double>(total);
  }
};

template <typename T>
PruneResult global_magnitude_prune(PruneScope<T>& scope, double target_sparsity) {
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
    throw UsageError("global_magnitude_prune: target sparsity must be in [0, 1)");
  }
  PruneResult result;
  result.total = scope.total();
  result.masked_before = scope.masked();
  const std::size_t want = prune_count(target_sparsity, result.total);
  if (want < result.masked_before) {
    throw UsageError("global_magnitude_prune: target " + std::to_string(target_sparsity) +
                     " is below the current sparsity " + std::to_string(scope.sparsity()));
  }

  struct Entry {
    double magnitude;
    std::uint32_t tensor;
    std::uint32_t flat;  // row-major index
    bool masked;
  };
  std::vector<Entry> entries;
  entries.reserve(result.total);
  for (std::size_t t = 0; t < scope.tensors.size(); ++t) {
    const auto& m = *scope.tensors[t];
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        entries.push_back({std::abs(static_cast<double>(m(i, j))), static_cast<std::uint32_t>(t),
                           static_cast<std::uint32_t>(i * m.cols() + j), !m.kept(i, j)});
      }
    }
  }
  auto before = [](const Entry& a, const Entry& b) {
    if (a.masked != b.masked) return a.masked;
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    if (a.tensor != b.tensor) return a.tensor < b.tensor;
    return a.flat < b.flat;
  };
  if (want < entries.size()) {
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(want),
                     entries.end(), before);
  }
  std::sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(want), before);

  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(scope.tensors.size());
  for (const auto* m : scope.tensors) masks.push_back(m->mask());
  for (std::size_t k = 0; k < want; ++k) {
    const auto& e = entries[k];
    const auto* m = scope.tensors[e.tensor];
    const std::size_t i = e.flat / m->cols();
    const std::size_t j = e.flat % m->cols();
    if (!e.masked) result.max_pruned_magnitude = std::max(result.max_pruned_magnitude, e.magnitude);
    masks[e.tensor][j * m->rows() + i] = 0;
  }
  result.min_kept_magnitude = want < entries.size() ? INFINITY : 0.0;
  for (std::size_t k = want; k < entries.size(); ++k) {
    result.min_kept_magnitude = std::min(result.min_kept_magnitude, entries[k].magnitude);
  }
  for (std::size_t t = 0; t < scope.tensors.size(); ++t) scope.tensors[t]->set_mask(std::move(masks[t]));
  result.masked_after = scope.masked();
  return result;
}

}  // namespace egru
