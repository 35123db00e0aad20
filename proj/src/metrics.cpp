// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "egru/errors.hpp"

namespace egru {

double theoretical_fraction(double active_fraction, double weight_fraction) {
  if (!(active_fraction >= 0.0 && active_fraction <= 1.0 && weight_fraction >= 0.0 &&
        weight_fraction <= 1.0)) {
    throw UsageError("theoretical_fraction: fractions must lie in [0, 1]");
  }
  return active_fraction * weight_fraction;
}

double perplexity(double mean_cross_entropy) {
  if (!std::isfinite(mean_cross_entropy)) throw NumericError("perplexity: non-finite cross-entropy");
  return std::exp(mean_cross_entropy);
}

void MacLedger::add(std::size_t layer, const std::string& matrix, std::uint64_t macs) {
  for (auto& e : entries) {
    if (e.layer == layer && e.matrix == matrix) {
      e.macs += macs;
      total += macs;
      return;
    }
  }
  entries.push_back({layer, matrix, macs});
  total += macs;
}

void MacLedger::merge(const MacLedger& other) {
  for (const auto& e : other.entries) add(e.layer, e.matrix, e.macs);
  steps_counted += other.steps_counted;
  instrumented += other.instrumented;
  loss_sum += other.loss_sum;
  if (active.empty()) {
    active.assign(other.active.size(), 0);
    slots.assign(other.slots.size(), 0);
  }
  if (active.size() != other.active.size()) throw UsageError("MacLedger::merge: layer count mismatch");
  for (std::size_t l = 0; l < active.size(); ++l) {
    active[l] += other.active[l];
    slots[l] += other.slots[l];
  }
  activity_fraction.clear();
  for (std::size_t l = 0; l < active.size(); ++l) {
    activity_fraction.push_back(slots[l] == 0 ? 0.0
                                              : static_cast<double>(active[l]) /
                                                    static_cast<double>(slots[l]));
  }
  if (weight_fraction.empty()) weight_fraction = other.weight_fraction;
}

double MacLedger::activity_sparsity() const {
  std::uint64_t a = 0;
  std::uint64_t n = 0;
  for (std::size_t l = 0; l < active.size(); ++l) {
    a += active[l];
    n += slots[l];
  }
  return n == 0 ? 0.0 : 1.0 - static_cast<double>(a) / static_cast<double>(n);
}

template <typename T>
MacLedger model_step_macs(const LanguageModel<T>& model, const Batch& batch,
                          std::vector<LmState<T>>* states, LedgerOptions options) {
  const auto& cfg = model.config();
  const auto& cells = model.cells();
  MacLedger ledger;
  ledger.active.assign(cfg.num_layers, 0);
  ledger.slots.assign(cfg.num_layers, 0);
  if (states && states->size() != batch.batch_size) throw UsageError("model_step_macs: state count mismatch");

  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    LmState<T> local = model.initial_state();
    LmState<T>& state = states ? (*states)[b] : local;
    MacCounter counter;
    SegmentOptions<T> opt;
    opt.counter = &counter;
    opt.capture = true;
    const auto seg = model.run_segment(batch.input_row(b), batch.target_row(b), state, opt, nullptr);
    ledger.instrumented += counter.multiplies;
    ledger.steps_counted += seg.tokens;
    ledger.loss_sum += seg.loss_sum;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      ledger.active[l] += seg.active[l];
      ledger.slots[l] += seg.slots[l];
    }

    if (cfg.cell_kind == CellKind::kEgru) {
      for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto& p = cells.egru[l];
        for (const auto& c : seg.egru_caches[l]) {
          ledger.add(l, "w_ux", count_macs_event(p.w_ux, c.x));
          ledger.add(l, "w_rx", count_macs_event(p.w_rx, c.x));
          ledger.add(l, "w_zx", count_macs_event(p.w_zx, c.x));
          ledger.add(l, "w_uy", count_macs_event(p.w_uy, c.y_prev));
          ledger.add(l, "w_ry", count_macs_event(p.w_ry, c.y_prev));
          ledger.add(l, "w_zy", count_macs_event(p.w_zy, c.ry));
        }
      }
    } else {
      for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto& p = cells.lstm[l];
        const std::uint64_t steps = seg.lstm_caches[l].size();
        const std::pair<const char*, const MaskedMatrix<T>*> mats[] = {
            {"w_ix", &p.w_ix}, {"w_fx", &p.w_fx}, {"w_gx", &p.w_gx}, {"w_ox", &p.w_ox},
            {"w_ih", &p.w_ih}, {"w_fh", &p.w_fh}, {"w_gh", &p.w_gh}, {"w_oh", &p.w_oh}};
        for (const auto& [name, m] : mats) ledger.add(l, name, steps * count_macs_dense(*m));
      }
    }
    if (options.include_readout) {
      ledger.add(cfg.num_layers, "decoder",
                 static_cast<std::uint64_t>(seg.tokens) * cfg.embed_dim * cfg.vocab_size);
    }
  }

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    ledger.activity_fraction.push_back(ledger.slots[l] == 0
                                           ? 0.0
                                           : static_cast<double>(ledger.active[l]) /
                                                 static_cast<double>(ledger.slots[l]));
  }
  for (const auto& slot : const_cast<LanguageModel<T>&>(model).parameters()) {
    if (slot.matrix) {
      ledger.weight_fraction.emplace_back(slot.name, 1.0 - slot.matrix->weight_sparsity());
    }
  }
  return ledger;
}

template <typename T>
std::uint64_t dense_step_macs(const LanguageModel<T>& model, bool include_readout) {
  std::uint64_t n = 0;
  for (const auto& slot : const_cast<LanguageModel<T>&>(model).parameters()) {
    if (slot.matrix) n += slot.matrix->size();
  }
  if (include_readout) n += model.config().embed_dim * model.config().vocab_size;
  return n;
}

DistributionStats distribution_stats(std::vector<double> values) {
  DistributionStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  std::sort(values.begin(), values.end());
  // Linear interpolation between closest ranks.
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  s.q10 = quantile(0.1);
  s.q50 = quantile(0.5);
  s.q90 = quantile(0.9);
  return s;
}

template <typename T>
DistributionStats weight_stats(const LanguageModel<T>& model) {
  std::vector<double> values;
  for (const auto& slot : const_cast<LanguageModel<T>&>(model).parameters()) {
    if (slot.matrix) values.insert(values.end(), slot.value.begin(), slot.value.end());
  }
  return distribution_stats(std::move(values));
}

template <typename T>
DistributionStats bias_stats(const LanguageModel<T>& model) {
  std::vector<double> values;
  for (const auto& slot : const_cast<LanguageModel<T>&>(model).parameters()) {
    if (slot.group != ParamGroup::kBiases || slot.name.rfind("layers.", 0) != 0) continue;
    if (slot.name.ends_with(".threshold")) continue;
    values.insert(values.end(), slot.value.begin(), slot.value.end());
  }
  return distribution_stats(std::move(values));
}

template MacLedger model_step_macs(const LanguageModel<float>&, const Batch&,
                                   std::vector<LmState<float>>*, LedgerOptions);
template MacLedger model_step_macs(const LanguageModel<double>&, const Batch&,
                                   std::vector<LmState<double>>*, LedgerOptions);
template std::uint64_t dense_step_macs(const LanguageModel<float>&, bool);
template std::uint64_t dense_step_macs(const LanguageModel<double>&, bool);
template DistributionStats weight_stats(const LanguageModel<float>&);
template DistributionStats weight_stats(const LanguageModel<double>&);
template DistributionStats bias_stats(const LanguageModel<float>&);
template DistributionStats bias_stats(const LanguageModel<double>&);

}  // namespace egru
