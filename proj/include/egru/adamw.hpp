// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// AdamW with decoupled weight decay and separate decay rates for the weight
// and bias groups. Masked weights are frozen at zero: their gradients and
// moments are cleared, and the mask is re-applied after each step.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egru/errors.hpp"
#include "egru/params.hpp"

namespace egru {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_w = 0.0;
  double decay_b = 0.0;
};

// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<const std::span<T>> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (const auto& g : grads) {
      for (T& v : g) v *= scale;
    }
  }
  return norm;
}

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  AdamWConfig& mutable_config() { return config_; }
  std::uint64_t steps() const { return step_; }

  const std::vector<T>& first_moment(std::size_t slot) const { return m_.at(slot); }
  const std::vector<T>& second_moment(std::size_t slot) const { return v_.at(slot); }

  // Zeroes gradients of masked weights. Called by step(); exposed for tests.
  static void mask_gradients(std::span<const ParamSlot<T>> params, std::span<const std::span<T>> grads) {
    for (std::size_t s = 0; s < params.size(); ++s) {
      if (!params[s].matrix) continue;
      const auto& mask = params[s].matrix->mask();
      for (std::size_t k = 0; k < grads[s].size(); ++k) {
        if (!mask[k]) grads[s][k] = T{0};
      }
    }
  }

  void step(std::span<const ParamSlot<T>> params, std::span<const std::span<T>> grads) {
    if (params.size() != grads.size()) throw UsageError("AdamW::step: params/grads count mismatch");
    for (std::size_t s = 0; s < params.size(); ++s) {
      if (params[s].value.size() != grads[s].size()) {
        throw ShapeError("AdamW::step: gradient size mismatch for " + params[s].name);
      }
      for (T g : grads[s]) {
        if (!std::isfinite(g)) throw NumericError("AdamW::step: non-finite gradient in " + params[s].name);
      }
    }
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), T{0});
        v_.emplace_back(p.value.size(), T{0});
      }
    } else if (m_.size() != params.size()) {
      throw UsageError("AdamW::step: parameter list changed between steps");
    }
    mask_gradients(params, grads);

    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t s = 0; s < params.size(); ++s) {
      const auto& p = params[s];
      const double decay = p.group == ParamGroup::kWeights ? config_.decay_w : config_.decay_b;
      auto& m = m_[s];
      auto& v = v_[s];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        if (p.masked(k)) {
          m[k] = T{0};
          v[k] = T{0};
          p.value[k] = T{0};
          continue;
        }
        const double g = grads[s][k];
        const double mk = b1 * m[k] + (1.0 - b1) * g;
        const double vk = b2 * v[k] + (1.0 - b2) * g * g;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        const double m_hat = mk / c1;
        const double v_hat = vk / c2;
        const double theta = p.value[k];
        p.value[k] = static_cast<T>(theta - config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                                                          decay * theta));
      }
      if (p.matrix) p.matrix->apply_mask();
    }
  }

  // Clears moments of masked entries, e.g. right after pruning.
  void clear_masked_moments(std::span<const ParamSlot<T>> params) {
    if (m_.empty()) return;
    for (std::size_t s = 0; s < params.size(); ++s) {
      for (std::size_t k = 0; k < params[s].value.size(); ++k) {
        if (params[s].masked(k)) {
          m_[s][k] = T{0};
          v_[s][k] = T{0};
        }
      }
    }
  }

 private:
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace egru
