// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "egru/tensor.hpp"

namespace egru {

// Decay group of a trainable tensor. Thresholds count as biases.
enum class ParamGroup { kWeights, kBiases };

// A view of one trainable tensor. `matrix` is set for masked weight
// matrices; the optimizer consults its mask and re-applies it after a step.
template <typename T>
struct ParamSlot {
  std::string name;
  ParamGroup group = ParamGroup::kWeights;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::span<T> value;  // column-major
  MaskedMatrix<T>* matrix = nullptr;

  bool masked(std::size_t k) const { return matrix != nullptr && !matrix->mask()[k]; }
};

}  // namespace egru
