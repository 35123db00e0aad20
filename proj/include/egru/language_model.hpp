// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Word-level language model: embedding lookup, a stack of recurrent layers
// without skip connections, and a linear decoder tied to the embedding.
//
// With event-based cells every layer-to-layer and step-to-step hidden
// transfer is an EventVector; the first layer consumes the embedding as a
// (mostly dense) event vector.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egru/egru_cell.hpp"
#include "egru/lstm_cell.hpp"
#include "egru/params.hpp"
#include "egru/pruning.hpp"
#include "egru/random.hpp"
#include "egru/tensor.hpp"

namespace egru {

enum class CellKind { kEgru, kLstm };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(const std::string& s);

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t num_layers = 3;
  CellKind cell_kind = CellKind::kEgru;
  double dropconnect_p = 0.0;
  double dropout_in_p = 0.0;
  double dropout_out_p = 0.0;
  bool tie_weights = true;
  double surrogate_scale = 1.0;
  double surrogate_width = 1.0;
  double forget_bias = 1.0;
  // Embedding entries start N(0, embed_init_std^2). Small values leave a
  // tied model on the unigram plateau for many epochs.
  double embed_init_std = 1.0;

  void validate() const;
  // Input and output width of layer l: E -> H -> ... -> H -> E.
  std::size_t layer_input_dim(std::size_t l) const { return l == 0 ? embed_dim : hidden_dim; }
  std::size_t layer_output_dim(std::size_t l) const {
    return l + 1 == num_layers ? embed_dim : hidden_dim;
  }
};

// Recurrent layers of one kind; the other vector stays empty.
template <typename T>
struct CellStack {
  std::vector<EgruParams<T>> egru;
  std::vector<LstmParams<T>> lstm;
};

template <typename T>
struct LayerState {
  EgruState<T> egru;
  LstmState<T> lstm;
};

template <typename T>
using LmState = std::vector<LayerState<T>>;

// Per-pass DropConnect keep-masks, one per recurrent matrix (column-major).
struct DropConnectMasks {
  double p = 0.0;
  std::vector<std::vector<std::uint8_t>> masks;
};

template <typename T>
class LanguageModel;

template <typename T>
struct LmGrads {
  DenseMatrix<T> embedding;       // E x V storage, column k = token k
  DenseMatrix<T> decoder_weight;  // empty when tied
  std::vector<T> decoder_bias;
  std::vector<EgruGrads<T>> egru;
  std::vector<LstmGrads<T>> lstm;

  static LmGrads zeros_like(const LanguageModel<T>& model);
  // Gradient tensors in the order of LanguageModel::parameters().
  std::vector<std::span<T>> spans();
  void add(LmGrads& other);
  void zero();
};

template <typename T>
struct SegmentOptions {
  bool training = false;
  Rng* rng = nullptr;              // dropout draws (training only)
  MacCounter* counter = nullptr;   // instrumented multiply count of the cells
  bool capture = false;            // keep per-layer caches in the result
  T loss_scale = T{1};             // d(loss)/d(sum of token CEs) for backprop
};

template <typename T>
struct SegmentResult {
  double loss_sum = 0.0;  // summed token cross-entropy (nats)
  std::size_t tokens = 0;
  std::vector<std::uint64_t> active;  // per layer: nonzero outputs
  std::vector<std::uint64_t> slots;   // per layer: outputs produced
  std::vector<std::vector<EgruStepCache<T>>> egru_caches;
  std::vector<std::vector<LstmStepCache<T>>> lstm_caches;
};

template <typename T>
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const LmConfig& config, Rng& rng);

  const LmConfig& config() const { return config_; }

  // Embedding storage is E x V: column k is the vector of token k, i.e. the
  // logical V x E table is the row-major view of this buffer.
  DenseMatrix<T>& embedding() { return embedding_; }
  const DenseMatrix<T>& embedding() const { return embedding_; }
  DenseMatrix<T>& decoder_weight() { return decoder_weight_; }
  const DenseMatrix<T>& decoder_weight() const { return decoder_weight_; }
  std::vector<T>& decoder_bias() { return decoder_bias_; }
  const std::vector<T>& decoder_bias() const { return decoder_bias_; }
  CellStack<T>& cells() { return cells_; }
  const CellStack<T>& cells() const { return cells_; }

  std::span<const T> embedding_row(std::int32_t token) const;

  // Embedding lookup; in training mode applies inverted dropout.
  std::vector<std::vector<T>> embed(std::span<const std::int32_t> tokens, bool training,
                                    Rng* rng) const;

  std::vector<ParamSlot<T>> parameters();
  PruneScope<T> prune_scope();
  std::vector<std::string> prune_scope_names() const;
  // Writes zero into every masked weight.
  void enforce_masks();
  // Raises EGRU thresholds below `floor` to `floor`.
  void clamp_thresholds(double floor);
  double weight_sparsity() const;

  LmState<T> initial_state() const;

  DropConnectMasks sample_dropconnect(double p, Rng& rng) const;
  // Effective cell weights for one pass: recurrent matrices keep only entries
  // kept by both masks, scaled by 1 / (1 - p).
  CellStack<T> apply_dropconnect(const DropConnectMasks& masks) const;
  // Maps gradients w.r.t. effective recurrent weights back to the parameters.
  void dropconnect_backward(const DropConnectMasks& masks, LmGrads<T>& grads) const;

  // Runs one segment of one stream. `targets[t]` is the token following
  // `inputs[t]`. The state is advanced in place. With grads != nullptr the
  // loss gradient (times options.loss_scale) is added to *grads.
  SegmentResult<T> run_segment(const CellStack<T>& cells, std::span<const std::int32_t> inputs,
                               std::span<const std::int32_t> targets, LmState<T>& state,
                               const SegmentOptions<T>& options, LmGrads<T>* grads) const;
  SegmentResult<T> run_segment(std::span<const std::int32_t> inputs,
                               std::span<const std::int32_t> targets, LmState<T>& state,
                               const SegmentOptions<T>& options, LmGrads<T>* grads) const {
    return run_segment(cells_, inputs, targets, state, options, grads);
  }

  // Decoder logits for one final-layer output.
  std::vector<T> logits(std::span<const T> hidden) const;

 private:
  LmConfig config_;
  DenseMatrix<T> embedding_;
  DenseMatrix<T> decoder_weight_;
  std::vector<T> decoder_bias_;
  CellStack<T> cells_;
};

// Recurrent matrices touched by DropConnect, in a fixed order.
template <typename T>
std::vector<const MaskedMatrix<T>*> recurrent_matrices(const CellStack<T>& cells);
template <typename T>
std::vector<MaskedMatrix<T>*> recurrent_matrices(CellStack<T>& cells);

extern template class LanguageModel<float>;
extern template class LanguageModel<double>;
extern template struct LmGrads<float>;
extern template struct LmGrads<double>;

}  // namespace egru
