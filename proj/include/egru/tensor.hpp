// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Dense and mask-aware matrices, sparse event vectors and the matrix-vector
// kernels shared by every recurrent cell.
//
// Matrices are stored column-major so that the event-driven product only
// touches the columns of active inputs. All kernels sum in a fixed order
// (ascending column, ascending row inside a column); the event path and the
// dense masked path therefore produce identical results for the same inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egru/errors.hpp"

namespace egru {

// Multiply counter threaded through the kernels. One instance per pass;
// passes merge their counters afterwards.
struct MacCounter {
  std::uint64_t multiplies = 0;

  void add(std::uint64_t n) { multiplies += n; }
  MacCounter& operator+=(const MacCounter& other) {
    multiplies += other.multiplies;
    return *this;
  }
};

template <typename T>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Builds a matrix from row-major values.
  static DenseMatrix from_row_major(std::size_t rows, std::size_t cols,
                                    std::span<const T> values) {
    if (values.size() != rows * cols) {
      throw ShapeError("DenseMatrix: expected " + std::to_string(rows * cols) +
                       " values, got " + std::to_string(values.size()));
    }
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = values[i * cols + j];
    }
    return m;
  }

  std::vector<T> to_row_major() const {
    std::vector<T> out(rows_ * cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) out[i * cols_ + j] = (*this)(i, j);
    }
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  T operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<T> column(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const T> column(std::size_t j) const {
    return {data_.data() + j * rows_, rows_};
  }

  // Column-major storage.
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// A weight matrix with a binary keep-mask. Masked entries hold exactly zero
// once the mask has been applied; the kept row indices of every column are
// indexed so products skip pruned weights entirely.
template <typename T>
class MaskedMatrix {
 public:
  MaskedMatrix() = default;

  explicit MaskedMatrix(DenseMatrix<T> dense)
      : dense_(std::move(dense)), mask_(dense_.size(), 1) {
    rebuild_index();
  }

  // `mask` is column-major, one byte per entry (nonzero = kept).
  MaskedMatrix(DenseMatrix<T> dense, std::vector<std::uint8_t> mask)
      : dense_(std::move(dense)) {
    set_mask(std::move(mask));
  }

  std::size_t rows() const { return dense_.rows(); }
  std::size_t cols() const { return dense_.cols(); }
  std::size_t size() const { return dense_.size(); }

  const DenseMatrix<T>& dense() const { return dense_; }
  T operator()(std::size_t i, std::size_t j) const { return dense_(i, j); }

  // Writable view of the column-major values. Call apply_mask() after
  // writing if masked entries may have been touched.
  std::span<T> mutable_values() { return dense_.values(); }
  std::span<const T> values() const { return dense_.values(); }

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  bool kept(std::size_t i, std::size_t j) const { return mask_[j * rows() + i] != 0; }

  void set_mask(std::vector<std::uint8_t> mask) {
    if (mask.size() != dense_.size()) {
      throw ShapeError("MaskedMatrix: mask size " + std::to_string(mask.size()) +
                       " does not match " + std::to_string(dense_.size()));
    }
    for (auto& m : mask) m = m ? 1 : 0;
    mask_ = std::move(mask);
    apply_mask();
    rebuild_index();
  }

  void apply_mask() {
    auto v = dense_.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!mask_[k]) v[k] = T{0};
    }
  }

  std::size_t nnz() const { return row_index_.size(); }
  std::size_t nnz_column(std::size_t j) const {
    return column_start_[j + 1] - column_start_[j];
  }
  std::vector<std::size_t> nnz_per_column() const {
    std::vector<std::size_t> out(cols());
    for (std::size_t j = 0; j < cols(); ++j) out[j] = nnz_column(j);
    return out;
  }
  bool column_full(std::size_t j) const { return nnz_column(j) == rows(); }
  std::span<const std::uint32_t> kept_rows(std::size_t j) const {
    return {row_index_.data() + column_start_[j], nnz_column(j)};
  }

  // Fraction of masked entries.
  double weight_sparsity() const {
    return size() == 0 ? 0.0
                       : 1.0 - static_cast<double>(nnz()) / static_cast<double>(size());
  }

 private:
  void rebuild_index() {
    column_start_.assign(cols() + 1, 0);
    row_index_.clear();
    for (std::size_t j = 0; j < cols(); ++j) {
      for (std::size_t i = 0; i < rows(); ++i) {
        if (mask_[j * rows() + i]) row_index_.push_back(static_cast<std::uint32_t>(i));
      }
      column_start_[j + 1] = row_index_.size();
    }
  }

  DenseMatrix<T> dense_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> column_start_{0};
  std::vector<std::uint32_t> row_index_;
};

// Sparse activity vector: strictly increasing indices, no stored zeros.
template <typename T>
class EventVector {
 public:
  EventVector() = default;
  explicit EventVector(std::size_t dim) : dim_(dim) {}

  static EventVector from_pairs(std::size_t dim,
                                std::span<const std::pair<std::size_t, T>> pairs) {
    EventVector e(dim);
    for (const auto& [i, v] : pairs) e.push_back(i, v);
    return e;
  }

  // Appends an active entry; indices must arrive in increasing order.
  void push_back(std::size_t index, T value) {
    if (index >= dim_) {
      throw ShapeError("EventVector: index " + std::to_string(index) +
                       " out of range for dim " + std::to_string(dim_));
    }
    if (!index_.empty() && index <= index_.back()) {
      throw UsageError("EventVector: indices must be strictly increasing");
    }
    if (value == T{0}) throw UsageError("EventVector: zero values are not stored");
    index_.push_back(static_cast<std::uint32_t>(index));
    value_.push_back(value);
  }

  std::size_t dim() const { return dim_; }
  std::size_t active_count() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  std::span<const std::uint32_t> indices() const { return index_; }
  std::span<const T> values() const { return value_; }

  std::vector<T> densify() const {
    std::vector<T> out(dim_, T{0});
    for (std::size_t k = 0; k < index_.size(); ++k) out[index_[k]] = value_[k];
    return out;
  }

  friend bool operator==(const EventVector&, const EventVector&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> index_;
  std::vector<T> value_;
};

template <typename T>
EventVector<T> to_event(std::span<const T> v) {
  EventVector<T> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != T{0}) e.push_back(i, v[i]);
  }
  return e;
}

template <typename T>
EventVector<T> to_event(const std::vector<T>& v) {
  return to_event(std::span<const T>(v));
}

template <typename T>
std::vector<T> densify(const EventVector<T>& e) {
  return e.densify();
}

namespace detail {

// out += value * W[:, j], restricted to kept rows.
template <typename T>
inline void axpy_column(const MaskedMatrix<T>& w, std::size_t j, T value, T* out) {
  const T* col = w.dense().column(j).data();
  if (w.column_full(j)) {
    const std::size_t rows = w.rows();
    for (std::size_t i = 0; i < rows; ++i) out[i] += value * col[i];
  } else {
    for (std::uint32_t i : w.kept_rows(j)) out[i] += value * col[i];
  }
}

// Dot product with eight interleaved partial sums combined pairwise, then
// the tail in order. The order is fixed, so results are reproducible.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline T dot_column(const MaskedMatrix<T>& w, std::size_t j, const T* x) {
  const T* col = w.dense().column(j).data();
  if (w.column_full(j)) return dot(col, x, w.rows());
  const auto rows = w.kept_rows(j);
  T acc[4] = {};
  std::size_t k = 0;
  for (; k + 4 <= rows.size(); k += 4) {
    for (std::size_t q = 0; q < 4; ++q) acc[q] += col[rows[k + q]] * x[rows[k + q]];
  }
  T s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; k < rows.size(); ++k) s += col[rows[k]] * x[rows[k]];
  return s;
}

}  // namespace detail

// out = W a over kept entries. Every kept weight is multiplied, also for
// zero inputs, so the multiply count is nnz(W).
template <typename T>
std::vector<T> matvec_masked(const MaskedMatrix<T>& w, std::span<const T> a,
                             MacCounter* counter = nullptr) {
  if (a.size() != w.cols()) {
    throw ShapeError("matvec_masked: input dim " + std::to_string(a.size()) +
                     " != cols " + std::to_string(w.cols()));
  }
  std::vector<T> out(w.rows(), T{0});
  for (std::size_t j = 0; j < w.cols(); ++j) detail::axpy_column(w, j, a[j], out.data());
  if (counter) counter->add(w.nnz());
  return out;
}

// out = sum over active (j, v) of v * W[:, j]; only active columns are loaded.
template <typename T>
std::vector<T> matvec_event(const MaskedMatrix<T>& w, const EventVector<T>& e,
                            MacCounter* counter = nullptr) {
  if (e.dim() != w.cols()) {
    throw ShapeError("matvec_event: event dim " + std::to_string(e.dim()) +
                     " != cols " + std::to_string(w.cols()));
  }
  std::vector<T> out(w.rows(), T{0});
  const auto idx = e.indices();
  const auto val = e.values();
  std::uint64_t macs = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    detail::axpy_column(w, idx[k], val[k], out.data());
    macs += w.nnz_column(idx[k]);
  }
  if (counter) counter->add(macs);
  return out;
}

// out[j] += sum_i W[i][j] delta[i] (the transposed product used in backprop).
template <typename T>
void accumulate_transposed(const MaskedMatrix<T>& w, std::span<const T> delta,
                           std::span<T> out) {
  if (delta.size() != w.rows() || out.size() != w.cols()) {
    throw ShapeError("accumulate_transposed: shape mismatch");
  }
  for (std::size_t j = 0; j < w.cols(); ++j) out[j] += detail::dot_column(w, j, delta.data());
}

// grad[:, j] += v * delta for every active (j, v), kept rows only.
template <typename T>
void accumulate_outer(const MaskedMatrix<T>& w, std::span<const T> delta,
                      const EventVector<T>& e, DenseMatrix<T>& grad) {
  if (delta.size() != w.rows() || e.dim() != w.cols() || grad.rows() != w.rows() ||
      grad.cols() != w.cols()) {
    throw ShapeError("accumulate_outer: shape mismatch");
  }
  const auto idx = e.indices();
  const auto val = e.values();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t j = idx[k];
    const T v = val[k];
    T* g = grad.column(j).data();
    if (w.column_full(j)) {
      for (std::size_t i = 0; i < w.rows(); ++i) g[i] += v * delta[i];
    } else {
      for (std::uint32_t i : w.kept_rows(j)) g[i] += v * delta[i];
    }
  }
}

// Dense-input variant of accumulate_outer; zero inputs are skipped.
template <typename T>
void accumulate_outer(const MaskedMatrix<T>& w, std::span<const T> delta,
                      std::span<const T> a, DenseMatrix<T>& grad) {
  if (delta.size() != w.rows() || a.size() != w.cols() || grad.rows() != w.rows() ||
      grad.cols() != w.cols()) {
    throw ShapeError("accumulate_outer: shape mismatch");
  }
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const T v = a[j];
    if (v == T{0}) continue;
    T* g = grad.column(j).data();
    if (w.column_full(j)) {
      for (std::size_t i = 0; i < w.rows(); ++i) g[i] += v * delta[i];
    } else {
      for (std::uint32_t i : w.kept_rows(j)) g[i] += v * delta[i];
    }
  }
}

// Sequence forms of the kernels above. Each weight column is loaded once per
// sequence; every output entry sees the same operation order as the
// per-step kernel, so results are bitwise equal to calling it per step.

// outs[t] = matvec_event(w, xs[t]) for all t.
template <typename T>
std::vector<std::vector<T>> matvec_event_seq(const MaskedMatrix<T>& w, std::span<const EventVector<T>> xs,
                                             MacCounter* counter = nullptr) {
  const std::size_t steps = xs.size();
  std::vector<std::vector<T>> outs(steps, std::vector<T>(w.rows(), T{0}));
  std::vector<std::size_t> pos(steps, 0);
  std::uint64_t macs = 0;
  for (const auto& x : xs) {
    if (x.dim() != w.cols()) throw ShapeError("matvec_event_seq: event dim != cols");
    for (auto j : x.indices()) macs += w.nnz_column(j);
  }
  for (std::size_t j = 0; j < w.cols(); ++j) {
    for (std::size_t t = 0; t < steps; ++t) {
      const auto idx = xs[t].indices();
      if (pos[t] < idx.size() && idx[pos[t]] == j) {
        detail::axpy_column(w, j, xs[t].values()[pos[t]], outs[t].data());
        ++pos[t];
      }
    }
  }
  if (counter) counter->add(macs);
  return outs;
}

// outs[t] = matvec_masked(w, xs[t]) for all t.
template <typename T>
std::vector<std::vector<T>> matvec_masked_seq(const MaskedMatrix<T>& w, std::span<const std::vector<T>> xs,
                                              MacCounter* counter = nullptr) {
  const std::size_t steps = xs.size();
  for (const auto& x : xs) {
    if (x.size() != w.cols()) throw ShapeError("matvec_masked_seq: input dim != cols");
  }
  std::vector<std::vector<T>> outs(steps, std::vector<T>(w.rows(), T{0}));
  for (std::size_t j = 0; j < w.cols(); ++j) {
    for (std::size_t t = 0; t < steps; ++t) detail::axpy_column(w, j, xs[t][j], outs[t].data());
  }
  if (counter) counter->add(w.nnz() * steps);
  return outs;
}

// accumulate_transposed(w, deltas[t], outs[t]) for all t.
template <typename T>
void accumulate_transposed_seq(const MaskedMatrix<T>& w, std::span<const std::vector<T>> deltas,
                               std::span<std::vector<T>> outs) {
  if (deltas.size() != outs.size()) throw ShapeError("accumulate_transposed_seq: length mismatch");
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    if (deltas[t].size() != w.rows() || outs[t].size() != w.cols()) {
      throw ShapeError("accumulate_transposed_seq: shape mismatch");
    }
  }
  for (std::size_t j = 0; j < w.cols(); ++j) {
    for (std::size_t t = 0; t < deltas.size(); ++t) outs[t][j] += detail::dot_column(w, j, deltas[t].data());
  }
}

// accumulate_outer(w, deltas[t], xs[t], grad) for t = T-1 down to 0.
template <typename T>
void accumulate_outer_seq(const MaskedMatrix<T>& w, std::span<const std::vector<T>> deltas,
                          std::span<const EventVector<T>> xs, DenseMatrix<T>& grad) {
  const std::size_t steps = xs.size();
  if (deltas.size() != steps || grad.rows() != w.rows() || grad.cols() != w.cols()) {
    throw ShapeError("accumulate_outer_seq: shape mismatch");
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (deltas[t].size() != w.rows() || xs[t].dim() != w.cols()) {
      throw ShapeError("accumulate_outer_seq: shape mismatch");
    }
  }
  std::vector<std::size_t> pos(steps, 0);
  const std::size_t rows = w.rows();
  for (std::size_t j = 0; j < w.cols(); ++j) {
    T* g = grad.column(j).data();
    const bool full = w.column_full(j);
    for (std::size_t t = steps; t-- > 0;) {
      const auto idx = xs[t].indices();
      if (pos[t] >= idx.size() || idx[pos[t]] != j) continue;
      const T v = xs[t].values()[pos[t]++];
      const T* delta = deltas[t].data();
      if (full) {
        for (std::size_t i = 0; i < rows; ++i) g[i] += v * delta[i];
      } else {
        for (std::uint32_t i : w.kept_rows(j)) g[i] += v * delta[i];
      }
    }
  }
}

// Dense-input form of accumulate_outer_seq; zero inputs are skipped.
template <typename T>
void accumulate_outer_seq(const MaskedMatrix<T>& w, std::span<const std::vector<T>> deltas,
                          std::span<const std::vector<T>> xs, DenseMatrix<T>& grad) {
  const std::size_t steps = xs.size();
  if (deltas.size() != steps || grad.rows() != w.rows() || grad.cols() != w.cols()) {
    throw ShapeError("accumulate_outer_seq: shape mismatch");
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (deltas[t].size() != w.rows() || xs[t].size() != w.cols()) {
      throw ShapeError("accumulate_outer_seq: shape mismatch");
    }
  }
  const std::size_t rows = w.rows();
  for (std::size_t j = 0; j < w.cols(); ++j) {
    T* g = grad.column(j).data();
    const bool full = w.column_full(j);
    for (std::size_t t = steps; t-- > 0;) {
      const T v = xs[t][j];
      if (v == T{0}) continue;
      const T* delta = deltas[t].data();
      if (full) {
        for (std::size_t i = 0; i < rows; ++i) g[i] += v * delta[i];
      } else {
        for (std::uint32_t i : w.kept_rows(j)) g[i] += v * delta[i];
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  // Split on sign so exp never overflows.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T tanh(T x) {
  return std::tanh(x);
}

template <typename T>
std::vector<T> sigmoid(std::span<const T> x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

template <typename T>
std::vector<T> tanh(std::span<const T> x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace egru
