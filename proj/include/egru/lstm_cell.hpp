// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Densely activated LSTM baseline sharing the masked weight machinery of the
// event-based cell, so pruning and MAC accounting treat both alike.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "egru/errors.hpp"
#include "egru/random.hpp"
#include "egru/tensor.hpp"

namespace egru {

template <typename T>
struct LstmParams {
  MaskedMatrix<T> w_ix, w_fx, w_gx, w_ox;  // n x d_in
  MaskedMatrix<T> w_ih, w_fh, w_gh, w_oh;  // n x n
  std::vector<T> b_i, b_f, b_g, b_o;

  std::size_t hidden_dim() const { return b_i.size(); }
  std::size_t input_dim() const { return w_ix.cols(); }

  void validate() const {
    const std::size_t n = hidden_dim();
    for (const auto* w : {&w_ix, &w_fx, &w_gx, &w_ox}) {
      if (w->rows() != n || w->cols() != input_dim()) throw ShapeError("LSTM input weights must be n x d_in");
    }
    for (const auto* w : {&w_ih, &w_fh, &w_gh, &w_oh}) {
      if (w->rows() != n || w->cols() != n) throw ShapeError("LSTM recurrent weights must be n x n");
    }
    if (b_f.size() != n || b_g.size() != n || b_o.size() != n) {
      throw ShapeError("LSTM bias vectors must have length n");
    }
  }
};

template <typename T>
LstmParams<T> init_lstm_params(std::size_t input_dim, std::size_t hidden_dim, Rng& rng,
                               double forget_bias = 1.0) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto matrix = [&](std::size_t rows, std::size_t cols) {
    DenseMatrix<T> m(rows, cols);
    for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-k, k));
    return MaskedMatrix<T>(std::move(m));
  };
  auto vec = [&](double offset) {
    std::vector<T> v(hidden_dim);
    for (auto& x : v) x = static_cast<T>(offset + rng.uniform(-k, k));
    return v;
  };
  LstmParams<T> p;
  p.w_ix = matrix(hidden_dim, input_dim);
  p.w_fx = matrix(hidden_dim, input_dim);
  p.w_gx = matrix(hidden_dim, input_dim);
  p.w_ox = matrix(hidden_dim, input_dim);
  p.w_ih = matrix(hidden_dim, hidden_dim);
  p.w_fh = matrix(hidden_dim, hidden_dim);
  p.w_gh = matrix(hidden_dim, hidden_dim);
  p.w_oh = matrix(hidden_dim, hidden_dim);
  p.b_i = vec(0.0);
  p.b_f = vec(forget_bias);
  p.b_g = vec(0.0);
  p.b_o = vec(0.0);
  return p;
}

template <typename T>
struct LstmState {
  std::vector<T> h;
  std::vector<T> cell;

  static LstmState zeros(std::size_t n) { return {std::vector<T>(n, T{0}), std::vector<T>(n, T{0})}; }
};

template <typename T>
struct LstmStepCache {
  std::vector<T> x, h_prev, cell_prev;
  std::vector<T> i, f, g, o;
  std::vector<T> tanh_cell;
};

template <typename T>
struct LstmGrads {
  DenseMatrix<T> w_ix, w_fx, w_gx, w_ox, w_ih, w_fh, w_gh, w_oh;
  std::vector<T> b_i, b_f, b_g, b_o;

  static LstmGrads zeros_like(const LstmParams<T>& p) {
    const std::size_t n = p.hidden_dim();
    const std::size_t d = p.input_dim();
    LstmGrads g;
    for (auto* m : {&g.w_ix, &g.w_fx, &g.w_gx, &g.w_ox}) *m = DenseMatrix<T>(n, d);
    for (auto* m : {&g.w_ih, &g.w_fh, &g.w_gh, &g.w_oh}) *m = DenseMatrix<T>(n, n);
    for (auto* b : {&g.b_i, &g.b_f, &g.b_g, &g.b_o}) b->assign(n, T{0});
    return g;
  }
};

template <typename T>
struct LstmStepResult {
  LstmState<T> state;
  LstmStepCache<T> cache;
};

namespace detail {

// One step given the input-path products W_ix x, W_fx x, W_gx x, W_ox x.
template <typename T>
LstmStepResult<T> lstm_step(const LstmParams<T>& p, std::span<const T> x, const std::vector<T>& ix,
                            const std::vector<T>& fx, const std::vector<T>& gx, const std::vector<T>& ox,
                            const LstmState<T>& s, MacCounter* counter) {
  const std::size_t n = p.hidden_dim();
  if (s.h.size() != n || s.cell.size() != n) throw ShapeError("lstm_forward_step: state dim mismatch");

  const std::span<const T> h(s.h);
  const auto ih = matvec_masked(p.w_ih, h, counter);
  const auto fh = matvec_masked(p.w_fh, h, counter);
  const auto gh = matvec_masked(p.w_gh, h, counter);
  const auto oh = matvec_masked(p.w_oh, h, counter);

  LstmStepResult<T> out;
  auto& c = out.cache;
  c.x.assign(x.begin(), x.end());
  c.h_prev = s.h;
  c.cell_prev = s.cell;
  c.i.resize(n);
  c.f.resize(n);
  c.g.resize(n);
  c.o.resize(n);
  c.tanh_cell.resize(n);
  out.state.h.resize(n);
  out.state.cell.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    c.i[k] = sigmoid(ix[k] + ih[k] + p.b_i[k]);
    c.f[k] = sigmoid(fx[k] + fh[k] + p.b_f[k]);
    c.g[k] = std::tanh(gx[k] + gh[k] + p.b_g[k]);
    c.o[k] = sigmoid(ox[k] + oh[k] + p.b_o[k]);
    const T cell = c.f[k] * s.cell[k] + c.i[k] * c.g[k];
    if (!std::isfinite(cell)) throw NumericError("lstm_forward_step: non-finite cell state");
    c.tanh_cell[k] = std::tanh(cell);
    out.state.cell[k] = cell;
    out.state.h[k] = c.o[k] * c.tanh_cell[k];
  }
  return out;
}

}  // namespace detail

template <typename T>
LstmStepResult<T> lstm_forward_step(const LstmParams<T>& p, std::span<const T> x,
                                    const LstmState<T>& s, MacCounter* counter = nullptr) {
  if (x.size() != p.input_dim()) throw ShapeError("lstm_forward_step: input dim mismatch");
  const auto ix = matvec_masked(p.w_ix, x, counter);
  const auto fx = matvec_masked(p.w_fx, x, counter);
  const auto gx = matvec_masked(p.w_gx, x, counter);
  const auto ox = matvec_masked(p.w_ox, x, counter);
  return detail::lstm_step(p, x, ix, fx, gx, ox, s, counter);
}

template <typename T>
struct LstmSequence {
  std::vector<std::vector<T>> outputs;
  std::vector<LstmStepCache<T>> caches;
  LstmState<T> final_state;
};

// Same result as calling lstm_forward_step per input.
template <typename T>
LstmSequence<T> lstm_forward_seq(const LstmParams<T>& p, std::span<const std::vector<T>> inputs,
                                 const LstmState<T>& s0, MacCounter* counter = nullptr) {
  for (const auto& x : inputs) {
    if (x.size() != p.input_dim()) throw ShapeError("lstm_forward_step: input dim mismatch");
  }
  const auto ix = matvec_masked_seq(p.w_ix, inputs, counter);
  const auto fx = matvec_masked_seq(p.w_fx, inputs, counter);
  const auto gx = matvec_masked_seq(p.w_gx, inputs, counter);
  const auto ox = matvec_masked_seq(p.w_ox, inputs, counter);
  LstmSequence<T> seq;
  seq.final_state = s0;
  seq.outputs.reserve(inputs.size());
  seq.caches.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto step = detail::lstm_step(p, std::span<const T>(inputs[t]), ix[t], fx[t], gx[t], ox[t],
                                  seq.final_state, counter);
    seq.outputs.push_back(step.state.h);
    seq.caches.push_back(std::move(step.cache));
    seq.final_state = std::move(step.state);
  }
  return seq;
}

// Adds parameter gradients to `grads` and returns input gradients.
template <typename T>
std::vector<std::vector<T>> lstm_backward_seq(const LstmParams<T>& p,
                                              std::span<const LstmStepCache<T>> caches,
                                              std::span<const std::vector<T>> grad_h,
                                              LstmGrads<T>& grads) {
  if (caches.size() != grad_h.size()) {
    throw UsageError("lstm_backward_seq: " + std::to_string(caches.size()) + " caches but " +
                     std::to_string(grad_h.size()) + " output gradients");
  }
  const std::size_t steps = caches.size();
  const std::size_t n = p.hidden_dim();
  std::vector<std::vector<T>> grad_x(steps, std::vector<T>(p.input_dim(), T{0}));
  std::vector<T> gh_next(n, T{0});
  std::vector<T> gcell_next(n, T{0});
  // ga[gate][t], gates in order i, f, g, o
  std::vector<std::vector<std::vector<T>>> ga(4, std::vector<std::vector<T>>(steps, std::vector<T>(n)));
  const MaskedMatrix<T>* wx[] = {&p.w_ix, &p.w_fx, &p.w_gx, &p.w_ox};
  const MaskedMatrix<T>* wh[] = {&p.w_ih, &p.w_fh, &p.w_gh, &p.w_oh};
  DenseMatrix<T>* gwx[] = {&grads.w_ix, &grads.w_fx, &grads.w_gx, &grads.w_ox};
  DenseMatrix<T>* gwh[] = {&grads.w_ih, &grads.w_fh, &grads.w_gh, &grads.w_oh};
  std::vector<T>* gb[] = {&grads.b_i, &grads.b_f, &grads.b_g, &grads.b_o};

  for (std::size_t t = steps; t-- > 0;) {
    const auto& c = caches[t];
    if (grad_h[t].size() != n) throw ShapeError("lstm_backward_seq: grad_h dim mismatch");
    auto& ga_i = ga[0][t];
    auto& ga_f = ga[1][t];
    auto& ga_g = ga[2][t];
    auto& ga_o = ga[3][t];
    for (std::size_t k = 0; k < n; ++k) {
      const T gh = grad_h[t][k] + gh_next[k];
      const T tc = c.tanh_cell[k];
      const T gcell = gcell_next[k] + gh * c.o[k] * (T{1} - tc * tc);
      const T go = gh * tc;
      const T gf = gcell * c.cell_prev[k];
      const T gi = gcell * c.g[k];
      const T gg = gcell * c.i[k];
      gcell_next[k] = gcell * c.f[k];
      ga_i[k] = gi * c.i[k] * (T{1} - c.i[k]);
      ga_f[k] = gf * c.f[k] * (T{1} - c.f[k]);
      ga_g[k] = gg * (T{1} - c.g[k] * c.g[k]);
      ga_o[k] = go * c.o[k] * (T{1} - c.o[k]);
    }
    std::fill(gh_next.begin(), gh_next.end(), T{0});
    for (int gate = 0; gate < 4; ++gate) {
      accumulate_transposed(*wh[gate], std::span<const T>(ga[gate][t]), std::span<T>(gh_next));
      auto& b = *gb[gate];
      for (std::size_t k = 0; k < n; ++k) b[k] += ga[gate][t][k];
    }
  }

  std::vector<std::vector<T>> xs, hs;
  xs.reserve(steps);
  hs.reserve(steps);
  for (const auto& c : caches) {
    xs.push_back(c.x);
    hs.push_back(c.h_prev);
  }
  using Seq = std::span<const std::vector<T>>;
  for (int gate = 0; gate < 4; ++gate) {
    accumulate_transposed_seq(*wx[gate], Seq(ga[gate]), std::span<std::vector<T>>(grad_x));
    accumulate_outer_seq(*wx[gate], Seq(ga[gate]), Seq(xs), *gwx[gate]);
    accumulate_outer_seq(*wh[gate], Seq(ga[gate]), Seq(hs), *gwh[gate]);
  }
  return grad_x;
}

template <typename T>
struct LstmBackward {
  LstmGrads<T> grads;
  std::vector<std::vector<T>> grad_x;
};

template <typename T>
LstmBackward<T> lstm_backward_seq(const LstmParams<T>& p, std::span<const LstmStepCache<T>> caches,
                                  std::span<const std::vector<T>> grad_h) {
  LstmBackward<T> out{LstmGrads<T>::zeros_like(p), {}};
  out.grad_x = lstm_backward_seq(p, caches, grad_h, out.grads);
  return out;
}

}  // namespace egru
