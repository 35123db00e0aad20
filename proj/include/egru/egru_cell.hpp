// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

// Event-based GRU cell.
//
// The cell keeps a local state c and emits the graded event vector
//   y = c~ * H(c~ - threshold)
// where c~ is the gated update before reset. Units that fire are reset by
// subtracting their threshold. Recurrent products only gather the columns of
// units that fired in the previous step.
//
// Backprop replaces dH/du with a triangular surrogate
//   scale * max(0, 1 - |u| / width),  u = c~ - threshold.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egru/errors.hpp"
#include "egru/random.hpp"
#include "egru/tensor.hpp"

namespace egru {

template <typename T>
T heaviside(T x) {
  return x >= T{0} ? T{1} : T{0};
}

template <typename T>
T surrogate_heaviside_grad(T u, T scale, T width) {
  if (!(width > T{0})) {
    throw ParameterError("surrogate width must be positive");
  }
  const T bump = T{1} - std::abs(u) / width;
  return bump > T{0} ? scale * bump : T{0};
}

template <typename T>
struct EgruParams {
  MaskedMatrix<T> w_ux, w_uy, w_rx, w_ry, w_zx, w_zy;
  std::vector<T> b_u, b_r, b_z;
  std::vector<T> threshold;
  T surrogate_scale{1};
  T surrogate_width{1};

  std::size_t hidden_dim() const { return b_u.size(); }
  std::size_t input_dim() const { return w_ux.cols(); }

  void validate() const {
    const std::size_t n = hidden_dim();
    const std::size_t d = input_dim();
    for (const auto* w : {&w_ux, &w_rx, &w_zx}) {
      if (w->rows() != n || w->cols() != d) throw ShapeError("EGRU input weights must be n x d_in");
    }
    for (const auto* w : {&w_uy, &w_ry, &w_zy}) {
      if (w->rows() != n || w->cols() != n) throw ShapeError("EGRU recurrent weights must be n x n");
    }
    if (b_r.size() != n || b_z.size() != n || threshold.size() != n) {
      throw ShapeError("EGRU bias/threshold vectors must have length n");
    }
    if (!all_finite(std::span<const T>(threshold))) {
      throw NumericError("EGRU thresholds must be finite");
    }
    if (!(surrogate_width > T{0})) throw ParameterError("surrogate width must be positive");
  }
};

// PyTorch-style uniform(-1/sqrt(n), 1/sqrt(n)) weights and biases;
// thresholds uniform in [0, 1).
template <typename T>
EgruParams<T> init_egru_params(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto matrix = [&](std::size_t rows, std::size_t cols) {
    DenseMatrix<T> m(rows, cols);
    for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-k, k));
    return MaskedMatrix<T>(std::move(m));
  };
  auto vec = [&](double lo, double hi) {
    std::vector<T> v(hidden_dim);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return v;
  };
  EgruParams<T> p;
  p.w_ux = matrix(hidden_dim, input_dim);
  p.w_uy = matrix(hidden_dim, hidden_dim);
  p.w_rx = matrix(hidden_dim, input_dim);
  p.w_ry = matrix(hidden_dim, hidden_dim);
  p.w_zx = matrix(hidden_dim, input_dim);
  p.w_zy = matrix(hidden_dim, hidden_dim);
  p.b_u = vec(-k, k);
  p.b_r = vec(-k, k);
  p.b_z = vec(-k, k);
  p.threshold = vec(0.0, 1.0);
  return p;
}

template <typename T>
struct EgruState {
  std::vector<T> c;
  EventVector<T> y;

  static EgruState zeros(std::size_t n) { return {std::vector<T>(n, T{0}), EventVector<T>(n)}; }
};

// Everything backprop needs from one step.
template <typename T>
struct EgruStepCache {
  EventVector<T> x;
  EventVector<T> y_prev;
  EventVector<T> ry;  // r * y_prev, input of the candidate's recurrent product
  std::vector<T> c_prev;
  std::vector<T> u, r, z;
  std::vector<T> c_tilde;  // pre-reset state
  std::vector<std::uint8_t> spike;
};

template <typename T>
struct EgruGrads {
  DenseMatrix<T> w_ux, w_uy, w_rx, w_ry, w_zx, w_zy;
  std::vector<T> b_u, b_r, b_z, threshold;

  static EgruGrads zeros_like(const EgruParams<T>& p) {
    const std::size_t n = p.hidden_dim();
    const std::size_t d = p.input_dim();
    EgruGrads g;
    g.w_ux = DenseMatrix<T>(n, d);
    g.w_rx = DenseMatrix<T>(n, d);
    g.w_zx = DenseMatrix<T>(n, d);
    g.w_uy = DenseMatrix<T>(n, n);
    g.w_ry = DenseMatrix<T>(n, n);
    g.w_zy = DenseMatrix<T>(n, n);
    g.b_u.assign(n, T{0});
    g.b_r.assign(n, T{0});
    g.b_z.assign(n, T{0});
    g.threshold.assign(n, T{0});
    return g;
  }
};

template <typename T>
struct EgruStepResult {
  EgruState<T> state;
  EgruStepCache<T> cache;
};

namespace detail {

// One step given the input-path products ux = W_ux x, rx = W_rx x, zx = W_zx x.
template <typename T>
EgruStepResult<T> egru_step(const EgruParams<T>& p, const EventVector<T>& x, const std::vector<T>& ux,
                            const std::vector<T>& rx, const std::vector<T>& zx, const EgruState<T>& s,
                            MacCounter* counter) {
  const std::size_t n = p.hidden_dim();
  if (s.y.dim() != n || s.c.size() != n) throw ShapeError("egru_forward_step: state dim mismatch");

  EgruStepResult<T> out;
  auto& cache = out.cache;
  cache.x = x;
  cache.y_prev = s.y;
  cache.c_prev = s.c;

  const auto uy = matvec_event(p.w_uy, s.y, counter);
  const auto ry_pre = matvec_event(p.w_ry, s.y, counter);
  cache.u.resize(n);
  cache.r.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cache.u[i] = sigmoid(ux[i] + uy[i] + p.b_u[i]);
    cache.r[i] = sigmoid(rx[i] + ry_pre[i] + p.b_r[i]);
  }

  cache.ry = EventVector<T>(n);
  {
    const auto idx = s.y.indices();
    const auto val = s.y.values();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const T v = cache.r[idx[k]] * val[k];
      if (v != T{0}) cache.ry.push_back(idx[k], v);
    }
  }

  const auto zy = matvec_event(p.w_zy, cache.ry, counter);
  cache.z.resize(n);
  cache.c_tilde.resize(n);
  cache.spike.resize(n);
  out.state.c.resize(n);
  out.state.y = EventVector<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T z = std::tanh(zx[i] + zy[i] + p.b_z[i]);
    const T u = cache.u[i];
    const T ct = u * z + (T{1} - u) * s.c[i];
    if (!std::isfinite(ct)) throw NumericError("egru_forward_step: non-finite cell state");
    const T h = heaviside(ct - p.threshold[i]);
    cache.z[i] = z;
    cache.c_tilde[i] = ct;
    cache.spike[i] = h != T{0};
    out.state.c[i] = ct - p.threshold[i] * h;
    const T y = ct * h;
    if (y != T{0}) out.state.y.push_back(i, y);
  }
  return out;
}

}  // namespace detail

template <typename T>
EgruStepResult<T> egru_forward_step(const EgruParams<T>& p, const EventVector<T>& x,
                                    const EgruState<T>& s, MacCounter* counter = nullptr) {
  if (x.dim() != p.input_dim()) {
    throw ShapeError("egru_forward_step: input dim " + std::to_string(x.dim()) +
                     " != " + std::to_string(p.input_dim()));
  }
  const auto ux = matvec_event(p.w_ux, x, counter);
  const auto rx = matvec_event(p.w_rx, x, counter);
  const auto zx = matvec_event(p.w_zx, x, counter);
  return detail::egru_step(p, x, ux, rx, zx, s, counter);
}

template <typename T>
struct EgruSequence {
  std::vector<EventVector<T>> outputs;
  std::vector<EgruStepCache<T>> caches;
  EgruState<T> final_state;
};

// Same result as calling egru_forward_step per input; the input-path
// products are computed for the whole sequence at once.
template <typename T>
EgruSequence<T> egru_forward_seq(const EgruParams<T>& p, std::span<const EventVector<T>> inputs,
                                 const EgruState<T>& s0, MacCounter* counter = nullptr) {
  for (const auto& x : inputs) {
    if (x.dim() != p.input_dim()) {
      throw ShapeError("egru_forward_step: input dim " + std::to_string(x.dim()) +
                       " != " + std::to_string(p.input_dim()));
    }
  }
  const auto ux = matvec_event_seq(p.w_ux, inputs, counter);
  const auto rx = matvec_event_seq(p.w_rx, inputs, counter);
  const auto zx = matvec_event_seq(p.w_zx, inputs, counter);
  EgruSequence<T> seq;
  seq.final_state = s0;
  seq.outputs.reserve(inputs.size());
  seq.caches.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto step = detail::egru_step(p, inputs[t], ux[t], rx[t], zx[t], seq.final_state, counter);
    seq.outputs.push_back(step.state.y);
    seq.caches.push_back(std::move(step.cache));
    seq.final_state = std::move(step.state);
  }
  return seq;
}

// Reverse-mode pass over a forward sequence. Parameter gradients are added
// to `grads`; the gradient w.r.t. each input is returned. Gradients into the
// initial state are dropped (truncated BPTT at segment boundaries).
template <typename T>
std::vector<std::vector<T>> egru_backward_seq(const EgruParams<T>& p,
                                              std::span<const EgruStepCache<T>> caches,
                                              std::span<const std::vector<T>> grad_y,
                                              EgruGrads<T>& grads) {
  if (caches.size() != grad_y.size()) {
    throw UsageError("egru_backward_seq: " + std::to_string(caches.size()) + " caches but " +
                     std::to_string(grad_y.size()) + " output gradients");
  }
  const std::size_t steps = caches.size();
  const std::size_t n = p.hidden_dim();
  const std::size_t d = p.input_dim();
  std::vector<std::vector<T>> grad_x(steps, std::vector<T>(d, T{0}));
  std::vector<T> gy_next(n, T{0});  // from step t+1 through y_t
  std::vector<T> gc_next(n, T{0});  // from step t+1 through c_t
  std::vector<std::vector<T>> ga_u(steps, std::vector<T>(n)), ga_r = ga_u, ga_z = ga_u;
  std::vector<T> g_ry(n), g_r(n);

  for (std::size_t t = steps; t-- > 0;) {
    const auto& c = caches[t];
    if (grad_y[t].size() != n) throw ShapeError("egru_backward_seq: grad_y dim mismatch");
    if (c.c_tilde.size() != n) throw UsageError("egru_backward_seq: cache does not match params");
    auto& au = ga_u[t];
    auto& ar = ga_r[t];
    auto& az = ga_z[t];

    for (std::size_t i = 0; i < n; ++i) {
      const T gy = grad_y[t][i] + gy_next[i];
      const T gc = gc_next[i];
      const T ct = c.c_tilde[i];
      const T th = p.threshold[i];
      const T h = c.spike[i] ? T{1} : T{0};
      const T hs = surrogate_heaviside_grad(ct - th, p.surrogate_scale, p.surrogate_width);
      // y = ct * H(ct - th), c = ct - th * H(ct - th)
      const T g_ct = gy * (h + ct * hs) + gc * (T{1} - th * hs);
      grads.threshold[i] += gy * (-ct * hs) + gc * (-h + th * hs);

      const T u = c.u[i];
      const T z = c.z[i];
      const T gu = g_ct * (z - c.c_prev[i]);
      const T gz = g_ct * u;
      gc_next[i] = g_ct * (T{1} - u);
      au[i] = gu * u * (T{1} - u);
      az[i] = gz * (T{1} - z * z);
    }

    std::fill(g_ry.begin(), g_ry.end(), T{0});
    accumulate_transposed(p.w_zy, std::span<const T>(az), std::span<T>(g_ry));
    const auto y_prev = c.y_prev.densify();
    for (std::size_t j = 0; j < n; ++j) {
      g_r[j] = g_ry[j] * y_prev[j];
      ar[j] = g_r[j] * c.r[j] * (T{1} - c.r[j]);
      gy_next[j] = g_ry[j] * c.r[j];
    }
    accumulate_transposed(p.w_uy, std::span<const T>(au), std::span<T>(gy_next));
    accumulate_transposed(p.w_ry, std::span<const T>(ar), std::span<T>(gy_next));
    for (std::size_t i = 0; i < n; ++i) {
      grads.b_u[i] += au[i];
      grads.b_r[i] += ar[i];
      grads.b_z[i] += az[i];
    }
  }

  using Deltas = std::span<const std::vector<T>>;
  accumulate_transposed_seq(p.w_ux, Deltas(ga_u), std::span<std::vector<T>>(grad_x));
  accumulate_transposed_seq(p.w_rx, Deltas(ga_r), std::span<std::vector<T>>(grad_x));
  accumulate_transposed_seq(p.w_zx, Deltas(ga_z), std::span<std::vector<T>>(grad_x));

  std::vector<EventVector<T>> xs, ys, rys;
  xs.reserve(steps);
  ys.reserve(steps);
  rys.reserve(steps);
  for (const auto& c : caches) {
    xs.push_back(c.x);
    ys.push_back(c.y_prev);
    rys.push_back(c.ry);
  }
  using Events = std::span<const EventVector<T>>;
  accumulate_outer_seq(p.w_ux, Deltas(ga_u), Events(xs), grads.w_ux);
  accumulate_outer_seq(p.w_rx, Deltas(ga_r), Events(xs), grads.w_rx);
  accumulate_outer_seq(p.w_zx, Deltas(ga_z), Events(xs), grads.w_zx);
  accumulate_outer_seq(p.w_uy, Deltas(ga_u), Events(ys), grads.w_uy);
  accumulate_outer_seq(p.w_ry, Deltas(ga_r), Events(ys), grads.w_ry);
  accumulate_outer_seq(p.w_zy, Deltas(ga_z), Events(rys), grads.w_zy);
  return grad_x;
}

template <typename T>
struct EgruBackward {
  EgruGrads<T> grads;
  std::vector<std::vector<T>> grad_x;
};

template <typename T>
EgruBackward<T> egru_backward_seq(const EgruParams<T>& p, std::span<const EgruStepCache<T>> caches,
                                  std::span<const std::vector<T>> grad_y) {
  EgruBackward<T> out{EgruGrads<T>::zeros_like(p), {}};
  out.grad_x = egru_backward_seq(p, caches, grad_y, out.grads);
  return out;
}

}  // namespace egru
