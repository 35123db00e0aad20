// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "egru/errors.hpp"

namespace egru {

std::string to_string(CellKind kind) { return kind == CellKind::kEgru ? "egru" : "lstm"; }

CellKind parse_cell_kind(const std::string& s) {
  if (s == "egru") return CellKind::kEgru;
  if (s == "lstm") return CellKind::kLstm;
  throw ConfigError("cell_kind must be 'egru' or 'lstm', got '" + s + "'");
}

void LmConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("embed_dim and hidden_dim must be positive");
  if (num_layers == 0) throw ConfigError("num_layers must be positive");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1)");
  };
  prob(dropconnect_p, "dropconnect_p");
  // Input dropout of 1 is allowed: it zeroes every embedding.
  if (!(dropout_in_p >= 0.0 && dropout_in_p <= 1.0)) throw ConfigError("dropout_in_p must be in [0, 1]");
  prob(dropout_out_p, "dropout_out_p");
  if (!(surrogate_width > 0.0)) throw ConfigError("surrogate_width must be positive");
  if (!(embed_init_std > 0.0 && std::isfinite(embed_init_std))) throw ConfigError("embed_init_std must be positive");
}

namespace {

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

template <typename T>
void egru_slots(EgruParams<T>& p, const std::string& prefix, std::vector<ParamSlot<T>>& out) {
  auto w = [&](const char* name, MaskedMatrix<T>& m) {
    out.push_back({prefix + name, ParamGroup::kWeights, m.rows(), m.cols(), m.mutable_values(), &m});
  };
  auto b = [&](const char* name, std::vector<T>& v) {
    out.push_back({prefix + name, ParamGroup::kBiases, v.size(), 1, std::span<T>(v), nullptr});
  };
  w("w_ux", p.w_ux);
  w("w_uy", p.w_uy);
  w("w_rx", p.w_rx);
  w("w_ry", p.w_ry);
  w("w_zx", p.w_zx);
  w("w_zy", p.w_zy);
  b("b_u", p.b_u);
  b("b_r", p.b_r);
  b("b_z", p.b_z);
  b("threshold", p.threshold);
}

template <typename T>
void lstm_slots(LstmParams<T>& p, const std::string& prefix, std::vector<ParamSlot<T>>& out) {
  auto w = [&](const char* name, MaskedMatrix<T>& m) {
    out.push_back({prefix + name, ParamGroup::kWeights, m.rows(), m.cols(), m.mutable_values(), &m});
  };
  auto b = [&](const char* name, std::vector<T>& v) {
    out.push_back({prefix + name, ParamGroup::kBiases, v.size(), 1, std::span<T>(v), nullptr});
  };
  w("w_ix", p.w_ix);
  w("w_fx", p.w_fx);
  w("w_gx", p.w_gx);
  w("w_ox", p.w_ox);
  w("w_ih", p.w_ih);
  w("w_fh", p.w_fh);
  w("w_gh", p.w_gh);
  w("w_oh", p.w_oh);
  b("b_i", p.b_i);
  b("b_f", p.b_f);
  b("b_g", p.b_g);
  b("b_o", p.b_o);
}

std::string layer_prefix(std::size_t l) { return "layers." + std::to_string(l) + "."; }

}  // namespace

template <typename T>
std::vector<const MaskedMatrix<T>*> recurrent_matrices(const CellStack<T>& cells) {
  std::vector<const MaskedMatrix<T>*> out;
  for (const auto& p : cells.egru) {
    out.push_back(&p.w_uy);
    out.push_back(&p.w_ry);
    out.push_back(&p.w_zy);
  }
  for (const auto& p : cells.lstm) {
    out.push_back(&p.w_ih);
    out.push_back(&p.w_fh);
    out.push_back(&p.w_gh);
    out.push_back(&p.w_oh);
  }
  return out;
}

template <typename T>
std::vector<MaskedMatrix<T>*> recurrent_matrices(CellStack<T>& cells) {
  std::vector<MaskedMatrix<T>*> out;
  for (auto& p : cells.egru) {
    out.push_back(&p.w_uy);
    out.push_back(&p.w_ry);
    out.push_back(&p.w_zy);
  }
  for (auto& p : cells.lstm) {
    out.push_back(&p.w_ih);
    out.push_back(&p.w_fh);
    out.push_back(&p.w_gh);
    out.push_back(&p.w_oh);
  }
  return out;
}

namespace {

template <typename T>
std::vector<DenseMatrix<T>*> recurrent_grads(LmGrads<T>& g) {
  std::vector<DenseMatrix<T>*> out;
  for (auto& p : g.egru) {
    out.push_back(&p.w_uy);
    out.push_back(&p.w_ry);
    out.push_back(&p.w_zy);
  }
  for (auto& p : g.lstm) {
    out.push_back(&p.w_ih);
    out.push_back(&p.w_fh);
    out.push_back(&p.w_gh);
    out.push_back(&p.w_oh);
  }
  return out;
}

}  // namespace

template <typename T>
LmGrads<T> LmGrads<T>::zeros_like(const LanguageModel<T>& model) {
  LmGrads g;
  const auto& cfg = model.config();
  g.embedding = DenseMatrix<T>(cfg.embed_dim, cfg.vocab_size);
  if (!cfg.tie_weights) g.decoder_weight = DenseMatrix<T>(cfg.embed_dim, cfg.vocab_size);
  g.decoder_bias.assign(cfg.vocab_size, T{0});
  for (const auto& p : model.cells().egru) g.egru.push_back(EgruGrads<T>::zeros_like(p));
  for (const auto& p : model.cells().lstm) g.lstm.push_back(LstmGrads<T>::zeros_like(p));
  return g;
}

template <typename T>
std::vector<std::span<T>> LmGrads<T>::spans() {
  std::vector<std::span<T>> out;
  out.push_back(embedding.values());
  if (decoder_weight.size() > 0) out.push_back(decoder_weight.values());
  out.push_back(std::span<T>(decoder_bias));
  for (auto& g : egru) {
    for (auto* m : {&g.w_ux, &g.w_uy, &g.w_rx, &g.w_ry, &g.w_zx, &g.w_zy}) out.push_back(m->values());
    for (auto* v : {&g.b_u, &g.b_r, &g.b_z, &g.threshold}) out.push_back(std::span<T>(*v));
  }
  for (auto& g : lstm) {
    for (auto* m : {&g.w_ix, &g.w_fx, &g.w_gx, &g.w_ox, &g.w_ih, &g.w_fh, &g.w_gh, &g.w_oh}) {
      out.push_back(m->values());
    }
    for (auto* v : {&g.b_i, &g.b_f, &g.b_g, &g.b_o}) out.push_back(std::span<T>(*v));
  }
  return out;
}

template <typename T>
void LmGrads<T>::add(LmGrads& other) {
  auto dst = spans();
  auto src = other.spans();
  if (dst.size() != src.size()) throw UsageError("LmGrads::add: layout mismatch");
  for (std::size_t k = 0; k < dst.size(); ++k) add_into(dst[k], std::span<const T>(src[k]));
}

template <typename T>
void LmGrads<T>::zero() {
  for (auto s : spans()) std::fill(s.begin(), s.end(), T{0});
}

template <typename T>
LanguageModel<T>::LanguageModel(const LmConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t E = config_.embed_dim;
  const std::size_t V = config_.vocab_size;
  embedding_ = DenseMatrix<T>(E, V);
  for (auto& v : embedding_.values()) v = static_cast<T>(rng.normal(0.0, config_.embed_init_std));
  if (!config_.tie_weights) {
    decoder_weight_ = DenseMatrix<T>(E, V);
    for (auto& v : decoder_weight_.values()) v = static_cast<T>(rng.normal(0.0, config_.embed_init_std));
  }
  decoder_bias_.assign(V, T{0});
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::size_t in = config_.layer_input_dim(l);
    const std::size_t out = config_.layer_output_dim(l);
    if (config_.cell_kind == CellKind::kEgru) {
      auto p = init_egru_params<T>(in, out, rng);
      p.surrogate_scale = static_cast<T>(config_.surrogate_scale);
      p.surrogate_width = static_cast<T>(config_.surrogate_width);
      cells_.egru.push_back(std::move(p));
    } else {
      cells_.lstm.push_back(init_lstm_params<T>(in, out, rng, config_.forget_bias));
    }
  }
}

template <typename T>
std::span<const T> LanguageModel<T>::embedding_row(std::int32_t token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
    throw DataError("token id " + std::to_string(token) + " out of range for vocabulary of " +
                    std::to_string(config_.vocab_size));
  }
  return embedding_.column(static_cast<std::size_t>(token));
}

template <typename T>
std::vector<std::vector<T>> LanguageModel<T>::embed(std::span<const std::int32_t> tokens,
                                                    bool training, Rng* rng) const {
  std::vector<std::vector<T>> out;
  out.reserve(tokens.size());
  const double p = config_.dropout_in_p;
  const bool drop = training && p > 0.0;
  if (drop && !rng) throw UsageError("embed: training-mode dropout needs an rng");
  const T scale = p < 1.0 ? static_cast<T>(1.0 / (1.0 - p)) : T{0};
  for (const auto tok : tokens) {
    const auto row = embedding_row(tok);
    std::vector<T> v(row.begin(), row.end());
    if (drop) {
      for (auto& x : v) x = rng->bernoulli(p) ? T{0} : x * scale;
    }
    out.push_back(std::move(v));
  }
  return out;
}

template <typename T>
std::vector<ParamSlot<T>> LanguageModel<T>::parameters() {
  std::vector<ParamSlot<T>> out;
  out.push_back({"embedding", ParamGroup::kWeights, config_.vocab_size, config_.embed_dim,
                 embedding_.values(), nullptr});
  if (!config_.tie_weights) {
    out.push_back({"decoder.weight", ParamGroup::kWeights, config_.vocab_size, config_.embed_dim,
                   decoder_weight_.values(), nullptr});
  }
  out.push_back({"decoder.bias", ParamGroup::kBiases, config_.vocab_size, 1,
                 std::span<T>(decoder_bias_), nullptr});
  for (std::size_t l = 0; l < cells_.egru.size(); ++l) egru_slots(cells_.egru[l], layer_prefix(l), out);
  for (std::size_t l = 0; l < cells_.lstm.size(); ++l) lstm_slots(cells_.lstm[l], layer_prefix(l), out);
  return out;
}

template <typename T>
PruneScope<T> LanguageModel<T>::prune_scope() {
  PruneScope<T> scope;
  for (auto& slot : parameters()) {
    if (slot.matrix) scope.add(slot.name, *slot.matrix);
  }
  return scope;
}

template <typename T>
std::vector<std::string> LanguageModel<T>::prune_scope_names() const {
  return const_cast<LanguageModel*>(this)->prune_scope().names;
}

template <typename T>
void LanguageModel<T>::enforce_masks() {
  for (auto& slot : parameters()) {
    if (slot.matrix) slot.matrix->apply_mask();
  }
}

template <typename T>
void LanguageModel<T>::clamp_thresholds(double floor) {
  if (!(floor > -std::numeric_limits<double>::infinity())) return;
  const T f = static_cast<T>(floor);
  for (auto& p : cells_.egru) {
    for (auto& v : p.threshold) v = std::max(v, f);
  }
}

template <typename T>
double LanguageModel<T>::weight_sparsity() const {
  return const_cast<LanguageModel*>(this)->prune_scope().sparsity();
}

template <typename T>
LmState<T> LanguageModel<T>::initial_state() const {
  LmState<T> s(config_.num_layers);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::size_t n = config_.layer_output_dim(l);
    if (config_.cell_kind == CellKind::kEgru) {
      s[l].egru = EgruState<T>::zeros(n);
    } else {
      s[l].lstm = LstmState<T>::zeros(n);
    }
  }
  return s;
}

template <typename T>
DropConnectMasks LanguageModel<T>::sample_dropconnect(double p, Rng& rng) const {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropconnect p must be in [0, 1)");
  DropConnectMasks out;
  out.p = p;
  for (const auto* m : recurrent_matrices(cells_)) {
    std::vector<std::uint8_t> keep(m->size(), 1);
    if (p > 0.0) {
      for (auto& k : keep) k = rng.bernoulli(p) ? 0 : 1;
    }
    out.masks.push_back(std::move(keep));
  }
  return out;
}

template <typename T>
CellStack<T> LanguageModel<T>::apply_dropconnect(const DropConnectMasks& masks) const {
  CellStack<T> eff = cells_;
  if (masks.p == 0.0) return eff;
  auto mats = recurrent_matrices(eff);
  if (mats.size() != masks.masks.size()) throw UsageError("apply_dropconnect: mask count mismatch");
  const T scale = static_cast<T>(1.0 / (1.0 - masks.p));
  for (std::size_t k = 0; k < mats.size(); ++k) {
    auto& m = *mats[k];
    std::vector<std::uint8_t> keep = m.mask();
    for (std::size_t e = 0; e < keep.size(); ++e) keep[e] = keep[e] && masks.masks[k][e];
    DenseMatrix<T> values = m.dense();
    for (auto& v : values.values()) v *= scale;
    m = MaskedMatrix<T>(std::move(values), std::move(keep));
  }
  return eff;
}

template <typename T>
void LanguageModel<T>::dropconnect_backward(const DropConnectMasks& masks, LmGrads<T>& grads) const {
  if (masks.p == 0.0) return;
  const T scale = static_cast<T>(1.0 / (1.0 - masks.p));
  for (auto* g : recurrent_grads(grads)) {
    for (auto& v : g->values()) v *= scale;
  }
}

template <typename T>
std::vector<T> LanguageModel<T>::logits(std::span<const T> hidden) const {
  const DenseMatrix<T>& w = config_.tie_weights ? embedding_ : decoder_weight_;
  const std::size_t E = config_.embed_dim;
  std::vector<T> out(config_.vocab_size);
  for (std::size_t k = 0; k < config_.vocab_size; ++k) {
    out[k] = detail::dot(w.column(k).data(), hidden.data(), E) + decoder_bias_[k];
  }
  return out;
}

template <typename T>
SegmentResult<T> LanguageModel<T>::run_segment(const CellStack<T>& cells,
                                               std::span<const std::int32_t> inputs,
                                               std::span<const std::int32_t> targets,
                                               LmState<T>& state, const SegmentOptions<T>& options,
                                               LmGrads<T>* grads) const {
  if (inputs.size() != targets.size()) throw ShapeError("run_segment: inputs/targets length mismatch");
  if (state.size() != config_.num_layers) throw ShapeError("run_segment: state has wrong layer count");
  const std::size_t steps = inputs.size();
  const std::size_t E = config_.embed_dim;
  const std::size_t V = config_.vocab_size;
  const std::size_t layers = config_.num_layers;
  const bool egru = config_.cell_kind == CellKind::kEgru;
  const bool backward = grads != nullptr;
  Rng* rng = options.rng;
  if (options.training && (config_.dropout_in_p > 0.0 || config_.dropout_out_p > 0.0) && !rng) {
    throw UsageError("run_segment: training-mode dropout needs an rng");
  }

  SegmentResult<T> res;
  res.tokens = steps;
  res.active.assign(layers, 0);
  res.slots.assign(layers, 0);

  // Embedding with inverted dropout; keep the per-entry scale for backprop.
  std::vector<std::vector<T>> emb(steps);
  std::vector<std::vector<T>> in_scale;
  const double p_in = config_.dropout_in_p;
  const bool drop_in = options.training && p_in > 0.0;
  if (drop_in) in_scale.assign(steps, std::vector<T>(E));
  const T keep_in = p_in < 1.0 ? static_cast<T>(1.0 / (1.0 - p_in)) : T{0};
  for (std::size_t t = 0; t < steps; ++t) {
    const auto row = embedding_row(inputs[t]);
    emb[t].assign(row.begin(), row.end());
    if (drop_in) {
      for (std::size_t e = 0; e < E; ++e) {
        const T s = rng->bernoulli(p_in) ? T{0} : keep_in;
        in_scale[t][e] = s;
        emb[t][e] *= s;
      }
    }
  }

  std::vector<std::vector<EgruStepCache<T>>> egru_caches(egru ? layers : 0);
  std::vector<std::vector<LstmStepCache<T>>> lstm_caches(egru ? 0 : layers);
  std::vector<std::vector<T>> top(steps);
  if (egru) {
    std::vector<EventVector<T>> xs;
    xs.reserve(steps);
    for (const auto& v : emb) xs.push_back(to_event(v));
    for (std::size_t l = 0; l < layers; ++l) {
      auto seq = egru_forward_seq(cells.egru[l], std::span<const EventVector<T>>(xs), state[l].egru,
                                  options.counter);
      state[l].egru = std::move(seq.final_state);
      for (const auto& y : seq.outputs) {
        res.active[l] += y.active_count();
        res.slots[l] += y.dim();
      }
      egru_caches[l] = std::move(seq.caches);
      xs = std::move(seq.outputs);
    }
    for (std::size_t t = 0; t < steps; ++t) top[t] = xs[t].densify();
  } else {
    std::vector<std::vector<T>> xs = emb;
    for (std::size_t l = 0; l < layers; ++l) {
      auto seq = lstm_forward_seq(cells.lstm[l], std::span<const std::vector<T>>(xs), state[l].lstm,
                                  options.counter);
      state[l].lstm = std::move(seq.final_state);
      res.slots[l] += steps * config_.layer_output_dim(l);
      res.active[l] = res.slots[l];  // dense activation by definition
      lstm_caches[l] = std::move(seq.caches);
      xs = std::move(seq.outputs);
    }
    top = std::move(xs);
  }

  const double p_out = config_.dropout_out_p;
  const bool drop_out = options.training && p_out > 0.0;
  std::vector<std::vector<T>> out_scale;
  if (drop_out) {
    out_scale.assign(steps, std::vector<T>(E));
    const T keep = static_cast<T>(1.0 / (1.0 - p_out));
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t e = 0; e < E; ++e) {
        const T s = rng->bernoulli(p_out) ? T{0} : keep;
        out_scale[t][e] = s;
        top[t][e] *= s;
      }
    }
  }

  // Decoder over the whole segment: each vocabulary column is loaded once.
  const DenseMatrix<T>& dec = config_.tie_weights ? embedding_ : decoder_weight_;
  for (std::size_t t = 0; t < steps; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= V) {
      throw DataError("target id " + std::to_string(targets[t]) + " out of range");
    }
  }
  std::vector<std::vector<T>> lg(steps, std::vector<T>(V));
  for (std::size_t k = 0; k < V; ++k) {
    const T* col = dec.column(k).data();
    for (std::size_t t = 0; t < steps; ++t) {
      lg[t][k] = detail::dot(col, top[t].data(), E) + decoder_bias_[k];
    }
  }
  std::vector<double> lse(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double mx = lg[t][0];
    for (T v : lg[t]) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (T v : lg[t]) sum += std::exp(static_cast<double>(v) - mx);
    lse[t] = mx + std::log(sum);
    const double ce = lse[t] - static_cast<double>(lg[t][static_cast<std::size_t>(targets[t])]);
    if (!std::isfinite(ce)) throw NumericError("run_segment: non-finite loss");
    res.loss_sum += ce;
  }

  std::vector<std::vector<T>> grad_top;
  if (backward) {
    grad_top.assign(steps, std::vector<T>(E, T{0}));
    DenseMatrix<T>& gdec = config_.tie_weights ? grads->embedding : grads->decoder_weight;
    for (std::size_t k = 0; k < V; ++k) {
      const T* col = dec.column(k).data();
      T* gcol = gdec.column(k).data();
      for (std::size_t t = 0; t < steps; ++t) {
        double prob = std::exp(static_cast<double>(lg[t][k]) - lse[t]);
        if (k == static_cast<std::size_t>(targets[t])) prob -= 1.0;
        const T d = static_cast<T>(prob) * options.loss_scale;
        grads->decoder_bias[k] += d;
        T* gh = grad_top[t].data();
        const T* h = top[t].data();
        for (std::size_t e = 0; e < E; ++e) {
          gh[e] += d * col[e];
          gcol[e] += d * h[e];
        }
      }
    }
    if (drop_out) {
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t e = 0; e < E; ++e) grad_top[t][e] *= out_scale[t][e];
      }
    }
  }

  if (backward) {
    std::vector<std::vector<T>> g = std::move(grad_top);
    for (std::size_t l = layers; l-- > 0;) {
      if (egru) {
        g = egru_backward_seq(cells.egru[l], std::span<const EgruStepCache<T>>(egru_caches[l]),
                              std::span<const std::vector<T>>(g), grads->egru[l]);
      } else {
        g = lstm_backward_seq(cells.lstm[l], std::span<const LstmStepCache<T>>(lstm_caches[l]),
                              std::span<const std::vector<T>>(g), grads->lstm[l]);
      }
    }
    for (std::size_t t = 0; t < steps; ++t) {
      T* gcol = grads->embedding.column(static_cast<std::size_t>(inputs[t])).data();
      for (std::size_t e = 0; e < E; ++e) {
        gcol[e] += drop_in ? g[t][e] * in_scale[t][e] : g[t][e];
      }
    }
  }

  if (options.capture) {
    res.egru_caches = std::move(egru_caches);
    res.lstm_caches = std::move(lstm_caches);
  }
  return res;
}

template class LanguageModel<float>;
template class LanguageModel<double>;
template struct LmGrads<float>;
template struct LmGrads<double>;
template std::vector<const MaskedMatrix<float>*> recurrent_matrices(const CellStack<float>&);
template std::vector<const MaskedMatrix<double>*> recurrent_matrices(const CellStack<double>&);
template std::vector<MaskedMatrix<float>*> recurrent_matrices(CellStack<float>&);
template std::vector<MaskedMatrix<double>*> recurrent_matrices(CellStack<double>&);

}  // namespace egru
