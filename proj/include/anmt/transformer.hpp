#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "anmt/param_store.hpp"
#include "anmt/rng.hpp"
#include "anmt/tensor.hpp"

namespace anmt {

// Optional sink for attention weights produced during a forward pass. Values
// are copied out as doubles; layout is decided by the caller.
struct AttentionSink {
  virtual ~AttentionSink() = default;
  // rows: queries, cols: keys; called once per head in head order.
  virtual void accept(int layer, int head, const std::vector<double>& weights, std::size_t rows,
                      std::size_t cols) = 0;
};

namespace nn {

// Parameter modules either create-and-initialize their tensors in the store
// or attach to already-present ones (the checkpoint load path). A null rng
// with missing parameters is an error.
template <class S>
Tensor<S>& param(ParameterStore<S>& ps, const std::string& name, std::vector<std::size_t> shape,
                 Rng* rng, double init_span) {
  if (ps.has(name)) {
    Tensor<S>& t = ps.get(name);
    if (t.shape() != shape) {
      throw std::runtime_error("parameter " + name + " has shape " + shape_str(t.shape()) +
                               ", expected " + shape_str(shape));
    }
    return t;
  }
  if (!rng) {
    throw std::runtime_error("parameter " + name + " missing from store and no initializer given");
  }
  Tensor<S>& t = ps.create(name, shape);
  if (init_span != 0.0) {
    for (auto& v : t.value()) v = static_cast<S>(rng->uniform(-init_span, init_span));
  }
  return t;
}

inline double glorot_span(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <class S>
struct Linear {
  Tensor<S> w;  // [in x out]
  Tensor<S> b;  // [out], absent when bias is off
  bool bias{true};

  static Linear make(ParameterStore<S>& ps, const std::string& name, std::size_t in,
                     std::size_t out, bool bias, Rng* rng) {
    Linear lin;
    lin.bias = bias;
    lin.w = param(ps, name + "/weight", {in, out}, rng, glorot_span(in, out));
    if (bias) {
      lin.b = param(ps, name + "/bias", {out}, rng, 0.0);
    }
    return lin;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    Tensor<S> y = matmul(x, w);
    return bias ? add_rowvec(y, b) : y;
  }
};

template <class S>
struct LayerNorm {
  Tensor<S> gain, bias;

  static LayerNorm make(ParameterStore<S>& ps, const std::string& name, std::size_t width,
                        Rng* rng) {
    LayerNorm ln;
    if (!ps.has(name + "/gain")) {
      if (!rng) {
        throw std::runtime_error("parameter " + name + "/gain missing from store");
      }
      ln.gain = ps.create(name + "/gain", {width});
      for (auto& v : ln.gain.value()) v = S(1);
    } else {
      ln.gain = param(ps, name + "/gain", {width}, rng, 0.0);
    }
    ln.bias = param(ps, name + "/bias", {width}, rng, 0.0);
    return ln;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm_rows(x, gain, bias); }
};

template <class S>
struct FeedForward {
  Linear<S> lin1, lin2;

  static FeedForward make(ParameterStore<S>& ps, const std::string& name, std::size_t d_model,
                          std::size_t d_ff, Rng* rng) {
    FeedForward ff;
    ff.lin1 = Linear<S>::make(ps, name + "/w1", d_model, d_ff, true, rng);
    ff.lin2 = Linear<S>::make(ps, name + "/w2", d_ff, d_model, true, rng);
    return ff;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return lin2(relu(lin1(x))); }
};

// Scaled dot-product attention over pre-projected full-width q/k/v matrices,
// split into `heads` equal slices. `mask` is an optional additive [n x m]
// matrix; weights per head are reported to the sink if one is given.
template <class S>
Tensor<S> attend_heads(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int heads,
                       const std::type_identity_t<Tensor<S>>* mask, AttentionSink* sink,
                       int layer_index) {
  const std::size_t d = q.cols();
  const std::size_t d_head = d / static_cast<std::size_t>(heads);
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d_head)));
  std::vector<Tensor<S>> parts;
  parts.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * d_head;
    Tensor<S> qh = slice_cols(q, off, d_head);
    Tensor<S> kh = slice_cols(k, off, d_head);
    Tensor<S> vh = slice_cols(v, off, d_head);
    Tensor<S> scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (mask) {
      scores = add(scores, *mask);
    }
    Tensor<S> weights = softmax_rows(scores);
    if (sink) {
      std::vector<double> wcopy(weights.size());
      for (std::size_t i = 0; i < weights.size(); ++i) {
        wcopy[i] = static_cast<double>(weights.data()[i]);
      }
      sink->accept(layer_index, h, wcopy, weights.rows(), weights.cols());
    }
    parts.push_back(matmul(weights, vh));
  }
  return concat_cols(parts);
}

// Additive causal mask: 0 on and below the diagonal, a large negative value
// above it (finite so float arithmetic stays NaN-free).
template <class S>
Tensor<S> causal_mask(std::size_t n) {
  auto m = Tensor<S>::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      m.at(i, j) = S(-1e9);
    }
  }
  return m;
}

// Fixed sinusoidal position table [max_len x d_model], 0-based positions.
template <class S>
Tensor<S> sinusoidal_positions(std::size_t max_len, std::size_t d_model) {
  auto pe = Tensor<S>::zeros({max_len, d_model});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe.at(pos, i) = static_cast<S>(std::sin(angle));
      if (i + 1 < d_model) {
        pe.at(pos, i + 1) = static_cast<S>(std::cos(angle));
      }
    }
  }
  return pe;
}

template <class S>
struct SelfAttentionBlock {
  Linear<S> wq, wk, wv, wo;
  LayerNorm<S> norm;
  int heads{};

  static SelfAttentionBlock make(ParameterStore<S>& ps, const std::string& name,
                                 std::size_t d_model, int heads, Rng* rng) {
    SelfAttentionBlock blk;
    blk.heads = heads;
    blk.wq = Linear<S>::make(ps, name + "/wq", d_model, d_model, false, rng);
    blk.wk = Linear<S>::make(ps, name + "/wk", d_model, d_model, false, rng);
    blk.wv = Linear<S>::make(ps, name + "/wv", d_model, d_model, false, rng);
    blk.wo = Linear<S>::make(ps, name + "/wo", d_model, d_model, false, rng);
    blk.norm = LayerNorm<S>::make(ps, name + "/norm", d_model, rng);
    return blk;
  }

  Tensor<S> operator()(const Tensor<S>& x, const Tensor<S>* mask) const {
    Tensor<S> a = attend_heads(wq(x), wk(x), wv(x), heads, mask, nullptr, 0);
    return norm(add(x, wo(a)));
  }
};

template <class S>
struct FeedForwardBlock {
  FeedForward<S> ff;
  LayerNorm<S> norm;

  static FeedForwardBlock make(ParameterStore<S>& ps, const std::string& name,
                               std::size_t d_model, std::size_t d_ff, Rng* rng) {
    FeedForwardBlock blk;
    blk.ff = FeedForward<S>::make(ps, name + "/ffn", d_model, d_ff, rng);
    blk.norm = LayerNorm<S>::make(ps, name + "/norm", d_model, rng);
    return blk;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return norm(add(x, ff(x))); }
};

// One encoder layer: self-attention then feed-forward, residual + norm after
// each sublayer.
template <class S>
struct EncoderLayer {
  SelfAttentionBlock<S> self_attn;
  FeedForwardBlock<S> ffn;

  static EncoderLayer make(ParameterStore<S>& ps, const std::string& name, std::size_t d_model,
                           std::size_t d_ff, int heads, Rng* rng) {
    EncoderLayer l;
    l.self_attn = SelfAttentionBlock<S>::make(ps, name + "/self_attn", d_model, heads, rng);
    l.ffn = FeedForwardBlock<S>::make(ps, name + "/ffn_block", d_model, d_ff, rng);
    return l;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return ffn(self_attn(x, nullptr)); }
};

// Shared embedding front end: scaled token embedding plus fixed positions.
template <class S>
struct EmbeddingFrontEnd {
  Tensor<S> table;      // [vocab x d_model]
  Tensor<S> positions;  // [max_len x d_model], no gradient
  std::size_t d_model{};

  static EmbeddingFrontEnd make(ParameterStore<S>& ps, const std::string& name, std::size_t vocab,
                                std::size_t d_model, std::size_t max_len, Rng* rng) {
    EmbeddingFrontEnd e;
    e.d_model = d_model;
    e.table = param(ps, name + "/weight", {vocab, d_model}, rng, glorot_span(vocab, d_model));
    e.positions = sinusoidal_positions<S>(max_len, d_model);
    return e;
  }

  // ids at positions first_pos, first_pos+1, ...
  Tensor<S> operator()(const std::vector<int>& ids, std::size_t first_pos) const {
    if (first_pos + ids.size() > positions.rows()) {
      throw std::invalid_argument("sequence exceeds configured maximum length " +
                                  std::to_string(positions.rows()));
    }
    Tensor<S> emb = scale(gather_rows(table, ids),
                          static_cast<S>(std::sqrt(static_cast<double>(d_model))));
    std::vector<int> pos_ids(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      pos_ids[i] = static_cast<int>(first_pos + i);
    }
    return add(emb, gather_rows(positions, pos_ids));
  }
};

}  // namespace nn
}  // namespace anmt
