#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "anmt/data.hpp"
#include "anmt/transformer.hpp"

namespace anmt {

struct AlignmentConfig {
  int window{16};  // maximum jump width forward and backward
  int enc_layers{2};
  int dec_layers{2};
  int heads{4};
  int d_model{64};
  int d_ff{128};
  int src_vocab{0};
  int trg_vocab{0};
  int max_len{256};
  double dropout{0.0};

  int num_classes() const { return 2 * window + 1; }

  void validate() const {
    if (window < 1) {
      throw std::invalid_argument("alignment model config: window must be at least 1");
    }
    if (enc_layers < 1 || dec_layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 ||
        src_vocab < 1 || trg_vocab < 1 || max_len < 1) {
      throw std::invalid_argument("alignment model config: all extents must be positive");
    }
    if (d_model % heads != 0) {
      throw std::invalid_argument("alignment model config: d_model must be divisible by heads");
    }
  }
};

// Exact selection of the encoder row at the previous aligned position; the
// hard single-head attention of the alignment model.
template <class S>
std::vector<S> hard_attention(const Tensor<S>& enc, int b_prev) {
  if (b_prev < 0 || static_cast<std::size_t>(b_prev) >= enc.rows()) {
    throw std::out_of_range("hard_attention: position " + std::to_string(b_prev) +
                            " outside source of length " + std::to_string(enc.rows()));
  }
  const std::size_t d = enc.cols();
  std::vector<S> out(d);
  std::copy_n(enc.data() + static_cast<std::size_t>(b_prev) * d, d, out.begin());
  return out;
}

template <class S>
struct AlignCacheNode {
  std::shared_ptr<const AlignCacheNode> parent;
  int len{0};
  std::vector<S> data;  // [dec_layers * 2 * d_model]
};

template <class S>
using AlignCachePtr = std::shared_ptr<const AlignCacheNode<S>>;

template <class S>
struct AlignEncodedSource {
  Tensor<S> enc;  // [J x d_model]
  int src_len{0};
};

// Maps a jump distribution to a distribution over source positions given the
// previous position (0-based; -1 before the first step). Probability mass on
// positions outside the sentence is renormalized away; if nothing remains,
// the result falls back to uniform.
inline std::vector<double> positions_from_jumps(const std::vector<double>& jump_probs, int b_prev,
                                                int src_len, int window) {
  if (static_cast<int>(jump_probs.size()) != 2 * window + 1) {
    throw std::invalid_argument("positions_from_jumps: expected " +
                                std::to_string(2 * window + 1) + " jump classes, got " +
                                std::to_string(jump_probs.size()));
  }
  if (src_len < 1 || b_prev < -1 || b_prev >= src_len) {
    throw std::invalid_argument("positions_from_jumps: bad source length or previous position");
  }
  std::vector<double> out(static_cast<std::size_t>(src_len), 0.0);
  double total = 0.0;
  for (int j = 0; j < src_len; ++j) {
    const int delta = j - b_prev;
    if (delta < -window || delta > window) continue;
    const double p = jump_probs[static_cast<std::size_t>(delta + window)];
    out[static_cast<std::size_t>(j)] = p;
    total += p;
  }
  if (total <= 0.0) {
    const double u = 1.0 / static_cast<double>(src_len);
    for (auto& p : out) p = u;
    return out;
  }
  const double inv = 1.0 / total;
  for (auto& p : out) p *= inv;
  return out;
}

// Self-attentive alignment model: transformer encoder over the source, a
// masked self-attentive decoder over the target history, and a hard
// attention context (the encoder state at the previous aligned position,
// or a learned start vector before the first step) summed onto the final
// decoder state before the jump softmax.
template <class S>
class AlignmentModel {
 public:
  AlignmentModel(ParameterStore<S>& ps, const AlignmentConfig& cfg, Rng* init_rng) : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    src_embed_ = nn::EmbeddingFrontEnd<S>::make(ps, "align/src_embed",
                                                static_cast<std::size_t>(cfg_.src_vocab), d,
                                                static_cast<std::size_t>(cfg_.max_len), init_rng);
    trg_embed_ = nn::EmbeddingFrontEnd<S>::make(ps, "align/trg_embed",
                                                static_cast<std::size_t>(cfg_.trg_vocab), d,
                                                static_cast<std::size_t>(cfg_.max_len), init_rng);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      enc_layers_.push_back(nn::EncoderLayer<S>::make(ps, "align/enc/l" + std::to_string(l), d,
                                                      static_cast<std::size_t>(cfg_.d_ff),
                                                      cfg_.heads, init_rng));
    }
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string base = "align/dec/l" + std::to_string(l);
      DecLayer layer;
      layer.self_attn = nn::SelfAttentionBlock<S>::make(ps, base + "/self_attn", d, cfg_.heads,
                                                        init_rng);
      layer.ffn = nn::FeedForwardBlock<S>::make(ps, base + "/ffn_block", d,
                                                static_cast<std::size_t>(cfg_.d_ff), init_rng);
      dec_layers_.push_back(std::move(layer));
    }
    start_context_ = nn::param(ps, "align/start_context", {std::size_t{1}, d}, init_rng, 0.0);
    out_proj_ = nn::Linear<S>::make(ps, "align/out_proj", d,
                                    static_cast<std::size_t>(cfg_.num_classes()), true, init_rng);
  }

  const AlignmentConfig& config() const { return cfg_; }

  Tensor<S> encode(const std::vector<int>& src) const {
    if (src.empty()) {
      throw std::invalid_argument("alignment model encode: empty source");
    }
    Tensor<S> x = src_embed_(src, 0);
    for (const auto& layer : enc_layers_) x = layer(x);
    return x;
  }

  // Teacher-forced logits [I x (2W+1)] over jump classes. The hard attention
  // context of position i is the encoder state at b_{i-1} (a learned start
  // vector for i = 1), added to the decoder output before the jump softmax.
  Tensor<S> train_logits(const AlignedSentencePair& pair) const {
    if (pair.path.size() != pair.target.size() || pair.target.empty()) {
      throw std::invalid_argument("alignment model: path/target length mismatch");
    }
    Tensor<S> enc = encode(pair.source);
    std::vector<int> dec_in;
    dec_in.reserve(pair.target.size());
    dec_in.push_back(Vocabulary::kBos);
    dec_in.insert(dec_in.end(), pair.target.begin(), pair.target.end() - 1);
    Tensor<S> x = trg_embed_(dec_in, 0);
    Tensor<S> mask = nn::causal_mask<S>(dec_in.size());
    for (const auto& layer : dec_layers_) {
      x = layer.ffn(layer.self_attn(x, &mask));
    }
    // context table: row 0 is the start vector, rows 1.. are encoder states
    Tensor<S> table = concat_rows<S>({start_context_, enc});
    std::vector<int> ctx_ids(pair.target.size());
    ctx_ids[0] = 0;
    for (std::size_t i = 1; i < pair.target.size(); ++i) {
      const int b = pair.path[i - 1];
      if (b < 0 || static_cast<std::size_t>(b) >= pair.source.size()) {
        throw std::out_of_range("alignment model: path position out of range");
      }
      ctx_ids[i] = b + 1;
    }
    return out_proj_(add(x, gather_rows(table, ctx_ids)));
  }

  // Per-position jump-class log-probabilities of the gold jump labels.
  std::vector<double> forward_train(const AlignedSentencePair& pair,
                                    const std::vector<int>& jumps) const {
    if (jumps.size() != pair.target.size()) {
      throw std::invalid_argument("alignment model: jump label length mismatch");
    }
    Tensor<S> lp = log_softmax_rows(train_logits(pair));
    std::vector<double> out(jumps.size());
    for (std::size_t i = 0; i < jumps.size(); ++i) {
      out[i] = static_cast<double>(lp.at(i, static_cast<std::size_t>(
                                              jump_class(jumps[i], cfg_.window))));
    }
    return out;
  }

  AlignEncodedSource<S> prepare(const std::vector<int>& src) const {
    AlignEncodedSource<S> out;
    out.enc = encode(src);
    out.src_len = static_cast<int>(src.size());
    return out;
  }

  // One decoding step: feeds the previous target token, attends over the
  // cached history, adds the hard attention context for b_prev (-1 selects
  // the learned start vector) and returns the jump distribution plus the
  // extended cache.
  std::pair<std::vector<double>, AlignCachePtr<S>> step(const AlignEncodedSource<S>& src,
                                                        const AlignCachePtr<S>& cache,
                                                        int prev_token, int b_prev) const {
    if (b_prev < -1 || b_prev >= src.src_len) {
      throw std::out_of_range("alignment model step: previous position " +
                              std::to_string(b_prev) + " outside source of length " +
                              std::to_string(src.src_len));
    }
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const int hist_len = cache ? cache->len : 0;
    std::vector<const AlignCacheNode<S>*> nodes(static_cast<std::size_t>(hist_len));
    for (const AlignCacheNode<S>* n = cache.get(); n; n = n->parent.get()) {
      nodes[static_cast<std::size_t>(n->len - 1)] = n;
    }

    Tensor<S> x = trg_embed_({prev_token}, static_cast<std::size_t>(hist_len));
    auto node = std::make_shared<AlignCacheNode<S>>();
    node->parent = cache;
    node->len = hist_len + 1;
    node->data.assign(dec_layers_.size() * 2 * d, S(0));

    for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
      const DecLayer& layer = dec_layers_[l];
      Tensor<S> q = layer.self_attn.wq(x);
      Tensor<S> k_new = layer.self_attn.wk(x);
      Tensor<S> v_new = layer.self_attn.wv(x);
      std::copy_n(k_new.data(), d, node->data.begin() + static_cast<long>(l * 2 * d));
      std::copy_n(v_new.data(), d, node->data.begin() + static_cast<long>(l * 2 * d + d));
      Tensor<S> a = attend_one(q, k_new, v_new, nodes, l, hist_len);
      x = layer.self_attn.norm(add(x, layer.self_attn.wo(a)));
      x = layer.ffn(x);
    }

    // hard attention context summed onto the decoder state
    Tensor<S> ctx = Tensor<S>::zeros({std::size_t{1}, d});
    if (b_prev < 0) {
      std::copy_n(start_context_.data(), d, ctx.data());
    } else {
      std::copy_n(src.enc.data() + static_cast<std::size_t>(b_prev) * d, d, ctx.data());
    }
    Tensor<S> lp = log_softmax_rows(out_proj_(add(x, ctx)));
    std::vector<double> probs(static_cast<std::size_t>(cfg_.num_classes()));
    for (std::size_t j = 0; j < probs.size(); ++j) {
      probs[j] = std::exp(static_cast<double>(lp.at(0, j)));
    }
    return {std::move(probs), std::move(node)};
  }

 private:
  struct DecLayer {
    nn::SelfAttentionBlock<S> self_attn;
    nn::FeedForwardBlock<S> ffn;
  };

  Tensor<S> attend_one(const Tensor<S>& q, const Tensor<S>& k_new, const Tensor<S>& v_new,
                       const std::vector<const AlignCacheNode<S>*>& nodes, std::size_t layer,
                       int hist_len) const {
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto dh = d / static_cast<std::size_t>(cfg_.heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto out = Tensor<S>::zeros({std::size_t{1}, d});
    std::vector<double> scores(static_cast<std::size_t>(hist_len) + 1);
    for (int h = 0; h < cfg_.heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      const S* qrow = q.data() + off;
      for (int t = 0; t < hist_len; ++t) {
        const S* krow = nodes[static_cast<std::size_t>(t)]->data.data() + layer * 2 * d + off;
        double s = 0.0;
        for (std::size_t j = 0; j < dh; ++j) {
          s += static_cast<double>(qrow[j]) * static_cast<double>(krow[j]);
        }
        scores[static_cast<std::size_t>(t)] = s * inv_sqrt;
      }
      {
        const S* krow = k_new.data() + off;
        double s = 0.0;
        for (std::size_t j = 0; j < dh; ++j) {
          s += static_cast<double>(qrow[j]) * static_cast<double>(krow[j]);
        }
        scores[static_cast<std::size_t>(hist_len)] = s * inv_sqrt;
      }
      const std::size_t n = static_cast<std::size_t>(hist_len) + 1;
      double mx = scores[0];
      for (std::size_t t = 1; t < n; ++t) mx = std::max(mx, scores[t]);
      double sum = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        scores[t] = std::exp(scores[t] - mx);
        sum += scores[t];
      }
      const double inv = 1.0 / sum;
      S* orow = out.data() + off;
      for (int t = 0; t < hist_len; ++t) {
        const S* vrow = nodes[static_cast<std::size_t>(t)]->data.data() + layer * 2 * d + d + off;
        const S wt = static_cast<S>(scores[static_cast<std::size_t>(t)] * inv);
        for (std::size_t j = 0; j < dh; ++j) orow[j] += wt * vrow[j];
      }
      const S* vrow = v_new.data() + off;
      const S wt = static_cast<S>(scores[static_cast<std::size_t>(hist_len)] * inv);
      for (std::size_t j = 0; j < dh; ++j) orow[j] += wt * vrow[j];
    }
    return out;
  }

  AlignmentConfig cfg_;
  nn::EmbeddingFrontEnd<S> src_embed_, trg_embed_;
  std::vector<nn::EncoderLayer<S>> enc_layers_;
  std::vector<DecLayer> dec_layers_;
  Tensor<S> start_context_;  // [1 x d_model]
  nn::Linear<S> out_proj_;
};

}  // namespace anmt
