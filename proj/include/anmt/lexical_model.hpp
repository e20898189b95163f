#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "anmt/attention.hpp"
#include "anmt/data.hpp"
#include "anmt/transformer.hpp"

namespace anmt {

struct LexicalConfig {
  int enc_layers{2};
  int dec_layers{2};
  int heads{4};
  int d_model{64};
  int d_ff{128};
  int src_vocab{0};
  int trg_vocab{0};
  int max_len{256};
  bool align_head{false};
  double dropout{0.0};

  int d_head() const { return d_model / heads; }

  void validate() const {
    if (enc_layers < 1 || dec_layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 ||
        src_vocab < 1 || trg_vocab < 1 || max_len < 1) {
      throw std::invalid_argument("lexical model config: all extents must be positive");
    }
    if (d_model % heads != 0) {
      throw std::invalid_argument("lexical model config: d_model must be divisible by heads");
    }
  }
};

// One-hot weight vector over source positions, value 1 at the aligned one.
inline std::vector<double> alignment_one_hot(int b, int source_len) {
  if (b < 0 || b >= source_len) {
    throw std::out_of_range("alignment_one_hot: position " + std::to_string(b) +
                            " outside source of length " + std::to_string(source_len));
  }
  std::vector<double> v(static_cast<std::size_t>(source_len), 0.0);
  v[static_cast<std::size_t>(b)] = 1.0;
  return v;
}

// Immutable per-step cache node; a hypothesis cache is a chain of these.
// data holds, per decoder layer, the self-attention key then value row.
template <class S>
struct LexCacheNode {
  std::shared_ptr<const LexCacheNode> parent;
  int len{0};
  std::vector<S> data;  // [dec_layers * 2 * d_model]
};

template <class S>
using LexCachePtr = std::shared_ptr<const LexCacheNode<S>>;

// Source-side state prepared once per sentence: encoder output plus the
// per-layer cross-attention projections and alignment-head values.
template <class S>
struct EncodedSource {
  Tensor<S> enc;                  // [J x d_model]
  std::vector<Tensor<S>> ck, cv;  // per decoder layer [J x d_model]
  std::vector<Tensor<S>> va;      // per decoder layer [J x d_head], alignment head only
  int src_len{0};
};

template <class S>
struct LexStepOutput {
  // One entry per candidate alignment position (exactly one entry when the
  // alignment head is disabled).
  std::vector<std::vector<double>> log_probs;  // [C][trg_vocab]
  std::vector<AttentionStep> attention;        // [C]
  std::vector<LexCachePtr<S>> caches;          // [C]
};

// Transformer encoder-decoder over token ids whose decoder layers carry the
// alignment-assisted source attention: the usual soft heads plus, when
// enabled, a hard head whose weights are the alignment one-hot. The hard
// head has only a value projection; its output occupies the extra rows of
// the widened output projection.
template <class S>
class LexicalModel {
 public:
  LexicalModel(ParameterStore<S>& ps, const LexicalConfig& cfg, Rng* init_rng)
      : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto dh = static_cast<std::size_t>(cfg_.d_head());
    src_embed_ = nn::EmbeddingFrontEnd<S>::make(ps, "lex/src_embed",
                                                static_cast<std::size_t>(cfg_.src_vocab), d,
                                                static_cast<std::size_t>(cfg_.max_len), init_rng);
    trg_embed_ = nn::EmbeddingFrontEnd<S>::make(ps, "lex/trg_embed",
                                                static_cast<std::size_t>(cfg_.trg_vocab), d,
                                                static_cast<std::size_t>(cfg_.max_len), init_rng);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      enc_layers_.push_back(nn::EncoderLayer<S>::make(ps, "lex/enc/l" + std::to_string(l), d,
                                                      static_cast<std::size_t>(cfg_.d_ff),
                                                      cfg_.heads, init_rng));
    }
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string base = "lex/dec/l" + std::to_string(l);
      DecLayer layer;
      layer.self_attn = nn::SelfAttentionBlock<S>::make(ps, base + "/self_attn", d, cfg_.heads,
                                                        init_rng);
      layer.cq = nn::Linear<S>::make(ps, base + "/src_attn/wq", d, d, false, init_rng);
      layer.ck = nn::Linear<S>::make(ps, base + "/src_attn/wk", d, d, false, init_rng);
      layer.cv = nn::Linear<S>::make(ps, base + "/src_attn/wv", d, d, false, init_rng);
      const std::size_t co_rows = cfg_.align_head ? d + dh : d;
      layer.co = nn::Linear<S>::make(ps, base + "/src_attn/wo", co_rows, d, false, init_rng);
      if (cfg_.align_head) {
        layer.align_wv = nn::param(ps, base + "/align_head/wv", {d, dh}, init_rng,
                                   nn::glorot_span(d, dh));
      }
      layer.norm2 = nn::LayerNorm<S>::make(ps, base + "/src_attn/norm", d, init_rng);
      layer.ffn = nn::FeedForwardBlock<S>::make(ps, base + "/ffn_block", d,
                                                static_cast<std::size_t>(cfg_.d_ff), init_rng);
      dec_layers_.push_back(std::move(layer));
    }
    out_proj_ = nn::Linear<S>::make(ps, "lex/out_proj", d,
                                    static_cast<std::size_t>(cfg_.trg_vocab), true, init_rng);
  }

  const LexicalConfig& config() const { return cfg_; }

  // ---- training path -------------------------------------------------

  Tensor<S> encode(const std::vector<int>& src, Rng* dropout_rng = nullptr) const {
    if (src.empty()) {
      throw std::invalid_argument("encode: empty source");
    }
    check_ids(src, cfg_.src_vocab, "source");
    auto drop = [&](Tensor<S> t) {
      return (cfg_.dropout > 0.0 && dropout_rng) ? dropout(t, cfg_.dropout, *dropout_rng) : t;
    };
    Tensor<S> x = drop(src_embed_(src, 0));
    for (const auto& layer : enc_layers_) {
      Tensor<S> a = nn::attend_heads(layer.self_attn.wq(x), layer.self_attn.wk(x),
                                     layer.self_attn.wv(x), cfg_.heads, nullptr, nullptr, 0);
      x = layer.self_attn.norm(add(x, drop(layer.self_attn.wo(a))));
      x = layer.ffn.norm(add(x, drop(layer.ffn.ff(x))));
    }
    return x;
  }

  // Teacher-forced logits [I x trg_vocab]. The decoder input is the target
  // shifted right behind the sentence-begin token; position i additionally
  // sees its gold aligned source position when the alignment head is on.
  Tensor<S> train_logits(const AlignedSentencePair& pair, AttentionSink* sink = nullptr,
                         Rng* dropout_rng = nullptr) const {
    if (pair.target.empty()) {
      throw std::invalid_argument("train_logits: empty target");
    }
    if (cfg_.align_head && pair.path.size() != pair.target.size()) {
      throw std::invalid_argument("train_logits: path length " + std::to_string(pair.path.size()) +
                                  " does not match target length " +
                                  std::to_string(pair.target.size()));
    }
    check_ids(pair.target, cfg_.trg_vocab, "target");
    Tensor<S> enc = encode(pair.source, dropout_rng);
    std::vector<int> dec_in;
    dec_in.reserve(pair.target.size());
    dec_in.push_back(Vocabulary::kBos);
    dec_in.insert(dec_in.end(), pair.target.begin(), pair.target.end() - 1);
    Tensor<S> x = trg_embed_(dec_in, 0);
    if (cfg_.dropout > 0.0 && dropout_rng) {
      x = dropout(x, cfg_.dropout, *dropout_rng);
    }
    Tensor<S> mask = nn::causal_mask<S>(dec_in.size());
    for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
      x = decode_layer_full(dec_layers_[l], static_cast<int>(l), x, enc, pair.path, &mask, sink,
                            dropout_rng);
    }
    return out_proj_(x);
  }

  // Per-position log-probabilities of the gold target tokens.
  std::vector<double> forward_train(const AlignedSentencePair& pair) const {
    Tensor<S> lp = log_softmax_rows(train_logits(pair));
    std::vector<double> out(pair.target.size());
    for (std::size_t i = 0; i < pair.target.size(); ++i) {
      out[i] = static_cast<double>(lp.at(i, static_cast<std::size_t>(pair.target[i])));
    }
    return out;
  }

  // ---- incremental decoding path --------------------------------------

  EncodedSource<S> prepare(const std::vector<int>& src) const {
    EncodedSource<S> out;
    out.enc = encode(src);
    out.src_len = static_cast<int>(src.size());
    for (const auto& layer : dec_layers_) {
      out.ck.push_back(layer.ck(out.enc));
      out.cv.push_back(layer.cv(out.enc));
      if (cfg_.align_head) {
        out.va.push_back(matmul(out.enc, layer.align_wv));
      }
    }
    return out;
  }

  // One decoder step for a batch of candidate alignment positions sharing the
  // same target history. With the alignment head disabled, `positions` must
  // be empty and exactly one candidate is evaluated.
  LexStepOutput<S> step(const EncodedSource<S>& src, const LexCachePtr<S>& cache, int prev_token,
                        const std::vector<int>& positions) const {
    if (cfg_.align_head && positions.empty()) {
      throw std::invalid_argument("decode step: alignment head enabled but no position given");
    }
    if (!cfg_.align_head && !positions.empty()) {
      throw std::invalid_argument("decode step: alignment head disabled but positions given");
    }
    for (int p : positions) {
      if (p < 0 || p >= src.src_len) {
        throw std::out_of_range("decode step: position " + std::to_string(p) +
                                " outside source of length " + std::to_string(src.src_len));
      }
    }
    const std::size_t C = cfg_.align_head ? positions.size() : 1;
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const int hist_len = cache ? cache->len : 0;

    // Materialize the cached history once per step.
    std::vector<const LexCacheNode<S>*> nodes(static_cast<std::size_t>(hist_len));
    for (const LexCacheNode<S>* n = cache.get(); n; n = n->parent.get()) {
      nodes[static_cast<std::size_t>(n->len - 1)] = n;
    }

    Tensor<S> x0 = trg_embed_({prev_token}, static_cast<std::size_t>(hist_len));
    std::vector<Tensor<S>> reps(C, x0);
    Tensor<S> x = C == 1 ? x0 : concat_rows(reps);

    std::vector<std::vector<S>> delta(C,
                                      std::vector<S>(dec_layers_.size() * 2 * d, S(0)));
    std::vector<AttentionStep> attn(
        C, AttentionStep(static_cast<int>(dec_layers_.size()), cfg_.heads, src.src_len));

    for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
      const DecLayer& layer = dec_layers_[l];
      // self attention over history plus the step's own row
      Tensor<S> q = layer.self_attn.wq(x);
      Tensor<S> k_new = layer.self_attn.wk(x);
      Tensor<S> v_new = layer.self_attn.wv(x);
      Tensor<S> a = self_attend_incremental(q, k_new, v_new, nodes, l, C, hist_len);
      x = layer.self_attn.norm(add(x, layer.self_attn.wo(a)));
      for (std::size_t c = 0; c < C; ++c) {
        std::copy_n(k_new.data() + c * d, d, delta[c].begin() + static_cast<long>(l * 2 * d));
        std::copy_n(v_new.data() + c * d, d, delta[c].begin() + static_cast<long>(l * 2 * d + d));
      }
      // source attention: soft heads over the shared keys, rows by candidate
      Tensor<S> cq = layer.cq(x);
      StepSink sink(&attn, static_cast<int>(l));
      Tensor<S> soft = nn::attend_heads(cq, src.ck[l], src.cv[l], cfg_.heads, nullptr, &sink,
                                        static_cast<int>(l));
      Tensor<S> combined = soft;
      if (cfg_.align_head) {
        combined = concat_cols<S>({soft, gather_rows(src.va[l], positions)});
      }
      x = layer.norm2(add(x, layer.co(combined)));
      x = layer.ffn(x);
    }

    Tensor<S> lp = log_softmax_rows(out_proj_(x));
    LexStepOutput<S> out;
    out.log_probs.resize(C);
    out.caches.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      out.log_probs[c].resize(static_cast<std::size_t>(cfg_.trg_vocab));
      for (std::size_t j = 0; j < out.log_probs[c].size(); ++j) {
        out.log_probs[c][j] = static_cast<double>(lp.at(c, j));
      }
      auto node = std::make_shared<LexCacheNode<S>>();
      node->parent = cache;
      node->len = hist_len + 1;
      node->data = std::move(delta[c]);
      out.caches[c] = std::move(node);
    }
    out.attention = std::move(attn);
    return out;
  }

 private:
  struct DecLayer {
    nn::SelfAttentionBlock<S> self_attn;
    nn::Linear<S> cq, ck, cv, co;
    Tensor<S> align_wv;
    nn::LayerNorm<S> norm2;
    nn::FeedForwardBlock<S> ffn;
  };

  // Captures cross-attention weights: row c of each head's weight matrix
  // belongs to candidate c.
  struct StepSink : AttentionSink {
    std::vector<AttentionStep>* steps;
    int layer;
    StepSink(std::vector<AttentionStep>* s, int l) : steps(s), layer(l) {}
    void accept(int, int head, const std::vector<double>& w, std::size_t rows,
                std::size_t cols) override {
      for (std::size_t c = 0; c < rows; ++c) {
        for (std::size_t j = 0; j < cols; ++j) {
          (*steps)[c].at(layer, head, static_cast<int>(j)) = w[c * cols + j];
        }
      }
    }
  };

  static void check_ids(const std::vector<int>& ids, int vocab, const char* which) {
    for (int t : ids) {
      if (t < 0 || t >= vocab) {
        throw std::out_of_range(std::string("token id ") + std::to_string(t) + " outside " +
                                which + " vocabulary of " + std::to_string(vocab));
      }
    }
  }

  Tensor<S> decode_layer_full(const DecLayer& layer, int layer_index, Tensor<S> x,
                              const Tensor<S>& enc, const std::vector<int>& path,
                              const Tensor<S>* mask, AttentionSink* sink,
                              Rng* dropout_rng) const {
    auto drop = [&](Tensor<S> t) {
      return (cfg_.dropout > 0.0 && dropout_rng) ? dropout(t, cfg_.dropout, *dropout_rng) : t;
    };
    Tensor<S> a = nn::attend_heads(layer.self_attn.wq(x), layer.self_attn.wk(x),
                                   layer.self_attn.wv(x), cfg_.heads, mask, nullptr, layer_index);
    x = layer.self_attn.norm(add(x, drop(layer.self_attn.wo(a))));
    Tensor<S> soft = nn::attend_heads(layer.cq(x), layer.ck(enc), layer.cv(enc), cfg_.heads,
                                      nullptr, sink, layer_index);
    Tensor<S> combined = soft;
    if (cfg_.align_head) {
      Tensor<S> va = matmul(enc, layer.align_wv);
      combined = concat_cols<S>({soft, gather_rows(va, path)});
    }
    x = layer.norm2(add(x, drop(layer.co(combined))));
    return layer.ffn.norm(add(x, drop(layer.ffn.ff(x))));
  }

  // Per-candidate incremental self attention; candidates share the cached
  // history and differ only in their own key/value row.
  Tensor<S> self_attend_incremental(const Tensor<S>& q, const Tensor<S>& k_new,
                                    const Tensor<S>& v_new,
                                    const std::vector<const LexCacheNode<S>*>& nodes,
                                    std::size_t layer, std::size_t C, int hist_len) const {
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto dh = static_cast<std::size_t>(cfg_.d_head());
    const int H = cfg_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto out = Tensor<S>::zeros({C, d});
    std::vector<double> scores(static_cast<std::size_t>(hist_len) + 1);
    for (std::size_t c = 0; c < C; ++c) {
      for (int h = 0; h < H; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * dh;
        const S* qrow = q.data() + c * d + off;
        for (int t = 0; t < hist_len; ++t) {
          const S* krow = nodes[static_cast<std::size_t>(t)]->data.data() + layer * 2 * d + off;
          double s = 0.0;
          for (std::size_t j = 0; j < dh; ++j) {
            s += static_cast<double>(qrow[j]) * static_cast<double>(krow[j]);
          }
          scores[static_cast<std::size_t>(t)] = s * inv_sqrt;
        }
        {
          const S* krow = k_new.data() + c * d + off;
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
        S* orow = out.data() + c * d + off;
        for (int t = 0; t < hist_len; ++t) {
          const S* vrow =
              nodes[static_cast<std::size_t>(t)]->data.data() + layer * 2 * d + d + off;
          const S wt = static_cast<S>(scores[static_cast<std::size_t>(t)] * inv);
          for (std::size_t j = 0; j < dh; ++j) orow[j] += wt * vrow[j];
        }
        const S* vrow = v_new.data() + c * d + off;
        const S wt = static_cast<S>(scores[static_cast<std::size_t>(hist_len)] * inv);
        for (std::size_t j = 0; j < dh; ++j) orow[j] += wt * vrow[j];
      }
    }
    return out;
  }

  LexicalConfig cfg_;
  nn::EmbeddingFrontEnd<S> src_embed_, trg_embed_;
  std::vector<nn::EncoderLayer<S>> enc_layers_;
  std::vector<DecLayer> dec_layers_;
  nn::Linear<S> out_proj_;
};

}  // namespace anmt
