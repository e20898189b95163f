#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "anmt/alignment_model.hpp"
#include "anmt/decoder.hpp"
#include "anmt/lexical_model.hpp"

namespace anmt {

// Adapters binding the transformer models to the beam-search interfaces.
// A scorer instance is tied to one prepared source sentence; model
// parameters are read-only during decoding and shared across scorers.

template <class S>
class TransformerLexicalScorer : public LexicalScorer {
 public:
  TransformerLexicalScorer(const LexicalModel<S>& model, const std::vector<int>& source)
      : model_(model) {
    NoGradGuard ng;
    src_ = model_.prepare(source);
  }

  int vocab_size() const override { return model_.config().trg_vocab; }
  bool uses_alignment() const override { return model_.config().align_head; }

  LexStepResult step(const BeamCachePtr& cache, int prev_token,
                     const std::vector<int>& positions) const override {
    NoGradGuard ng;
    const auto* holder = static_cast<const CacheHolder*>(cache.get());
    auto out = model_.step(src_, holder ? holder->ptr : nullptr, prev_token, positions);
    LexStepResult res;
    res.log_probs = std::move(out.log_probs);
    res.attention = std::move(out.attention);
    res.caches.reserve(out.caches.size());
    for (auto& c : out.caches) {
      auto h = std::make_shared<CacheHolder>();
      h->ptr = std::move(c);
      res.caches.push_back(std::move(h));
    }
    return res;
  }

 private:
  struct CacheHolder : BeamCache {
    LexCachePtr<S> ptr;
  };
  const LexicalModel<S>& model_;
  EncodedSource<S> src_;
};

template <class S>
class TransformerAlignmentScorer : public AlignmentScorer {
 public:
  TransformerAlignmentScorer(const AlignmentModel<S>& model, const std::vector<int>& source)
      : model_(model) {
    NoGradGuard ng;
    src_ = model_.prepare(source);
  }

  std::pair<std::vector<double>, BeamCachePtr> step(const BeamCachePtr& cache, int prev_token,
                                                    int b_prev) const override {
    NoGradGuard ng;
    const auto* holder = static_cast<const CacheHolder*>(cache.get());
    auto [jumps, next] = model_.step(src_, holder ? holder->ptr : nullptr, prev_token, b_prev);
    auto positions = positions_from_jumps(jumps, b_prev, src_.src_len,
                                          model_.config().window);
    auto h = std::make_shared<CacheHolder>();
    h->ptr = std::move(next);
    return {std::move(positions), std::move(h)};
  }

 private:
  struct CacheHolder : BeamCache {
    AlignCachePtr<S> ptr;
  };
  const AlignmentModel<S>& model_;
  AlignEncodedSource<S> src_;
};

template <class S>
class TransformerScorerFactory : public ScorerFactory {
 public:
  TransformerScorerFactory(const LexicalModel<S>& lex, const AlignmentModel<S>* align)
      : lex_(lex), align_(align) {}

  std::unique_ptr<LexicalScorer> make_lexical(const std::vector<int>& source) const override {
    return std::make_unique<TransformerLexicalScorer<S>>(lex_, source);
  }

  std::unique_ptr<AlignmentScorer> make_alignment(const std::vector<int>& source) const override {
    if (!align_) return nullptr;
    return std::make_unique<TransformerAlignmentScorer<S>>(*align_, source);
  }

 private:
  const LexicalModel<S>& lex_;
  const AlignmentModel<S>* align_;
};

}  // namespace anmt
