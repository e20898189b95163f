#pragma once

// Deterministic mock scorers: distributions are pure functions of the token
// history and query, derived from integer hashes, so beam search and the
// brute-force enumeration can query identical state independently.

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "anmt/decoder.hpp"

namespace anmt::testsupport {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_history(std::uint64_t seed, const std::vector<int>& tokens) {
  std::uint64_t h = mix64(seed);
  for (int t : tokens) h = mix64(h ^ static_cast<std::uint64_t>(t + 7));
  return h;
}

struct MockCache : BeamCache {
  std::vector<int> tokens;  // decoder inputs fed so far
};

inline std::vector<int> extended_history(const BeamCachePtr& cache, int prev_token) {
  std::vector<int> h;
  if (const auto* c = static_cast<const MockCache*>(cache.get())) {
    h = c->tokens;
  }
  h.push_back(prev_token);
  return h;
}

// Lexical mock: positive random distributions per (history, position); from
// emitted step `force_eos_from` on, the sentence-end token takes all mass.
class MockLexicalScorer : public LexicalScorer {
 public:
  MockLexicalScorer(std::uint64_t seed, int vocab, int src_len, bool aligned,
                    int force_eos_from = 1 << 20, int layers = 1, int heads = 1)
      : seed_(seed), vocab_(vocab), src_len_(src_len), aligned_(aligned),
        force_eos_from_(force_eos_from), layers_(layers), heads_(heads) {}

  int vocab_size() const override { return vocab_; }
  bool uses_alignment() const override { return aligned_; }

  std::vector<double> distribution(const std::vector<int>& history, int position) const {
    const int emit_index = static_cast<int>(history.size()) - 1;
    std::vector<double> p(static_cast<std::size_t>(vocab_), 0.0);
    if (emit_index >= force_eos_from_) {
      p[Vocabulary::kEos] = 1.0;
      return p;
    }
    const std::uint64_t h = hash_history(seed_, history) ^ mix64(static_cast<std::uint64_t>(
                                aligned_ ? position + 1 : 0));
    double total = 0.0;
    for (int v = 0; v < vocab_; ++v) {
      p[static_cast<std::size_t>(v)] =
          1.0 + static_cast<double>(mix64(h ^ static_cast<std::uint64_t>(v)) % 997);
      total += p[static_cast<std::size_t>(v)];
    }
    for (auto& x : p) x /= total;
    return p;
  }

  AttentionStep attention(const std::vector<int>& history, int position) const {
    AttentionStep step(layers_, heads_, src_len_);
    const std::uint64_t h0 = hash_history(seed_ ^ 0xa77e117full, history) ^
                             mix64(static_cast<std::uint64_t>(aligned_ ? position + 1 : 0));
    for (int l = 0; l < layers_; ++l) {
      for (int k = 0; k < heads_; ++k) {
        double total = 0.0;
        for (int j = 0; j < src_len_; ++j) {
          const double w = 1.0 + static_cast<double>(
                                     mix64(h0 ^ static_cast<std::uint64_t>(
                                               (l * 31 + k) * 131 + j)) %
                                     811);
          step.at(l, k, j) = w;
          total += w;
        }
        for (int j = 0; j < src_len_; ++j) step.at(l, k, j) /= total;
      }
    }
    return step;
  }

  LexStepResult step(const BeamCachePtr& cache, int prev_token,
                     const std::vector<int>& positions) const override {
    const auto history = extended_history(cache, prev_token);
    auto next = std::make_shared<MockCache>();
    next->tokens = history;
    LexStepResult res;
    const std::vector<int> single{0};
    const auto& pos_list = aligned_ ? positions : single;
    for (int p : pos_list) {
      const auto dist = distribution(history, p);
      std::vector<double> logp(dist.size());
      for (std::size_t v = 0; v < dist.size(); ++v) {
        logp[v] = dist[v] > 0.0 ? std::log(dist[v])
                                : -std::numeric_limits<double>::infinity();
      }
      res.log_probs.push_back(std::move(logp));
      res.attention.push_back(attention(history, p));
      res.caches.push_back(next);
    }
    return res;
  }

 private:
  std::uint64_t seed_;
  int vocab_;
  int src_len_;
  bool aligned_;
  int force_eos_from_;
  int layers_, heads_;
};

// Alignment mock: positive (optionally sparse) position distributions per
// (history, previous position).
class MockAlignmentScorer : public AlignmentScorer {
 public:
  MockAlignmentScorer(std::uint64_t seed, int src_len, bool with_zeros = false)
      : seed_(seed), src_len_(src_len), with_zeros_(with_zeros) {}

  std::vector<double> distribution(const std::vector<int>& history, int b_prev) const {
    const std::uint64_t h = hash_history(seed_ ^ 0x41160000ull, history) ^
                            mix64(static_cast<std::uint64_t>(b_prev + 2));
    std::vector<double> p(static_cast<std::size_t>(src_len_), 0.0);
    double total = 0.0;
    for (int j = 0; j < src_len_; ++j) {
      const std::uint64_t hj = mix64(h ^ static_cast<std::uint64_t>(j + 13));
      double w = 1.0 + static_cast<double>(hj % 1009);
      if (with_zeros_ && hj % 3 == 0) w = 0.0;
      p[static_cast<std::size_t>(j)] = w;
      total += w;
    }
    if (total == 0.0) {
      for (auto& x : p) x = 1.0 / static_cast<double>(src_len_);
      return p;
    }
    for (auto& x : p) x /= total;
    return p;
  }

  std::pair<std::vector<double>, BeamCachePtr> step(const BeamCachePtr& cache, int prev_token,
                                                    int b_prev) const override {
    const auto history = extended_history(cache, prev_token);
    auto next = std::make_shared<MockCache>();
    next->tokens = history;
    return {distribution(history, b_prev), next};
  }

 private:
  std::uint64_t seed_;
  int src_len_;
  bool with_zeros_;
};

// Exhaustive enumeration of Eq.-style combined scores over all terminated
// sequences, querying the same mocks the beam search uses. Returns the best
// total log score.
struct BruteForceBest {
  double score{-std::numeric_limits<double>::infinity()};
  std::vector<int> tokens;
  std::vector<int> path;
};

inline void brute_force_walk(const MockLexicalScorer& lex, const MockAlignmentScorer& align,
                             int src_len, int max_len, std::vector<int>& history,
                             std::vector<int>& tokens, std::vector<int>& path, double score,
                             BruteForceBest& best) {
  if (static_cast<int>(tokens.size()) >= max_len) return;
  const int prev = tokens.empty() ? Vocabulary::kBos : tokens.back();
  const int b_prev = path.empty() ? -1 : path.back();
  history.push_back(prev);
  const auto align_dist = align.distribution(history, b_prev);
  for (int pos = 0; pos < src_len; ++pos) {
    if (align_dist[static_cast<std::size_t>(pos)] <= 0.0) continue;
    const auto lex_dist = lex.distribution(history, pos);
    for (int v = 0; v < static_cast<int>(lex_dist.size()); ++v) {
      if (lex_dist[static_cast<std::size_t>(v)] <= 0.0) continue;
      const double s = score + std::log(align_dist[static_cast<std::size_t>(pos)]) +
                       std::log(lex_dist[static_cast<std::size_t>(v)]);
      tokens.push_back(v);
      path.push_back(pos);
      if (v == Vocabulary::kEos) {
        if (s > best.score) {
          best.score = s;
          best.tokens = tokens;
          best.path = path;
        }
      } else {
        brute_force_walk(lex, align, src_len, max_len, history, tokens, path, s, best);
      }
      tokens.pop_back();
      path.pop_back();
    }
  }
  history.pop_back();
}

inline BruteForceBest brute_force_viterbi(const MockLexicalScorer& lex,
                                          const MockAlignmentScorer& align, int src_len,
                                          int max_len) {
  BruteForceBest best;
  std::vector<int> history, tokens, path;
  brute_force_walk(lex, align, src_len, max_len, history, tokens, path, 0.0, best);
  return best;
}

}  // namespace anmt::testsupport
