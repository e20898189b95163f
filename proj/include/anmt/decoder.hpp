#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "anmt/attention.hpp"
#include "anmt/data.hpp"
#include "anmt/dictionary.hpp"

namespace anmt {

struct DecodeConfig {
  int beam_size{4};
  double threshold{0.15};
  int max_output_len{0};  // 0 selects 2 * source_len + 10
  bool length_norm{false};
  bool pruning_enabled{true};  // false removes the pruning step entirely
};

// Opaque per-hypothesis model state; concrete scorers define the contents.
struct BeamCache {
  virtual ~BeamCache() = default;
};
using BeamCachePtr = std::shared_ptr<const BeamCache>;

struct LexStepResult {
  // One entry per requested candidate position (single entry for scorers
  // without alignment conditioning).
  std::vector<std::vector<double>> log_probs;
  std::vector<AttentionStep> attention;
  std::vector<BeamCachePtr> caches;
};

// Lexical model surface the beam search drives. A scorer is bound to one
// source sentence; step() never mutates shared state, so hypotheses can
// branch freely.
class LexicalScorer {
 public:
  virtual ~LexicalScorer() = default;
  virtual int vocab_size() const = 0;
  virtual bool uses_alignment() const = 0;
  virtual BeamCachePtr initial_cache() const { return nullptr; }
  virtual LexStepResult step(const BeamCachePtr& cache, int prev_token,
                             const std::vector<int>& positions) const = 0;
};

// Alignment model surface: distribution over source positions for the next
// target step given the frontier position (-1 before the first step).
class AlignmentScorer {
 public:
  virtual ~AlignmentScorer() = default;
  virtual BeamCachePtr initial_cache() const { return nullptr; }
  virtual std::pair<std::vector<double>, BeamCachePtr> step(const BeamCachePtr& cache,
                                                            int prev_token, int b_prev) const = 0;
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted target tokens
  std::vector<int> path;    // one source position per emitted token
  double score{0.0};
  BeamCachePtr lex_cache;
  BeamCachePtr align_cache;
  AttentionRecord attention;
  std::vector<double> step_scores;  // per-step log-score increments
  std::vector<std::uint8_t> consumed;  // per dictionary entry
  std::vector<int> fired;              // dictionary entries in firing order
  bool terminated{false};
};

// Dictionary entries resolved against one source sentence: a position to
// entry mapping plus the forced token id per entry.
struct SentenceConstraints {
  struct Item {
    std::string source_word;
    std::string target_word;
    int target_id{-1};
  };
  std::vector<Item> items;
  std::vector<int> entry_at_pos;  // -1 or index into items, per source position

  bool empty() const { return items.empty(); }
};

// Resolves dictionary entries for a sentence against its source tokens.
// Suggestions outside the target vocabulary are skipped with a warning on
// stderr (once per entry).
SentenceConstraints resolve_constraints(const std::vector<DictionaryEntry>& entries,
                                        const std::vector<std::string>& source_tokens,
                                        const Vocabulary& trg_vocab);

// Positions where at least one hypothesis puts probability above the
// threshold; falls back to every position when none survives. `fallback`
// (optional) reports whether the fallback fired.
std::vector<int> active_positions(const std::vector<std::vector<double>>& align_dists,
                                  double threshold, int src_len, bool* fallback = nullptr);

// If the extracted source position carries an unconsumed dictionary entry,
// force the distribution to the suggestion by setting every other token to
// negative infinity. Returns the fired entry index, or -1.
int apply_dictionary_constraint(const SentenceConstraints& constraints,
                                const std::vector<std::uint8_t>& consumed, int extracted_pos,
                                std::vector<double>& log_probs);

struct DecodeStats {
  std::uint64_t lexical_evaluations{0};
  std::uint64_t fallback_steps{0};
  std::uint64_t steps{0};
};

struct TranslationResult {
  std::vector<int> tokens;  // includes the sentence-end token unless truncated
  std::vector<int> path;
  AttentionRecord attention;
  std::vector<double> step_scores;
  double score{0.0};
  bool truncated{false};
  std::vector<int> fired_entries;
  DecodeStats stats;
};

// Alignment-based beam search over one sentence. With an alignment scorer,
// each step hypothesizes source positions first, prunes them against the
// threshold, evaluates the lexical model at the survivors and combines both
// scores; without one, this is plain beam search over tokens and the
// reported path is the accumulated-attention extraction. Constraints, when
// given, force dictionary suggestions at steps whose extracted source word
// matches an unconsumed entry.
TranslationResult translate(const LexicalScorer& lex, const AlignmentScorer* align, int src_len,
                            const DecodeConfig& cfg,
                            const SentenceConstraints* constraints = nullptr);

// Per-sentence scorer construction for corpus decoding.
class ScorerFactory {
 public:
  virtual ~ScorerFactory() = default;
  virtual std::unique_ptr<LexicalScorer> make_lexical(const std::vector<int>& source) const = 0;
  virtual std::unique_ptr<AlignmentScorer> make_alignment(const std::vector<int>&) const {
    return nullptr;
  }
};

// Decodes a corpus, optionally in parallel over sentences (results and stats
// are identical regardless of the job count; sentences are independent).
std::vector<TranslationResult> translate_corpus(
    const ScorerFactory& factory, const std::vector<std::vector<int>>& sources,
    const DecodeConfig& cfg, const std::vector<SentenceConstraints>* constraints = nullptr,
    int jobs = 1);

}  // namespace anmt
