#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "anmt/decoder.hpp"

namespace anmt {

struct BleuReport {
  double bleu{0.0};  // percent, 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty{1.0};
  std::uint64_t hyp_tokens{0};
  std::uint64_t ref_tokens{0};
};

// Corpus-level case-insensitive BLEU-4: geometric mean of clipped n-gram
// precisions times the brevity penalty. A zero higher-order count is
// replaced by a tiny epsilon so short toy corpora do not zero the geometric
// mean (on corpora of any real size the clipped counts are positive and the
// epsilon never engages); zero unigram overlap scores exactly 0.
BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references);

// Fraction of target positions whose predicted source position matches the
// gold one. Lengths must match per sentence.
double alignment_accuracy(const std::vector<std::vector<int>>& predicted,
                          const std::vector<std::vector<int>>& gold);

// Corpus aggregate that tolerates length mismatches: positions beyond the
// shorter path count as wrong, with the longer length as the denominator.
double alignment_accuracy_lenient(const std::vector<std::vector<int>>& predicted,
                                  const std::vector<std::vector<int>>& gold);

struct PruneBenchRow {
  double threshold{0.0};
  std::uint64_t lexical_evaluations{0};
  std::uint64_t fallback_steps{0};
  double bleu{0.0};
  double reduction_factor{1.0};  // evaluations at threshold 0 over this row's
};

struct PruneBenchReport {
  std::vector<PruneBenchRow> rows;
  std::vector<std::vector<std::string>> baseline_translations;  // threshold-0 output
};

// Decodes the corpus at every threshold (0 is required and must come first
// after sorting) and reports evaluation counts, fallback counts and BLEU.
PruneBenchReport prune_benchmark(const ScorerFactory& factory,
                                 const std::vector<std::vector<int>>& sources,
                                 const std::vector<std::vector<std::string>>& references,
                                 const Vocabulary& trg_vocab, const DecodeConfig& base_cfg,
                                 std::vector<double> thresholds, int jobs = 1);

// Renders tokens of a translation result, dropping the sentence-end marker.
std::vector<std::string> result_tokens(const TranslationResult& r, const Vocabulary& trg_vocab);

std::string format_bleu_report(const BleuReport& r);
std::string format_prune_report(const PruneBenchReport& r);
// One metric per line: "name<TAB>threshold<TAB>value".
std::string machine_prune_report(const PruneBenchReport& r);

}  // namespace anmt
