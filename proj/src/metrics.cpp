#include "anmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "anmt/data.hpp"

namespace anmt {

namespace {

// clipped n-gram matches of one sentence pair, folded case
void ngram_counts(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int n,
                  std::uint64_t& matched, std::uint64_t& total) {
  if (static_cast<int>(hyp.size()) < n) return;
  std::map<std::vector<std::string>, int> ref_ngrams;
  for (std::size_t i = 0; i + n <= ref.size(); ++i) {
    std::vector<std::string> g;
    for (int k = 0; k < n; ++k) g.push_back(lowercase(ref[i + static_cast<std::size_t>(k)]));
    ref_ngrams[g] += 1;
  }
  std::map<std::vector<std::string>, int> hyp_ngrams;
  for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
    std::vector<std::string> g;
    for (int k = 0; k < n; ++k) g.push_back(lowercase(hyp[i + static_cast<std::size_t>(k)]));
    hyp_ngrams[g] += 1;
  }
  for (const auto& [g, c] : hyp_ngrams) {
    total += static_cast<std::uint64_t>(c);
    auto it = ref_ngrams.find(g);
    if (it != ref_ngrams.end()) {
      matched += static_cast<std::uint64_t>(std::min(c, it->second));
    }
  }
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu: " + std::to_string(hypotheses.size()) +
                                " hypotheses for " + std::to_string(references.size()) +
                                " references");
  }
  BleuReport report;
  std::array<std::uint64_t, 4> matched{}, total{};
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    report.hyp_tokens += hypotheses[s].size();
    report.ref_tokens += references[s].size();
    for (int n = 1; n <= 4; ++n) {
      ngram_counts(hypotheses[s], references[s], n, matched[static_cast<std::size_t>(n - 1)],
                   total[static_cast<std::size_t>(n - 1)]);
    }
  }
  if (report.hyp_tokens == 0 || matched[0] == 0) {
    return report;  // zero unigram overlap scores exactly zero
  }
  double log_precision = 0.0;
  int orders = 0;
  for (int n = 0; n < 4; ++n) {
    const std::size_t i = static_cast<std::size_t>(n);
    if (total[i] == 0) {
      report.precisions[i] = 0.0;
      continue;  // no n-grams of this order exist; skip it
    }
    double p = static_cast<double>(matched[i]) / static_cast<double>(total[i]);
    if (p == 0.0) p = 1e-9;  // epsilon smoothing for tiny corpora
    report.precisions[i] = p;
    log_precision += std::log(p);
    orders += 1;
  }
  if (report.hyp_tokens < report.ref_tokens) {
    report.brevity_penalty = std::exp(1.0 - static_cast<double>(report.ref_tokens) /
                                                static_cast<double>(report.hyp_tokens));
  }
  report.bleu = 100.0 * report.brevity_penalty *
                std::exp(log_precision / static_cast<double>(orders));
  return report;
}

double alignment_accuracy(const std::vector<std::vector<int>>& predicted,
                          const std::vector<std::vector<int>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("alignment_accuracy: sentence count mismatch");
  }
  std::uint64_t correct = 0, count = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s].size() != gold[s].size()) {
      throw std::invalid_argument("alignment_accuracy: length mismatch at sentence " +
                                  std::to_string(s));
    }
    for (std::size_t i = 0; i < predicted[s].size(); ++i) {
      count += 1;
      if (predicted[s][i] == gold[s][i]) correct += 1;
    }
  }
  if (count == 0) {
    throw std::invalid_argument("alignment_accuracy: no positions");
  }
  return static_cast<double>(correct) / static_cast<double>(count);
}

double alignment_accuracy_lenient(const std::vector<std::vector<int>>& predicted,
                                  const std::vector<std::vector<int>>& gold) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("alignment_accuracy: sentence count mismatch");
  }
  std::uint64_t correct = 0, count = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const std::size_t common = std::min(predicted[s].size(), gold[s].size());
    count += std::max(predicted[s].size(), gold[s].size());
    for (std::size_t i = 0; i < common; ++i) {
      if (predicted[s][i] == gold[s][i]) correct += 1;
    }
  }
  if (count == 0) {
    throw std::invalid_argument("alignment_accuracy: no positions");
  }
  return static_cast<double>(correct) / static_cast<double>(count);
}

std::vector<std::string> result_tokens(const TranslationResult& r, const Vocabulary& trg_vocab) {
  std::vector<std::string> out;
  for (int t : r.tokens) {
    if (t == Vocabulary::kEos) break;
    out.push_back(trg_vocab.token(t));
  }
  return out;
}

PruneBenchReport prune_benchmark(const ScorerFactory& factory,
                                 const std::vector<std::vector<int>>& sources,
                                 const std::vector<std::vector<std::string>>& references,
                                 const Vocabulary& trg_vocab, const DecodeConfig& base_cfg,
                                 std::vector<double> thresholds, int jobs) {
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  if (thresholds.empty() || thresholds.front() != 0.0) {
    thresholds.insert(thresholds.begin(), 0.0);
  }
  PruneBenchReport report;
  std::uint64_t evals_at_zero = 0;
  for (double t : thresholds) {
    DecodeConfig cfg = base_cfg;
    cfg.threshold = t;
    auto results = translate_corpus(factory, sources, cfg, nullptr, jobs);
    PruneBenchRow row;
    row.threshold = t;
    std::vector<std::vector<std::string>> hyps;
    hyps.reserve(results.size());
    for (const auto& r : results) {
      row.lexical_evaluations += r.stats.lexical_evaluations;
      row.fallback_steps += r.stats.fallback_steps;
      hyps.push_back(result_tokens(r, trg_vocab));
    }
    row.bleu = corpus_bleu(hyps, references).bleu;
    if (t == 0.0) {
      evals_at_zero = row.lexical_evaluations;
      report.baseline_translations = hyps;
    }
    row.reduction_factor = row.lexical_evaluations == 0
                               ? 0.0
                               : static_cast<double>(evals_at_zero) /
                                     static_cast<double>(row.lexical_evaluations);
    report.rows.push_back(row);
  }
  return report;
}

std::string format_bleu_report(const BleuReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "BLEU = " << r.bleu << "  (";
  for (int n = 0; n < 4; ++n) {
    if (n) os << "/";
    os << 100.0 * r.precisions[static_cast<std::size_t>(n)];
  }
  os << ", BP = " << r.brevity_penalty << ", hyp tokens = " << r.hyp_tokens
     << ", ref tokens = " << r.ref_tokens << ")";
  return os.str();
}

std::string format_prune_report(const PruneBenchReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os << "threshold  lex-evals  fallbacks  BLEU    reduction\n";
  for (const auto& row : r.rows) {
    os.precision(2);
    os << row.threshold << "       " << row.lexical_evaluations << "       "
       << row.fallback_steps << "       ";
    os << row.bleu << "   ";
    os << row.reduction_factor << "\n";
  }
  return os.str();
}

std::string machine_prune_report(const PruneBenchReport& r) {
  std::ostringstream os;
  for (const auto& row : r.rows) {
    os << "lex_evals\t" << row.threshold << "\t" << row.lexical_evaluations << "\n";
    os << "fallback_steps\t" << row.threshold << "\t" << row.fallback_steps << "\n";
    os << "bleu\t" << row.threshold << "\t" << row.bleu << "\n";
    os << "reduction\t" << row.threshold << "\t" << row.reduction_factor << "\n";
  }
  return os.str();
}

}  // namespace anmt
