#include "anmt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace anmt {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

SentenceConstraints resolve_constraints(const std::vector<DictionaryEntry>& entries,
                                        const std::vector<std::string>& source_tokens,
                                        const Vocabulary& trg_vocab) {
  SentenceConstraints out;
  out.entry_at_pos.assign(source_tokens.size(), -1);
  for (const auto& e : entries) {
    if (!trg_vocab.contains(e.target)) {
      std::cerr << "warning: dictionary suggestion '" << e.target
                << "' not in target vocabulary; entry skipped\n";
      continue;
    }
    // one suggestion per source surface; first entry wins
    bool duplicate = false;
    for (const auto& item : out.items) {
      if (item.source_word == e.source) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    SentenceConstraints::Item item;
    item.source_word = e.source;
    item.target_word = e.target;
    item.target_id = trg_vocab.id(e.target);
    const int idx = static_cast<int>(out.items.size());
    out.items.push_back(std::move(item));
    for (std::size_t j = 0; j < source_tokens.size(); ++j) {
      if (source_tokens[j] == e.source && out.entry_at_pos[j] < 0) {
        out.entry_at_pos[j] = idx;
      }
    }
  }
  return out;
}

std::vector<int> active_positions(const std::vector<std::vector<double>>& align_dists,
                                  double threshold, int src_len, bool* fallback) {
  if (fallback) *fallback = false;
  std::vector<int> active;
  for (int pos = 0; pos < src_len; ++pos) {
    for (const auto& row : align_dists) {
      if (static_cast<int>(row.size()) != src_len) {
        throw std::invalid_argument("active_positions: distribution length mismatch");
      }
      if (row[static_cast<std::size_t>(pos)] > threshold) {
        active.push_back(pos);
        break;
      }
    }
  }
  if (active.empty()) {
    if (fallback) *fallback = true;
    active.resize(static_cast<std::size_t>(src_len));
    for (int pos = 0; pos < src_len; ++pos) active[static_cast<std::size_t>(pos)] = pos;
  }
  return active;
}

int apply_dictionary_constraint(const SentenceConstraints& constraints,
                                const std::vector<std::uint8_t>& consumed, int extracted_pos,
                                std::vector<double>& log_probs) {
  if (extracted_pos < 0 ||
      static_cast<std::size_t>(extracted_pos) >= constraints.entry_at_pos.size()) {
    throw std::out_of_range("apply_dictionary_constraint: extracted position out of range");
  }
  const int entry = constraints.entry_at_pos[static_cast<std::size_t>(extracted_pos)];
  if (entry < 0 || consumed[static_cast<std::size_t>(entry)]) {
    return -1;
  }
  const int forced = constraints.items[static_cast<std::size_t>(entry)].target_id;
  for (std::size_t v = 0; v < log_probs.size(); ++v) {
    if (static_cast<int>(v) != forced) log_probs[v] = kNegInf;
  }
  return entry;
}

namespace {

struct Candidate {
  double score{};
  int parent{};    // index into the previous beam
  int position{};  // source position of this step (or extraction in plain mode)
  int token{};
  int cand_index{};  // index into the parent's LexStepResult
  int fired{-1};
  bool carryover{false};
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.carryover != b.carryover) return a.carryover;  // keep finished entries on ties
  if (a.token != b.token) return a.token < b.token;
  if (a.position != b.position) return a.position < b.position;
  return a.parent < b.parent;
}

double ranking_score(const Hypothesis& h, bool length_norm) {
  if (!length_norm || h.tokens.empty()) return h.score;
  return h.score / static_cast<double>(h.tokens.size());
}

int best_index(const std::vector<Hypothesis>& beam, bool length_norm) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(beam.size()); ++i) {
    if (ranking_score(beam[static_cast<std::size_t>(i)], length_norm) >
        ranking_score(beam[static_cast<std::size_t>(best)], length_norm)) {
      best = i;
    }
  }
  return best;
}

}  // namespace

TranslationResult translate(const LexicalScorer& lex, const AlignmentScorer* align, int src_len,
                            const DecodeConfig& cfg,
                            const SentenceConstraints* constraints) {
  if (src_len < 1) {
    throw std::invalid_argument("translate: empty source");
  }
  if (cfg.beam_size < 1) {
    throw std::invalid_argument("translate: beam size must be at least 1");
  }
  if (cfg.threshold < 0.0 || cfg.threshold >= 1.0) {
    throw std::invalid_argument("translate: threshold must be in [0, 1)");
  }
  const int max_len = cfg.max_output_len > 0 ? cfg.max_output_len : 2 * src_len + 10;
  const std::size_t entry_count = constraints ? constraints->items.size() : 0;

  std::vector<Hypothesis> beam(1);
  beam[0].lex_cache = lex.initial_cache();
  beam[0].align_cache = align ? align->initial_cache() : nullptr;
  beam[0].consumed.assign(entry_count, 0);

  DecodeStats stats;
  for (int step = 0; step < max_len; ++step) {
    // stop once the best hypothesis has terminated
    if (beam[static_cast<std::size_t>(best_index(beam, false))].terminated) break;
    std::vector<int> live;
    for (int i = 0; i < static_cast<int>(beam.size()); ++i) {
      if (!beam[static_cast<std::size_t>(i)].terminated) live.push_back(i);
    }
    if (live.empty()) break;
    stats.steps += 1;

    // alignment distributions for all live hypotheses (one batch)
    std::vector<std::vector<double>> align_dists(live.size());
    std::vector<BeamCachePtr> align_caches(live.size());
    std::vector<int> active;
    if (align) {
      for (std::size_t li = 0; li < live.size(); ++li) {
        Hypothesis& h = beam[static_cast<std::size_t>(live[li])];
        const int prev_token = h.tokens.empty() ? Vocabulary::kBos : h.tokens.back();
        const int b_prev = h.path.empty() ? -1 : h.path.back();
        auto [dist, cache] = align->step(h.align_cache, prev_token, b_prev);
        align_dists[li] = std::move(dist);
        align_caches[li] = std::move(cache);
      }
      if (cfg.pruning_enabled) {
        bool fallback = false;
        active = active_positions(align_dists, cfg.threshold, src_len, &fallback);
        if (fallback) stats.fallback_steps += 1;
      } else {
        active.resize(static_cast<std::size_t>(src_len));
        for (int p = 0; p < src_len; ++p) active[static_cast<std::size_t>(p)] = p;
      }
    }

    // lexical distributions at the active positions (one batch)
    std::vector<Candidate> candidates;
    std::vector<LexStepResult> lex_results(live.size());
    for (std::size_t li = 0; li < live.size(); ++li) {
      Hypothesis& h = beam[static_cast<std::size_t>(live[li])];
      const int prev_token = h.tokens.empty() ? Vocabulary::kBos : h.tokens.back();
      lex_results[li] = lex.step(h.lex_cache, prev_token,
                                 align ? active : std::vector<int>{});
      stats.lexical_evaluations += align ? active.size() : 1;

      LexStepResult& res = lex_results[li];
      const std::size_t n_cand = res.log_probs.size();
      for (std::size_t c = 0; c < n_cand; ++c) {
        const int pos = align ? active[c]
                              : extract_alignment_baseline(res.attention[c]);
        double align_lp = 0.0;
        if (align) {
          const double p = align_dists[li][static_cast<std::size_t>(pos)];
          if (p <= 0.0) continue;  // unreachable position, never a candidate
          align_lp = std::log(p);
        }
        int fired = -1;
        if (constraints && !constraints->empty()) {
          const int extracted =
              align ? extract_alignment_assisted(res.attention[c], pos)
                    : pos;  // plain mode already extracted above
          fired = apply_dictionary_constraint(*constraints, h.consumed, extracted,
                                              res.log_probs[c]);
        }
        for (int v = 0; v < lex.vocab_size(); ++v) {
          const double lp = res.log_probs[c][static_cast<std::size_t>(v)];
          if (!std::isfinite(lp)) continue;
          Candidate cand;
          cand.score = h.score + align_lp + lp;
          cand.parent = live[li];
          cand.position = pos;
          cand.token = v;
          cand.cand_index = static_cast<int>(c);
          cand.fired = fired;
          candidates.push_back(cand);
        }
      }
    }

    // carry over terminated hypotheses as candidates
    for (int i = 0; i < static_cast<int>(beam.size()); ++i) {
      const Hypothesis& h = beam[static_cast<std::size_t>(i)];
      if (!h.terminated) continue;
      Candidate cand;
      cand.score = h.score;
      cand.parent = i;
      cand.position = h.path.empty() ? 0 : h.path.back();
      cand.token = h.tokens.empty() ? 0 : h.tokens.back();
      cand.cand_index = -1;
      cand.carryover = true;
      candidates.push_back(cand);
    }
    if (candidates.empty()) break;

    const std::size_t keep = std::min<std::size_t>(candidates.size(),
                                                   static_cast<std::size_t>(cfg.beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                      candidates.end(), candidate_before);
    candidates.resize(keep);

    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (const Candidate& cand : candidates) {
      if (cand.carryover) {
        next.push_back(beam[static_cast<std::size_t>(cand.parent)]);
        continue;
      }
      const Hypothesis& parent = beam[static_cast<std::size_t>(cand.parent)];
      // live index of the parent to reach its step results
      std::size_t li = 0;
      while (live[li] != cand.parent) ++li;
      const LexStepResult& res = lex_results[li];
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(cand.token);
      h.path = parent.path;
      h.path.push_back(cand.position);
      h.score = cand.score;
      h.step_scores = parent.step_scores;
      h.step_scores.push_back(cand.score - parent.score);
      h.lex_cache = res.caches[static_cast<std::size_t>(cand.cand_index)];
      h.align_cache = align ? align_caches[li] : nullptr;
      h.attention = parent.attention;
      h.attention.push_back(res.attention[static_cast<std::size_t>(cand.cand_index)]);
      h.consumed = parent.consumed;
      h.fired = parent.fired;
      if (cand.fired >= 0) {
        h.consumed[static_cast<std::size_t>(cand.fired)] = 1;
        h.fired.push_back(cand.fired);
      }
      h.terminated = cand.token == Vocabulary::kEos;
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  // final selection: terminated hypotheses first, ranked by the configured
  // score; fall back to the best partial hypothesis when nothing terminated
  std::vector<int> finished;
  for (int i = 0; i < static_cast<int>(beam.size()); ++i) {
    if (beam[static_cast<std::size_t>(i)].terminated) finished.push_back(i);
  }
  TranslationResult out;
  const Hypothesis* winner = nullptr;
  if (!finished.empty()) {
    int best = finished[0];
    for (int i : finished) {
      if (ranking_score(beam[static_cast<std::size_t>(i)], cfg.length_norm) >
          ranking_score(beam[static_cast<std::size_t>(best)], cfg.length_norm)) {
        best = i;
      }
    }
    winner = &beam[static_cast<std::size_t>(best)];
  } else {
    winner = &beam[static_cast<std::size_t>(best_index(beam, cfg.length_norm))];
    out.truncated = true;
  }
  out.tokens = winner->tokens;
  out.path = winner->path;
  out.attention = winner->attention;
  out.step_scores = winner->step_scores;
  out.score = winner->score;
  out.fired_entries = winner->fired;
  out.stats = stats;
  return out;
}

std::vector<TranslationResult> translate_corpus(
    const ScorerFactory& factory, const std::vector<std::vector<int>>& sources,
    const DecodeConfig& cfg, const std::vector<SentenceConstraints>* constraints, int jobs) {
  if (constraints && constraints->size() != sources.size()) {
    throw std::invalid_argument("translate_corpus: constraints size mismatch");
  }
  std::vector<TranslationResult> results(sources.size());
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto lex = factory.make_lexical(sources[i]);
      auto align = factory.make_alignment(sources[i]);
      const SentenceConstraints* cons = constraints ? &(*constraints)[i] : nullptr;
      results[i] = translate(*lex, align.get(), static_cast<int>(sources[i].size()), cfg, cons);
    }
  };
  if (jobs <= 1 || sources.size() <= 1) {
    run_range(0, sources.size());
    return results;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs),
                                                    sources.size());
  std::vector<std::thread> threads;
  const std::size_t chunk = (sources.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(sources.size(), begin + chunk);
    if (begin >= end) break;
    threads.emplace_back(run_range, begin, end);
  }
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace anmt
