#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace anmt {

// Settings for the synthetic aligned parallel corpus. Source sentences are
// sampled without replacement from a closed vocabulary; each source word
// translates through a fixed bilingual lexicon; target order is a local
// permutation of source order with displacement at most reorder_window,
// driven deterministically by the source token identities so that the
// reference translation is a function of the source sentence.
struct ToyCorpusSpec {
  int vocab_size{40};
  int sentences{1000};
  int min_len{4};
  int max_len{12};
  int reorder_window{2};
  double homonym_rate{0.0};
  std::uint64_t seed{1};
};

struct ToySentence {
  std::vector<std::string> source;
  std::vector<std::string> target;        // without sentence-end marker
  std::vector<int> path;                  // 0-based source position per target word
};

struct ToyCorpus {
  std::vector<ToySentence> sentences;
};

// Throws std::invalid_argument on inconsistent settings.
ToyCorpus synthesize_toy_corpus(const ToyCorpusSpec& spec);

// The deterministic lexicon underlying the corpus: translation of one source
// word given its neighbouring source word (variant selection for homonyms).
std::string toy_translate(int word, int neighbor_word, const ToyCorpusSpec& spec);

// Writes <prefix>.src, <prefix>.trg and <prefix>.align (Pharaoh, 0-based,
// real words only; the sentence-end link is implicit).
void write_toy_corpus(const ToyCorpus& corpus, const std::string& prefix);

}  // namespace anmt
