#include "anmt/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "anmt/data.hpp"
#include "anmt/rng.hpp"

namespace anmt {

namespace {

int homonym_count(const ToyCorpusSpec& spec) {
  return static_cast<int>(std::lround(spec.homonym_rate * spec.vocab_size));
}

// Word classes driving the reorderings. They are lexical properties of the
// source words (not seeded), so the target order is a learnable function of
// the source sentence.
bool is_swapper(int word) { return word % 8 == 1 || word % 8 == 2; }
bool is_rotator(int word) { return word % 8 == 0; }

// Local permutation of 0..len-1 determined by the source word classes. The
// sentence is cut into fixed-position blocks (pairs for window 1, triples
// for window 2 and up); the class of the word directly before a block
// decides its internal order, so the cue for each reordering sits at the
// position a left-to-right reader has just passed. The first block is
// always monotone. Anchoring blocks to absolute positions keeps the target
// order a function of the source words alone; displacement never exceeds
// the window.
std::vector<int> reorder_permutation(const std::vector<int>& words, int window) {
  const int len = static_cast<int>(words.size());
  std::vector<int> perm(static_cast<std::size_t>(len));
  std::iota(perm.begin(), perm.end(), 0);
  if (window < 1) return perm;
  const int block = window == 1 ? 2 : 3;
  for (int j = block; j + 2 <= len; j += block) {
    const std::size_t u = static_cast<std::size_t>(j);
    const int key = words[u - 1];
    if (block == 3 && j + 3 <= len && is_rotator(key)) {
      // target slots (j, j+1, j+2) read sources (j+1, j+2, j)
      perm[u] = j + 1;
      perm[u + 1] = j + 2;
      perm[u + 2] = j;
    } else if (is_swapper(key)) {
      std::swap(perm[u], perm[u + 1]);
    }
  }
  return perm;
}

}  // namespace

std::string toy_translate(int word, int neighbor_word, const ToyCorpusSpec& spec) {
  if (word < homonym_count(spec)) {
    const bool variant = neighbor_word % 2 == 1;
    return (variant ? "u" : "t") + std::to_string(word);
  }
  return "t" + std::to_string(word);
}

ToyCorpus synthesize_toy_corpus(const ToyCorpusSpec& spec) {
  if (spec.vocab_size < 1 || spec.sentences < 1) {
    throw std::invalid_argument("toy corpus: vocab size and sentence count must be positive");
  }
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw std::invalid_argument("toy corpus: bad length range");
  }
  if (spec.max_len > spec.vocab_size) {
    throw std::invalid_argument(
        "toy corpus: max length exceeds vocabulary size (tokens are sampled without "
        "replacement)");
  }
  if (spec.reorder_window < 0 || spec.reorder_window >= spec.max_len) {
    throw std::invalid_argument("toy corpus: reorder window must be in [0, max length)");
  }
  if (spec.homonym_rate < 0.0 || spec.homonym_rate > 1.0) {
    throw std::invalid_argument("toy corpus: homonym rate must be in [0, 1]");
  }

  Rng rng(spec.seed);
  ToyCorpus corpus;
  corpus.sentences.reserve(static_cast<std::size_t>(spec.sentences));
  std::vector<int> pool(static_cast<std::size_t>(spec.vocab_size));
  std::iota(pool.begin(), pool.end(), 0);

  for (int s = 0; s < spec.sentences; ++s) {
    const int len = rng.uniform_int(spec.min_len, spec.max_len);
    // partial Fisher-Yates draw of `len` distinct words
    for (int i = 0; i < len; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab_size - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<int> words(pool.begin(), pool.begin() + len);

    ToySentence sent;
    sent.source.reserve(static_cast<std::size_t>(len));
    for (int w : words) sent.source.push_back("s" + std::to_string(w));

    const auto perm = reorder_permutation(words, spec.reorder_window);
    sent.target.reserve(static_cast<std::size_t>(len));
    sent.path.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      const int src_pos = perm[static_cast<std::size_t>(i)];
      const int neighbor_pos = src_pos + 1 < len ? src_pos + 1 : (src_pos > 0 ? src_pos - 1 : src_pos);
      sent.target.push_back(
          toy_translate(words[static_cast<std::size_t>(src_pos)],
                        words[static_cast<std::size_t>(neighbor_pos)], spec));
      sent.path.push_back(src_pos);
    }
    corpus.sentences.push_back(std::move(sent));
  }
  return corpus;
}

void write_toy_corpus(const ToyCorpus& corpus, const std::string& prefix) {
  std::vector<std::vector<std::string>> src, trg, align;
  src.reserve(corpus.sentences.size());
  trg.reserve(corpus.sentences.size());
  align.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) {
    src.push_back(s.source);
    trg.push_back(s.target);
    std::vector<std::string> links;
    links.reserve(s.path.size());
    for (std::size_t i = 0; i < s.path.size(); ++i) {
      links.push_back(std::to_string(s.path[i]) + "-" + std::to_string(i));
    }
    align.push_back(std::move(links));
  }
  write_token_lines(prefix + ".src", src);
  write_token_lines(prefix + ".trg", trg);
  write_token_lines(prefix + ".align", align);
}

}  // namespace anmt
