#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace anmt {

// Token/id bijection with four reserved entries at fixed ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  // Most frequent tokens kept up to max_size total entries (reserved ids
  // included in the budget); frequency ties broken lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t max_size);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// One training unit: source ids (no sentence markers), target ids ending in
// the sentence-end token, and one 0-based source position per target token.
struct AlignedSentencePair {
  std::vector<int> source;
  std::vector<int> target;
  std::vector<int> path;
};

// Throws std::invalid_argument if the pair violates its invariants.
void validate_pair(const AlignedSentencePair& pair);

using AlignmentLink = std::pair<int, int>;  // (source, target), 0-based

// Parses one line of whitespace-separated "s-t" pairs with 0-based indices.
// Bounds are validated against the given sentence lengths; line_no is used
// in error messages only.
std::vector<AlignmentLink> parse_pharaoh(const std::string& line, int source_len, int target_len,
                                         int line_no = 0);

// Total resolution of raw links to a full path over target positions
// 0..target_len-1 (target_len includes the sentence-end position, which is
// always mapped to the last source position). Multiply-linked targets take
// the smallest source index; unaligned targets carry the previous position
// forward, defaulting to the first source position at the start.
std::vector<int> resolve_alignment(const std::vector<AlignmentLink>& links, int source_len,
                                   int target_len);

// Jump labels: delta_i = b_i - b_{i-1} over 1-based positions with a virtual
// origin before the sentence, clamped into [-window, window].
std::vector<int> compute_jumps(const std::vector<int>& path, int window);

int jump_class(int delta, int window);  // class index = delta + window

// Case-insensitive membership set of target-language words.
class StopWordList {
 public:
  StopWordList() = default;
  static StopWordList load(const std::string& path);
  void insert(const std::string& word);
  bool contains(const std::string& word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

std::string lowercase(const std::string& s);

// Plain text corpus, one whitespace-tokenized sentence per line.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);
void write_token_lines(const std::string& path, const std::vector<std::vector<std::string>>& lines);

// Loads a parallel corpus with optional alignment file into encoded pairs.
// Target sentences get the sentence-end token appended; paths are resolved
// per resolve_alignment. Without an alignment file, paths are empty.
std::vector<AlignedSentencePair> load_corpus(const std::string& src_path,
                                             const std::string& trg_path,
                                             const std::string& align_path,
                                             const Vocabulary& src_vocab,
                                             const Vocabulary& trg_vocab);

}  // namespace anmt
