#pragma once

#include <map>
#include <string>
#include <vector>

#include "anmt/data.hpp"

namespace anmt {

struct DictionaryEntry {
  std::string source;
  std::string target;
};

// One-to-one source-word to target-word suggestions, optionally scoped to a
// sentence. File format: "source<TAB>target" for global entries or
// "sentence_id<TAB>source<TAB>target" for per-sentence entries.
class Dictionary {
 public:
  void add_global(DictionaryEntry e);
  void add_for_sentence(int sentence, DictionaryEntry e);

  // Global entries followed by the sentence's own, in insertion order.
  std::vector<DictionaryEntry> entries_for(int sentence) const;

  std::size_t global_count() const { return global_.size(); }
  std::size_t sentence_count() const { return per_sentence_.size(); }

  static Dictionary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<DictionaryEntry> global_;
  std::map<int, std::vector<DictionaryEntry>> per_sentence_;
};

// Builds the simulated per-sentence dictionary: for each sentence, source
// words aligned one-to-one to a target word that is not a stop word and does
// not occur in the given baseline translation of that sentence, capped at
// max_entries entries in source order. Duplicate source surfaces keep their
// first suggestion.
Dictionary build_simulated_dictionary(
    const std::vector<std::vector<std::string>>& src_lines,
    const std::vector<std::vector<std::string>>& ref_lines,
    const std::vector<std::vector<int>>& paths,  // gold path per sentence, real words only
    const std::vector<std::vector<std::string>>& baseline_lines,
    const StopWordList& stop_words, int max_entries = 4);

}  // namespace anmt
