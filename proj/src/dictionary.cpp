#include "anmt/dictionary.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace anmt {

void Dictionary::add_global(DictionaryEntry e) { global_.push_back(std::move(e)); }

void Dictionary::add_for_sentence(int sentence, DictionaryEntry e) {
  per_sentence_[sentence].push_back(std::move(e));
}

std::vector<DictionaryEntry> Dictionary::entries_for(int sentence) const {
  std::vector<DictionaryEntry> out = global_;
  auto it = per_sentence_.find(sentence);
  if (it != per_sentence_.end()) {
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

Dictionary Dictionary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open dictionary: " + path);
  }
  Dictionary d;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() == 2) {
      d.add_global({fields[0], fields[1]});
    } else if (fields.size() == 3) {
      int sentence = 0;
      try {
        sentence = std::stoi(fields[0]);
      } catch (const std::exception&) {
        throw std::runtime_error("dictionary " + path + " line " + std::to_string(line_no) +
                                 ": bad sentence id '" + fields[0] + "'");
      }
      d.add_for_sentence(sentence, {fields[1], fields[2]});
    } else {
      throw std::runtime_error("dictionary " + path + " line " + std::to_string(line_no) +
                               ": expected 2 or 3 tab-separated fields");
    }
  }
  return d;
}

void Dictionary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write dictionary: " + path);
  }
  for (const auto& e : global_) {
    os << e.source << '\t' << e.target << '\n';
  }
  for (const auto& [sentence, entries] : per_sentence_) {
    for (const auto& e : entries) {
      os << sentence << '\t' << e.source << '\t' << e.target << '\n';
    }
  }
}

Dictionary build_simulated_dictionary(
    const std::vector<std::vector<std::string>>& src_lines,
    const std::vector<std::vector<std::string>>& ref_lines,
    const std::vector<std::vector<int>>& paths,
    const std::vector<std::vector<std::string>>& baseline_lines,
    const StopWordList& stop_words, int max_entries) {
  if (src_lines.size() != ref_lines.size() || src_lines.size() != paths.size() ||
      src_lines.size() != baseline_lines.size()) {
    throw std::invalid_argument("build_simulated_dictionary: input sizes disagree");
  }
  Dictionary dict;
  for (std::size_t s = 0; s < src_lines.size(); ++s) {
    const auto& src = src_lines[s];
    const auto& ref = ref_lines[s];
    const auto& path = paths[s];
    if (path.size() != ref.size()) {
      throw std::invalid_argument("build_simulated_dictionary: path length mismatch at sentence " +
                                  std::to_string(s));
    }
    std::unordered_set<std::string> baseline_words;
    for (const auto& w : baseline_lines[s]) baseline_words.insert(lowercase(w));

    // fan-out per source position under the gold path
    std::vector<int> linked_count(src.size(), 0);
    for (int b : path) {
      if (b < 0 || static_cast<std::size_t>(b) >= src.size()) {
        throw std::invalid_argument("build_simulated_dictionary: path out of bounds at sentence " +
                                    std::to_string(s));
      }
      linked_count[static_cast<std::size_t>(b)] += 1;
    }

    std::unordered_set<std::string> used_sources;
    int kept = 0;
    for (std::size_t j = 0; j < src.size() && kept < max_entries; ++j) {
      if (linked_count[j] != 1) continue;  // one-to-one only
      // the single target word generated from this source position
      std::size_t ti = 0;
      for (; ti < path.size(); ++ti) {
        if (path[ti] == static_cast<int>(j)) break;
      }
      const std::string& suggestion = ref[ti];
      if (stop_words.contains(suggestion)) continue;
      if (baseline_words.count(lowercase(suggestion))) continue;
      if (!used_sources.insert(src[j]).second) continue;
      dict.add_for_sentence(static_cast<int>(s), {src[j], suggestion});
      ++kept;
    }
  }
  return dict;
}

}  // namespace anmt
