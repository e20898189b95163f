#include "anmt/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace anmt {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<s>");
  add("</s>");
  add("<unk>");
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t max_size) {
  if (corpus.empty()) {
    throw std::invalid_argument("build_vocab: empty corpus");
  }
  if (max_size < kReserved) {
    throw std::invalid_argument("build_vocab: max_size must be at least " +
                                std::to_string(kReserved));
  }
  // map keeps candidates in lexicographic order, which settles frequency ties
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (const auto& tok : line) counts[tok] += 1;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  const std::size_t budget = max_size - kReserved;
  for (std::size_t i = 0; i < ranked.size() && i < budget; ++i) {
    v.add(ranked[i].first);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open vocabulary: " + path);
  }
  Vocabulary v;
  std::string line;
  int index = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (index < kReserved) {
      if (line != v.tokens_[index]) {
        throw std::runtime_error("vocabulary " + path + " line " + std::to_string(index + 1) +
                                 ": expected reserved token '" + v.tokens_[index] + "'");
      }
    } else {
      if (v.ids_.count(line)) {
        throw std::runtime_error("vocabulary " + path + ": duplicate token '" + line + "'");
      }
      v.add(line);
    }
    ++index;
  }
  if (index < kReserved) {
    throw std::runtime_error("vocabulary " + path + ": missing reserved tokens");
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write vocabulary: " + path);
  }
  for (const auto& t : tokens_) os << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) != 0; }

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void validate_pair(const AlignedSentencePair& pair) {
  if (pair.source.empty() || pair.target.empty()) {
    throw std::invalid_argument("sentence pair: empty source or target");
  }
  if (pair.target.back() != Vocabulary::kEos) {
    throw std::invalid_argument("sentence pair: target must end in the sentence-end token");
  }
  if (pair.path.size() != pair.target.size()) {
    throw std::invalid_argument("sentence pair: path length " + std::to_string(pair.path.size()) +
                                " does not match target length " +
                                std::to_string(pair.target.size()));
  }
  for (int b : pair.path) {
    if (b < 0 || static_cast<std::size_t>(b) >= pair.source.size()) {
      throw std::invalid_argument("sentence pair: path position " + std::to_string(b) +
                                  " outside source of length " +
                                  std::to_string(pair.source.size()));
    }
  }
}

std::vector<AlignmentLink> parse_pharaoh(const std::string& line, int source_len, int target_len,
                                         int line_no) {
  const std::string where = "alignment line " + std::to_string(line_no);
  std::vector<AlignmentLink> links;
  std::istringstream is(line);
  std::string item;
  while (is >> item) {
    const auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size()) {
      throw std::runtime_error(where + ": malformed pair '" + item + "'");
    }
    int s = 0, t = 0;
    try {
      std::size_t used_s = 0, used_t = 0;
      s = std::stoi(item.substr(0, dash), &used_s);
      t = std::stoi(item.substr(dash + 1), &used_t);
      if (used_s != dash || used_t != item.size() - dash - 1) {
        throw std::invalid_argument("trailing characters");
      }
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": malformed pair '" + item + "'");
    }
    if (s < 0 || t < 0) {
      throw std::runtime_error(where + ": negative index in '" + item + "'");
    }
    if (s >= source_len) {
      throw std::runtime_error(where + ": source index " + std::to_string(s + 1) +
                               " exceeds source length " + std::to_string(source_len));
    }
    if (t >= target_len) {
      throw std::runtime_error(where + ": target index " + std::to_string(t + 1) +
                               " exceeds target length " + std::to_string(target_len));
    }
    links.emplace_back(s, t);
  }
  return links;
}

std::vector<int> resolve_alignment(const std::vector<AlignmentLink>& links, int source_len,
                                   int target_len) {
  if (source_len < 1 || target_len < 1) {
    throw std::invalid_argument("resolve_alignment: lengths must be positive");
  }
  std::vector<int> best(static_cast<std::size_t>(target_len), -1);
  for (const auto& [s, t] : links) {
    if (s < 0 || s >= source_len || t < 0 || t >= target_len) {
      throw std::invalid_argument("resolve_alignment: link out of bounds");
    }
    if (best[static_cast<std::size_t>(t)] < 0 || s < best[static_cast<std::size_t>(t)]) {
      best[static_cast<std::size_t>(t)] = s;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(target_len));
  int carry = 0;  // first-position default
  for (int i = 0; i < target_len; ++i) {
    if (best[static_cast<std::size_t>(i)] >= 0) {
      carry = best[static_cast<std::size_t>(i)];
    }
    path[static_cast<std::size_t>(i)] = carry;
  }
  path[static_cast<std::size_t>(target_len - 1)] = source_len - 1;  // sentence end
  return path;
}

std::vector<int> compute_jumps(const std::vector<int>& path, int window) {
  if (window < 1) {
    throw std::invalid_argument("compute_jumps: window must be at least 1");
  }
  std::vector<int> jumps;
  jumps.reserve(path.size());
  int prev = -1;  // virtual origin one step before the first source position
  for (int b : path) {
    int d = b - prev;
    d = std::max(-window, std::min(window, d));
    jumps.push_back(d);
    prev = b;
  }
  return jumps;
}

int jump_class(int delta, int window) {
  if (delta < -window || delta > window) {
    throw std::out_of_range("jump_class: delta " + std::to_string(delta) +
                            " outside window " + std::to_string(window));
  }
  return delta + window;
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

StopWordList StopWordList::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open stop word list: " + path);
  }
  StopWordList list;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) list.insert(line);
  }
  return list;
}

void StopWordList::insert(const std::string& word) { words_.insert(lowercase(word)); }

bool StopWordList::contains(const std::string& word) const {
  return words_.count(lowercase(word)) != 0;
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open corpus file: " + path);
  }
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    lines.push_back(std::move(toks));
  }
  return lines;
}

void write_token_lines(const std::string& path,
                       const std::vector<std::vector<std::string>>& lines) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write corpus file: " + path);
  }
  for (const auto& toks : lines) {
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) os << ' ';
      os << toks[i];
    }
    os << '\n';
  }
}

std::vector<AlignedSentencePair> load_corpus(const std::string& src_path,
                                             const std::string& trg_path,
                                             const std::string& align_path,
                                             const Vocabulary& src_vocab,
                                             const Vocabulary& trg_vocab) {
  const auto src_lines = read_token_lines(src_path);
  const auto trg_lines = read_token_lines(trg_path);
  if (src_lines.size() != trg_lines.size()) {
    throw std::runtime_error("corpus line count mismatch: " + src_path + " has " +
                             std::to_string(src_lines.size()) + " lines, " + trg_path + " has " +
                             std::to_string(trg_lines.size()));
  }
  std::vector<std::string> align_lines;
  if (!align_path.empty()) {
    std::ifstream is(align_path);
    if (!is) {
      throw std::runtime_error("cannot open alignment file: " + align_path);
    }
    std::string line;
    while (std::getline(is, line)) align_lines.push_back(line);
    if (align_lines.size() != src_lines.size()) {
      throw std::runtime_error("alignment line count mismatch: " + align_path);
    }
  }
  std::vector<AlignedSentencePair> pairs;
  pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    if (src_lines[i].empty() || trg_lines[i].empty()) {
      throw std::runtime_error("empty sentence at line " + std::to_string(i + 1));
    }
    AlignedSentencePair p;
    p.source = src_vocab.encode(src_lines[i]);
    p.target = trg_vocab.encode(trg_lines[i]);
    p.target.push_back(Vocabulary::kEos);
    if (!align_path.empty()) {
      const int source_len = static_cast<int>(p.source.size());
      const int target_len = static_cast<int>(p.target.size());
      const auto links = parse_pharaoh(align_lines[i], source_len, target_len,
                                       static_cast<int>(i + 1));
      p.path = resolve_alignment(links, source_len, target_len);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace anmt
