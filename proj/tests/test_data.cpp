#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "anmt/data.hpp"
#include "anmt/dictionary.hpp"
#include "anmt/rng.hpp"
#include "anmt/toy_corpus.hpp"

using namespace anmt;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("vocabulary keeps most frequent tokens with lexicographic ties") {
  const std::vector<std::vector<std::string>> corpus = {{"a", "a", "b"}};
  auto v = Vocabulary::build(corpus, 10);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK(v.id("a") == Vocabulary::kReserved);  // most frequent right after reserved ids

  // capacity for exactly one corpus token
  auto tight = Vocabulary::build(corpus, Vocabulary::kReserved + 1);
  CHECK(tight.contains("a"));
  CHECK_FALSE(tight.contains("b"));
  CHECK(tight.id("b") == Vocabulary::kUnk);

  // tie broken lexicographically: "a" wins over "b" at equal counts
  auto tie = Vocabulary::build({{"b", "b", "a", "a"}}, Vocabulary::kReserved + 1);
  CHECK(tie.contains("a"));
  CHECK_FALSE(tie.contains("b"));
}

TEST_CASE("vocabulary rejects an empty corpus") {
  CHECK_THROWS_AS(Vocabulary::build({}, 10), std::invalid_argument);
}

TEST_CASE("vocabulary round-trips through its file format") {
  auto v = Vocabulary::build({{"walk", "the", "dog", "the"}}, 32);
  const auto path = temp_file("anmt_vocab_test.txt");
  v.save(path.string());
  auto loaded = Vocabulary::load(path.string());
  CHECK(loaded.size() == v.size());
  for (int id = 0; id < static_cast<int>(v.size()); ++id) {
    CHECK(loaded.token(id) == v.token(id));
  }
  std::filesystem::remove(path);
}

TEST_CASE("encoding then decoding reproduces in-vocabulary tokens") {
  ToyCorpusSpec spec;
  spec.vocab_size = 20;
  spec.sentences = 30;
  spec.seed = 5;
  auto corpus = synthesize_toy_corpus(spec);
  std::vector<std::vector<std::string>> src;
  for (const auto& s : corpus.sentences) src.push_back(s.source);
  auto v = Vocabulary::build(src, 64);
  for (const auto& line : src) {
    CHECK(v.decode(v.encode(line)) == line);
  }
}

TEST_CASE("pharaoh parsing") {
  auto links = parse_pharaoh("0-0 1-1", 2, 2, 1);
  REQUIRE(links.size() == 2);
  CHECK(links[0] == AlignmentLink{0, 0});
  CHECK(links[1] == AlignmentLink{1, 1});

  CHECK(parse_pharaoh("", 5, 5, 2).empty());

  // source index out of bounds (0-based 2 means the third position)
  CHECK_THROWS_WITH_AS(parse_pharaoh("2-0", 2, 3, 7), doctest::Contains("line 7"),
                       std::runtime_error);
  CHECK_THROWS_AS(parse_pharaoh("x-0", 2, 2, 1), std::runtime_error);
  CHECK_THROWS_AS(parse_pharaoh("1-", 2, 2, 1), std::runtime_error);
  CHECK_THROWS_AS(parse_pharaoh("0-0-1", 2, 2, 1), std::runtime_error);
}

TEST_CASE("alignment resolution rules") {
  // monotone links, sentence-end position forced to the last source token
  auto path = resolve_alignment({{0, 0}, {1, 1}}, 2, 3);
  CHECK(path == std::vector<int>{0, 1, 1});

  // unaligned target carries the previous position forward
  auto carry = resolve_alignment({{2, 0}}, 4, 3);
  CHECK(carry[0] == 2);
  CHECK(carry[1] == 2);

  // unaligned sentence start defaults to the first source position
  auto start = resolve_alignment({{3, 1}}, 4, 3);
  CHECK(start[0] == 0);
  CHECK(start[1] == 3);

  // multiply-linked target takes the smallest source index
  auto multi = resolve_alignment({{3, 0}, {1, 0}}, 4, 2);
  CHECK(multi[0] == 1);
}

TEST_CASE("alignment resolution is total over random link sets") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int J = 1 + static_cast<int>(rng.below(8));
    const int I = 1 + static_cast<int>(rng.below(8));
    std::vector<AlignmentLink> links;
    const int n = static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) {
      links.emplace_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(J))),
                         static_cast<int>(rng.below(static_cast<std::uint64_t>(I))));
    }
    auto path = resolve_alignment(links, J, I);
    REQUIRE(static_cast<int>(path.size()) == I);
    for (int b : path) {
      CHECK(b >= 0);
      CHECK(b < J);
    }
    CHECK(path.back() == J - 1);
  }
}

TEST_CASE("jump computation and clamping") {
  // 1-based positions 2 and 5 are 0-based 1 and 4; the virtual origin makes
  // the first jump equal the 1-based first position
  CHECK(compute_jumps({1, 4}, 16) == std::vector<int>{2, 3});
  CHECK(compute_jumps({2, 2}, 16) == std::vector<int>{3, 0});
  // clamping into the extreme bin
  auto clamped = compute_jumps({0, 149}, 100);
  CHECK(clamped[1] == 100);
  auto down = compute_jumps({149, 0}, 100);
  CHECK(down[1] == -100);
}

TEST_CASE("jumps reconstruct the path when nothing clamps") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int J = 1 + static_cast<int>(rng.below(30));
    const int I = 1 + static_cast<int>(rng.below(10));
    std::vector<int> path(static_cast<std::size_t>(I));
    for (auto& b : path) b = static_cast<int>(rng.below(static_cast<std::uint64_t>(J)));
    const int window = J + 1;  // wide enough that no jump clamps
    auto jumps = compute_jumps(path, window);
    int pos = -1;
    for (std::size_t i = 0; i < jumps.size(); ++i) {
      pos += jumps[i];
      CHECK(pos == path[i]);
    }
  }
}

TEST_CASE("jump_class maps deltas to class indices") {
  CHECK(jump_class(0, 4) == 4);
  CHECK(jump_class(-4, 4) == 0);
  CHECK(jump_class(4, 4) == 8);
  CHECK_THROWS_AS(jump_class(5, 4), std::out_of_range);
}

TEST_CASE("stop words are case-insensitive") {
  StopWordList stops;
  stops.insert("The");
  CHECK(stops.contains("the"));
  CHECK(stops.contains("THE"));
  CHECK_FALSE(stops.contains("dog"));
}

TEST_CASE("simulated dictionary respects the selection rules") {
  // one sentence; gold path aligns word i to position i
  const std::vector<std::vector<std::string>> src = {{"s1", "s2", "s3", "s4", "s5", "s6"}};
  const std::vector<std::vector<std::string>> ref = {{"t1", "the", "t3", "t4", "t5", "t6"}};
  const std::vector<std::vector<int>> paths = {{0, 1, 2, 3, 4, 5}};
  StopWordList stops;
  stops.insert("the");

  SUBCASE("baseline words and stop words are excluded") {
    // t3 appears in the baseline translation, so s3 yields no entry
    const std::vector<std::vector<std::string>> baseline = {{"t3", "x"}};
    auto dict = build_simulated_dictionary(src, ref, paths, baseline, stops, 4);
    auto entries = dict.entries_for(0);
    REQUIRE(entries.size() == 4);
    for (const auto& e : entries) {
      CHECK(e.target != "the");
      CHECK(e.target != "t3");
    }
    // first four eligible in source order: s1, s4, s5, s6
    CHECK(entries[0].source == "s1");
    CHECK(entries[1].source == "s4");
    CHECK(entries[2].source == "s5");
    CHECK(entries[3].source == "s6");
  }

  SUBCASE("cap of four entries in source order") {
    const std::vector<std::vector<std::string>> baseline = {{"nothing"}};
    auto dict = build_simulated_dictionary(src, ref, paths, baseline, stops, 4);
    CHECK(dict.entries_for(0).size() == 4);
  }

  SUBCASE("non one-to-one source words are excluded") {
    // both target words map to source position 0
    const std::vector<std::vector<std::string>> src2 = {{"s1", "s2"}};
    const std::vector<std::vector<std::string>> ref2 = {{"t1", "t2"}};
    const std::vector<std::vector<int>> paths2 = {{0, 0}};
    const std::vector<std::vector<std::string>> baseline2 = {{"zzz"}};
    auto dict = build_simulated_dictionary(src2, ref2, paths2, baseline2, stops, 4);
    CHECK(dict.entries_for(0).empty());
  }
}

TEST_CASE("dictionary file round-trip with per-sentence entries") {
  Dictionary d;
  d.add_global({"haus", "house"});
  d.add_for_sentence(3, {"hund", "dog"});
  const auto path = temp_file("anmt_dict_test.tsv");
  d.save(path.string());
  auto loaded = Dictionary::load(path.string());
  CHECK(loaded.entries_for(0).size() == 1);
  auto e3 = loaded.entries_for(3);
  REQUIRE(e3.size() == 2);
  CHECK(e3[0].source == "haus");
  CHECK(e3[1].target == "dog");
  std::filesystem::remove(path);
}

TEST_CASE("toy corpus basic contracts") {
  ToyCorpusSpec spec;
  spec.vocab_size = 30;
  spec.sentences = 50;
  spec.seed = 11;

  SUBCASE("window zero gives the identity-monotone path") {
    spec.reorder_window = 0;
    auto corpus = synthesize_toy_corpus(spec);
    for (const auto& s : corpus.sentences) {
      for (std::size_t i = 0; i < s.path.size(); ++i) {
        CHECK(s.path[i] == static_cast<int>(i));
      }
    }
  }

  SUBCASE("homonym rate zero is a token-wise relabeling") {
    spec.homonym_rate = 0.0;
    spec.reorder_window = 0;
    auto corpus = synthesize_toy_corpus(spec);
    for (const auto& s : corpus.sentences) {
      REQUIRE(s.target.size() == s.source.size());
      for (std::size_t i = 0; i < s.source.size(); ++i) {
        CHECK(s.target[i] == "t" + s.source[i].substr(1));
      }
    }
  }

  SUBCASE("fixed seed reproduces the corpus byte for byte") {
    spec.reorder_window = 2;
    spec.homonym_rate = 0.3;
    auto a = synthesize_toy_corpus(spec);
    auto b = synthesize_toy_corpus(spec);
    REQUIRE(a.sentences.size() == b.sentences.size());
    for (std::size_t i = 0; i < a.sentences.size(); ++i) {
      CHECK(a.sentences[i].source == b.sentences[i].source);
      CHECK(a.sentences[i].target == b.sentences[i].target);
      CHECK(a.sentences[i].path == b.sentences[i].path);
    }
  }

  SUBCASE("reorder displacement never exceeds the window") {
    spec.reorder_window = 2;
    auto corpus = synthesize_toy_corpus(spec);
    bool any_moved = false;
    for (const auto& s : corpus.sentences) {
      for (std::size_t i = 0; i < s.path.size(); ++i) {
        const int disp = std::abs(s.path[i] - static_cast<int>(i));
        CHECK(disp <= 2);
        any_moved = any_moved || disp > 0;
      }
    }
    CHECK(any_moved);
  }

  SUBCASE("invalid settings are rejected") {
    ToyCorpusSpec bad = spec;
    bad.min_len = 0;
    CHECK_THROWS_AS(synthesize_toy_corpus(bad), std::invalid_argument);
    bad = spec;
    bad.max_len = bad.vocab_size + 1;
    CHECK_THROWS_AS(synthesize_toy_corpus(bad), std::invalid_argument);
    bad = spec;
    bad.reorder_window = bad.max_len;
    CHECK_THROWS_AS(synthesize_toy_corpus(bad), std::invalid_argument);
  }
}

TEST_CASE("toy corpus files load back into consistent aligned pairs") {
  ToyCorpusSpec spec;
  spec.vocab_size = 25;
  spec.sentences = 40;
  spec.reorder_window = 2;
  spec.homonym_rate = 0.2;
  spec.seed = 3;
  auto corpus = synthesize_toy_corpus(spec);
  const auto dir = std::filesystem::temp_directory_path() / "anmt_toy_test";
  std::filesystem::create_directories(dir);
  const std::string prefix = (dir / "train").string();
  write_toy_corpus(corpus, prefix);

  std::vector<std::vector<std::string>> src, trg;
  for (const auto& s : corpus.sentences) {
    src.push_back(s.source);
    trg.push_back(s.target);
  }
  auto sv = Vocabulary::build(src, 128);
  auto tv = Vocabulary::build(trg, 128);
  auto pairs = load_corpus(prefix + ".src", prefix + ".trg", prefix + ".align", sv, tv);
  REQUIRE(pairs.size() == corpus.sentences.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    validate_pair(pairs[i]);
    CHECK(pairs[i].target.back() == Vocabulary::kEos);
    // resolved path matches the gold one on real words and ends at the last
    // source position for the sentence-end token
    const auto& gold = corpus.sentences[i].path;
    REQUIRE(pairs[i].path.size() == gold.size() + 1);
    for (std::size_t t = 0; t < gold.size(); ++t) {
      CHECK(pairs[i].path[t] == gold[t]);
    }
    CHECK(pairs[i].path.back() == static_cast<int>(pairs[i].source.size()) - 1);
  }
  std::filesystem::remove_all(dir);
}
