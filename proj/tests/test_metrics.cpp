#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "anmt/metrics.hpp"
#include "anmt/rng.hpp"
#include "support/mock_scorers.hpp"

using namespace anmt;
using namespace anmt::testsupport;

namespace {

std::vector<std::vector<std::string>> lines(std::initializer_list<std::string> sentences) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : s) {
      if (c == ' ') {
        if (!cur.empty()) toks.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) toks.push_back(cur);
    out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace

TEST_CASE("bleu basics") {
  SUBCASE("identity scores 100") {
    auto h = lines({"the cat sat on the mat", "a b c d"});
    CHECK(corpus_bleu(h, h).bleu == doctest::Approx(100.0));
  }
  SUBCASE("zero unigram overlap scores exactly 0") {
    auto h = lines({"x y z w"});
    auto r = lines({"a b c d"});
    CHECK(corpus_bleu(h, r).bleu == 0.0);
  }
  SUBCASE("hand-computed clipped precisions") {
    auto h = lines({"a b c d e"});
    auto r = lines({"a b c d f"});
    const auto report = corpus_bleu(h, r);
    CHECK(report.precisions[0] == doctest::Approx(4.0 / 5.0));
    CHECK(report.precisions[1] == doctest::Approx(3.0 / 4.0));
    CHECK(report.precisions[2] == doctest::Approx(2.0 / 3.0));
    CHECK(report.precisions[3] == doctest::Approx(1.0 / 2.0));
    CHECK(report.brevity_penalty == doctest::Approx(1.0));
    const double expected =
        100.0 * std::pow((4.0 / 5.0) * (3.0 / 4.0) * (2.0 / 3.0) * (1.0 / 2.0), 0.25);
    CHECK(report.bleu == doctest::Approx(expected).epsilon(1e-9));
    CHECK(report.bleu == doctest::Approx(66.874).epsilon(1e-3));
  }
  SUBCASE("case differences do not change the score") {
    auto h = lines({"The Cat SAT"});
    auto h2 = lines({"the cat sat"});
    auto r = lines({"the cat sat"});
    CHECK(corpus_bleu(h, r).bleu == corpus_bleu(h2, r).bleu);
    CHECK(corpus_bleu(h, r).bleu == doctest::Approx(100.0));
  }
  SUBCASE("clipping caps repeated tokens") {
    auto h = lines({"the the the the"});
    auto r = lines({"the cat"});
    const auto report = corpus_bleu(h, r);
    CHECK(report.precisions[0] == doctest::Approx(1.0 / 4.0));
  }
  SUBCASE("brevity penalty for short hypotheses") {
    auto h = lines({"a b"});
    auto r = lines({"a b c d"});
    const auto report = corpus_bleu(h, r);
    CHECK(report.brevity_penalty == doctest::Approx(std::exp(1.0 - 4.0 / 2.0)));
  }
  SUBCASE("line count mismatch is an input error") {
    CHECK_THROWS_AS(corpus_bleu(lines({"a"}), lines({"a", "b"})), std::invalid_argument);
  }
  SUBCASE("reordering tokens never raises higher-order precisions above identity") {
    auto ref = lines({"a b c d e f"});
    auto ident = corpus_bleu(ref, ref);
    Rng rng(5);
    auto shuffled = ref;
    for (int trial = 0; trial < 50; ++trial) {
      auto& toks = shuffled[0];
      for (std::size_t i = toks.size(); i > 1; --i) {
        std::swap(toks[i - 1], toks[rng.below(i)]);
      }
      const auto rep = corpus_bleu(shuffled, ref);
      for (int n = 1; n < 4; ++n) {
        CHECK(rep.precisions[static_cast<std::size_t>(n)] <=
              ident.precisions[static_cast<std::size_t>(n)] + 1e-12);
      }
    }
  }
}

TEST_CASE("alignment accuracy") {
  CHECK(alignment_accuracy({{0, 1, 2}}, {{0, 1, 2}}) == doctest::Approx(1.0));
  CHECK(alignment_accuracy({{3}}, {{1}}) == doctest::Approx(0.0));
  CHECK(alignment_accuracy({{0, 1, 2, 3}}, {{0, 1, 2, 0}}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(alignment_accuracy({{0, 1}}, {{0}}), std::invalid_argument);

  // lenient aggregate penalizes the length difference
  CHECK(alignment_accuracy_lenient({{0, 1}}, {{0, 1, 5, 6}}) == doctest::Approx(0.5));
}

TEST_CASE("prune benchmark threshold-zero row is the identity") {
  struct Factory : ScorerFactory {
    std::unique_ptr<LexicalScorer> make_lexical(const std::vector<int>& src) const override {
      return std::make_unique<MockLexicalScorer>(5, 7, static_cast<int>(src.size()), true, 3);
    }
    std::unique_ptr<AlignmentScorer> make_alignment(const std::vector<int>& src) const override {
      return std::make_unique<MockAlignmentScorer>(11, static_cast<int>(src.size()));
    }
  };
  Factory factory;
  std::vector<std::vector<int>> sources;
  std::vector<std::vector<std::string>> refs;
  Vocabulary vocab = Vocabulary::build({{"w0", "w1", "w2"}}, 16);
  for (int s = 0; s < 10; ++s) {
    sources.push_back(std::vector<int>(static_cast<std::size_t>(2 + s % 3), 4));
    refs.push_back({"w0", "w1"});
  }
  DecodeConfig cfg;
  cfg.beam_size = 2;

  // note: 0 must be inserted even when missing from the list
  auto report = prune_benchmark(factory, sources, refs, vocab, cfg, {0.4, 0.1}, 1);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].threshold == 0.0);
  CHECK(report.rows[0].reduction_factor == doctest::Approx(1.0));

  // the threshold-0 row reproduces the plain decoder byte for byte
  DecodeConfig zero = cfg;
  zero.threshold = 0.0;
  auto plain = translate_corpus(factory, sources, zero, nullptr, 1);
  REQUIRE(plain.size() == report.baseline_translations.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(result_tokens(plain[i], vocab) == report.baseline_translations[i]);
  }
  CHECK(report.rows[0].bleu ==
        corpus_bleu(report.baseline_translations, refs).bleu);

  // pruning can only reduce evaluation counts
  for (const auto& row : report.rows) {
    CHECK(row.lexical_evaluations <= report.rows[0].lexical_evaluations);
    CHECK(row.reduction_factor >= 1.0);
  }
}

TEST_CASE("machine-readable report format") {
  PruneBenchReport r;
  PruneBenchRow row;
  row.threshold = 0.1;
  row.lexical_evaluations = 42;
  row.fallback_steps = 2;
  row.bleu = 93.5;
  row.reduction_factor = 1.5;
  r.rows.push_back(row);
  const auto text = machine_prune_report(r);
  CHECK(text.find("lex_evals\t0.1\t42\n") != std::string::npos);
  CHECK(text.find("bleu\t0.1\t93.5\n") != std::string::npos);
  CHECK(text.find("fallback_steps\t0.1\t2\n") != std::string::npos);
}
