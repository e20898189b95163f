#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "anmt/cli.hpp"
#include "anmt/manifest.hpp"

using namespace anmt;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("anmt_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(std::initializer_list<std::string> args) {
  return run_command(std::vector<std::string>(args));
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int count_lines(const std::string& path) {
  std::ifstream is(path);
  int n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("unknown subcommands and flags give usage errors") {
  CHECK(run({"no-such-command"}) != 0);
  CHECK(run({"synth-corpus", "--bogus-flag", "1"}) != 0);
  CHECK(run({}) != 0);
}

TEST_CASE("missing files are reported by name") {
  CHECK(run({"evaluate-bleu", "--hyp", "/nonexistent/h.txt", "--ref", "/nonexistent/r.txt"}) != 0);
}

TEST_CASE("full pipeline at miniature scale") {
  Workspace ws;
  const std::string corpus = ws.path("corpus");

  REQUIRE(run({"synth-corpus", "--out", corpus, "--vocab", "12", "--train", "60", "--dev", "12",
               "--test", "12", "--min-len", "3", "--max-len", "5", "--reorder-window", "1",
               "--seed", "5"}) == 0);
  CHECK(count_lines(corpus + "/train.src") == 60);
  CHECK(count_lines(corpus + "/test.trg") == 12);
  CHECK(fs::exists(corpus + "/manifest.json"));

  SUBCASE("same seed reproduces the corpus byte for byte") {
    const std::string again = ws.path("corpus2");
    REQUIRE(run({"synth-corpus", "--out", again, "--vocab", "12", "--train", "60", "--dev", "12",
                 "--test", "12", "--min-len", "3", "--max-len", "5", "--reorder-window", "1",
                 "--seed", "5"}) == 0);
    CHECK(slurp(corpus + "/train.src") == slurp(again + "/train.src"));
    CHECK(slurp(corpus + "/train.align") == slurp(again + "/train.align"));
  }

  REQUIRE(run({"build-vocab", "--input", corpus + "/train.src", "--max-size", "64", "--out",
               ws.path("src.vocab")}) == 0);
  REQUIRE(run({"build-vocab", "--input", corpus + "/train.trg", "--max-size", "64", "--out",
               ws.path("trg.vocab")}) == 0);

  REQUIRE(run({"train-baseline", "--train-src", corpus + "/train.src", "--train-trg",
               corpus + "/train.trg", "--dev-src", corpus + "/dev.src", "--dev-trg",
               corpus + "/dev.trg", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
               ws.path("trg.vocab"), "--out", ws.path("baseline.ckpt"), "--d-model", "16",
               "--heads", "2", "--enc-layers", "1", "--dec-layers", "1", "--d-ff", "24",
               "--epochs", "2", "--batch", "8", "--seed", "3"}) == 0);
  REQUIRE(fs::exists(ws.path("baseline.ckpt")));

  SUBCASE("baseline translate, threshold spelling equivalence and replay") {
    REQUIRE(run({"translate", "--model", ws.path("baseline.ckpt"), "--input",
                 corpus + "/test.src", "--output", ws.path("out_a.txt"), "--src-vocab",
                 ws.path("src.vocab"), "--trg-vocab", ws.path("trg.vocab"), "--beam", "2",
                 "--threshold", "0"}) == 0);
    REQUIRE(run({"translate", "--model", ws.path("baseline.ckpt"), "--input",
                 corpus + "/test.src", "--output", ws.path("out_b.txt"), "--src-vocab",
                 ws.path("src.vocab"), "--trg-vocab", ws.path("trg.vocab"), "--beam", "2",
                 "--threshold", "0.0"}) == 0);
    CHECK(slurp(ws.path("out_a.txt")) == slurp(ws.path("out_b.txt")));
    CHECK(count_lines(ws.path("out_a.txt")) == 12);

    // replaying the manifest reproduces the artifact byte for byte
    const std::string before = slurp(ws.path("out_a.txt"));
    REQUIRE(fs::exists(ws.path("out_a.txt.manifest.json")));
    REQUIRE(run({"replay", "--manifest", ws.path("out_a.txt.manifest.json")}) == 0);
    CHECK(slurp(ws.path("out_a.txt")) == before);
  }

  SUBCASE("train-aligned requires an initialization choice") {
    CHECK(run({"train-aligned", "--train-src", corpus + "/train.src", "--train-trg",
               corpus + "/train.trg", "--train-align", corpus + "/train.align", "--dev-src",
               corpus + "/dev.src", "--dev-trg", corpus + "/dev.trg", "--dev-align",
               corpus + "/dev.align", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
               ws.path("trg.vocab"), "--out", ws.path("aligned.ckpt"), "--epochs", "1"}) != 0);
  }

  SUBCASE("aligned pipeline with attention dumps and extraction") {
    REQUIRE(run({"train-aligned", "--train-src", corpus + "/train.src", "--train-trg",
                 corpus + "/train.trg", "--train-align", corpus + "/train.align", "--dev-src",
                 corpus + "/dev.src", "--dev-trg", corpus + "/dev.trg", "--dev-align",
                 corpus + "/dev.align", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--out", ws.path("aligned.ckpt"), "--init-from",
                 ws.path("baseline.ckpt"), "--epochs", "1", "--batch", "8", "--seed", "3"}) == 0);
    REQUIRE(run({"train-alignment-model", "--train-src", corpus + "/train.src", "--train-trg",
                 corpus + "/train.trg", "--train-align", corpus + "/train.align", "--dev-src",
                 corpus + "/dev.src", "--dev-trg", corpus + "/dev.trg", "--dev-align",
                 corpus + "/dev.align", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--out", ws.path("jump.ckpt"), "--window", "4",
                 "--d-model", "16", "--heads", "2", "--enc-layers", "1", "--dec-layers", "1",
                 "--d-ff", "24", "--epochs", "2", "--batch", "8", "--seed", "4"}) == 0);

    REQUIRE(run({"translate", "--model", ws.path("aligned.ckpt"), "--align-model",
                 ws.path("jump.ckpt"), "--input", corpus + "/test.src", "--output",
                 ws.path("out.txt"), "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--beam", "2", "--threshold", "0.1", "--dump-attention",
                 ws.path("att.bin"), "--dump-alignment", ws.path("paths.align")}) == 0);
    CHECK(count_lines(ws.path("out.txt")) == 12);
    CHECK(fs::exists(ws.path("att.bin")));
    CHECK(count_lines(ws.path("paths.align")) == 12);

    REQUIRE(run({"extract-alignments", "--attention", ws.path("att.bin"), "--mode", "baseline",
                 "--hyp", ws.path("out.txt"), "--src", corpus + "/test.src", "--out",
                 ws.path("extracted_base.align")}) == 0);
    REQUIRE(run({"extract-alignments", "--attention", ws.path("att.bin"), "--mode", "assisted",
                 "--paths", ws.path("paths.align"), "--hyp", ws.path("out.txt"), "--src",
                 corpus + "/test.src", "--out", ws.path("extracted_assisted.align")}) == 0);
    CHECK(count_lines(ws.path("extracted_base.align")) == 12);

    REQUIRE(run({"align-accuracy", "--pred", ws.path("extracted_assisted.align"), "--gold",
                 corpus + "/test.align", "--hyp", ws.path("out.txt"), "--ref",
                 corpus + "/test.trg", "--src", corpus + "/test.src"}) == 0);

    // guided decoding needs a dictionary
    CHECK(run({"translate-guided", "--model", ws.path("aligned.ckpt"), "--align-model",
               ws.path("jump.ckpt"), "--input", corpus + "/test.src", "--output",
               ws.path("guided.txt"), "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
               ws.path("trg.vocab")}) != 0);

    REQUIRE(run({"build-dictionary", "--src", corpus + "/test.src", "--ref", corpus + "/test.trg",
                 "--align", corpus + "/test.align", "--baseline-output", ws.path("out.txt"),
                 "--out", ws.path("dict.tsv")}) == 0);
    REQUIRE(run({"translate-guided", "--model", ws.path("aligned.ckpt"), "--align-model",
                 ws.path("jump.ckpt"), "--input", corpus + "/test.src", "--output",
                 ws.path("guided.txt"), "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--dictionary", ws.path("dict.tsv")}) == 0);
    CHECK(count_lines(ws.path("guided.txt")) == 12);

    REQUIRE(run({"evaluate-bleu", "--hyp", ws.path("out.txt"), "--ref", corpus + "/test.trg"}) ==
            0);

    REQUIRE(run({"bench-prune", "--model", ws.path("aligned.ckpt"), "--align-model",
                 ws.path("jump.ckpt"), "--input", corpus + "/test.src", "--ref",
                 corpus + "/test.trg", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--thresholds", "0.1,0.5", "--out",
                 ws.path("bench.txt")}) == 0);
    CHECK(fs::exists(ws.path("bench.txt")));
    CHECK(fs::exists(ws.path("bench.txt.tsv")));
    const std::string tsv = slurp(ws.path("bench.txt.tsv"));
    CHECK(tsv.find("lex_evals\t0\t") != std::string::npos);  // threshold 0 auto-added
  }

  SUBCASE("config file values apply when flags are absent") {
    std::ofstream cfg(ws.path("train.cfg"));
    cfg << "# schedule\nepochs=1\nbatch=4\nd-model=16\nheads=2\nenc-layers=1\ndec-layers=1\n"
        << "d-ff=24\n";
    cfg.close();
    REQUIRE(run({"train-baseline", "--train-src", corpus + "/train.src", "--train-trg",
                 corpus + "/train.trg", "--dev-src", corpus + "/dev.src", "--dev-trg",
                 corpus + "/dev.trg", "--src-vocab", ws.path("src.vocab"), "--trg-vocab",
                 ws.path("trg.vocab"), "--out", ws.path("cfg.ckpt"), "--config",
                 ws.path("train.cfg"), "--seed", "3"}) == 0);
    const RunManifest m = RunManifest::from_json_file(ws.path("cfg.ckpt.manifest.json"));
    CHECK(m.config.at("epochs") == "1");
    CHECK(m.config.at("d_model") == "16");
  }
}
