#include "anmt/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "anmt/checkpoint.hpp"
#include "anmt/data.hpp"
#include "anmt/decoder.hpp"
#include "anmt/dictionary.hpp"
#include "anmt/manifest.hpp"
#include "anmt/metrics.hpp"
#include "anmt/model_meta.hpp"
#include "anmt/scorers.hpp"
#include "anmt/toy_corpus.hpp"
#include "anmt/trainer.hpp"

namespace anmt {

namespace {

using Real = float;  // training and decoding precision of the tool

// ---------------------------------------------------------------------------
// option plumbing

// line-based key=value training config file; flags given on the command line
// take precedence
std::map<std::string, std::string> read_kv_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open config file: " + path);
  }
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

struct TrainFlags {
  std::string train_src, train_trg, train_align;
  std::string dev_src, dev_trg, dev_align;
  std::string src_vocab, trg_vocab;
  std::string out;
  std::string config_file;
  // model
  int d_model{64}, heads{4}, enc_layers{2}, dec_layers{2}, d_ff{128}, max_len{256};
  double dropout{0.0};
  int window{16};
  // schedule
  int batch{16}, epochs{30}, patience{5}, checkpoint_every{0};
  std::int64_t max_updates{0};
  double lr{1e-3};
  std::uint64_t seed{1};
};

void add_model_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--d-model", f.d_model, "model width");
  cmd->add_option("--heads", f.heads, "attention heads");
  cmd->add_option("--enc-layers", f.enc_layers, "encoder layers");
  cmd->add_option("--dec-layers", f.dec_layers, "decoder layers");
  cmd->add_option("--d-ff", f.d_ff, "feed-forward width");
  cmd->add_option("--max-len", f.max_len, "maximum sequence length");
  cmd->add_option("--dropout", f.dropout, "dropout rate (training only)");
}

void add_schedule_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--batch", f.batch, "sentences per update");
  cmd->add_option("--epochs", f.epochs, "maximum epochs");
  cmd->add_option("--max-updates", f.max_updates, "optional cap on updates (0 = off)");
  cmd->add_option("--patience", f.patience, "early-stop patience in dev evaluations");
  cmd->add_option("--checkpoint-every", f.checkpoint_every,
                  "write a periodic checkpoint every N epochs (0 = off)");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--config", f.config_file, "key=value config file (flags override)");
}

// apply config-file values for options the user did not pass explicitly
void apply_kv_overrides(CLI::App* cmd, TrainFlags& f) {
  if (f.config_file.empty()) return;
  const auto kv = read_kv_config(f.config_file);
  auto set_if_default = [&](const char* flag, auto& target) {
    const auto it = kv.find(std::string(flag));
    if (it == kv.end()) return;
    if (cmd->count(std::string("--") + flag) > 0) return;
    std::istringstream is(it->second);
    is >> target;
    if (is.fail()) {
      throw std::runtime_error("config file: bad value for " + it->first);
    }
  };
  set_if_default("d-model", f.d_model);
  set_if_default("heads", f.heads);
  set_if_default("enc-layers", f.enc_layers);
  set_if_default("dec-layers", f.dec_layers);
  set_if_default("d-ff", f.d_ff);
  set_if_default("max-len", f.max_len);
  set_if_default("dropout", f.dropout);
  set_if_default("window", f.window);
  set_if_default("batch", f.batch);
  set_if_default("epochs", f.epochs);
  set_if_default("max-updates", f.max_updates);
  set_if_default("patience", f.patience);
  set_if_default("checkpoint-every", f.checkpoint_every);
  set_if_default("lr", f.lr);
  set_if_default("seed", f.seed);
}

TrainConfig schedule_of(const TrainFlags& f, const std::string& stage) {
  TrainConfig cfg;
  cfg.batch_size = f.batch;
  cfg.max_epochs = f.epochs;
  cfg.max_updates = f.max_updates;
  cfg.patience = f.patience;
  cfg.checkpoint_every = f.checkpoint_every;
  cfg.lr = f.lr;
  cfg.seed = f.seed;
  cfg.stage = stage;
  return cfg;
}

std::map<std::string, std::string> train_config_map(const TrainFlags& f,
                                                    const std::string& stage) {
  std::map<std::string, std::string> m;
  m["stage"] = stage;
  m["d_model"] = std::to_string(f.d_model);
  m["heads"] = std::to_string(f.heads);
  m["enc_layers"] = std::to_string(f.enc_layers);
  m["dec_layers"] = std::to_string(f.dec_layers);
  m["d_ff"] = std::to_string(f.d_ff);
  m["max_len"] = std::to_string(f.max_len);
  m["dropout"] = std::to_string(f.dropout);
  m["batch"] = std::to_string(f.batch);
  m["epochs"] = std::to_string(f.epochs);
  m["max_updates"] = std::to_string(f.max_updates);
  m["patience"] = std::to_string(f.patience);
  m["lr"] = std::to_string(f.lr);
  m["seed"] = std::to_string(f.seed);
  return m;
}

void digest_if_present(RunManifest& m, const std::string& path) {
  if (!path.empty()) m.input_digests[path] = fnv1a64_file(path);
}

void log_epoch(const EpochStats& s) {
  std::cout << "epoch " << s.epoch << "  train_loss " << s.train_loss << "  dev_ppl "
            << s.dev_ppl << "\n";
}

void record_train_log(RunManifest& m, const TrainResult& r) {
  std::ostringstream os;
  for (const auto& e : r.log) {
    os << e.epoch << ":" << e.train_loss << ":" << e.dev_ppl << ";";
  }
  m.metrics["epoch_log"] = os.str();
  m.metrics["best_dev_ppl"] = std::to_string(r.best_dev_ppl);
  m.metrics["best_epoch"] = std::to_string(r.best_epoch);
  m.metrics["updates"] = std::to_string(r.updates);
}

// ---------------------------------------------------------------------------
// checkpoint loading helpers

struct LoadedLexical {
  ParameterStore<Real> store;
  LexicalConfig config;
  std::unique_ptr<LexicalModel<Real>> model;
};

LoadedLexical load_lexical(const std::string& path) {
  LoadedLexical out;
  auto [store, info] = load_checkpoint<Real>(path);
  const auto meta = nlohmann::json::parse(info.meta);
  if (meta.value("component", "") != "lexical") {
    throw std::runtime_error(path + " is not a lexical model checkpoint");
  }
  out.store = std::move(store);
  out.config = lexical_config_from_json(meta.at("config"));
  out.model = std::make_unique<LexicalModel<Real>>(out.store, out.config, nullptr);
  return out;
}

struct LoadedAlignment {
  ParameterStore<Real> store;
  AlignmentConfig config;
  std::unique_ptr<AlignmentModel<Real>> model;
};

LoadedAlignment load_alignment(const std::string& path) {
  LoadedAlignment out;
  auto [store, info] = load_checkpoint<Real>(path);
  const auto meta = nlohmann::json::parse(info.meta);
  if (meta.value("component", "") != "alignment") {
    throw std::runtime_error(path + " is not an alignment model checkpoint");
  }
  out.store = std::move(store);
  out.config = alignment_config_from_json(meta.at("config"));
  out.model = std::make_unique<AlignmentModel<Real>>(out.store, out.config, nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_synth_corpus(const std::vector<std::string>& argv, const std::string& out_dir,
                     ToyCorpusSpec spec, int n_train, int n_dev, int n_test) {
  if (n_train < 1 || n_dev < 1 || n_test < 1) {
    throw std::runtime_error("synth-corpus: split sizes must be positive");
  }
  spec.sentences = n_train + n_dev + n_test;
  const ToyCorpus all = synthesize_toy_corpus(spec);
  std::filesystem::create_directories(out_dir);
  auto slice = [&](int begin, int end) {
    ToyCorpus c;
    c.sentences.assign(all.sentences.begin() + begin, all.sentences.begin() + end);
    return c;
  };
  write_toy_corpus(slice(0, n_train), out_dir + "/train");
  write_toy_corpus(slice(n_train, n_train + n_dev), out_dir + "/dev");
  write_toy_corpus(slice(n_train + n_dev, spec.sentences), out_dir + "/test");

  RunManifest m;
  m.command = "synth-corpus";
  m.argv = argv;
  m.seed = spec.seed;
  m.config["vocab"] = std::to_string(spec.vocab_size);
  m.config["train"] = std::to_string(n_train);
  m.config["dev"] = std::to_string(n_dev);
  m.config["test"] = std::to_string(n_test);
  m.config["min_len"] = std::to_string(spec.min_len);
  m.config["max_len"] = std::to_string(spec.max_len);
  m.config["reorder_window"] = std::to_string(spec.reorder_window);
  m.config["homonym_rate"] = std::to_string(spec.homonym_rate);
  for (const char* split : {"train", "dev", "test"}) {
    for (const char* ext : {".src", ".trg", ".align"}) {
      m.outputs.push_back(out_dir + "/" + split + ext);
    }
  }
  m.write(out_dir + "/manifest.json");
  std::cout << "wrote " << spec.sentences << " sentences under " << out_dir << "\n";
  return 0;
}

int cmd_build_vocab(const std::vector<std::string>& argv,
                    const std::vector<std::string>& inputs, int max_size,
                    const std::string& out) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& path : inputs) {
    auto lines = read_token_lines(path);
    corpus.insert(corpus.end(), lines.begin(), lines.end());
  }
  const Vocabulary vocab = Vocabulary::build(corpus, static_cast<std::size_t>(max_size));
  vocab.save(out);
  RunManifest m;
  m.command = "build-vocab";
  m.argv = argv;
  m.config["max_size"] = std::to_string(max_size);
  for (const auto& path : inputs) digest_if_present(m, path);
  m.outputs.push_back(out);
  m.metrics["vocab_size"] = std::to_string(vocab.size());
  m.write(out + ".manifest.json");
  std::cout << "vocabulary of " << vocab.size() << " tokens written to " << out << "\n";
  return 0;
}

EpochCallback checkpoint_callback(const TrainFlags& f, const std::function<void(int)>& save) {
  return [&f, save](const EpochStats& s) {
    log_epoch(s);
    if (f.checkpoint_every > 0 && s.epoch % f.checkpoint_every == 0) {
      save(s.epoch);
    }
  };
}

int cmd_train_lexical(const std::vector<std::string>& argv, TrainFlags& f, bool aligned,
                      const std::string& init_from, bool from_scratch) {
  const Vocabulary src_vocab = Vocabulary::load(f.src_vocab);
  const Vocabulary trg_vocab = Vocabulary::load(f.trg_vocab);
  const std::string train_align = aligned ? f.train_align : std::string{};
  const std::string dev_align = aligned ? f.dev_align : std::string{};
  if (aligned && (f.train_align.empty() || f.dev_align.empty())) {
    throw std::runtime_error("train-aligned: --train-align and --dev-align are required");
  }
  const auto train = load_corpus(f.train_src, f.train_trg, train_align, src_vocab, trg_vocab);
  const auto dev = load_corpus(f.dev_src, f.dev_trg, dev_align, src_vocab, trg_vocab);

  LexicalConfig mcfg;
  mcfg.enc_layers = f.enc_layers;
  mcfg.dec_layers = f.dec_layers;
  mcfg.heads = f.heads;
  mcfg.d_model = f.d_model;
  mcfg.d_ff = f.d_ff;
  mcfg.max_len = f.max_len;
  mcfg.dropout = f.dropout;
  mcfg.src_vocab = static_cast<int>(src_vocab.size());
  mcfg.trg_vocab = static_cast<int>(trg_vocab.size());
  mcfg.align_head = aligned;

  ParameterStore<Real> store;
  std::unique_ptr<LexicalModel<Real>> model;
  if (aligned && !from_scratch) {
    if (init_from.empty()) {
      throw std::runtime_error("train-aligned: give --init-from or --from-scratch");
    }
    auto base = load_lexical(init_from);
    if (base.config.align_head) {
      throw std::runtime_error("train-aligned: --init-from checkpoint already aligned");
    }
    store = init_aligned_from_baseline(base.store, base.config, f.seed);
    mcfg = base.config;
    mcfg.align_head = true;
    model = std::make_unique<LexicalModel<Real>>(store, mcfg, nullptr);
  } else {
    Rng rng(f.seed);
    model = std::make_unique<LexicalModel<Real>>(store, mcfg, &rng);
  }

  const std::string stage = aligned ? "aligned" : "baseline";
  const TrainConfig cfg = schedule_of(f, stage);
  auto save = [&](int epoch) {
    save_checkpoint(f.out + ".epoch" + std::to_string(epoch), store, lexical_meta(mcfg, f.seed));
  };
  const TrainResult result =
      train_lexical_model(*model, store, train, dev, cfg, checkpoint_callback(f, save));
  save_checkpoint(f.out, store, lexical_meta(mcfg, f.seed));

  RunManifest m;
  m.command = aligned ? "train-aligned" : "train-baseline";
  m.argv = argv;
  m.seed = f.seed;
  m.config = train_config_map(f, stage);
  if (aligned) {
    m.config["init_from"] = from_scratch ? "(scratch)" : init_from;
  }
  for (const auto& p : {f.train_src, f.train_trg, train_align, f.dev_src, f.dev_trg, dev_align,
                        f.src_vocab, f.trg_vocab, init_from}) {
    digest_if_present(m, p);
  }
  record_train_log(m, result);
  m.outputs.push_back(f.out);
  m.write(f.out + ".manifest.json");
  std::cout << "best dev perplexity " << result.best_dev_ppl << " (epoch " << result.best_epoch
            << "); checkpoint written to " << f.out << "\n";
  return 0;
}

int cmd_train_alignment(const std::vector<std::string>& argv, TrainFlags& f) {
  const Vocabulary src_vocab = Vocabulary::load(f.src_vocab);
  const Vocabulary trg_vocab = Vocabulary::load(f.trg_vocab);
  if (f.train_align.empty() || f.dev_align.empty()) {
    throw std::runtime_error("train-alignment-model: alignment files are required");
  }
  const auto train = load_corpus(f.train_src, f.train_trg, f.train_align, src_vocab, trg_vocab);
  const auto dev = load_corpus(f.dev_src, f.dev_trg, f.dev_align, src_vocab, trg_vocab);

  AlignmentConfig mcfg;
  mcfg.window = f.window;
  mcfg.enc_layers = f.enc_layers;
  mcfg.dec_layers = f.dec_layers;
  mcfg.heads = f.heads;
  mcfg.d_model = f.d_model;
  mcfg.d_ff = f.d_ff;
  mcfg.max_len = f.max_len;
  mcfg.dropout = f.dropout;
  mcfg.src_vocab = static_cast<int>(src_vocab.size());
  mcfg.trg_vocab = static_cast<int>(trg_vocab.size());

  ParameterStore<Real> store;
  Rng rng(f.seed);
  AlignmentModel<Real> model(store, mcfg, &rng);
  const TrainConfig cfg = schedule_of(f, "alignment");
  auto save = [&](int epoch) {
    save_checkpoint(f.out + ".epoch" + std::to_string(epoch), store,
                    alignment_meta(mcfg, f.seed));
  };
  const TrainResult result =
      train_alignment_model(model, store, train, dev, cfg, checkpoint_callback(f, save));
  save_checkpoint(f.out, store, alignment_meta(mcfg, f.seed));

  RunManifest m;
  m.command = "train-alignment-model";
  m.argv = argv;
  m.seed = f.seed;
  m.config = train_config_map(f, "alignment");
  m.config["window"] = std::to_string(f.window);
  for (const auto& p : {f.train_src, f.train_trg, f.train_align, f.dev_src, f.dev_trg,
                        f.dev_align, f.src_vocab, f.trg_vocab}) {
    digest_if_present(m, p);
  }
  record_train_log(m, result);
  m.outputs.push_back(f.out);
  m.write(f.out + ".manifest.json");
  std::cout << "best dev jump perplexity " << result.best_dev_ppl << " (epoch "
            << result.best_epoch << "); checkpoint written to " << f.out << "\n";
  return 0;
}

struct TranslateFlags {
  std::string model, align_model;
  std::string input, output;
  std::string src_vocab, trg_vocab;
  std::string dictionary;
  std::string dump_attention, dump_alignment;
  int beam{4};
  double threshold{0.15};
  int max_output_len{0};
  bool length_norm{false};
  bool no_pruning{false};
  int jobs{1};
};

int cmd_translate(const std::vector<std::string>& argv, const TranslateFlags& t, bool guided) {
  if (guided && t.dictionary.empty()) {
    throw std::runtime_error("translate-guided: --dictionary is required");
  }
  const Vocabulary src_vocab = Vocabulary::load(t.src_vocab);
  const Vocabulary trg_vocab = Vocabulary::load(t.trg_vocab);
  auto lex = load_lexical(t.model);
  if (static_cast<int>(src_vocab.size()) != lex.config.src_vocab ||
      static_cast<int>(trg_vocab.size()) != lex.config.trg_vocab) {
    throw std::runtime_error("vocabulary files do not match the checkpoint's vocabulary sizes");
  }
  std::unique_ptr<LoadedAlignment> align;
  if (!t.align_model.empty()) {
    align = std::make_unique<LoadedAlignment>(load_alignment(t.align_model));
  }
  if (lex.config.align_head && !align) {
    throw std::runtime_error(
        "the lexical model carries an alignment head; --align-model is required");
  }
  if (!lex.config.align_head && align) {
    throw std::runtime_error(
        "--align-model given but the lexical model has no alignment head; alignment-based "
        "decoding needs an alignment-assisted checkpoint");
  }

  const auto src_lines = read_token_lines(t.input);
  std::vector<std::vector<int>> sources;
  sources.reserve(src_lines.size());
  for (const auto& line : src_lines) {
    if (line.empty()) {
      throw std::runtime_error("translate: empty source line");
    }
    sources.push_back(src_vocab.encode(line));
  }

  std::vector<SentenceConstraints> constraints;
  if (!t.dictionary.empty()) {
    const Dictionary dict = Dictionary::load(t.dictionary);
    constraints.reserve(sources.size());
    for (std::size_t s = 0; s < sources.size(); ++s) {
      constraints.push_back(
          resolve_constraints(dict.entries_for(static_cast<int>(s)), src_lines[s], trg_vocab));
    }
  }

  DecodeConfig cfg;
  cfg.beam_size = t.beam;
  cfg.threshold = t.threshold;
  cfg.max_output_len = t.max_output_len;
  cfg.length_norm = t.length_norm;
  cfg.pruning_enabled = !t.no_pruning;

  TransformerScorerFactory<Real> factory(*lex.model, align ? align->model.get() : nullptr);
  const auto results = translate_corpus(factory, sources, cfg,
                                        constraints.empty() ? nullptr : &constraints, t.jobs);

  std::vector<std::vector<std::string>> out_lines;
  out_lines.reserve(results.size());
  DecodeStats totals;
  std::uint64_t truncated = 0, fired = 0;
  for (const auto& r : results) {
    out_lines.push_back(result_tokens(r, trg_vocab));
    totals.lexical_evaluations += r.stats.lexical_evaluations;
    totals.fallback_steps += r.stats.fallback_steps;
    totals.steps += r.stats.steps;
    truncated += r.truncated ? 1 : 0;
    fired += r.fired_entries.size();
  }
  write_token_lines(t.output, out_lines);

  if (!t.dump_alignment.empty()) {
    std::vector<std::vector<std::string>> lines;
    lines.reserve(results.size());
    for (const auto& r : results) {
      std::vector<std::string> links;
      const std::size_t words = out_lines[lines.size()].size();
      for (std::size_t i = 0; i < words && i < r.path.size(); ++i) {
        links.push_back(std::to_string(r.path[i]) + "-" + std::to_string(i));
      }
      lines.push_back(std::move(links));
    }
    write_token_lines(t.dump_alignment, lines);
  }
  if (!t.dump_attention.empty()) {
    // accumulated attention per sentence: [steps x source_len], summed over
    // decoder layers and heads
    ParameterStore<Real> dump;
    for (std::size_t s = 0; s < results.size(); ++s) {
      const auto& att = results[s].attention;
      const std::size_t steps = att.size();
      const std::size_t J = steps ? static_cast<std::size_t>(att[0].src_len) : 0;
      auto& rec = dump.create(std::to_string(s), {steps, J}, false);
      for (std::size_t i = 0; i < steps; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
          rec.value()[i * J + j] = static_cast<Real>(att[i].accumulated(static_cast<int>(j)));
        }
      }
    }
    nlohmann::json meta{{"component", "attention"},
                        {"layers", lex.config.dec_layers},
                        {"heads", lex.config.heads}};
    save_checkpoint(t.dump_attention, dump, meta.dump());
  }

  RunManifest m;
  m.command = guided ? "translate-guided" : "translate";
  m.argv = argv;
  m.config["beam"] = std::to_string(t.beam);
  m.config["threshold"] = std::to_string(t.threshold);
  m.config["max_output_len"] = std::to_string(t.max_output_len);
  m.config["length_norm"] = t.length_norm ? "1" : "0";
  m.config["pruning"] = t.no_pruning ? "0" : "1";
  m.config["jobs"] = std::to_string(t.jobs);
  for (const auto& p : {t.model, t.align_model, t.input, t.src_vocab, t.trg_vocab, t.dictionary}) {
    digest_if_present(m, p);
  }
  m.metrics["sentences"] = std::to_string(results.size());
  m.metrics["lexical_evaluations"] = std::to_string(totals.lexical_evaluations);
  m.metrics["fallback_steps"] = std::to_string(totals.fallback_steps);
  m.metrics["truncated"] = std::to_string(truncated);
  m.metrics["fired_entries"] = std::to_string(fired);
  m.outputs.push_back(t.output);
  if (!t.dump_alignment.empty()) m.outputs.push_back(t.dump_alignment);
  if (!t.dump_attention.empty()) m.outputs.push_back(t.dump_attention);
  m.write(t.output + ".manifest.json");
  std::cout << "translated " << results.size() << " sentences; lexical evaluations "
            << totals.lexical_evaluations << ", fallback steps " << totals.fallback_steps;
  if (!t.dictionary.empty()) std::cout << ", fired entries " << fired;
  std::cout << "\n";
  return 0;
}

int cmd_extract_alignments(const std::vector<std::string>& argv, const std::string& attention,
                           const std::string& mode, const std::string& paths,
                           const std::string& hyp, const std::string& src,
                           const std::string& out) {
  if (mode != "baseline" && mode != "assisted") {
    throw std::runtime_error("extract-alignments: --mode must be baseline or assisted");
  }
  const bool assisted = mode == "assisted";
  if (assisted && paths.empty()) {
    throw std::runtime_error("extract-alignments: assisted mode needs --paths");
  }
  auto [records, info] = load_checkpoint<Real>(attention);
  const auto meta = nlohmann::json::parse(info.meta);
  if (meta.value("component", "") != "attention") {
    throw std::runtime_error(attention + " is not an attention dump");
  }
  const int layers = meta.at("layers").get<int>();
  const auto hyp_lines = read_token_lines(hyp);
  const auto src_lines = read_token_lines(src);
  if (hyp_lines.size() != src_lines.size()) {
    throw std::runtime_error("extract-alignments: hypothesis/source line counts differ");
  }
  std::vector<std::vector<std::string>> path_lines;
  if (assisted) {
    path_lines = read_token_lines(paths);
    if (path_lines.size() != hyp_lines.size()) {
      throw std::runtime_error("extract-alignments: --paths line count mismatch");
    }
  }

  std::vector<std::vector<std::string>> out_lines;
  out_lines.reserve(hyp_lines.size());
  for (std::size_t s = 0; s < hyp_lines.size(); ++s) {
    const auto& rec = records.get(std::to_string(s));
    const std::size_t steps = rec.shape().at(0);
    const std::size_t J = rec.shape().at(1);
    const std::size_t words = std::min(hyp_lines[s].size(), steps);
    std::vector<int> hyp_path;
    if (assisted) {
      // the dumped path is total over the hypothesis words
      std::ostringstream joined;
      for (std::size_t i = 0; i < path_lines[s].size(); ++i) {
        if (i) joined << ' ';
        joined << path_lines[s][i];
      }
      const auto links = parse_pharaoh(joined.str(), static_cast<int>(J),
                                       static_cast<int>(words), static_cast<int>(s + 1));
      hyp_path.assign(words, -1);
      for (const auto& [sj, ti] : links) {
        if (hyp_path[static_cast<std::size_t>(ti)] < 0) hyp_path[static_cast<std::size_t>(ti)] = sj;
      }
      for (std::size_t i = 0; i < words; ++i) {
        if (hyp_path[i] < 0) {
          throw std::runtime_error("extract-alignments: sentence " + std::to_string(s) +
                                   " target position " + std::to_string(i) + " has no path entry");
        }
      }
    }
    std::vector<std::string> links;
    for (std::size_t i = 0; i < words; ++i) {
      int best = 0;
      double best_score = -1.0;
      for (std::size_t j = 0; j < J; ++j) {
        double score = static_cast<double>(rec.value()[i * J + j]);
        if (assisted && static_cast<int>(j) == hyp_path[i]) score += layers;
        if (score > best_score) {
          best_score = score;
          best = static_cast<int>(j);
        }
      }
      links.push_back(std::to_string(best) + "-" + std::to_string(i));
    }
    out_lines.push_back(std::move(links));
  }
  write_token_lines(out, out_lines);

  RunManifest m;
  m.command = "extract-alignments";
  m.argv = argv;
  m.config["mode"] = mode;
  for (const auto& p : {attention, paths, hyp, src}) digest_if_present(m, p);
  m.outputs.push_back(out);
  m.write(out + ".manifest.json");
  std::cout << "extracted alignments (" << mode << ") for " << out_lines.size()
            << " sentences to " << out << "\n";
  return 0;
}

int cmd_build_dictionary(const std::vector<std::string>& argv, const std::string& src,
                         const std::string& ref, const std::string& align,
                         const std::string& baseline, const std::string& stopwords,
                         int max_entries, const std::string& out) {
  const auto src_lines = read_token_lines(src);
  const auto ref_lines = read_token_lines(ref);
  const auto base_lines = read_token_lines(baseline);
  if (src_lines.size() != ref_lines.size() || src_lines.size() != base_lines.size()) {
    throw std::runtime_error("build-dictionary: input line counts differ");
  }
  std::ifstream align_is(align);
  if (!align_is) {
    throw std::runtime_error("cannot open alignment file: " + align);
  }
  std::vector<std::vector<int>> paths;
  std::string line;
  int line_no = 0;
  while (std::getline(align_is, line)) {
    ++line_no;
    const std::size_t s = paths.size();
    if (s >= src_lines.size()) {
      throw std::runtime_error("build-dictionary: alignment has more lines than the corpus");
    }
    const int J = static_cast<int>(src_lines[s].size());
    const int I = static_cast<int>(ref_lines[s].size()) + 1;  // sentence-end position
    const auto links = parse_pharaoh(line, J, I, line_no);
    auto full = resolve_alignment(links, J, I);
    full.pop_back();  // drop the sentence-end position
    paths.push_back(std::move(full));
  }
  if (paths.size() != src_lines.size()) {
    throw std::runtime_error("build-dictionary: alignment line count mismatch");
  }
  StopWordList stops;
  if (!stopwords.empty()) stops = StopWordList::load(stopwords);
  const Dictionary dict = build_simulated_dictionary(src_lines, ref_lines, paths, base_lines,
                                                     stops, max_entries);
  dict.save(out);

  RunManifest m;
  m.command = "build-dictionary";
  m.argv = argv;
  m.config["max_entries"] = std::to_string(max_entries);
  for (const auto& p : {src, ref, align, baseline, stopwords}) digest_if_present(m, p);
  std::size_t entries = 0;
  for (std::size_t s = 0; s < src_lines.size(); ++s) {
    entries += dict.entries_for(static_cast<int>(s)).size();
  }
  m.metrics["entries"] = std::to_string(entries);
  m.outputs.push_back(out);
  m.write(out + ".manifest.json");
  std::cout << entries << " dictionary entries written to " << out << "\n";
  return 0;
}

int cmd_evaluate_bleu(const std::vector<std::string>& argv, const std::string& hyp,
                      const std::string& ref) {
  const auto hyp_lines = read_token_lines(hyp);
  const auto ref_lines = read_token_lines(ref);
  const BleuReport report = corpus_bleu(hyp_lines, ref_lines);
  std::cout << format_bleu_report(report) << "\n";
  RunManifest m;
  m.command = "evaluate-bleu";
  m.argv = argv;
  digest_if_present(m, hyp);
  digest_if_present(m, ref);
  m.metrics["bleu"] = std::to_string(report.bleu);
  m.write(hyp + ".bleu.manifest.json");
  return 0;
}

std::vector<std::vector<int>> paths_from_pharaoh_file(const std::string& align_path,
                                                      const std::vector<std::vector<std::string>>& src,
                                                      const std::vector<std::vector<std::string>>& trg) {
  std::ifstream is(align_path);
  if (!is) {
    throw std::runtime_error("cannot open alignment file: " + align_path);
  }
  std::vector<std::vector<int>> paths;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t s = paths.size();
    if (s >= src.size()) {
      throw std::runtime_error(align_path + ": more lines than the corpus");
    }
    const int J = static_cast<int>(src[s].size());
    const int I = static_cast<int>(trg[s].size()) + 1;
    auto full = resolve_alignment(parse_pharaoh(line, J, I, line_no), J, I);
    full.pop_back();
    paths.push_back(std::move(full));
  }
  if (paths.size() != src.size()) {
    throw std::runtime_error(align_path + ": line count mismatch");
  }
  return paths;
}

int cmd_align_accuracy(const std::vector<std::string>& argv, const std::string& pred,
                       const std::string& gold, const std::string& hyp, const std::string& ref,
                       const std::string& src) {
  const auto src_lines = read_token_lines(src);
  const auto hyp_lines = read_token_lines(hyp);
  const auto ref_lines = read_token_lines(ref);
  const auto pred_paths = paths_from_pharaoh_file(pred, src_lines, hyp_lines);
  const auto gold_paths = paths_from_pharaoh_file(gold, src_lines, ref_lines);
  const double acc = alignment_accuracy_lenient(pred_paths, gold_paths);
  std::cout << "alignment accuracy " << acc << "\n";
  RunManifest m;
  m.command = "align-accuracy";
  m.argv = argv;
  for (const auto& p : {pred, gold, hyp, ref, src}) digest_if_present(m, p);
  m.metrics["accuracy"] = std::to_string(acc);
  m.write(pred + ".accuracy.manifest.json");
  return 0;
}

int cmd_bench_prune(const std::vector<std::string>& argv, const TranslateFlags& t,
                    const std::string& ref, const std::string& thresholds_arg,
                    const std::string& out) {
  const Vocabulary src_vocab = Vocabulary::load(t.src_vocab);
  const Vocabulary trg_vocab = Vocabulary::load(t.trg_vocab);
  auto lex = load_lexical(t.model);
  auto align = load_alignment(t.align_model);
  const auto src_lines = read_token_lines(t.input);
  const auto ref_lines = read_token_lines(ref);
  std::vector<std::vector<int>> sources;
  for (const auto& line : src_lines) sources.push_back(src_vocab.encode(line));

  std::vector<double> thresholds;
  std::stringstream ss(thresholds_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) thresholds.push_back(std::stod(item));
  }
  const bool had_zero = std::find(thresholds.begin(), thresholds.end(), 0.0) != thresholds.end();
  if (!had_zero) {
    std::cout << "note: threshold 0 added to the list (required reference point)\n";
  }

  DecodeConfig cfg;
  cfg.beam_size = t.beam;
  cfg.length_norm = t.length_norm;
  TransformerScorerFactory<Real> factory(*lex.model, align.model.get());
  const PruneBenchReport report =
      prune_benchmark(factory, sources, ref_lines, trg_vocab, cfg, thresholds, t.jobs);

  std::cout << format_prune_report(report);
  {
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write report: " + out);
    os << format_prune_report(report);
  }
  {
    std::ofstream os(out + ".tsv", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write report: " + out + ".tsv");
    os << machine_prune_report(report);
  }

  RunManifest m;
  m.command = "bench-prune";
  m.argv = argv;
  m.config["beam"] = std::to_string(t.beam);
  m.config["thresholds"] = thresholds_arg;
  m.config["jobs"] = std::to_string(t.jobs);
  for (const auto& p : {t.model, t.align_model, t.input, ref, t.src_vocab, t.trg_vocab}) {
    digest_if_present(m, p);
  }
  for (const auto& row : report.rows) {
    m.metrics["bleu@" + std::to_string(row.threshold)] = std::to_string(row.bleu);
    m.metrics["evals@" + std::to_string(row.threshold)] =
        std::to_string(row.lexical_evaluations);
  }
  m.outputs.push_back(out);
  m.outputs.push_back(out + ".tsv");
  m.write(out + ".manifest.json");
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"alignment-based neural machine translation at desk scale"};
  app.require_subcommand(1);

  // --- synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "generate a synthetic aligned corpus");
  std::string synth_out;
  ToyCorpusSpec spec;
  int n_train = 1000, n_dev = 100, n_test = 100;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--vocab", spec.vocab_size, "source vocabulary size");
  synth->add_option("--train", n_train, "training sentences");
  synth->add_option("--dev", n_dev, "dev sentences");
  synth->add_option("--test", n_test, "test sentences");
  synth->add_option("--min-len", spec.min_len, "minimum sentence length");
  synth->add_option("--max-len", spec.max_len, "maximum sentence length");
  synth->add_option("--reorder-window", spec.reorder_window, "maximum reorder displacement");
  synth->add_option("--homonym-rate", spec.homonym_rate, "fraction of ambiguous source words");
  synth->add_option("--seed", spec.seed, "random seed");

  // --- build-vocab
  auto* bvocab = app.add_subcommand("build-vocab", "build a vocabulary from token files");
  std::vector<std::string> vocab_inputs;
  int vocab_max = 1000;
  std::string vocab_out;
  bvocab->add_option("--input", vocab_inputs, "token file(s)")->required();
  bvocab->add_option("--max-size", vocab_max, "maximum vocabulary size (reserved ids included)");
  bvocab->add_option("--out", vocab_out, "output vocabulary file")->required();

  // --- shared training flags
  TrainFlags tf;
  auto add_corpus_options = [&](CLI::App* cmd, bool align_required) {
    cmd->add_option("--train-src", tf.train_src)->required();
    cmd->add_option("--train-trg", tf.train_trg)->required();
    auto* ta = cmd->add_option("--train-align", tf.train_align);
    cmd->add_option("--dev-src", tf.dev_src)->required();
    cmd->add_option("--dev-trg", tf.dev_trg)->required();
    auto* da = cmd->add_option("--dev-align", tf.dev_align);
    cmd->add_option("--src-vocab", tf.src_vocab)->required();
    cmd->add_option("--trg-vocab", tf.trg_vocab)->required();
    cmd->add_option("--out", tf.out, "checkpoint path")->required();
    if (align_required) {
      ta->required();
      da->required();
    }
  };

  auto* tbase = app.add_subcommand("train-baseline", "train the baseline transformer");
  add_corpus_options(tbase, false);
  add_model_options(tbase, tf);
  add_schedule_options(tbase, tf);

  auto* taligned = app.add_subcommand("train-aligned", "train the alignment-assisted model");
  std::string init_from;
  bool from_scratch = false;
  add_corpus_options(taligned, true);
  add_model_options(taligned, tf);
  add_schedule_options(taligned, tf);
  taligned->add_option("--init-from", init_from, "baseline checkpoint to initialize from");
  taligned->add_flag("--from-scratch", from_scratch, "ablation: fresh initialization");

  auto* talign = app.add_subcommand("train-alignment-model", "train the jump alignment model");
  add_corpus_options(talign, true);
  add_model_options(talign, tf);
  add_schedule_options(talign, tf);
  talign->add_option("--window", tf.window, "maximum jump width");

  // --- translate / translate-guided
  TranslateFlags tr;
  auto add_translate_options = [&](CLI::App* cmd) {
    cmd->add_option("--model", tr.model, "lexical model checkpoint")->required();
    cmd->add_option("--align-model", tr.align_model, "alignment model checkpoint");
    cmd->add_option("--input", tr.input, "source file")->required();
    cmd->add_option("--output", tr.output, "translation output file")->required();
    cmd->add_option("--src-vocab", tr.src_vocab)->required();
    cmd->add_option("--trg-vocab", tr.trg_vocab)->required();
    cmd->add_option("--beam", tr.beam, "beam size");
    cmd->add_option("--threshold", tr.threshold, "alignment pruning threshold");
    cmd->add_option("--max-output-len", tr.max_output_len,
                    "output length cap (0 = 2*source+10)");
    cmd->add_flag("--length-norm", tr.length_norm, "normalize final scores by length");
    cmd->add_flag("--no-pruning", tr.no_pruning, "disable the pruning step entirely");
    cmd->add_option("--dump-attention", tr.dump_attention, "accumulated attention sidecar");
    cmd->add_option("--dump-alignment", tr.dump_alignment, "alignment path sidecar (Pharaoh)");
    cmd->add_option("--jobs", tr.jobs, "parallel sentences");
  };
  auto* trans = app.add_subcommand("translate", "decode a source file");
  add_translate_options(trans);
  trans->add_option("--dictionary", tr.dictionary, "optional dictionary for guided decoding");
  auto* transg = app.add_subcommand("translate-guided", "decode with dictionary suggestions");
  add_translate_options(transg);
  transg->add_option("--dictionary", tr.dictionary, "dictionary file")->required();

  // --- extract-alignments
  auto* extract = app.add_subcommand("extract-alignments",
                                     "extract alignments from an attention dump");
  std::string ex_att, ex_mode = "baseline", ex_paths, ex_hyp, ex_src, ex_out;
  extract->add_option("--attention", ex_att)->required();
  extract->add_option("--mode", ex_mode, "baseline | assisted");
  extract->add_option("--paths", ex_paths, "hypothesized paths (assisted mode)");
  extract->add_option("--hyp", ex_hyp, "decoded hypotheses")->required();
  extract->add_option("--src", ex_src, "source file")->required();
  extract->add_option("--out", ex_out)->required();

  // --- build-dictionary
  auto* bdict = app.add_subcommand("build-dictionary", "build the simulated dictionary");
  std::string bd_src, bd_ref, bd_align, bd_base, bd_stop, bd_out;
  int bd_max = 4;
  bdict->add_option("--src", bd_src)->required();
  bdict->add_option("--ref", bd_ref)->required();
  bdict->add_option("--align", bd_align)->required();
  bdict->add_option("--baseline-output", bd_base)->required();
  bdict->add_option("--stopwords", bd_stop);
  bdict->add_option("--max-entries", bd_max);
  bdict->add_option("--out", bd_out)->required();

  // --- evaluate-bleu
  auto* ebleu = app.add_subcommand("evaluate-bleu", "case-insensitive corpus BLEU");
  std::string eb_hyp, eb_ref;
  ebleu->add_option("--hyp", eb_hyp)->required();
  ebleu->add_option("--ref", eb_ref)->required();

  // --- align-accuracy
  auto* aacc = app.add_subcommand("align-accuracy", "alignment accuracy against gold paths");
  std::string aa_pred, aa_gold, aa_hyp, aa_ref, aa_src;
  aacc->add_option("--pred", aa_pred)->required();
  aacc->add_option("--gold", aa_gold)->required();
  aacc->add_option("--hyp", aa_hyp)->required();
  aacc->add_option("--ref", aa_ref)->required();
  aacc->add_option("--src", aa_src)->required();

  // --- bench-prune
  auto* bench = app.add_subcommand("bench-prune", "pruning speed/quality benchmark");
  std::string bench_ref, bench_thresholds = "0,0.05,0.1,0.15,0.3,0.6,0.99", bench_out;
  bench->add_option("--model", tr.model)->required();
  bench->add_option("--align-model", tr.align_model)->required();
  bench->add_option("--input", tr.input)->required();
  bench->add_option("--ref", bench_ref)->required();
  bench->add_option("--src-vocab", tr.src_vocab)->required();
  bench->add_option("--trg-vocab", tr.trg_vocab)->required();
  bench->add_option("--beam", tr.beam);
  bench->add_option("--thresholds", bench_thresholds, "comma-separated, 0 is ensured");
  bench->add_option("--jobs", tr.jobs);
  bench->add_option("--out", bench_out)->required();

  // --- replay
  auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
  std::string replay_manifest;
  replay->add_option("--manifest", replay_manifest)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) return cmd_synth_corpus(args, synth_out, spec, n_train, n_dev, n_test);
    if (bvocab->parsed()) return cmd_build_vocab(args, vocab_inputs, vocab_max, vocab_out);
    if (tbase->parsed()) {
      apply_kv_overrides(tbase, tf);
      return cmd_train_lexical(args, tf, false, "", false);
    }
    if (taligned->parsed()) {
      apply_kv_overrides(taligned, tf);
      return cmd_train_lexical(args, tf, true, init_from, from_scratch);
    }
    if (talign->parsed()) {
      apply_kv_overrides(talign, tf);
      return cmd_train_alignment(args, tf);
    }
    if (trans->parsed()) return cmd_translate(args, tr, false);
    if (transg->parsed()) return cmd_translate(args, tr, true);
    if (extract->parsed()) {
      return cmd_extract_alignments(args, ex_att, ex_mode, ex_paths, ex_hyp, ex_src, ex_out);
    }
    if (bdict->parsed()) {
      return cmd_build_dictionary(args, bd_src, bd_ref, bd_align, bd_base, bd_stop, bd_max,
                                  bd_out);
    }
    if (ebleu->parsed()) return cmd_evaluate_bleu(args, eb_hyp, eb_ref);
    if (aacc->parsed()) return cmd_align_accuracy(args, aa_pred, aa_gold, aa_hyp, aa_ref, aa_src);
    if (bench->parsed()) return cmd_bench_prune(args, tr, bench_ref, bench_thresholds, bench_out);
    if (replay->parsed()) {
      const RunManifest m = RunManifest::from_json_file(replay_manifest);
      std::cout << "replaying: " << m.command << "\n";
      return run_command(m.argv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace anmt
