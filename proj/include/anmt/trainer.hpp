#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "anmt/adam.hpp"
#include "anmt/alignment_model.hpp"
#include "anmt/lexical_model.hpp"

namespace anmt {

struct TrainConfig {
  int batch_size{16};       // sentences per update
  int max_epochs{30};
  std::int64_t max_updates{0};  // 0 = no cap
  int patience{5};          // early-stop patience in dev evaluations
  int checkpoint_every{0};  // epochs; 0 disables periodic checkpoints
  double lr{1e-3};
  std::uint64_t seed{1};
  std::string stage;  // informational tag (baseline | aligned | alignment)

  void validate() const {
    if (batch_size < 1 || max_epochs < 0 || patience < 1 || lr <= 0.0) {
      throw std::invalid_argument("train config: extents must be positive");
    }
  }
};

struct EpochStats {
  int epoch{};
  double train_loss{};  // mean per-token negative log-likelihood
  double dev_ppl{};
};

struct TrainResult {
  std::vector<EpochStats> log;
  double best_dev_ppl{std::numeric_limits<double>::infinity()};
  int best_epoch{-1};
  std::int64_t updates{0};
};

// epoch callback fires after each dev evaluation; used for periodic
// checkpoint writing and progress logging
using EpochCallback = std::function<void(const EpochStats&)>;

namespace detail_train {

// Length-bucketed batches: indices sorted by target length then position,
// chunked to the batch size. The per-epoch shuffle permutes whole batches.
inline std::vector<std::vector<std::size_t>> bucket_batches(
    const std::vector<std::size_t>& lengths, int batch_size) {
  std::vector<std::size_t> idx(lengths.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(idx.begin() + static_cast<long>(i), idx.begin() + static_cast<long>(end));
  }
  return batches;
}

template <class Rng>
inline void shuffle_batches(std::vector<std::vector<std::size_t>>& batches, Rng& rng) {
  for (std::size_t i = batches.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(batches[i - 1], batches[j]);
  }
}

}  // namespace detail_train

template <class S>
double evaluate_perplexity(const LexicalModel<S>& model,
                           const std::vector<AlignedSentencePair>& dev) {
  NoGradGuard ng;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : dev) {
    Tensor<S> logits = model.train_logits(pair);
    total += static_cast<double>(cross_entropy(logits, pair.target, Reduction::Sum).item());
    tokens += pair.target.size();
  }
  if (tokens == 0) {
    throw std::invalid_argument("evaluate_perplexity: empty dev set");
  }
  return std::exp(total / static_cast<double>(tokens));
}

template <class S>
std::vector<int> jump_targets(const AlignedSentencePair& pair, const AlignmentModel<S>& model) {
  const int w = model.config().window;
  const auto jumps = compute_jumps(pair.path, w);
  std::vector<int> classes(jumps.size());
  for (std::size_t i = 0; i < jumps.size(); ++i) classes[i] = jump_class(jumps[i], w);
  return classes;
}

template <class S>
double evaluate_jump_perplexity(const AlignmentModel<S>& model,
                                const std::vector<AlignedSentencePair>& dev) {
  NoGradGuard ng;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : dev) {
    Tensor<S> logits = model.train_logits(pair);
    total += static_cast<double>(
        cross_entropy(logits, jump_targets(pair, model), Reduction::Sum).item());
    tokens += pair.target.size();
  }
  if (tokens == 0) {
    throw std::invalid_argument("evaluate_jump_perplexity: empty dev set");
  }
  return std::exp(total / static_cast<double>(tokens));
}

// Fraction of held-out steps whose argmax jump class matches the gold jump.
template <class S>
double jump_argmax_accuracy(const AlignmentModel<S>& model,
                            const std::vector<AlignedSentencePair>& dev) {
  NoGradGuard ng;
  std::size_t correct = 0, count = 0;
  for (const auto& pair : dev) {
    Tensor<S> logits = model.train_logits(pair);
    const auto gold = jump_targets(pair, model);
    for (std::size_t i = 0; i < gold.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      count += 1;
      if (static_cast<int>(best) == gold[i]) correct += 1;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
}

namespace detail_train {

// Shared epoch loop. `batch_loss` returns the summed NLL node and the token
// count of one sentence; `dev_metric` returns the dev perplexity.
template <class S>
TrainResult run_training(
    ParameterStore<S>& store, const TrainConfig& cfg, std::size_t train_size,
    const std::vector<std::size_t>& lengths,
    const std::function<std::pair<Tensor<S>, std::size_t>(std::size_t)>& sentence_loss,
    const std::function<double()>& dev_metric, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult result;
  AdamState<S> adam;
  adam.cfg.lr = cfg.lr;
  Rng rng(cfg.seed);
  auto batches = bucket_batches(lengths, cfg.batch_size);
  ParameterStore<S> best;
  bool have_best = false;
  int stale = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    shuffle_batches(batches, rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t b = 0; b < batches.size() && !stop; ++b) {
      store.zero_grads();
      Tensor<S> total;
      std::size_t tokens = 0;
      for (std::size_t idx : batches[b]) {
        auto [loss, n] = sentence_loss(idx);
        total = total.defined() ? add(total, loss) : loss;
        tokens += n;
      }
      Tensor<S> loss = scale(total, static_cast<S>(1.0 / static_cast<double>(tokens)));
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b + 1) +
                                 ", update " + std::to_string(result.updates + 1));
      }
      backward(loss);
      adam_step(store, adam);
      result.updates += 1;
      epoch_loss += loss_value * static_cast<double>(tokens);
      epoch_tokens += tokens;
      if (cfg.max_updates > 0 && result.updates >= cfg.max_updates) stop = true;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_tokens ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
    stats.dev_ppl = dev_metric();
    result.log.push_back(stats);
    if (stats.dev_ppl < result.best_dev_ppl) {
      result.best_dev_ppl = stats.dev_ppl;
      result.best_epoch = epoch;
      best = store.snapshot_values();
      have_best = true;
      stale = 0;
    } else {
      stale += 1;
    }
    if (on_epoch) on_epoch(stats);
    if (stale >= cfg.patience) break;
  }
  if (have_best) {
    store.load_values(best);
  }
  if (result.best_epoch < 0) {
    // zero epochs: the "best" state is the initialization itself
    result.best_dev_ppl = dev_metric();
  }
  (void)train_size;
  return result;
}

}  // namespace detail_train

// Trains the lexical model in place (store values update; the best-dev state
// is restored at return). With the alignment head enabled every pair must
// carry a resolved path.
template <class S>
TrainResult train_lexical_model(LexicalModel<S>& model, ParameterStore<S>& store,
                                const std::vector<AlignedSentencePair>& train,
                                const std::vector<AlignedSentencePair>& dev,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr) {
  if (train.empty() || dev.empty()) {
    throw std::invalid_argument("train_lexical_model: empty corpus");
  }
  const bool aligned = model.config().align_head;
  for (const auto& p : train) {
    if (aligned && p.path.size() != p.target.size()) {
      throw std::invalid_argument(
          "train_lexical_model: alignment head enabled but a pair is missing its path");
    }
  }
  std::vector<std::size_t> lengths(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) lengths[i] = train[i].target.size();
  Rng dropout_rng(cfg.seed ^ 0x5eedd10full);
  auto sentence_loss = [&](std::size_t idx) {
    const auto& pair = train[idx];
    Tensor<S> logits = model.train_logits(pair, nullptr,
                                          model.config().dropout > 0.0 ? &dropout_rng : nullptr);
    return std::make_pair(cross_entropy(logits, pair.target, Reduction::Sum),
                          pair.target.size());
  };
  auto dev_metric = [&]() { return evaluate_perplexity(model, dev); };
  return detail_train::run_training<S>(store, cfg, train.size(), lengths, sentence_loss,
                                       dev_metric, on_epoch);
}

template <class S>
TrainResult train_alignment_model(AlignmentModel<S>& model, ParameterStore<S>& store,
                                  const std::vector<AlignedSentencePair>& train,
                                  const std::vector<AlignedSentencePair>& dev,
                                  const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = nullptr) {
  if (train.empty() || dev.empty()) {
    throw std::invalid_argument("train_alignment_model: empty corpus");
  }
  for (const auto& p : train) {
    if (p.path.size() != p.target.size()) {
      throw std::invalid_argument("train_alignment_model: a pair is missing its path");
    }
  }
  std::vector<std::size_t> lengths(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) lengths[i] = train[i].target.size();
  auto sentence_loss = [&](std::size_t idx) {
    const auto& pair = train[idx];
    Tensor<S> logits = model.train_logits(pair);
    return std::make_pair(cross_entropy(logits, jump_targets(pair, model), Reduction::Sum),
                          pair.target.size());
  };
  auto dev_metric = [&]() { return evaluate_jump_perplexity(model, dev); };
  return detail_train::run_training<S>(store, cfg, train.size(), lengths, sentence_loss,
                                       dev_metric, on_epoch);
}

// Builds the alignment-assisted parameter store from a trained baseline:
// shared parameters are copied exactly, each layer's new alignment-head
// value projection is drawn small-random, and the extra output-projection
// rows are zeroed so the assisted model initially reproduces the baseline.
template <class S>
ParameterStore<S> init_aligned_from_baseline(const ParameterStore<S>& baseline,
                                             const LexicalConfig& baseline_cfg,
                                             std::uint64_t seed) {
  if (baseline_cfg.align_head) {
    throw std::invalid_argument(
        "init_aligned_from_baseline: checkpoint already has the alignment head");
  }
  LexicalConfig aligned_cfg = baseline_cfg;
  aligned_cfg.align_head = true;
  ParameterStore<S> store;
  Rng rng(seed);
  LexicalModel<S> model(store, aligned_cfg, &rng);
  (void)model;
  const std::size_t d_model = static_cast<std::size_t>(baseline_cfg.d_model);
  const std::size_t soft_rows = d_model;  // heads * d_head
  for (const auto& [name, src] : baseline) {
    if (!store.has(name)) {
      throw std::invalid_argument("init_aligned_from_baseline: unexpected baseline parameter " +
                                  name);
    }
    Tensor<S>& dst = store.get(name);
    const bool widened = name.find("/src_attn/wo/weight") != std::string::npos;
    if (!widened) {
      if (dst.shape() != src.shape()) {
        throw std::invalid_argument("init_aligned_from_baseline: incompatible shape for " + name +
                                    ": " + shape_str(src.shape()) + " vs " +
                                    shape_str(dst.shape()));
      }
      dst.value() = src.value();
      continue;
    }
    if (src.rows() != soft_rows || dst.rows() <= soft_rows || dst.cols() != src.cols()) {
      throw std::invalid_argument("init_aligned_from_baseline: incompatible output projection " +
                                  name);
    }
    std::fill(dst.value().begin(), dst.value().end(), S(0));
    std::copy_n(src.value().begin(), src.size(), dst.value().begin());
  }
  return store;
}

}  // namespace anmt
