#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace anmt {

// Soft source-attention weights of one decoding step: one distribution over
// source positions per (decoder layer, head).
struct AttentionStep {
  int layers{0};
  int heads{0};
  int src_len{0};
  std::vector<double> w;  // [layers][heads][src_len]

  AttentionStep() = default;
  AttentionStep(int layers_, int heads_, int src_len_)
      : layers(layers_), heads(heads_), src_len(src_len_),
        w(static_cast<std::size_t>(layers_) * heads_ * src_len_, 0.0) {}

  double& at(int l, int k, int j) {
    return w[(static_cast<std::size_t>(l) * heads + k) * src_len + j];
  }
  double at(int l, int k, int j) const {
    return w[(static_cast<std::size_t>(l) * heads + k) * src_len + j];
  }

  // Sum over layers and heads at one source position.
  double accumulated(int j) const {
    double total = 0.0;
    for (int l = 0; l < layers; ++l) {
      for (int k = 0; k < heads; ++k) total += at(l, k, j);
    }
    return total;
  }
};

// Per-step attention history of a hypothesis or a completed translation.
using AttentionRecord = std::vector<AttentionStep>;

// Argmax of accumulated attention weight over source positions; ties take
// the smallest position.
inline int extract_alignment_baseline(const AttentionStep& step) {
  if (step.src_len < 1) {
    throw std::invalid_argument("extract_alignment: empty attention step");
  }
  int best = 0;
  double best_score = step.accumulated(0);
  for (int j = 1; j < step.src_len; ++j) {
    const double score = step.accumulated(j);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

// Accumulated attention with the hypothesized position given a bonus of one
// per decoder layer (the alignment indicator sits inside the layer sum).
inline int extract_alignment_assisted(const AttentionStep& step, int hypothesized) {
  if (hypothesized < 0 || hypothesized >= step.src_len) {
    throw std::out_of_range("extract_alignment_assisted: hypothesized position " +
                            std::to_string(hypothesized) + " outside source of length " +
                            std::to_string(step.src_len));
  }
  int best = 0;
  double best_score = -1.0;
  for (int j = 0; j < step.src_len; ++j) {
    double score = step.accumulated(j);
    if (j == hypothesized) score += static_cast<double>(step.layers);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

inline int extract_alignment_baseline(const AttentionRecord& record, int step) {
  return extract_alignment_baseline(record.at(static_cast<std::size_t>(step)));
}

inline int extract_alignment_assisted(const AttentionRecord& record, int step, int hypothesized) {
  return extract_alignment_assisted(record.at(static_cast<std::size_t>(step)), hypothesized);
}

}  // namespace anmt
