#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "htl/model.hpp"

namespace htl {

/// Incremental causal decoding with per-layer key/value caches. Computes the
/// same quantities as Model::forward under build_causal_mask, one position at
/// a time, without a tape. The model must outlive the state and stay
/// unmodified while it is in use.
class DecodeState {
 public:
  explicit DecodeState(const Model& model);

  // Appends a token at the next position.
  void push(int token);
  std::size_t length() const { return length_; }

  // For the most recently pushed position.
  std::span<const double> logits() const { return logits_; }
  std::span<const double> hidden() const { return hidden_; }
  double value() const;

 private:
  const Model* model_;
  std::size_t length_ = 0;
  std::vector<std::vector<double>> keys_;    // per layer, [len×d]
  std::vector<std::vector<double>> values_;  // per layer, [len×d]
  std::vector<double> logits_;
  std::vector<double> hidden_;
};

struct DecodeOptions {
  int max_new = 1;
  // 0 selects greedy decoding; otherwise sample from softmax(logits / τ).
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> eos;
  // Additional tokens that end generation (included in the output).
  std::vector<int> stop_tokens;
};

struct Decoded {
  std::vector<int> tokens;        // newly generated, including a final stop token
  std::vector<double> log_probs;  // log π(token) under the untempered policy
  std::vector<double> values;     // value head at the state preceding each token
  bool stopped = false;           // ended on eos or a stop token
};

Decoded generate(const Model& model, std::span<const int> prompt, const DecodeOptions& options);

/// Teacher-forced log-probabilities of `continuation` after `prompt`.
std::vector<double> score_continuation(const Model& model, std::span<const int> prompt,
                                       std::span<const int> continuation);

/// log softmax(logits)[id].
double log_prob_of(std::span<const double> logits, int id);

}  // namespace htl
