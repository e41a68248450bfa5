#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "htl/mask.hpp"
#include "htl/model.hpp"
#include "htl/schedule.hpp"

namespace htl {

enum class MaskMode { dense, focus, scheduled };
const char* to_string(MaskMode m);
// Throws ConfigError on an unknown name.
MaskMode parse_mask_mode(const std::string& name);

struct SftConfig {
  int epochs = 2;
  int batch_size = 8;
  double learning_rate = 1e-3;
  // Linear warmup over warmup_steps, then cosine decay to
  // min_lr_fraction·learning_rate at the last step when cosine_decay is set.
  int warmup_steps = 0;
  bool cosine_decay = false;
  double min_lr_fraction = 0.1;
  std::uint64_t seed = 0;
  // total_steps is filled in by train_sft from the corpus size.
  ScheduleParams schedule;
  MaskMode mask_mode = MaskMode::scheduled;
  bool response_only = true;
  std::size_t sink_count = kDefaultSinkCount;

  void validate() const;
};

/// Token indices whose prediction contributes to the loss: the response
/// (C ∪ P, or P alone for the insert layout) when response_only, otherwise
/// every position but the first.
std::vector<std::size_t> loss_positions(const SegmentedSequence& seg, bool response_only);

/// Coverage used at `step` of a run with `total_steps` optimizer steps.
double sft_coverage(const SftConfig& config, std::int64_t step, std::int64_t total_steps);

/// Attention mask for one training example at one step.
AttentionMask sft_mask(const SegmentedSequence& seg, double coverage, const SftConfig& config, std::int64_t step,
                       std::int64_t example_index);

/// Mean next-token cross entropy of `seg` under `mask`, recorded on `tape`.
Var sequence_loss(Tape& tape, Model& model, const SegmentedSequence& seg, const AttentionMask& mask,
                  bool response_only);

struct SftStepLog {
  std::int64_t step = 0;
  double lambda = 0.0;
  double loss = 0.0;
  double lr = 0.0;
};

std::int64_t sft_total_steps(std::size_t corpus_size, const SftConfig& config);
double sft_learning_rate(const SftConfig& config, std::int64_t step, std::int64_t total_steps);

/// Trains the trunk in place. Examples are visited in a seeded per-epoch
/// permutation; each batch accumulates per-example gradients in a fixed
/// order and takes one Adam step. Throws NonFiniteError on a non-finite loss.
std::vector<SftStepLog> train_sft(Model& model, const std::vector<SegmentedSequence>& corpus,
                                  const SftConfig& config,
                                  const std::function<void(const SftStepLog&)>& on_step = {});

std::string sft_log_line(const SftStepLog& log);

}  // namespace htl
