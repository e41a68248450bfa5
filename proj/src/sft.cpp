#include "htl/sft.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "htl/adam.hpp"
#include "htl/error.hpp"
#include "htl/ops.hpp"
#include "htl/random.hpp"

namespace htl {

namespace {
constexpr std::uint64_t kShuffleTag = 0x5f7;
constexpr std::uint64_t kMaskTag = 0x3a5;
}  // namespace

const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::dense: return "dense";
    case MaskMode::focus: return "focus";
    case MaskMode::scheduled: return "scheduled";
  }
  return "unknown";
}

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "dense") return MaskMode::dense;
  if (name == "focus") return MaskMode::focus;
  if (name == "scheduled") return MaskMode::scheduled;
  throw ConfigError("unknown mask mode '" + name + "' (expected dense, focus or scheduled)");
}

void SftConfig::validate() const {
  if (epochs < 1) throw ConfigError("sft.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("sft.batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("sft.learning_rate must be positive and finite");
  if (warmup_steps < 0) throw ConfigError("sft.warmup_steps must be nonnegative");
  if (!(min_lr_fraction >= 0.0 && min_lr_fraction <= 1.0)) throw ConfigError("sft.min_lr_fraction must lie in [0, 1]");
  if (mask_mode == MaskMode::scheduled) {
    try {
      ScheduleParams probe = schedule;
      probe.total_steps = 1;
      probe.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  }
}

std::vector<std::size_t> loss_positions(const SegmentedSequence& seg, bool response_only) {
  seg.validate();
  std::vector<std::size_t> out;
  const std::size_t response = seg.c_in_prompt ? seg.p_span.begin : seg.c_span.begin;
  const std::size_t first = response_only ? std::max<std::size_t>(response, 1) : 1;
  for (std::size_t t = first; t < seg.length(); ++t) out.push_back(t);
  return out;
}

std::int64_t sft_total_steps(std::size_t corpus_size, const SftConfig& config) {
  const auto b = static_cast<std::size_t>(config.batch_size);
  return static_cast<std::int64_t>((corpus_size + b - 1) / b) * config.epochs;
}

double sft_learning_rate(const SftConfig& config, std::int64_t step, std::int64_t total_steps) {
  double lr = config.learning_rate;
  if (config.warmup_steps > 0 && step < config.warmup_steps)
    lr *= static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
  if (config.cosine_decay && total_steps > 1) {
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    const double f = config.min_lr_fraction + (1.0 - config.min_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress));
    lr *= f;
  }
  return lr;
}

double sft_coverage(const SftConfig& config, std::int64_t step, std::int64_t total_steps) {
  switch (config.mask_mode) {
    case MaskMode::dense: return 0.0;
    case MaskMode::focus: return 1.0;
    case MaskMode::scheduled: {
      ScheduleParams p = config.schedule;
      // Steps run 0..total-1, so the schedule's last point is the final step.
      p.total_steps = std::max<std::int64_t>(1, total_steps - 1);
      return coverage(std::min(step, p.total_steps), p);
    }
  }
  return 0.0;
}

AttentionMask sft_mask(const SegmentedSequence& seg, double lambda, const SftConfig& config, std::int64_t step,
                       std::int64_t example_index) {
  if (config.mask_mode == MaskMode::dense) return build_causal_mask(seg.length());
  if (config.mask_mode == MaskMode::focus) return build_focus_mask(seg, config.sink_count);
  const auto seed = derive_seed({config.seed, kMaskTag, static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(example_index)});
  return blend_masks(seg, lambda, config.sink_count, seed);
}

Var sequence_loss(Tape& tape, Model& model, const SegmentedSequence& seg, const AttentionMask& mask,
                  bool response_only) {
  const auto positions = loss_positions(seg, response_only);
  const auto out = model.forward(tape, seg.tokens, mask);
  // Row t-1 predicts token t.
  std::vector<int> targets(seg.length(), 0);
  std::vector<std::size_t> rows;
  rows.reserve(positions.size());
  for (std::size_t t = 1; t < seg.length(); ++t) targets[t - 1] = seg.tokens[t];
  for (auto t : positions) rows.push_back(t - 1);
  return cross_entropy(out.logits, targets, rows);
}

std::vector<SftStepLog> train_sft(Model& model, const std::vector<SegmentedSequence>& corpus,
                                  const SftConfig& config, const std::function<void(const SftStepLog&)>& on_step) {
  config.validate();
  if (corpus.empty()) throw EmptyInputError("SFT corpus is empty");
  for (const auto& seg : corpus) {
    seg.validate();
    if (seg.length() > static_cast<std::size_t>(model.config().max_seq_len))
      throw LengthError("training sequence of " + std::to_string(seg.length()) + " tokens exceeds max_seq_len");
  }
  model.set_requires_grad(true, false);
  Adam optimizer(model.trunk_parameters(), AdamOptions{.learning_rate = config.learning_rate});
  const std::int64_t total = sft_total_steps(corpus.size(), config);
  const auto b = static_cast<std::size_t>(config.batch_size);

  std::vector<SftStepLog> logs;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed({config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)})).shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += b, ++step) {
      const std::size_t stop = std::min(order.size(), start + b);
      const double lambda = sft_coverage(config, step, total);
      const double weight = 1.0 / static_cast<double>(stop - start);
      double loss_sum = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto idx = order[k];
        const auto& seg = corpus[idx];
        const auto mask = sft_mask(seg, lambda, config, step, static_cast<std::int64_t>(idx));
        Tape tape;
        const Var loss = sequence_loss(tape, model, seg, mask, config.response_only);
        const double value = loss.value().item();
        if (!std::isfinite(value))
          throw NonFiniteError("non-finite SFT loss at step " + std::to_string(step) + ", example " +
                               std::to_string(idx) + ", lambda " + std::to_string(lambda));
        loss_sum += value;
        tape.backward(scale(loss, weight));
      }
      const double lr = sft_learning_rate(config, step, total);
      optimizer.set_learning_rate(lr);
      optimizer.step();
      SftStepLog log{step, lambda, loss_sum * weight, lr};
      logs.push_back(log);
      if (on_step) on_step(log);
    }
  }
  return logs;
}

std::string sft_log_line(const SftStepLog& log) {
  nlohmann::ordered_json j;
  j["step"] = log.step;
  j["lambda"] = log.lambda;
  j["loss"] = log.loss;
  j["lr"] = log.lr;
  return j.dump();
}

}  // namespace htl
