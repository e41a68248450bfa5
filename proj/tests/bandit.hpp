#pragma once

#include <cmath>

#include "htl/adam.hpp"
#include "htl/decode.hpp"
#include "htl/mask.hpp"
#include "htl/ppo.hpp"
#include "htl/random.hpp"

namespace htl::testing {

// Two-armed bandit: a vocab-2 model emits one token after the prompt [0];
// token 1 pays 1, token 0 pays 0.
struct BanditResult {
  int updates_to_target = -1;  // first update after which P(arm 1) >= 0.95
  double final_probability = 0.0;
  double max_first_epoch_ratio_deviation = 0.0;
  bool clip_fraction_in_range = true;
};

inline double arm_probability(const Model& m) {
  const auto logits = m.logits(std::vector<int>{0}, build_causal_mask(1));
  return std::exp(log_prob_of(logits.values(), 1));
}

inline BanditResult run_bandit(int max_updates, std::uint64_t seed) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_model = 8;
  c.d_ff = 8;
  c.vocab_size = 2;
  c.max_seq_len = 2;
  c.seed = seed;
  Model policy(c);
  const Model reference = policy;
  PpoConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.learning_rate = 1e-2;
  cfg.rollouts_per_update = 16;
  Adam trunk(policy.trunk_parameters(), AdamOptions{.learning_rate = cfg.learning_rate});
  Adam value(policy.value_parameters(), AdamOptions{.learning_rate = cfg.value_learning_rate});
  BanditResult r;
  for (int u = 0; u < max_updates; ++u) {
    std::vector<Episode> batch;
    for (int k = 0; k < cfg.rollouts_per_update; ++k) {
      auto e = rollout(policy, reference, std::vector<int>{0}, 1, derive_seed({seed, static_cast<std::uint64_t>(u),
                                                                                static_cast<std::uint64_t>(k)}),
                       std::nullopt);
      e.assessment = e.tokens[0] == 1 ? 1.0 : 0.0;
      batch.push_back(std::move(e));
    }
    const auto s = ppo_update(policy, trunk, value, batch, cfg);
    r.max_first_epoch_ratio_deviation = std::max(r.max_first_epoch_ratio_deviation, s.first_epoch_max_ratio_deviation);
    r.clip_fraction_in_range = r.clip_fraction_in_range && s.clip_fraction >= 0.0 && s.clip_fraction <= 1.0;
    r.final_probability = arm_probability(policy);
    if (r.updates_to_target < 0 && r.final_probability >= 0.95) r.updates_to_target = u + 1;
  }
  return r;
}

}  // namespace htl::testing
