#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "htl/adam.hpp"
#include "htl/corpus.hpp"
#include "htl/model.hpp"
#include "htl/rational.hpp"

namespace htl {

struct Episode {
  std::int64_t problem_id = -1;
  std::vector<int> prompt;
  std::vector<int> tokens;
  std::vector<double> log_probs;      // acting policy at rollout time
  std::vector<double> ref_log_probs;  // frozen reference
  std::vector<double> values;
  double assessment = 0.0;
  std::vector<double> rewards;  // shaped, filled by shape_rewards
  std::vector<double> advantages;
  std::vector<double> returns;
  bool truncated = false;

  std::size_t size() const { return tokens.size(); }
};

struct RewardCase {
  std::optional<Rational> cot_answer;
  std::optional<Rational> pot_answer;
  Rational gold;
};

/// Terminal error-assessment reward, first matching rule wins:
///   CoT absent, PoT present   -> 0
///   CoT absent or PoT absent  -> 0.1
///   both correct              -> 1
///   CoT wrong, PoT correct    -> 0.6
///   CoT correct, PoT wrong    -> 0.3
///   both wrong                -> 0
double assess_reward(const RewardCase& c);

/// Answers of a generated tune-format response. A response without eos has
/// no PoT answer.
RewardCase reward_case(const Problem& p, const std::vector<int>& generated);

struct PpoConfig {
  double kl_coefficient = 0.01;
  double clip_epsilon = 0.2;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  int rollouts_per_update = 16;
  int ppo_epochs = 2;
  double value_weight = 0.5;
  double learning_rate = 1e-5;
  double value_learning_rate = 1e-3;
  int updates = 30;
  int max_new = 160;
  std::uint64_t seed = 0;
  // Where episodes are written if an update turns non-finite; empty to skip.
  std::string dump_path;

  void validate() const;
};

/// Samples at temperature 1 under the causal mask and records policy and
/// reference log-probabilities plus value estimates. No reward is assigned.
Episode rollout(const Model& policy, const Model& reference, const std::vector<int>& prompt, int max_new,
                std::uint64_t seed, std::optional<int> eos = Vocabulary::kEos);

/// rollout() on the tune prompt of `p`, with the assessment filled in.
Episode rollout(const Model& policy, const Model& reference, const Problem& p, int max_new, std::uint64_t seed);

/// r_t = -kl·(logp_t - ref_logp_t), plus the assessment at the last token.
std::vector<double> shape_rewards(const Episode& e, double kl_coefficient);

/// GAE with a zero bootstrap after the last token. Fills advantages and
/// returns (= advantages + values) from e.rewards and e.values.
void compute_advantages(Episode& e, double gamma, double gae_lambda);

/// Zero mean, unit variance over every token of the batch.
void normalize_advantages(std::vector<Episode>& episodes);

struct PpoStats {
  double mean_reward = 0.0;  // mean assessment
  double mean_kl = 0.0;      // mean over episodes of Σ_t (logp - ref_logp)
  double clip_fraction = 0.0;
  double truncation_rate = 0.0;
  // max |ratio - 1| over the first epoch, before any parameter change.
  double first_epoch_max_ratio_deviation = 0.0;
  double policy_objective = 0.0;  // first epoch
  double value_loss = 0.0;        // first epoch
};

/// Shapes rewards, computes and normalizes advantages, then runs the
/// configured PPO epochs, one full-batch step each. The value head learns
/// from detached hidden states; the trunk learns from the clipped objective.
PpoStats ppo_update(Model& policy, Adam& trunk_optimizer, Adam& value_optimizer, std::vector<Episode>& episodes,
                    const PpoConfig& config);

struct RlUpdateLog {
  std::int64_t update = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double truncation_rate = 0.0;
};

std::vector<RlUpdateLog> train_rl(Model& policy, const Model& reference, const std::vector<Problem>& problems,
                                  const PpoConfig& config,
                                  const std::function<void(const RlUpdateLog&)>& on_update = {});

std::string rl_log_line(const RlUpdateLog& log);
std::string episode_to_json_line(const Episode& e);

}  // namespace htl
