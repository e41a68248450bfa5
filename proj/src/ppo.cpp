#include "htl/ppo.hpp"

#include <cmath>

#include <json.hpp>

#include "htl/decode.hpp"
#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/ops.hpp"
#include "htl/pot.hpp"
#include "htl/random.hpp"

namespace htl {

namespace {
constexpr std::uint64_t kPickTag = 0x91c;
constexpr std::uint64_t kRolloutTag = 0x4e2;

void dump_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  if (path.empty()) return;
  std::string text;
  for (const auto& e : episodes) text += episode_to_json_line(e) + "\n";
  write_file_atomic(path, text);
}
}  // namespace

double assess_reward(const RewardCase& c) {
  const bool cot = c.cot_answer.has_value();
  const bool pot = c.pot_answer.has_value();
  if (!cot && pot) return 0.0;
  if (!cot || !pot) return 0.1;
  const bool cot_ok = answers_match(*c.cot_answer, c.gold);
  const bool pot_ok = answers_match(*c.pot_answer, c.gold);
  if (cot_ok && pot_ok) return 1.0;
  if (!cot_ok && pot_ok) return 0.6;
  if (cot_ok && !pot_ok) return 0.3;
  return 0.0;
}

RewardCase reward_case(const Problem& p, const std::vector<int>& generated) {
  const auto& vocab = corpus_vocabulary();
  const auto split = split_response(generated);
  RewardCase c;
  c.gold = p.answer;
  c.cot_answer = extract_cot_answer(vocab.detokenize(split.cot_tokens));
  if (split.has_separator && split.has_eos) {
    const auto run = run_pot(vocab.detokenize(split.pot_tokens));
    if (run.status == PotRun::Status::ok) c.pot_answer = run.value;
  }
  return c;
}

void PpoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo.clip_epsilon must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must lie in [0, 1]");
  if (!(kl_coefficient >= 0.0) || !std::isfinite(kl_coefficient))
    throw ConfigError("ppo.kl_coefficient must be finite and nonnegative");
  if (rollouts_per_update < 1) throw ConfigError("ppo.rollouts_per_update must be at least 1");
  if (ppo_epochs < 1) throw ConfigError("ppo.ppo_epochs must be at least 1");
  if (!(value_weight >= 0.0)) throw ConfigError("ppo.value_weight must be nonnegative");
  if (!(learning_rate > 0.0) || !(value_learning_rate > 0.0))
    throw ConfigError("ppo learning rates must be positive");
  if (updates < 1) throw ConfigError("ppo.updates must be at least 1");
  if (max_new < 1) throw ConfigError("ppo.max_new must be at least 1");
}

Episode rollout(const Model& policy, const Model& reference, const std::vector<int>& prompt, int max_new,
                std::uint64_t seed, std::optional<int> eos) {
  DecodeOptions opts;
  opts.max_new = max_new;
  opts.temperature = 1.0;
  opts.seed = seed;
  opts.eos = eos;
  auto gen = generate(policy, prompt, opts);
  Episode e;
  e.prompt = prompt;
  e.tokens = std::move(gen.tokens);
  e.log_probs = std::move(gen.log_probs);
  e.values = std::move(gen.values);
  e.truncated = !gen.stopped;
  e.ref_log_probs = score_continuation(reference, prompt, e.tokens);
  return e;
}

Episode rollout(const Model& policy, const Model& reference, const Problem& p, int max_new, std::uint64_t seed) {
  auto e = rollout(policy, reference, tune_prompt_tokens(p.question), max_new, seed, Vocabulary::kEos);
  e.problem_id = p.id;
  e.assessment = assess_reward(reward_case(p, e.tokens));
  return e;
}

std::vector<double> shape_rewards(const Episode& e, double kl_coefficient) {
  if (e.log_probs.size() != e.size() || e.ref_log_probs.size() != e.size())
    throw DimensionError("episode log-prob arrays do not match its length");
  std::vector<double> r(e.size());
  for (std::size_t t = 0; t < e.size(); ++t) r[t] = -kl_coefficient * (e.log_probs[t] - e.ref_log_probs[t]);
  if (!r.empty()) r.back() += e.assessment;
  return r;
}

void compute_advantages(Episode& e, double gamma, double gae_lambda) {
  const std::size_t n = e.size();
  if (e.rewards.size() != n || e.values.size() != n)
    throw DimensionError("episode rewards/values do not match its length");
  e.advantages.assign(n, 0.0);
  e.returns.assign(n, 0.0);
  double next_value = 0.0, next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double delta = e.rewards[k] + gamma * next_value - e.values[k];
    next_adv = delta + gamma * gae_lambda * next_adv;
    e.advantages[k] = next_adv;
    e.returns[k] = next_adv + e.values[k];
    next_value = e.values[k];
  }
}

void normalize_advantages(std::vector<Episode>& episodes) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& e : episodes)
    for (double a : e.advantages) sum += a, ++count;
  if (count == 0) return;
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (const auto& e : episodes)
    for (double a : e.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(count));
  for (auto& e : episodes)
    for (double& a : e.advantages) a = (a - mean) / (sd + 1e-8);
}

PpoStats ppo_update(Model& policy, Adam& trunk_optimizer, Adam& value_optimizer, std::vector<Episode>& episodes,
                    const PpoConfig& config) {
  config.validate();
  if (episodes.empty()) throw EmptyInputError("ppo_update needs at least one episode");
  PpoStats stats;
  std::size_t total_tokens = 0;
  for (auto& e : episodes) {
    if (e.tokens.empty()) throw DimensionError("episode with no generated tokens");
    e.rewards = shape_rewards(e, config.kl_coefficient);
    compute_advantages(e, config.gamma, config.gae_lambda);
    total_tokens += e.size();
    stats.mean_reward += e.assessment;
    for (std::size_t t = 0; t < e.size(); ++t) stats.mean_kl += e.log_probs[t] - e.ref_log_probs[t];
    stats.truncation_rate += e.truncated ? 1.0 : 0.0;
  }
  const double n_ep = static_cast<double>(episodes.size());
  stats.mean_reward /= n_ep;
  stats.mean_kl /= n_ep;
  stats.truncation_rate /= n_ep;
  normalize_advantages(episodes);

  policy.set_requires_grad(true, true);
  double clipped_tokens = 0.0;
  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    double objective = 0.0, value_loss = 0.0;
    for (const auto& e : episodes) {
      const std::size_t p = e.prompt.size(), n = e.size();
      std::vector<int> seq(e.prompt);
      seq.insert(seq.end(), e.tokens.begin(), e.tokens.end() - 1);
      std::vector<std::size_t> rows(n);
      for (std::size_t t = 0; t < n; ++t) rows[t] = p - 1 + t;
      Tape tape;
      const auto out = policy.forward(tape, seq, build_causal_mask(seq.size()));
      const Var logp = token_log_probs(out.logits, rows, e.tokens);
      ClipStats cs;
      const Var obj = ppo_clip_objective(logp, e.log_probs, e.advantages, config.clip_epsilon, &cs);
      const double weight = static_cast<double>(n) / static_cast<double>(total_tokens);
      // Value regression on hidden states cut from the trunk's graph.
      const Tensor& h = out.hidden.value();
      const auto d = h.cols();
      std::vector<double> hv(h.values().begin() + static_cast<std::ptrdiff_t>((p - 1) * d),
                             h.values().begin() + static_cast<std::ptrdiff_t>((p - 1 + n) * d));
      const Var hidden = tape.input(Tensor({n, d}, std::move(hv)));
      const Var vloss = mean_squared_error(policy.values(tape, hidden), e.returns);
      const double o = obj.value().item(), vl = vloss.value().item();
      if (!std::isfinite(o) || !std::isfinite(vl)) {
        dump_episodes(config.dump_path, episodes);
        throw NonFiniteError("non-finite PPO objective on problem " + std::to_string(e.problem_id) +
                             (config.dump_path.empty() ? "" : "; episodes dumped to " + config.dump_path));
      }
      objective += o * weight;
      value_loss += vl * weight;
      clipped_tokens += cs.clip_fraction * static_cast<double>(n);
      if (epoch == 0)
        stats.first_epoch_max_ratio_deviation = std::max(stats.first_epoch_max_ratio_deviation, cs.max_ratio_deviation);
      tape.backward(add(scale(obj, -weight), scale(vloss, config.value_weight * weight)));
    }
    if (epoch == 0) {
      stats.policy_objective = objective;
      stats.value_loss = value_loss;
    }
    trunk_optimizer.step();
    value_optimizer.step();
  }
  stats.clip_fraction = clipped_tokens / (static_cast<double>(total_tokens) * config.ppo_epochs);
  policy.set_requires_grad(false, false);
  return stats;
}

std::vector<RlUpdateLog> train_rl(Model& policy, const Model& reference, const std::vector<Problem>& problems,
                                  const PpoConfig& config, const std::function<void(const RlUpdateLog&)>& on_update) {
  config.validate();
  if (problems.empty()) throw EmptyInputError("RL corpus is empty");
  if (!(policy.config() == reference.config())) throw ConfigError("policy and reference configs differ");
  Adam trunk(policy.trunk_parameters(), AdamOptions{.learning_rate = config.learning_rate});
  Adam value(policy.value_parameters(), AdamOptions{.learning_rate = config.value_learning_rate});
  std::vector<RlUpdateLog> logs;
  for (int u = 0; u < config.updates; ++u) {
    Rng pick(derive_seed({config.seed, kPickTag, static_cast<std::uint64_t>(u)}));
    std::vector<Episode> batch;
    for (int k = 0; k < config.rollouts_per_update; ++k) {
      const auto& p = problems[static_cast<std::size_t>(pick.below(problems.size()))];
      const auto seed = derive_seed({config.seed, kRolloutTag, static_cast<std::uint64_t>(u),
                                     static_cast<std::uint64_t>(k)});
      batch.push_back(rollout(policy, reference, p, config.max_new, seed));
    }
    const auto s = ppo_update(policy, trunk, value, batch, config);
    RlUpdateLog log{u, s.mean_reward, s.mean_kl, s.clip_fraction, s.truncation_rate};
    logs.push_back(log);
    if (on_update) on_update(log);
  }
  return logs;
}

std::string rl_log_line(const RlUpdateLog& log) {
  nlohmann::ordered_json j;
  j["update"] = log.update;
  j["mean_reward"] = log.mean_reward;
  j["mean_kl"] = log.mean_kl;
  j["clip_fraction"] = log.clip_fraction;
  j["truncation_rate"] = log.truncation_rate;
  return j.dump();
}

std::string episode_to_json_line(const Episode& e) {
  nlohmann::ordered_json j;
  j["problem_id"] = e.problem_id;
  j["prompt"] = e.prompt;
  j["tokens"] = e.tokens;
  j["log_probs"] = e.log_probs;
  j["ref_log_probs"] = e.ref_log_probs;
  j["values"] = e.values;
  j["assessment"] = e.assessment;
  j["rewards"] = e.rewards;
  j["advantages"] = e.advantages;
  j["returns"] = e.returns;
  j["truncated"] = e.truncated;
  return j.dump();
}

}  // namespace htl
