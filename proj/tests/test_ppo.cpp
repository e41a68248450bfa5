#include <doctest.h>

#include <cmath>

#include "bandit.hpp"
#include "htl/corpus.hpp"
#include "htl/error.hpp"
#include "htl/ppo.hpp"

using namespace htl;

namespace {

ModelConfig corpus_model() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = corpus_vocabulary().size();
  c.max_seq_len = 256;
  c.seed = 4;
  return c;
}

Episode hand_episode() {
  Episode e;
  e.prompt = {0};
  e.tokens = {1, 2, 3};
  e.log_probs = {-1.0, -0.5, -2.0};
  e.ref_log_probs = {-1.2, -0.5, -1.0};
  e.values = {0.1, 0.2, 0.3};
  e.assessment = 0.6;
  return e;
}

}  // namespace

TEST_CASE("error-assessment truth table") {
  const Rational gold(12);
  const std::optional<Rational> absent, wrong = Rational(13), right = Rational(12);
  struct Row {
    std::optional<Rational> cot, pot;
    double want;
  };
  const Row rows[] = {
      {absent, absent, 0.1}, {absent, wrong, 0.0}, {absent, right, 0.0},
      {wrong, absent, 0.1},  {wrong, wrong, 0.0},  {wrong, right, 0.6},
      {right, absent, 0.1},  {right, wrong, 0.3},  {right, right, 1.0},
  };
  for (const auto& r : rows) CHECK(assess_reward({r.cot, r.pot, gold}) == r.want);
}

TEST_CASE("reward case from generated text") {
  const auto p = generate_problem(0, 1);
  const auto& v = corpus_vocabulary();
  const auto gold_text = v.tokenize(p.cot + "\n****\n" + p.pot + "<eos>");
  CHECK(assess_reward(reward_case(p, gold_text)) == 1.0);
  const auto no_eos = v.tokenize(p.cot + "\n****\n" + p.pot);
  const auto c = reward_case(p, no_eos);
  CHECK_FALSE(c.pot_answer);
  CHECK(assess_reward(c) == 0.1);
}

TEST_CASE("shaped rewards") {
  const auto e = hand_episode();
  const auto r = shape_rewards(e, 0.1);
  CHECK(r[0] == doctest::Approx(-0.1 * 0.2).epsilon(1e-12));
  CHECK(r[1] == 0.0);
  CHECK(r[2] == doctest::Approx(-0.1 * -1.0 + 0.6).epsilon(1e-12));
  const auto zero = shape_rewards(e, 0.0);
  CHECK(zero == std::vector<double>{0.0, 0.0, 0.6});
  auto same = e;
  same.ref_log_probs = same.log_probs;
  CHECK(shape_rewards(same, 0.5) == std::vector<double>{0.0, 0.0, 0.6});
}

TEST_CASE("GAE") {
  SUBCASE("gamma = lambda = 1 telescopes") {
    auto e = hand_episode();
    e.rewards = {0.5, -0.25, 1.0};
    compute_advantages(e, 1.0, 1.0);
    CHECK(e.advantages[0] == doctest::Approx(1.25 - 0.1));
    CHECK(e.advantages[1] == doctest::Approx(0.75 - 0.2));
    CHECK(e.advantages[2] == doctest::Approx(1.0 - 0.3));
    for (std::size_t t = 0; t < 3; ++t) CHECK(e.returns[t] == doctest::Approx(e.advantages[t] + e.values[t]));
  }
  SUBCASE("zeros") {
    auto e = hand_episode();
    e.rewards.assign(3, 0.0);
    e.values.assign(3, 0.0);
    compute_advantages(e, 0.9, 0.5);
    CHECK(e.advantages == std::vector<double>{0.0, 0.0, 0.0});
  }
  SUBCASE("four-step hand recursion, gamma 0.9, lambda 0.5") {
    Episode e;
    e.tokens = {1, 1, 1, 1};
    e.rewards = {1.0, 0.0, -1.0, 2.0};
    e.values = {0.5, 0.2, -0.3, 0.4};
    compute_advantages(e, 0.9, 0.5);
    // deltas: d3 = 2 - 0.4 = 1.6; d2 = -1 + 0.36 + 0.3 = -0.34;
    // d1 = 0 - 0.27 - 0.2 = -0.47; d0 = 1 + 0.18 - 0.5 = 0.68
    const double a3 = 1.6, a2 = -0.34 + 0.45 * a3, a1 = -0.47 + 0.45 * a2, a0 = 0.68 + 0.45 * a1;
    CHECK(e.advantages[3] == doctest::Approx(a3).epsilon(1e-12));
    CHECK(e.advantages[2] == doctest::Approx(a2).epsilon(1e-12));
    CHECK(e.advantages[1] == doctest::Approx(a1).epsilon(1e-12));
    CHECK(e.advantages[0] == doctest::Approx(a0).epsilon(1e-12));
  }
}

TEST_CASE("advantage normalization") {
  std::vector<Episode> batch(2);
  batch[0].advantages = {1.0, 2.0};
  batch[1].advantages = {3.0};
  normalize_advantages(batch);
  double sum = 0.0, sq = 0.0;
  for (const auto& e : batch)
    for (double a : e.advantages) sum += a, sq += a * a;
  CHECK(std::abs(sum) < 1e-12);
  CHECK(sq / 3.0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rollout log-probs match re-scoring; reference untouched") {
  Model policy(corpus_model());
  const Model reference = policy;
  const auto p = generate_problem(2, 3);
  const auto e = rollout(policy, reference, p, 40, 17);
  CHECK(e.log_probs.size() == e.size());
  CHECK(e.values.size() == e.size());
  const auto rescored = score_continuation(policy, e.prompt, e.tokens);
  for (std::size_t t = 0; t < e.size(); ++t) CHECK(std::abs(rescored[t] - e.log_probs[t]) < 1e-9);
  CHECK(e.ref_log_probs == e.log_probs);
  if (e.truncated) CHECK_FALSE(reward_case(p, e.tokens).pot_answer);
  const auto again = rollout(policy, reference, p, 40, 17);
  CHECK(again.tokens == e.tokens);

  std::vector<Problem> problems{p, generate_problem(5, 3)};
  PpoConfig cfg;
  cfg.updates = 2;
  cfg.rollouts_per_update = 2;
  cfg.max_new = 30;
  cfg.learning_rate = 1e-3;
  const auto before = reference.named_parameters();
  std::vector<std::vector<double>> snapshot;
  for (const auto& [name, t] : before) snapshot.push_back(t->storage());
  const auto logs = train_rl(policy, reference, problems, cfg);
  CHECK(logs.size() == 2);
  const auto after = reference.named_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].second->storage() == snapshot[i]);
  for (const auto& l : logs) {
    CHECK(l.clip_fraction >= 0.0);
    CHECK(l.clip_fraction <= 1.0);
    CHECK(l.truncation_rate >= 0.0);
    CHECK(l.truncation_rate <= 1.0);
  }
}

TEST_CASE("zero advantages leave the trunk unchanged") {
  Model policy(corpus_model());
  const Model reference = policy;
  std::vector<Episode> batch;
  for (int k = 0; k < 3; ++k) {
    auto e = rollout(policy, reference, std::vector<int>{0, 1, 2, 3}, 5, static_cast<std::uint64_t>(k), std::nullopt);
    e.assessment = 0.5;
    e.values.assign(e.size(), 0.0);
    batch.push_back(std::move(e));
  }
  PpoConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.gae_lambda = 1.0;
  cfg.gamma = 1.0;
  // Every token's advantage is 0.5 before normalization, which maps all of them to 0.
  Adam trunk(policy.trunk_parameters(), AdamOptions{.learning_rate = 1e-2});
  Adam value(policy.value_parameters(), AdamOptions{.learning_rate = 1e-2});
  const auto before = policy.params().unembedding.storage();
  const auto s = ppo_update(policy, trunk, value, batch, cfg);
  CHECK(policy.params().unembedding.storage() == before);
  CHECK(s.first_epoch_max_ratio_deviation < 1e-9);
}

TEST_CASE("bandit converges to the rewarded arm") {
  const auto r = htl::testing::run_bandit(200, 1);
  CHECK(r.updates_to_target > 0);
  CHECK(r.final_probability >= 0.95);
  CHECK(r.max_first_epoch_ratio_deviation <= 1e-9);
  CHECK(r.clip_fraction_in_range);
}

TEST_CASE("non-finite updates abort and dump episodes") {
  Model policy(corpus_model());
  const Model reference = policy;
  auto e = rollout(policy, reference, std::vector<int>{0, 1, 2, 3}, 3, 1, std::nullopt);
  e.assessment = 1.0;
  e.log_probs[0] = std::nan("");
  std::vector<Episode> batch{e, e};
  batch[1].assessment = 0.0;
  PpoConfig cfg;
  cfg.dump_path = (std::filesystem::temp_directory_path() / "htl_dump.jsonl").string();
  Adam trunk(policy.trunk_parameters());
  Adam value(policy.value_parameters());
  CHECK_THROWS_AS(ppo_update(policy, trunk, value, batch, cfg), NonFiniteError);
  CHECK(std::filesystem::exists(cfg.dump_path));
  std::filesystem::remove(cfg.dump_path);
}

TEST_CASE("config validation") {
  PpoConfig c;
  c.clip_epsilon = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(PpoConfig{}.validate());
}
