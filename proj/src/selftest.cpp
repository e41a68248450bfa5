#include <cmath>
#include <functional>
#include <ostream>

#include "htl/checkpoint.hpp"
#include "htl/cli.hpp"
#include "htl/corpus.hpp"
#include "htl/error.hpp"
#include "htl/mask.hpp"
#include "htl/ops.hpp"
#include "htl/pot.hpp"
#include "htl/ppo.hpp"
#include "htl/random.hpp"
#include "htl/schedule.hpp"

namespace htl {

namespace {

SegmentedSequence random_segmentation(Rng& rng) {
  const auto q = static_cast<std::size_t>(rng.range(4, 40));
  const auto c = static_cast<std::size_t>(rng.range(1, 40));
  const auto p = static_cast<std::size_t>(rng.range(1, 40));
  SegmentedSequence s;
  s.tokens.assign(q + c + p, 0);
  s.q_span = {0, q};
  s.c_span = {q, q + c};
  s.p_span = {q + c, q + c + p};
  return s;
}

bool check_focus_mask() {
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_segmentation(rng);
    const auto sinks = static_cast<std::size_t>(rng.range(0, 4));
    const auto m = build_focus_mask(s, sinks);
    for (std::size_t i = 0; i < s.length(); ++i)
      for (std::size_t j = 0; j < s.length(); ++j) {
        bool want = j <= i;
        if (s.p_span.contains(i)) want = want && (j < sinks || s.c_span.contains(j) || s.p_span.contains(j));
        if (m.allowed(i, j) != want) return false;
      }
  }
  return true;
}

bool check_blend_nesting() {
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    const auto s = random_segmentation(rng);
    const auto seed = rng.next();
    if (!(blend_masks(s, 0.0, 4, seed) == build_causal_mask(s.length()))) return false;
    if (!(blend_masks(s, 1.0, 4, seed) == build_focus_mask(s, 4))) return false;
    const auto lo = blend_masks(s, 0.3, 4, seed);
    const auto hi = blend_masks(s, 0.7, 4, seed);
    for (std::size_t i = 0; i < s.length(); ++i)
      for (std::size_t j = 0; j < s.length(); ++j)
        if (!lo.allowed(i, j) && hi.allowed(i, j)) return false;
  }
  return true;
}

bool check_schedule() {
  ScheduleParams p;
  p.total_steps = 1000;
  if (coverage(0, p) != 0.0 || coverage(1000, p) != 0.0 || coverage(500, p) != 1.0) return false;
  for (std::int64_t s = 0; s <= 1000; ++s)
    if (coverage(s, p) != coverage(1000 - s, p)) return false;
  const double r0 = 0.5 - std::sqrt(1.76 / 11.0);
  return std::abs(coverage_at_ratio(r0, -11.0, 1.76)) < 1e-12;
}

bool check_reward_table() {
  const Rational gold(7);
  const std::optional<Rational> absent, wrong = Rational(8), right = gold;
  const std::optional<Rational> cases[] = {absent, wrong, right};
  // rows: CoT absent / wrong / correct; columns: PoT absent / wrong / correct
  const double expected[3][3] = {{0.1, 0.0, 0.0}, {0.1, 0.0, 0.6}, {0.1, 0.3, 1.0}};
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 3; ++p)
      if (assess_reward({cases[c], cases[p], gold}) != expected[c][p]) return false;
  return true;
}

bool check_corpus() {
  for (const auto& p : generate_corpus(1000, 99)) {
    const auto run = run_pot(p.pot);
    const auto cot = extract_cot_answer(p.cot);
    if (!run.value || !cot || *run.value != p.answer || *cot != p.answer) return false;
    const auto seg = render_tune_prompt(p);
    if (corpus_vocabulary().detokenize(seg.tokens).empty()) return false;
  }
  return true;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = 12;
  c.max_seq_len = 16;
  c.seed = 5;
  return c;
}

bool check_gradient() {
  Model model(tiny_config());
  const std::vector<int> tokens{0, 1, 2, 3, 7, 9, 4, 11, 2};
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) positions.push_back(i);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  targets.push_back(0);  // the last row is not scored
  const auto mask = build_causal_mask(tokens.size());
  const auto loss_of = [&] {
    Tape tape;
    return cross_entropy(model.forward_const(tape, tokens, mask).logits, targets, positions).value().item();
  };
  model.set_requires_grad(true, false);
  model.zero_grad();
  {
    Tape tape;
    const auto out = model.forward(tape, tokens, mask);
    tape.backward(cross_entropy(out.logits, targets, positions));
  }
  Rng rng(13);
  auto params = model.trunk_parameters();
  for (int k = 0; k < 20; ++k) {
    Tensor& t = *params[rng.below(params.size())];
    const auto idx = static_cast<std::size_t>(rng.below(t.size()));
    const double analytic = t.grad()[idx];
    const double saved = t[idx];
    const double h = 1e-5;
    t[idx] = saved + h;
    const double up = loss_of();
    t[idx] = saved - h;
    const double down = loss_of();
    t[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(analytic - numeric) > 1e-6 + 1e-4 * std::max(std::abs(analytic), std::abs(numeric))) return false;
  }
  model.set_requires_grad(false, false);
  return true;
}

bool check_checkpoint() {
  const Model model(tiny_config());
  const auto bytes = serialize_checkpoint(model);
  if (serialize_checkpoint(deserialize_checkpoint(bytes)) != bytes) return false;
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x01;
  try {
    deserialize_checkpoint(bad);
    return false;
  } catch (const CheckpointError&) {
    return true;
  }
}

}  // namespace

bool run_selftest(std::ostream& out) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"focus mask matches per-entry rule", check_focus_mask},
      {"coverage blends are nested and hit both limits", check_blend_nesting},
      {"schedule boundaries and symmetry", check_schedule},
      {"error-assessment truth table", check_reward_table},
      {"gold programs and CoT agree with answers", check_corpus},
      {"gradient matches finite differences", check_gradient},
      {"checkpoint round trip and corruption", check_checkpoint},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  exception: " << e.what() << "\n";
    }
    out << (ok ? "PASS " : "FAIL ") << name << "\n";
    all = all && ok;
  }
  return all;
}

}  // namespace htl
