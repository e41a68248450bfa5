#include <doctest.h>

#include "htl/corpus.hpp"
#include "htl/error.hpp"
#include "htl/schedule.hpp"
#include "htl/sft.hpp"
#include "test_util.hpp"

using namespace htl;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = corpus_vocabulary().size();
  c.max_seq_len = 256;
  c.seed = 1;
  return c;
}

std::vector<SegmentedSequence> sequences(int n, std::uint64_t seed) {
  std::vector<SegmentedSequence> out;
  for (const auto& p : generate_corpus(n, seed)) out.push_back(render_tune_prompt(p, 256));
  return out;
}

}  // namespace

TEST_CASE("loss positions") {
  const auto p = generate_problem(3, 1);
  const auto tune = render_tune_prompt(p);
  CHECK(loss_positions(tune, true).size() == tune.c_span.size() + tune.p_span.size());
  CHECK(loss_positions(tune, true).front() == tune.c_span.begin);
  CHECK(loss_positions(tune, false).size() == tune.length() - 1);
  const auto insert = render_insert_prompt(p);
  const auto pos = loss_positions(insert, true);
  CHECK(pos.size() == insert.p_span.size());
  CHECK(pos.front() == insert.p_span.begin);
}

TEST_CASE("coverage trace follows the schedule") {
  SftConfig c;
  c.mask_mode = MaskMode::scheduled;
  const std::int64_t total = 101;
  ScheduleParams p;
  p.total_steps = total - 1;
  for (std::int64_t s = 0; s < total; ++s) {
    CHECK(sft_coverage(c, s, total) == coverage(s, p));
    CHECK(sft_coverage(c, s, total) == sft_coverage(c, total - 1 - s, total));
  }
  CHECK(sft_coverage(c, 0, total) == 0.0);
  CHECK(sft_coverage(c, total - 1, total) == 0.0);
  CHECK(sft_coverage(c, 50, total) == 1.0);
  c.mask_mode = MaskMode::dense;
  CHECK(sft_coverage(c, 50, total) == 0.0);
  c.mask_mode = MaskMode::focus;
  CHECK(sft_coverage(c, 0, total) == 1.0);
}

TEST_CASE("learning-rate schedule") {
  SftConfig c;
  c.learning_rate = 1.0;
  CHECK(sft_learning_rate(c, 7, 10) == 1.0);
  c.warmup_steps = 4;
  CHECK(sft_learning_rate(c, 0, 10) == 0.25);
  CHECK(sft_learning_rate(c, 4, 10) == 1.0);
  c.warmup_steps = 0;
  c.cosine_decay = true;
  c.min_lr_fraction = 0.1;
  CHECK(sft_learning_rate(c, 0, 11) == doctest::Approx(1.0));
  CHECK(sft_learning_rate(c, 5, 11) == doctest::Approx(0.55));
  CHECK(sft_learning_rate(c, 10, 11) == doctest::Approx(0.1));
}

TEST_CASE("dense training overfits ten sequences") {
  Model m(tiny());
  const auto data = sequences(10, 2);
  SftConfig c;
  c.epochs = 200;
  c.batch_size = 10;
  c.learning_rate = 1e-2;
  c.mask_mode = MaskMode::dense;
  c.seed = 3;
  const auto logs = train_sft(m, data, c);
  REQUIRE(logs.size() == 200);
  for (const auto& l : logs) CHECK(std::isfinite(l.loss));
  CHECK(logs.back().loss < 0.1 * logs.front().loss);
}

TEST_CASE("scheduled training: logged coverage and determinism") {
  const auto data = sequences(12, 4);
  SftConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.mask_mode = MaskMode::scheduled;
  c.seed = 5;
  Model a(tiny()), b(tiny());
  const auto la = train_sft(a, data, c);
  const auto lb = train_sft(b, data, c);
  REQUIRE(la.size() == 9);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].lambda == sft_coverage(c, static_cast<std::int64_t>(i), 9));
    CHECK(la[i].loss == lb[i].loss);
  }
  CHECK(la.front().lambda == 0.0);
  CHECK(la.back().lambda == 0.0);
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->storage() == pb[i].second->storage());
}

TEST_CASE("focus mask blocks gradients from P rows to non-sink question embeddings") {
  Model m(tiny());
  const auto seg = render_tune_prompt(generate_problem(0, 6));
  const auto mask = build_focus_mask(seg, 4);
  Tape tape;
  Tensor emb = m.embed(tape, seg.tokens).value();
  emb.set_requires_grad(true);
  const auto x = tape.input(emb);
  const auto out = m.forward_embedded(tape, x, mask);
  std::vector<int> targets(seg.length(), 0);
  std::vector<std::size_t> rows;
  for (std::size_t t = seg.p_span.begin; t + 1 < seg.length(); ++t) {
    targets[t] = seg.tokens[t + 1];
    rows.push_back(t);
  }
  tape.backward(cross_entropy(out.logits, targets, rows));
  const auto g = tape.leaf_grad(x);
  const auto d = static_cast<std::size_t>(m.config().d_model);
  double blocked = 0.0, open = 0.0;
  for (std::size_t j = 0; j < seg.length(); ++j)
    for (std::size_t k = 0; k < d; ++k) {
      const double v = std::abs(g[j * d + k]);
      if (j >= 4 && j < seg.q_span.end) blocked = std::max(blocked, v);
      else open = std::max(open, v);
    }
  CHECK(blocked == 0.0);
  CHECK(open > 0.0);
}

TEST_CASE("training rejects bad input") {
  Model m(tiny());
  SftConfig c;
  CHECK_THROWS_AS(train_sft(m, {}, c), EmptyInputError);
  c.batch_size = 0;
  CHECK_THROWS_AS(train_sft(m, sequences(2, 1), c), ConfigError);
  SftConfig ok;
  auto t = tiny();
  t.max_seq_len = 32;
  Model short_model(t);
  CHECK_THROWS_AS(train_sft(short_model, sequences(2, 1), ok), LengthError);
  Model broken(tiny());
  broken.params().unembedding[0] = std::nan("");
  CHECK_THROWS_AS(train_sft(broken, sequences(2, 1), ok), NonFiniteError);
}

TEST_CASE("step log line") {
  const std::string line = sft_log_line({3, 0.5, 1.25, 0.001});
  CHECK(line.find("\"step\":3") != std::string::npos);
  CHECK(line.find("\"lambda\":0.5") != std::string::npos);
}
