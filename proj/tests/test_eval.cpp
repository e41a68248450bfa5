#include <doctest.h>

#include <algorithm>

#include "htl/corpus.hpp"
#include "htl/error.hpp"
#include "htl/eval.hpp"
#include "htl/random.hpp"

using namespace htl;

namespace {

EvalRecord make(bool cot_ok, PotErrorKind kind, bool pot_ok, std::string tid = "t") {
  EvalRecord r;
  r.template_id = std::move(tid);
  r.gold = Rational(5);
  r.cot_answer = cot_ok ? Rational(5) : Rational(4);
  r.cot_correct = cot_ok;
  r.pot_error_kind = kind;
  if (kind == PotErrorKind::none) r.pot_answer = pot_ok ? Rational(5) : Rational(6);
  r.pot_correct = kind == PotErrorKind::none && pot_ok;
  return r;
}

// Minimal structural XML check: balanced, properly nested tags.
bool well_formed(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = xml.find('<', i)) != std::string::npos) {
    const auto close = xml.find('>', i);
    if (close == std::string::npos) return false;
    const std::string tag = xml.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const auto name = tag.substr(0, tag.find_first_of(" \n/"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (tag.back() != '/') stack.push_back(name);
  }
  return root_seen && stack.empty();
}

}  // namespace

TEST_CASE("gold texts score perfectly") {
  std::vector<EvalRecord> records;
  for (const auto& p : generate_corpus(100, 3)) records.push_back(score_generation(p, p.cot, p.pot, false));
  const auto r = summarize(records);
  CHECK(r.overall.cot_accuracy == 1.0);
  CHECK(r.overall.pot_accuracy == 1.0);
  CHECK(r.overall.hybrid_accuracy == 1.0);
  CHECK(r.overall.cte_rate == 0.0);
}

TEST_CASE("unparsable and truncated programs") {
  const auto p = generate_problem(0, 1);
  const auto bad = score_generation(p, p.cot, "print(", false);
  CHECK(bad.pot_error_kind == PotErrorKind::parse);
  CHECK_FALSE(bad.pot_correct);
  CHECK(classify_error(bad) == ErrorClass::execution);
  const auto cut = score_generation(p, p.cot, p.pot, true);
  CHECK(cut.pot_error_kind == PotErrorKind::truncated);
  CHECK_FALSE(cut.pot_answer);
  const auto div = score_generation(p, p.cot, "print(1/0)", false);
  CHECK(div.pot_error_kind == PotErrorKind::runtime);
  CHECK(classify_error(div) == ErrorClass::execution);
  const auto wrong = score_generation(p, p.cot, "print(123456)", false);
  CHECK(classify_error(wrong) == ErrorClass::reasoning);
}

TEST_CASE("hybrid answer falls back only on execution failure") {
  const auto ran_wrong = make(true, PotErrorKind::none, false);
  CHECK(*hybrid_answer(ran_wrong) == Rational(6));
  const auto crashed = make(true, PotErrorKind::runtime, false);
  CHECK(*hybrid_answer(crashed) == Rational(5));
  EvalRecord none;
  none.pot_error_kind = PotErrorKind::parse;
  CHECK_FALSE(hybrid_answer(none));
}

TEST_CASE("CTE rate") {
  std::vector<EvalRecord> all_good(4, make(true, PotErrorKind::none, true));
  CHECK(cte_rate(all_good) == 0.0);
  std::vector<EvalRecord> ten;
  for (int i = 0; i < 3; ++i) ten.push_back(make(true, PotErrorKind::none, false));
  for (int i = 0; i < 7; ++i) ten.push_back(make(false, PotErrorKind::none, i % 2 == 0));
  CHECK(cte_rate(ten) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(cte_rate({}), EmptyInputError);
  const auto r = summarize(ten);
  CHECK(r.overall.cte_rate <= r.overall.cot_accuracy);
  CHECK(r.conditional_cte_rate == 1.0);
}

TEST_CASE("summary is a pure fold with consistent rates") {
  Rng rng(4);
  const PotErrorKind kinds[] = {PotErrorKind::none, PotErrorKind::none, PotErrorKind::parse, PotErrorKind::runtime,
                                PotErrorKind::truncated};
  std::vector<EvalRecord> records;
  for (int i = 0; i < 500; ++i)
    records.push_back(make(rng.below(2) == 0, kinds[rng.below(5)], rng.below(2) == 0, rng.below(2) ? "a" : "b"));
  const auto r = summarize(records);
  std::int64_t labels[3] = {0, 0, 0};
  for (const auto& rec : records) {
    ++labels[static_cast<int>(classify_error(rec))];
    if (rec.pot_correct) CHECK(rec.pot_error_kind == PotErrorKind::none);
  }
  CHECK(labels[0] + labels[1] + labels[2] == 500);
  CHECK(r.overall.execution_error_rate + r.overall.reasoning_error_rate ==
        doctest::Approx(1.0 - r.overall.pot_accuracy).epsilon(1e-12));
  CHECK(r.overall.execution_error_rate == doctest::Approx(labels[1] / 500.0));
  for (double v : {r.overall.cot_accuracy, r.overall.pot_accuracy, r.overall.hybrid_accuracy, r.overall.cte_rate,
                   r.overall.truncation_rate})
    CHECK((v >= 0.0 && v <= 1.0));
  CHECK(r.per_template.size() == 2);
  CHECK(r.per_template.at("a").n + r.per_template.at("b").n == 500);
  auto shuffled = records;
  rng.shuffle(shuffled);
  const auto r2 = summarize(shuffled);
  CHECK(r2.overall.pot_accuracy == r.overall.pot_accuracy);
  CHECK(report_csv(r2) == report_csv(r));
}

TEST_CASE("hybrid beats PoT when every failed program has a correct CoT") {
  std::vector<EvalRecord> records{make(true, PotErrorKind::runtime, false), make(true, PotErrorKind::none, true),
                                  make(false, PotErrorKind::none, false)};
  const auto r = summarize(records).overall;
  CHECK(r.hybrid_accuracy >= r.pot_accuracy);
}

TEST_CASE("evaluation is per-item and leaves the model unchanged") {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = corpus_vocabulary().size();
  c.max_seq_len = 256;
  c.seed = 9;
  const Model m(c);
  const auto before = m.params().unembedding.storage();
  auto problems = generate_corpus(6, 4);
  EvalDecode d;
  d.max_new = 20;
  auto a = evaluate_model(m, problems, EvalMode::one_stage, d);
  std::reverse(problems.begin(), problems.end());
  auto b = evaluate_model(m, problems, EvalMode::one_stage, d);
  std::reverse(b.begin(), b.end());
  CHECK(a == b);
  const auto two = evaluate_model(m, problems, EvalMode::two_stage, d);
  CHECK(two.size() == problems.size());
  CHECK(m.params().unembedding.storage() == before);
  CHECK_THROWS_AS(evaluate_model(m, {}, EvalMode::one_stage), EmptyInputError);
}

TEST_CASE("report files") {
  std::vector<EvalRecord> records;
  for (const auto& p : generate_corpus(30, 5))
    records.push_back(score_generation(p, p.cot, p.id % 3 ? p.pot : "print(0)", false));
  const auto r = summarize(records);
  const auto parsed = parse_report_csv(report_csv(r));
  CHECK(parsed.at("n") == 30);
  CHECK(parsed.at("pot_accuracy") == r.overall.pot_accuracy);
  CHECK(parsed.at("cte_rate") == r.overall.cte_rate);
  CHECK(parsed.at("conditional_cte_rate") == r.conditional_cte_rate);
  CHECK(parsed.at("reasoning_error_rate") == r.overall.reasoning_error_rate);
  CHECK(per_template_csv(r).rfind("template_id,n,cot_acc,pot_acc,hybrid_acc,cte_rate,exec_err,reason_err\n", 0) == 0);
  CHECK(report_csv(r).rfind("metric,value\n", 0) == 0);
  CHECK(well_formed(bars_svg(r)));
  CHECK(bars_svg(r) == bars_svg(summarize(records)));
  const auto dir = std::filesystem::temp_directory_path() / "htl_test_report";
  emit_report(r, dir);
  const auto first = std::filesystem::file_size(dir / "bars.svg");
  emit_report(r, dir);
  CHECK(std::filesystem::file_size(dir / "bars.svg") == first);
  for (const auto& rec : records) CHECK(record_from_json_line(record_to_json_line(rec)) == rec);
  std::filesystem::remove_all(dir);
}
