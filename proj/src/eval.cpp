#include "htl/eval.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "htl/decode.hpp"
#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/pot.hpp"

namespace htl {

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string metric(double v) { return fmt("%.17g", v); }

RateSummary fold(const std::vector<const EvalRecord*>& records) {
  RateSummary s;
  s.n = static_cast<std::int64_t>(records.size());
  if (records.empty()) return s;
  std::int64_t cot = 0, pot = 0, hybrid = 0, cte = 0, exec = 0, reason = 0, trunc = 0;
  for (const auto* r : records) {
    cot += r->cot_correct;
    pot += r->pot_correct;
    const auto h = hybrid_answer(*r);
    hybrid += h.has_value() && answers_match(*h, r->gold);
    cte += r->cot_correct && !r->pot_correct;
    const auto c = classify_error(*r);
    exec += c == ErrorClass::execution;
    reason += c == ErrorClass::reasoning;
    trunc += r->pot_error_kind == PotErrorKind::truncated;
  }
  const double n = static_cast<double>(records.size());
  s.cot_accuracy = static_cast<double>(cot) / n;
  s.pot_accuracy = static_cast<double>(pot) / n;
  s.hybrid_accuracy = static_cast<double>(hybrid) / n;
  s.cte_rate = static_cast<double>(cte) / n;
  s.execution_error_rate = static_cast<double>(exec) / n;
  s.reasoning_error_rate = static_cast<double>(reason) / n;
  s.truncation_rate = static_cast<double>(trunc) / n;
  return s;
}

nlohmann::ordered_json optional_answer(const std::optional<Rational>& a) {
  return a ? nlohmann::ordered_json(a->to_string()) : nlohmann::ordered_json(nullptr);
}

std::optional<Rational> answer_from_json(const nlohmann::ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  auto r = parse_rational(j.get<std::string>());
  if (!r) throw IoError("malformed answer '" + j.get<std::string>() + "' in records file");
  return r;
}

std::string strip_eos(std::vector<int> tokens, bool& had_eos) {
  had_eos = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == Vocabulary::kEos) {
      tokens.resize(i);
      had_eos = true;
      break;
    }
  }
  return corpus_vocabulary().detokenize(tokens);
}

}  // namespace

const char* to_string(PotErrorKind k) {
  switch (k) {
    case PotErrorKind::none: return "none";
    case PotErrorKind::parse: return "parse";
    case PotErrorKind::runtime: return "runtime";
    case PotErrorKind::truncated: return "truncated";
  }
  return "unknown";
}

PotErrorKind parse_pot_error_kind(const std::string& name) {
  if (name == "none") return PotErrorKind::none;
  if (name == "parse") return PotErrorKind::parse;
  if (name == "runtime") return PotErrorKind::runtime;
  if (name == "truncated") return PotErrorKind::truncated;
  throw IoError("unknown pot_error_kind '" + name + "'");
}

const char* to_string(EvalMode m) { return m == EvalMode::one_stage ? "one" : "two"; }

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "one") return EvalMode::one_stage;
  if (name == "two") return EvalMode::two_stage;
  throw ConfigError("unknown evaluation stage '" + name + "' (expected one or two)");
}

const char* to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::none: return "none";
    case ErrorClass::execution: return "execution";
    case ErrorClass::reasoning: return "reasoning";
  }
  return "unknown";
}

PotOutcome run_generated_pot(const std::string& text, bool truncated) {
  if (truncated) return {std::nullopt, PotErrorKind::truncated};
  const auto run = run_pot(text);
  switch (run.status) {
    case PotRun::Status::ok: return {run.value, PotErrorKind::none};
    case PotRun::Status::parse_error: return {std::nullopt, PotErrorKind::parse};
    case PotRun::Status::runtime_error: return {std::nullopt, PotErrorKind::runtime};
  }
  return {std::nullopt, PotErrorKind::parse};
}

EvalRecord score_generation(const Problem& p, const std::string& cot_text, const std::string& pot_text,
                            bool pot_truncated) {
  EvalRecord r;
  r.id = p.id;
  r.template_id = p.template_id;
  r.gold = p.answer;
  r.cot_text = cot_text;
  r.pot_text = pot_text;
  r.cot_answer = extract_cot_answer(cot_text);
  const auto outcome = run_generated_pot(pot_text, pot_truncated);
  r.pot_answer = outcome.answer;
  r.pot_error_kind = outcome.kind;
  r.cot_correct = r.cot_answer.has_value() && answers_match(*r.cot_answer, p.answer);
  r.pot_correct = r.pot_answer.has_value() && answers_match(*r.pot_answer, p.answer);
  return r;
}

std::vector<EvalRecord> evaluate_model(const Model& model, const std::vector<Problem>& problems, EvalMode mode,
                                       const EvalDecode& decode) {
  if (problems.empty()) throw EmptyInputError("no problems to evaluate");
  const auto& vocab = corpus_vocabulary();
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  std::vector<EvalRecord> out;
  out.reserve(problems.size());
  for (const auto& p : problems) {
    const auto prompt = tune_prompt_tokens(p.question);
    if (prompt.size() >= max_len) {
      out.push_back(score_generation(p, "", "", true));
      continue;
    }
    DecodeOptions opts;
    opts.max_new = decode.max_new;
    opts.eos = Vocabulary::kEos;
    if (mode == EvalMode::one_stage) {
      const auto gen = generate(model, prompt, opts);
      const auto split = split_response(gen.tokens);
      out.push_back(score_generation(p, vocab.detokenize(split.cot_tokens), vocab.detokenize(split.pot_tokens),
                                     !split.has_eos));
      continue;
    }
    opts.stop_tokens = {Vocabulary::kSeparator};
    const auto stage1 = generate(model, prompt, opts);
    auto cot_tokens = stage1.tokens;
    if (!cot_tokens.empty() &&
        (cot_tokens.back() == Vocabulary::kSeparator || cot_tokens.back() == Vocabulary::kEos))
      cot_tokens.pop_back();
    if (!cot_tokens.empty() && cot_tokens.back() == Vocabulary::kNewline) cot_tokens.pop_back();
    const auto cot_text = vocab.detokenize(cot_tokens);
    const auto prompt2 = insert_prompt_tokens(p.question, cot_tokens);
    if (prompt2.size() >= max_len) {
      out.push_back(score_generation(p, cot_text, "", true));
      continue;
    }
    DecodeOptions opts2;
    opts2.max_new = decode.max_new;
    opts2.eos = Vocabulary::kEos;
    const auto stage2 = generate(model, prompt2, opts2);
    bool had_eos = false;
    const auto pot_text = strip_eos(stage2.tokens, had_eos);
    out.push_back(score_generation(p, cot_text, pot_text, !had_eos));
  }
  return out;
}

std::optional<Rational> hybrid_answer(const EvalRecord& r) {
  return r.pot_error_kind == PotErrorKind::none ? r.pot_answer : r.cot_answer;
}

ErrorClass classify_error(const EvalRecord& r) {
  if (r.pot_correct) return ErrorClass::none;
  if (r.pot_error_kind != PotErrorKind::none) return ErrorClass::execution;
  return ErrorClass::reasoning;
}

double cte_rate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw EmptyInputError("cte_rate of an empty record set");
  std::int64_t cte = 0;
  for (const auto& r : records) cte += r.cot_correct && !r.pot_correct;
  return static_cast<double>(cte) / static_cast<double>(records.size());
}

EvalReport summarize(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw EmptyInputError("no records to summarize");
  EvalReport report;
  std::vector<const EvalRecord*> all;
  std::map<std::string, std::vector<const EvalRecord*>> by_template;
  std::int64_t cot_correct = 0, cte = 0;
  for (const auto& r : records) {
    all.push_back(&r);
    by_template[r.template_id].push_back(&r);
    cot_correct += r.cot_correct;
    cte += r.cot_correct && !r.pot_correct;
  }
  report.overall = fold(all);
  report.conditional_cte_rate =
      cot_correct == 0 ? 0.0 : static_cast<double>(cte) / static_cast<double>(cot_correct);
  for (const auto& [id, rs] : by_template) report.per_template[id] = fold(rs);
  return report;
}

std::string record_to_json_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["template_id"] = r.template_id;
  j["gold"] = r.gold.to_string();
  j["cot_answer"] = optional_answer(r.cot_answer);
  j["pot_answer"] = optional_answer(r.pot_answer);
  j["pot_error_kind"] = to_string(r.pot_error_kind);
  j["cot_correct"] = r.cot_correct;
  j["pot_correct"] = r.pot_correct;
  j["cot_text"] = r.cot_text;
  j["pot_text"] = r.pot_text;
  return j.dump();
}

EvalRecord record_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::ordered_json::parse(line);
    EvalRecord r;
    r.id = j.at("id").get<std::int64_t>();
    r.template_id = j.at("template_id").get<std::string>();
    const auto gold = parse_rational(j.at("gold").get<std::string>());
    if (!gold) throw IoError("malformed gold answer in records file");
    r.gold = *gold;
    r.cot_answer = answer_from_json(j.at("cot_answer"));
    r.pot_answer = answer_from_json(j.at("pot_answer"));
    r.pot_error_kind = parse_pot_error_kind(j.at("pot_error_kind").get<std::string>());
    r.cot_correct = j.at("cot_correct").get<bool>();
    r.pot_correct = j.at("pot_correct").get<bool>();
    r.cot_text = j.at("cot_text").get<std::string>();
    r.pot_text = j.at("pot_text").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed evaluation record: ") + e.what());
  }
}

void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += record_to_json_line(r);
    text += '\n';
  }
  write_file_atomic(path, text);
}

std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json_line(line));
  return out;
}

std::string report_csv(const EvalReport& report) {
  const auto& s = report.overall;
  std::string out = "metric,value\n";
  const auto row = [&](const char* name, double v) { out += std::string(name) + "," + metric(v) + "\n"; };
  row("n", static_cast<double>(s.n));
  row("cot_accuracy", s.cot_accuracy);
  row("pot_accuracy", s.pot_accuracy);
  row("hybrid_accuracy", s.hybrid_accuracy);
  row("cte_rate", s.cte_rate);
  row("conditional_cte_rate", report.conditional_cte_rate);
  row("execution_error_rate", s.execution_error_rate);
  row("reasoning_error_rate", s.reasoning_error_rate);
  row("truncation_rate", s.truncation_rate);
  return out;
}

std::map<std::string, double> parse_report_csv(std::string_view text) {
  std::map<std::string, double> out;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      if (line != "metric,value") throw IoError("report.csv lacks the metric,value header");
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed report.csv row '" + line + "'");
    out[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return out;
}

std::string per_template_csv(const EvalReport& report) {
  std::string out = "template_id,n,cot_acc,pot_acc,hybrid_acc,cte_rate,exec_err,reason_err\n";
  for (const auto& [id, s] : report.per_template) {
    out += id + "," + std::to_string(s.n) + "," + metric(s.cot_accuracy) + "," + metric(s.pot_accuracy) + "," +
           metric(s.hybrid_accuracy) + "," + metric(s.cte_rate) + "," + metric(s.execution_error_rate) + "," +
           metric(s.reasoning_error_rate) + "\n";
  }
  return out;
}

std::string bars_svg(const EvalReport& report) {
  const auto& s = report.overall;
  const std::vector<std::pair<std::string, double>> bars{
      {"CoT acc", s.cot_accuracy},          {"PoT acc", s.pot_accuracy},
      {"Hybrid acc", s.hybrid_accuracy},    {"CTE", s.cte_rate},
      {"Exec err", s.execution_error_rate}, {"Reason err", s.reasoning_error_rate},
  };
  constexpr double kHeight = 200.0, kTop = 30.0, kBarWidth = 60.0, kGap = 30.0;
  const double width = 40.0 + static_cast<double>(bars.size()) * (kBarWidth + kGap);
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
         fmt("%.0f", kHeight + kTop + 50.0) + "\">\n";
  out += "<text x=\"20\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">n = " + std::to_string(s.n) +
         "</text>\n";
  out += "<line x1=\"20\" y1=\"" + fmt("%.1f", kTop + kHeight) + "\" x2=\"" + fmt("%.1f", width - 10.0) +
         "\" y2=\"" + fmt("%.1f", kTop + kHeight) + "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = 30.0 + static_cast<double>(i) * (kBarWidth + kGap);
    const double h = bars[i].second * kHeight;
    const char* colour = i < 3 ? "#4878a8" : "#c8553d";
    out += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.4f", kTop + kHeight - h) + "\" width=\"" +
           fmt("%.1f", kBarWidth) + "\" height=\"" + fmt("%.4f", h) + "\" fill=\"" + colour + "\"/>\n";
    out += "<text x=\"" + fmt("%.1f", x + kBarWidth / 2.0) + "\" y=\"" + fmt("%.4f", kTop + kHeight - h - 4.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           fmt("%.3f", bars[i].second) + "</text>\n";
    out += "<text x=\"" + fmt("%.1f", x + kBarWidth / 2.0) + "\" y=\"" + fmt("%.1f", kTop + kHeight + 18.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + bars[i].first + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  write_file_atomic(out_dir / "report.csv", report_csv(report));
  write_file_atomic(out_dir / "per_template.csv", per_template_csv(report));
  write_file_atomic(out_dir / "bars.svg", bars_svg(report));
}

}  // namespace htl
