#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "htl/corpus.hpp"
#include "htl/model.hpp"
#include "htl/rational.hpp"

namespace htl {

enum class PotErrorKind { none, parse, runtime, truncated };
const char* to_string(PotErrorKind k);
PotErrorKind parse_pot_error_kind(const std::string& name);

enum class EvalMode { one_stage, two_stage };
const char* to_string(EvalMode m);
// Accepts "one" / "two".
EvalMode parse_eval_mode(const std::string& name);

struct EvalRecord {
  std::int64_t id = 0;
  std::string template_id;
  Rational gold;
  std::optional<Rational> cot_answer;
  std::optional<Rational> pot_answer;
  PotErrorKind pot_error_kind = PotErrorKind::none;
  bool cot_correct = false;
  bool pot_correct = false;
  std::string cot_text;
  std::string pot_text;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct RateSummary {
  std::int64_t n = 0;
  double cot_accuracy = 0.0;
  double pot_accuracy = 0.0;
  double hybrid_accuracy = 0.0;
  double cte_rate = 0.0;
  double execution_error_rate = 0.0;
  double reasoning_error_rate = 0.0;
  double truncation_rate = 0.0;
};

struct EvalReport {
  RateSummary overall;
  // CTE count over CoT-correct items; 0 when no CoT is correct.
  double conditional_cte_rate = 0.0;
  std::map<std::string, RateSummary> per_template;
};

struct EvalDecode {
  int max_new = 160;
};

/// PoT answer and error kind of a completed or truncated program text.
struct PotOutcome {
  std::optional<Rational> answer;
  PotErrorKind kind = PotErrorKind::none;
};
PotOutcome run_generated_pot(const std::string& text, bool truncated);

/// Scores generated CoT / PoT texts against the problem's gold answer.
EvalRecord score_generation(const Problem& p, const std::string& cot_text, const std::string& pot_text,
                            bool pot_truncated);

/// Greedy decoding per problem. One-stage: the tune prompt produces
/// CoT ++ "****" ++ PoT. Two-stage: the tune prompt produces the CoT up to the
/// separator, then the insert prompt carrying that CoT produces the PoT.
std::vector<EvalRecord> evaluate_model(const Model& model, const std::vector<Problem>& problems, EvalMode mode,
                                       const EvalDecode& decode = {});

std::optional<Rational> hybrid_answer(const EvalRecord& r);

enum class ErrorClass { none, execution, reasoning };
const char* to_string(ErrorClass c);
ErrorClass classify_error(const EvalRecord& r);

// Throws EmptyInputError on an empty record set.
double cte_rate(const std::vector<EvalRecord>& records);
EvalReport summarize(const std::vector<EvalRecord>& records);

std::string record_to_json_line(const EvalRecord& r);
EvalRecord record_from_json_line(std::string_view line);
void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(const std::filesystem::path& path);

std::string report_csv(const EvalReport& report);
// Parses the metric,value rows of report.csv.
std::map<std::string, double> parse_report_csv(std::string_view text);
std::string per_template_csv(const EvalReport& report);
std::string bars_svg(const EvalReport& report);

/// Writes report.csv, per_template.csv and bars.svg into out_dir.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace htl
