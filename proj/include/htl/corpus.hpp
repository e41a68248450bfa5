#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "htl/mask.hpp"
#include "htl/rational.hpp"
#include "htl/vocab.hpp"

namespace htl {

struct Problem {
  std::int64_t id = 0;
  std::string template_id;
  std::vector<std::pair<std::string, std::int64_t>> params;
  std::string question;
  std::string cot;  // ends with "The answer is <n>."
  std::string pot;
  Rational answer;

  friend bool operator==(const Problem&, const Problem&) = default;
};

/// Template families. Each problem also draws a surface style: terse
/// arithmetic phrasing or a verbal scenario.
enum class TemplateFamily { unit_price, shopping, rate, add_remove, list_sum };
inline constexpr std::size_t kTemplateFamilyCount = 5;
const char* to_string(TemplateFamily f);

struct TemplateMix {
  // Indexed by TemplateFamily. list_sum produces long enumerations and is
  // off by default.
  std::vector<double> weights{1.0, 1.0, 1.0, 1.0, 0.0};
};

/// Vocabulary covering the instruction templates and every problem template.
const Vocabulary& corpus_vocabulary();

/// Deterministic in (n, seed, mix). Problem i depends only on (seed, i).
std::vector<Problem> generate_corpus(std::int64_t n, std::uint64_t seed, const TemplateMix& mix = {});
Problem generate_problem(std::int64_t index, std::uint64_t seed, const TemplateMix& mix = {});
// Throws RangeError on a malformed mix.
void validate_mix(const TemplateMix& mix);

/// n problems from the (seed) stream whose questions are pairwise distinct
/// and absent from `exclude`. Ids keep their stream index.
std::vector<Problem> generate_disjoint(std::int64_t n, std::uint64_t seed, const std::vector<Problem>& exclude,
                                       const TemplateMix& mix = {});

/// One-stage layout: [preamble + tune instruction + question] (Q) ++ [CoT] (C)
/// ++ ["****" + program + eos] (P).
SegmentedSequence render_tune_prompt(const Problem& p, std::size_t max_seq_len = 512);

/// Two-stage layout: the CoT sits inside the prompt under "### Solution:" and
/// only the program is the response. Q ∪ C is the whole prompt.
SegmentedSequence render_insert_prompt(const Problem& p, std::size_t max_seq_len = 512);

/// Prompt tokens for one-stage generation (the Q span of the tune layout).
std::vector<int> tune_prompt_tokens(std::string_view question);

/// Prompt tokens asking for a program given a (possibly generated) CoT.
std::vector<int> insert_prompt_tokens(std::string_view question, std::span<const int> cot_tokens);

/// Value after the last "The answer is", or nullopt.
std::optional<Rational> extract_cot_answer(std::string_view text);

/// Generated continuation of a tune prompt split at the first separator.
struct SplitResponse {
  std::vector<int> cot_tokens;
  std::vector<int> pot_tokens;  // eos and the separator's newline stripped
  bool has_separator = false;
  bool has_eos = false;
};
SplitResponse split_response(std::span<const int> generated);

// Line-delimited JSON, one problem per line, fixed field order.
std::string problem_to_json_line(const Problem& p);
Problem problem_from_json_line(std::string_view line);
void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems);
std::vector<Problem> read_corpus(const std::filesystem::path& path);

}  // namespace htl
