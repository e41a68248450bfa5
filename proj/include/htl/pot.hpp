#pragma once

// The program mini-language:
//
//   program := stmt ('\n' stmt)*
//   stmt    := NAME '=' expr | 'print' '(' expr ')'
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := NUMBER | NAME | '(' expr ')'
//
// Numbers are integers or terminating decimals and evaluate to exact
// rationals. A program holds exactly one print, as its final statement.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htl/rational.hpp"

namespace htl {

struct PotExpr {
  enum class Kind { number, name, negate, add, subtract, multiply, divide };
  Kind kind = Kind::number;
  Rational value;
  std::string name;
  int lhs = -1;  // node indices into PotProgram::nodes
  int rhs = -1;
};

struct PotStatement {
  bool is_print = false;
  std::string target;  // empty for print
  int first = -1;  // first node of this statement's expression
  int expr = -1;   // root node
  int line = 0;
};

struct PotProgram {
  std::vector<PotExpr> nodes;
  std::vector<PotStatement> statements;
};

struct PotParseError {
  int line = 0;    // 1-based
  int column = 0;  // 1-based
  std::string message;

  std::string to_string() const;
};

struct PotParseResult {
  std::optional<PotProgram> program;
  std::optional<PotParseError> error;

  bool ok() const { return program.has_value(); }
};

PotParseResult parse_pot(std::string_view text);

enum class PotRuntimeError { none, division_by_zero, undefined_name, step_limit, overflow };

const char* to_string(PotRuntimeError e);

struct PotExecResult {
  std::optional<Rational> value;
  PotRuntimeError error = PotRuntimeError::none;
  std::string message;

  bool ok() const { return value.has_value(); }
};

inline constexpr std::int64_t kDefaultStepLimit = 10'000;

PotExecResult exec_pot(const PotProgram& program, std::int64_t step_limit = kDefaultStepLimit);

/// Outcome of running program text end to end.
struct PotRun {
  enum class Status { ok, parse_error, runtime_error };
  Status status = Status::ok;
  std::optional<Rational> value;
  std::string message;
};

PotRun run_pot(std::string_view text, std::int64_t step_limit = kDefaultStepLimit);

}  // namespace htl
