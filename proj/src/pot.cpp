#include "htl/pot.hpp"

#include <cctype>
#include <map>
#include <stdexcept>

namespace htl {

std::string PotParseError::to_string() const {
  return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
}

namespace {

constexpr int kMaxNesting = 256;

struct Failure {
  PotParseError error;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  PotProgram parse_program() {
    PotProgram prog;
    prog_ = &prog;
    bool seen_print = false;
    while (true) {
      skip_blank();
      if (at_end()) break;
      if (peek() == '\n') {
        advance();
        continue;
      }
      const int line = line_, col = col_;
      if (seen_print) fail(line, col, "statement after print; print must be the final statement");
      PotStatement st = parse_statement();
      seen_print = seen_print || st.is_print;
      prog.statements.push_back(std::move(st));
      skip_blank();
      if (!at_end()) {
        if (peek() != '\n') fail(line_, col_, std::string("unexpected '") + peek() + "' after statement");
        advance();
      }
    }
    if (!seen_print) fail(line_, col_, "program has no print statement");
    return prog;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_blank() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) advance();
  }
  [[noreturn]] void fail(int line, int col, std::string msg) { throw Failure{{line, col, std::move(msg)}}; }
  [[noreturn]] void fail_here(std::string msg) { fail(line_, col_, std::move(msg)); }

  static bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  std::string read_name() {
    std::string s;
    while (!at_end() && name_char(peek())) {
      s.push_back(peek());
      advance();
    }
    return s;
  }

  void expect(char c) {
    skip_blank();
    if (at_end() || peek() != c) {
      if (at_end() || peek() == '\n') fail_here(std::string("expected '") + c + "' before end of line");
      fail_here(std::string("expected '") + c + "', found '" + peek() + "'");
    }
    advance();
  }

  int add_node(PotExpr e) {
    prog_->nodes.push_back(std::move(e));
    return static_cast<int>(prog_->nodes.size()) - 1;
  }

  PotStatement parse_statement() {
    PotStatement st;
    st.line = line_;
    st.first = static_cast<int>(prog_->nodes.size());
    if (!name_start(peek())) fail_here(std::string("expected a statement, found '") + peek() + "'");
    const int name_col = col_;
    std::string name = read_name();
    skip_blank();
    if (name == "print" && !at_end() && peek() == '(') {
      advance();
      st.is_print = true;
      st.expr = parse_expr(0);
      expect(')');
      return st;
    }
    if (name == "print") fail(st.line, name_col, "'print' is reserved");
    expect('=');
    st.target = std::move(name);
    st.expr = parse_expr(0);
    return st;
  }

  int parse_expr(int depth) {
    int lhs = parse_term(depth);
    while (true) {
      skip_blank();
      if (at_end() || (peek() != '+' && peek() != '-')) return lhs;
      const char op = peek();
      advance();
      const int rhs = parse_term(depth);
      PotExpr e;
      e.kind = op == '+' ? PotExpr::Kind::add : PotExpr::Kind::subtract;
      e.lhs = lhs;
      e.rhs = rhs;
      lhs = add_node(std::move(e));
    }
  }

  int parse_term(int depth) {
    int lhs = parse_unary(depth);
    while (true) {
      skip_blank();
      if (at_end() || (peek() != '*' && peek() != '/')) return lhs;
      const char op = peek();
      advance();
      const int rhs = parse_unary(depth);
      PotExpr e;
      e.kind = op == '*' ? PotExpr::Kind::multiply : PotExpr::Kind::divide;
      e.lhs = lhs;
      e.rhs = rhs;
      lhs = add_node(std::move(e));
    }
  }

  int parse_unary(int depth) {
    if (depth > kMaxNesting) fail_here("expression nested too deeply");
    skip_blank();
    if (!at_end() && peek() == '-') {
      advance();
      PotExpr e;
      e.kind = PotExpr::Kind::negate;
      e.lhs = parse_unary(depth + 1);
      return add_node(std::move(e));
    }
    return parse_primary(depth);
  }

  int parse_primary(int depth) {
    skip_blank();
    if (at_end() || peek() == '\n') fail_here("expected an expression");
    const char c = peek();
    if (c == '(') {
      advance();
      const int inner = parse_expr(depth + 1);
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      const int col = col_;
      std::string lit;
      while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.')) {
        lit.push_back(peek());
        advance();
      }
      const auto value = parse_rational(lit);
      if (!value || lit.find('/') != std::string::npos) fail(line_, col, "malformed number '" + lit + "'");
      PotExpr e;
      e.kind = PotExpr::Kind::number;
      e.value = *value;
      return add_node(std::move(e));
    }
    if (name_start(c)) {
      const int col = col_;
      std::string name = read_name();
      if (name == "print") fail(line_, col, "'print' is not a value");
      PotExpr e;
      e.kind = PotExpr::Kind::name;
      e.name = std::move(name);
      return add_node(std::move(e));
    }
    fail_here(std::string("unexpected '") + c + "' in expression");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  PotProgram* prog_ = nullptr;
};

}  // namespace

PotParseResult parse_pot(std::string_view text) {
  PotParseResult result;
  try {
    Parser parser(text);
    result.program = parser.parse_program();
  } catch (const Failure& f) {
    result.error = f.error;
  }
  return result;
}

const char* to_string(PotRuntimeError e) {
  switch (e) {
    case PotRuntimeError::none: return "none";
    case PotRuntimeError::division_by_zero: return "division_by_zero";
    case PotRuntimeError::undefined_name: return "undefined_name";
    case PotRuntimeError::step_limit: return "step_limit";
    case PotRuntimeError::overflow: return "overflow";
  }
  return "unknown";
}

PotExecResult exec_pot(const PotProgram& program, std::int64_t step_limit) {
  PotExecResult result;
  std::map<std::string, Rational, std::less<>> env;
  std::vector<Rational> slot(program.nodes.size());
  std::int64_t steps = 0;
  const auto fail = [&](PotRuntimeError e, std::string msg) {
    result.value.reset();
    result.error = e;
    result.message = std::move(msg);
    return result;
  };
  for (const PotStatement& st : program.statements) {
    // Children precede parents in node order, so the statement's nodes can be
    // evaluated left to right.
    for (int i = st.first; i <= st.expr; ++i) {
      if (++steps > step_limit)
        return fail(PotRuntimeError::step_limit, "step limit " + std::to_string(step_limit) + " exceeded");
      const PotExpr& e = program.nodes[static_cast<std::size_t>(i)];
      try {
        switch (e.kind) {
          case PotExpr::Kind::number: slot[i] = e.value; break;
          case PotExpr::Kind::name: {
            const auto it = env.find(e.name);
            if (it == env.end())
              return fail(PotRuntimeError::undefined_name,
                          "line " + std::to_string(st.line) + ": name '" + e.name + "' is not defined");
            slot[i] = it->second;
            break;
          }
          case PotExpr::Kind::negate: slot[i] = -slot[e.lhs]; break;
          case PotExpr::Kind::add: slot[i] = slot[e.lhs] + slot[e.rhs]; break;
          case PotExpr::Kind::subtract: slot[i] = slot[e.lhs] - slot[e.rhs]; break;
          case PotExpr::Kind::multiply: slot[i] = slot[e.lhs] * slot[e.rhs]; break;
          case PotExpr::Kind::divide:
            if (slot[e.rhs].is_zero())
              return fail(PotRuntimeError::division_by_zero, "line " + std::to_string(st.line) + ": division by zero");
            slot[i] = slot[e.lhs] / slot[e.rhs];
            break;
        }
      } catch (const RationalOverflow&) {
        return fail(PotRuntimeError::overflow, "line " + std::to_string(st.line) + ": arithmetic overflow");
      }
    }
    if (st.is_print) {
      result.value = slot[st.expr];
      return result;
    }
    env[st.target] = slot[st.expr];
  }
  return fail(PotRuntimeError::undefined_name, "program ended without print");
}

PotRun run_pot(std::string_view text, std::int64_t step_limit) {
  PotRun run;
  const auto parsed = parse_pot(text);
  if (!parsed.ok()) {
    run.status = PotRun::Status::parse_error;
    run.message = parsed.error->to_string();
    return run;
  }
  const auto exec = exec_pot(*parsed.program, step_limit);
  if (!exec.ok()) {
    run.status = PotRun::Status::runtime_error;
    run.message = exec.message;
    return run;
  }
  run.value = exec.value;
  return run;
}

}  // namespace htl
