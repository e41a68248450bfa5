#include "htl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "htl/error.hpp"
#include "htl/fileio.hpp"
#include "htl/random.hpp"

namespace htl {

namespace {

using Params = std::map<std::string, std::string>;

constexpr std::string_view kTuneHeader =
    "Below is an instruction that describes a task.\n"
    "Write a response that appropriately completes the request.\n"
    "I'd like you to solve this problem in 3 steps:\n"
    "1.Answer the question in plain language without writing any code.\n"
    "2.Output one line of *.\n"
    "3.Write program code based on the solution process in step 1 to solve the problem.\n"
    "### Instruction:\n";
constexpr std::string_view kTuneFooter = "\nLet's write a program.\n### Response:\n";

constexpr std::string_view kInsertHeader =
    "Below is an instruction that describes a task.\n"
    "Write a response that appropriately completes the request.\n"
    "After the instruction, there is an existing solution. You need to write a corresponding "
    "solution program when referring to this solution.\n"
    "### Instruction:\n";
constexpr std::string_view kInsertMiddle = "\n### Solution:\n";
constexpr std::string_view kInsertFooter = "\nLet's write a program.\n### Response:\n";

const std::vector<std::string> kNames{"Tom", "Ann", "Sam", "Mia", "Ben", "Lily"};
const std::vector<std::string> kItems{"apples", "pens", "books", "cakes", "toys"};
const std::vector<std::string> kItem{"apple", "pen", "book", "cake", "toy"};

struct Template {
  std::string question;
  std::string cot;
};

// Index: family * 2 + (verbal ? 0 : 1). list_sum questions get their list
// spliced in through {list} / {sum_expr}.
const std::vector<Template>& templates() {
  static const std::vector<Template> t{
      {"One {item} costs {p} dollars. {name} buys {k} {items}. How many dollars does {name} spend?",
       "{name} buys {k} {items} and each costs {p} dollars. So {name} spends {k} * {p} = {kp} dollars. "
       "The answer is {kp}."},
      {"What is {k} times {p}?", "{k} * {p} = {kp}. The answer is {kp}."},
      {"{name} has {m} dollars. {name} buys {k} {items} at {p} dollars each. How many dollars does {name} "
       "have left?",
       "The {items} cost {k} * {p} = {c} dollars. So {name} has {m} - {c} = {r} dollars left. The answer is {r}."},
      {"What is {m} minus {k} times {p}?", "{k} * {p} = {c}. {m} - {c} = {r}. The answer is {r}."},
      {"A machine makes {total} {items} in {t} hours. How many {items} does it make each hour?",
       "The machine makes {total} / {t} = {r} {items} each hour. The answer is {r}."},
      {"What is {total} divided by {t}?", "{total} / {t} = {r}. The answer is {r}."},
      {"{name} has {a} {items}. {name} gets {b} more {items} and gives away {c}. How many {items} does {name} "
       "have now?",
       "{name} has {a} + {b} = {s} {items}. After giving away {c}, {name} has {s} - {c} = {r}. The answer is {r}."},
      {"What is {a} plus {b} minus {c}?", "{a} + {b} = {s}. {s} - {c} = {r}. The answer is {r}."},
      {"{name} has bags of {items}. The bags hold {list} {items}. How many {items} does {name} have?",
       "The bags hold {sum_expr} = {r} {items}. The answer is {r}."},
      {"What is {plus_list}?", "{sum_expr} = {r}. The answer is {r}."},
  };
  return t;
}

// PoT programs use fixed names per family.
const std::vector<std::string> kProgramWords{"count", "price", "total", "money", "cost",  "left",
                                             "hours", "rate",  "start", "got",   "gave",  "now",
                                             "print"};

std::string substitute(std::string_view pattern, const Params& params) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      const auto close = pattern.find('}', i);
      const std::string key(pattern.substr(i + 1, close - i - 1));
      const auto it = params.find(key);
      if (it == params.end()) throw ConfigError("template placeholder {" + key + "} unbound");
      out += it->second;
      i = close + 1;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

void collect_words(std::string_view text, std::set<std::string>& words) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      i = text.find('}', i) + 1;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(text[i]))) {
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      words.emplace(text.substr(i, j - i));
      i = j;
      continue;
    }
    ++i;
  }
}

std::string num(std::int64_t v) { return std::to_string(v); }

Problem make_problem(std::int64_t id, TemplateFamily family, bool verbal, Rng& rng) {
  Problem p;
  p.id = id;
  p.template_id = std::string(to_string(family)) + (verbal ? ".verbal" : ".terse");
  Params s;
  const auto who = static_cast<std::size_t>(rng.below(kNames.size()));
  const auto what = static_cast<std::size_t>(rng.below(kItems.size()));
  s["name"] = kNames[who];
  s["items"] = kItems[what];
  s["item"] = kItem[what];
  std::int64_t answer = 0;
  const auto put = [&](const std::string& key, std::int64_t v) {
    p.params.emplace_back(key, v);
    s[key] = num(v);
  };
  switch (family) {
    case TemplateFamily::unit_price: {
      const auto k = rng.range(2, 9), pr = rng.range(2, 9);
      put("k", k);
      put("p", pr);
      answer = k * pr;
      s["kp"] = num(answer);
      p.pot = "count = " + num(k) + "\nprice = " + num(pr) + "\ntotal = count * price\nprint(total)";
      break;
    }
    case TemplateFamily::shopping: {
      const auto k = rng.range(2, 5), pr = rng.range(2, 9), rest = rng.range(1, 20);
      const auto m = k * pr + rest;
      put("m", m);
      put("k", k);
      put("p", pr);
      s["c"] = num(k * pr);
      answer = rest;
      s["r"] = num(answer);
      p.pot = "money = " + num(m) + "\ncount = " + num(k) + "\nprice = " + num(pr) +
              "\ncost = count * price\nleft = money - cost\nprint(left)";
      break;
    }
    case TemplateFamily::rate: {
      const auto t = rng.range(2, 9), r = rng.range(2, 9);
      put("total", t * r);
      put("t", t);
      answer = r;
      s["r"] = num(r);
      p.pot = "total = " + num(t * r) + "\nhours = " + num(t) + "\nrate = total / hours\nprint(rate)";
      break;
    }
    case TemplateFamily::add_remove: {
      const auto a = rng.range(2, 30), b = rng.range(2, 20);
      const auto c = rng.range(1, a + b - 1);
      put("a", a);
      put("b", b);
      put("c", c);
      s["s"] = num(a + b);
      answer = a + b - c;
      s["r"] = num(answer);
      p.pot = "start = " + num(a) + "\ngot = " + num(b) + "\ngave = " + num(c) + "\nnow = start + got - gave\nprint(now)";
      break;
    }
    case TemplateFamily::list_sum: {
      const auto n = rng.range(3, 5);
      std::string list, sum_expr, plus_list;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto v = rng.range(1, 9);
        p.params.emplace_back("x" + num(i), v);
        answer += v;
        if (i > 0) {
          list += i + 1 == n ? " and " : ", ";
          sum_expr += " + ";
          plus_list += " plus ";
        }
        plus_list += num(v);
        list += num(v);
        sum_expr += num(v);
      }
      s["list"] = list;
      s["sum_expr"] = sum_expr;
      s["plus_list"] = plus_list;
      s["r"] = num(answer);
      p.pot = "total = " + sum_expr + "\nprint(total)";
      break;
    }
  }
  const auto& t = templates()[static_cast<std::size_t>(family) * 2 + (verbal ? 0 : 1)];
  p.question = substitute(t.question, s);
  p.cot = substitute(t.cot, s);
  p.answer = Rational(answer);
  return p;
}

std::vector<int> tokens_of(std::string_view text) { return corpus_vocabulary().tokenize(text); }

SegmentedSequence assemble(std::vector<int> q, std::vector<int> c, std::vector<int> pt, std::size_t max_len,
                           std::int64_t id) {
  SegmentedSequence seg;
  seg.tokens = std::move(q);
  seg.q_span = {0, seg.tokens.size()};
  seg.tokens.insert(seg.tokens.end(), c.begin(), c.end());
  seg.c_span = {seg.q_span.end, seg.tokens.size()};
  seg.tokens.insert(seg.tokens.end(), pt.begin(), pt.end());
  seg.p_span = {seg.c_span.end, seg.tokens.size()};
  if (seg.length() > max_len)
    throw LengthError("problem " + std::to_string(id) + " renders to " + std::to_string(seg.length()) +
                      " tokens, above max_seq_len " + std::to_string(max_len));
  seg.validate();
  return seg;
}

}  // namespace

const char* to_string(TemplateFamily f) {
  switch (f) {
    case TemplateFamily::unit_price: return "unit_price";
    case TemplateFamily::shopping: return "shopping";
    case TemplateFamily::rate: return "rate";
    case TemplateFamily::add_remove: return "add_remove";
    case TemplateFamily::list_sum: return "list_sum";
  }
  return "unknown";
}

const Vocabulary& corpus_vocabulary() {
  static const Vocabulary vocab = [] {
    std::set<std::string> words;
    for (auto text : {kTuneHeader, kTuneFooter, kInsertHeader, kInsertMiddle, kInsertFooter})
      collect_words(text, words);
    for (const auto& t : templates()) {
      collect_words(t.question, words);
      collect_words(t.cot, words);
    }
    for (const auto* list : {&kNames, &kItems, &kItem, &kProgramWords})
      for (const auto& w : *list) words.insert(w);
    return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
  }();
  return vocab;
}

std::vector<Problem> generate_corpus(std::int64_t n, std::uint64_t seed, const TemplateMix& mix) {
  if (n < 1) throw RangeError("corpus size must be at least 1");
  validate_mix(mix);
  std::vector<Problem> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(generate_problem(i, seed, mix));
  return out;
}

void validate_mix(const TemplateMix& mix) {
  if (mix.weights.size() != kTemplateFamilyCount) throw RangeError("template mix needs one weight per family");
  double total = 0.0;
  for (double w : mix.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw RangeError("template weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) throw RangeError("template weights are all zero");
}

std::vector<Problem> generate_disjoint(std::int64_t n, std::uint64_t seed, const std::vector<Problem>& exclude,
                                       const TemplateMix& mix) {
  if (n < 1) throw RangeError("corpus size must be at least 1");
  validate_mix(mix);
  std::set<std::string> seen;
  for (const auto& p : exclude) seen.insert(p.question);
  std::vector<Problem> out;
  const std::int64_t max_draws = 1000 * n;
  for (std::int64_t i = 0; static_cast<std::int64_t>(out.size()) < n; ++i) {
    if (i >= max_draws) throw RangeError("could not draw enough problems disjoint from the exclusion set");
    auto p = generate_problem(i, seed, mix);
    if (seen.insert(p.question).second) out.push_back(std::move(p));
  }
  return out;
}

Problem generate_problem(std::int64_t index, std::uint64_t seed, const TemplateMix& mix) {
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(index)}));
  const auto family = static_cast<TemplateFamily>(rng.weighted(mix.weights));
  const bool verbal = rng.below(2) == 0;
  return make_problem(index, family, verbal, rng);
}

std::vector<int> tune_prompt_tokens(std::string_view question) {
  const auto& v = corpus_vocabulary();
  std::string text = v.preamble_text();
  text += kTuneHeader;
  text += question;
  text += kTuneFooter;
  return v.tokenize(text);
}

std::vector<int> insert_prompt_tokens(std::string_view question, std::span<const int> cot_tokens) {
  const auto& v = corpus_vocabulary();
  std::string q = v.preamble_text();
  q += kInsertHeader;
  q += question;
  q += kInsertMiddle;
  auto out = v.tokenize(q);
  out.insert(out.end(), cot_tokens.begin(), cot_tokens.end());
  const auto tail = v.tokenize(kInsertFooter);
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

SegmentedSequence render_tune_prompt(const Problem& p, std::size_t max_seq_len) {
  auto c = tokens_of(p.cot + "\n");
  auto pt = tokens_of("****\n" + p.pot + "<eos>");
  return assemble(tune_prompt_tokens(p.question), std::move(c), std::move(pt), max_seq_len, p.id);
}

SegmentedSequence render_insert_prompt(const Problem& p, std::size_t max_seq_len) {
  const auto& v = corpus_vocabulary();
  std::string q = v.preamble_text();
  q += kInsertHeader;
  q += p.question;
  q += kInsertMiddle;
  std::string c = p.cot;
  c += kInsertFooter;
  auto seg = assemble(tokens_of(q), tokens_of(c), tokens_of(p.pot + "<eos>"), max_seq_len, p.id);
  seg.c_in_prompt = true;
  return seg;
}

std::optional<Rational> extract_cot_answer(std::string_view text) {
  constexpr std::string_view marker = "The answer is";
  const auto at = text.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t i = at + marker.size();
  while (i < text.size() && text[i] == ' ') ++i;
  std::size_t j = i;
  while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '-' ||
                             text[j] == '.' || text[j] == '/'))
    ++j;
  auto number = text.substr(i, j - i);
  while (!number.empty() && number.back() == '.') number.remove_suffix(1);
  if (number.empty()) return std::nullopt;
  return parse_rational(number);
}

SplitResponse split_response(std::span<const int> generated) {
  SplitResponse r;
  std::size_t end = generated.size();
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (generated[i] == Vocabulary::kEos) {
      end = i;
      r.has_eos = true;
      break;
    }
  }
  std::size_t sep = end;
  for (std::size_t i = 0; i < end; ++i) {
    if (generated[i] == Vocabulary::kSeparator) {
      sep = i;
      r.has_separator = true;
      break;
    }
  }
  r.cot_tokens.assign(generated.begin(), generated.begin() + static_cast<std::ptrdiff_t>(sep));
  if (!r.cot_tokens.empty() && r.cot_tokens.back() == Vocabulary::kNewline) r.cot_tokens.pop_back();
  if (r.has_separator) {
    std::size_t start = sep + 1;
    if (start < end && generated[start] == Vocabulary::kNewline) ++start;
    r.pot_tokens.assign(generated.begin() + static_cast<std::ptrdiff_t>(start),
                        generated.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return r;
}

std::string problem_to_json_line(const Problem& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["template_id"] = p.template_id;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.params) params[k] = v;
  j["params"] = std::move(params);
  j["question"] = p.question;
  j["cot"] = p.cot;
  j["pot"] = p.pot;
  j["answer_num"] = p.answer.num();
  j["answer_den"] = p.answer.den();
  return j.dump();
}

Problem problem_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::ordered_json::parse(line);
    Problem p;
    p.id = j.at("id").get<std::int64_t>();
    p.template_id = j.at("template_id").get<std::string>();
    for (const auto& [k, v] : j.at("params").items()) p.params.emplace_back(k, v.get<std::int64_t>());
    p.question = j.at("question").get<std::string>();
    p.cot = j.at("cot").get<std::string>();
    p.pot = j.at("pot").get<std::string>();
    p.answer = Rational(j.at("answer_num").get<std::int64_t>(), j.at("answer_den").get<std::int64_t>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed corpus record: ") + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  std::string text;
  for (const auto& p : problems) {
    text += problem_to_json_line(p);
    text += '\n';
  }
  write_file_atomic(path, text);
}

std::vector<Problem> read_corpus(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<Problem> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(problem_from_json_line(line));
  }
  return out;
}

}  // namespace htl
