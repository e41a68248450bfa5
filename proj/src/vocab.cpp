#include "htl/vocab.hpp"

#include <algorithm>
#include <cctype>

#include "htl/error.hpp"

namespace htl {

namespace {

constexpr std::string_view kPunctuation = ".,?:'#*+-/=()";

const char* const kSpecials[] = {"<s0>", "<s1>", "<s2>", "<s3>", "<pad>", "<eos>", "****", "\n"};

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  for (const char* s : kSpecials) add(s);
  for (char d = '0'; d <= '9'; ++d) {
    add(std::string(1, d));
    add(std::string(" ") + d);
  }
  for (char p : kPunctuation) {
    add(std::string(1, p));
    add(std::string(" ") + p);
  }
  for (const auto& w : words) {
    if (w.empty() || !std::all_of(w.begin(), w.end(), is_letter))
      throw TokenizationError("vocabulary word '" + w + "' is not a letter run");
    if (find(w) < 0) add(w);
    if (find(" " + w) < 0) add(" " + w);
  }
}

void Vocabulary::add(std::string piece) {
  ids_.emplace(piece, static_cast<int>(pieces_.size()));
  pieces_.push_back(std::move(piece));
}

int Vocabulary::find(std::string_view piece) const {
  const auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

std::string Vocabulary::preamble_text() const {
  std::string s;
  for (int i = 0; i < kPreambleCount; ++i) s += pieces_[static_cast<std::size_t>(kPreamble0 + i)];
  return s;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::size_t i = 0;
  const auto error = [&](std::size_t at, const std::string& what) {
    throw TokenizationError(what + " at byte " + std::to_string(at));
  };
  while (i < text.size()) {
    if (text[i] == '<' || text[i] == '*') {
      bool matched = false;
      for (int id = 0; id <= kSeparator; ++id) {
        const std::string& sp = pieces_[static_cast<std::size_t>(id)];
        if (text.substr(i, sp.size()) == sp) {
          out.push_back(id);
          i += sp.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (text[i] == '\n') {
      out.push_back(kNewline);
      ++i;
      continue;
    }
    const std::size_t start = i;
    const std::size_t j = text[i] == ' ' ? i + 1 : i;
    if (j >= text.size()) error(start, "trailing space");
    const char c = text[j];
    std::size_t end = j + 1;
    if (is_letter(c)) {
      while (end < text.size() && is_letter(text[end])) ++end;
    } else if (!is_digit(c) && kPunctuation.find(c) == std::string_view::npos) {
      error(j, std::string("character '") + c + "' outside the alphabet");
    }
    const auto piece = text.substr(start, end - start);
    const int id = find(piece);
    if (id < 0) error(start, "unknown word '" + std::string(piece) + "'");
    out.push_back(id);
    i = end;
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string s;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw TokenizationError("token id " + std::to_string(id) + " outside vocabulary");
    s += pieces_[static_cast<std::size_t>(id)];
  }
  return s;
}

}  // namespace htl
