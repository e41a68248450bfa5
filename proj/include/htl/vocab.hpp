#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htl {

/// Word-level vocabulary with single-character digits. Every word, digit and
/// punctuation mark has a bare form and a form carrying one leading space,
/// which makes tokenization lossless without whitespace tokens.
///
/// Ids 0-3 are the fixed preamble tokens that open every rendered sequence.
class Vocabulary {
 public:
  static constexpr int kPreamble0 = 0;
  static constexpr int kPreambleCount = 4;
  static constexpr int kPad = 4;
  static constexpr int kEos = 5;
  static constexpr int kSeparator = 6;  // "****"
  static constexpr int kNewline = 7;

  explicit Vocabulary(const std::vector<std::string>& words);

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  // -1 when absent.
  int find(std::string_view piece) const;

  // Throws TokenizationError on characters or words outside the alphabet.
  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> ids) const;

  std::string preamble_text() const;

 private:
  void add(std::string piece);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace htl
