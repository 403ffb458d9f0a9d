#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace refgame {

inline constexpr std::size_t kDefaultMaxPhraseLen = 14;
inline constexpr std::string_view kPairSeparator = "vs";

/// A short lowercased description of one visual property ("pointy nose").
struct AttributePhrase {
  std::vector<std::string> tokens;
  std::string raw_text;

  /// Space-joined tokens; the canonical surface used for counting and lookup.
  std::string text() const;

  bool operator==(const AttributePhrase& other) const { return tokens == other.tokens; }
};

/// Lowercase, whitespace split, strip trailing ".,!?" from each token, keep
/// the first `max_len` tokens. Throws EmptyPhrase when nothing survives and
/// ReservedToken when a token equals the pair separator.
AttributePhrase tokenize_phrase(std::string_view raw, std::size_t max_len = kDefaultMaxPhraseLen);

/// Wraps already-normalized tokens (e.g. decoder output) without re-tokenizing.
AttributePhrase phrase_from_tokens(std::vector<std::string> tokens);

std::string join_tokens(const std::vector<std::string>& tokens);

/// One "P1 vs P2" difference; `position` is the 1-based slot in the annotation.
struct PhrasePair {
  AttributePhrase left;
  AttributePhrase right;
  int position = 1;

  /// left.tokens + ["vs"] + right.tokens
  std::vector<std::string> serialized_tokens() const;
  /// The same difference as seen from the other image: right vs left.
  PhrasePair swapped() const { return {right, left, position}; }
};

/// Splits a decoded sequence at the first separator. Without a separator the
/// whole sequence is the first half and the second half is empty.
std::pair<std::vector<std::string>, std::vector<std::string>> split_phrase_pair(
    const std::vector<std::string>& tokens);

}  // namespace refgame
