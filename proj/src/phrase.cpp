#include "refgame/phrase.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "refgame/error.hpp"

namespace refgame {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string AttributePhrase::text() const { return join_tokens(tokens); }

AttributePhrase tokenize_phrase(std::string_view raw, std::size_t max_len) {
  AttributePhrase phrase;
  phrase.raw_text = std::string(raw);

  std::istringstream in{std::string(raw)};
  std::string word;
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    while (!word.empty() && std::string_view(".,!?").find(word.back()) != std::string_view::npos) {
      word.pop_back();
    }
    if (word.empty()) continue;
    if (word == kPairSeparator) {
      throw Error(ErrorCode::ReservedToken, "phrase contains the pair separator: \"" + phrase.raw_text + "\"");
    }
    if (phrase.tokens.size() < max_len) phrase.tokens.push_back(std::move(word));
  }
  if (phrase.tokens.empty()) {
    throw Error(ErrorCode::EmptyPhrase, "no tokens in \"" + phrase.raw_text + "\"");
  }
  return phrase;
}

AttributePhrase phrase_from_tokens(std::vector<std::string> tokens) {
  AttributePhrase phrase;
  phrase.raw_text = join_tokens(tokens);
  phrase.tokens = std::move(tokens);
  return phrase;
}

std::vector<std::string> PhrasePair::serialized_tokens() const {
  std::vector<std::string> out = left.tokens;
  out.emplace_back(kPairSeparator);
  out.insert(out.end(), right.tokens.begin(), right.tokens.end());
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_phrase_pair(
    const std::vector<std::string>& tokens) {
  auto sep = std::find(tokens.begin(), tokens.end(), kPairSeparator);
  if (sep == tokens.end()) return {tokens, {}};
  return {std::vector<std::string>(tokens.begin(), sep), std::vector<std::string>(sep + 1, tokens.end())};
}

}  // namespace refgame
