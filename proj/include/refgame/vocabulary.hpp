#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "refgame/annotation.hpp"

namespace refgame {

using TokenId = std::int32_t;

inline constexpr TokenId kStartId = 0;
inline constexpr TokenId kEndId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kSeparatorId = 3;
inline constexpr TokenId kNumSpecials = 4;
inline constexpr std::size_t kDefaultMinFreq = 6;

/// Token <-> id map. Ids 0..3 are start, end, unk and the pair separator; the
/// remaining ids follow descending training frequency, ties lexicographic.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> regular_tokens);

  TokenId id_of(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  /// FNV-1a over the token list; recorded in checkpoint manifests.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Keeps tokens seen at least `min_freq` times across both sides of every
/// phrase pair. Throws EmptyCorpus for no records, InvalidArgument for min_freq 0.
Vocabulary build_vocabulary(const std::vector<AnnotationRecord>& records,
                            std::size_t min_freq = kDefaultMinFreq);

/// start + token ids (unk for unknown words) + end.
std::vector<TokenId> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<TokenId> encode_phrase(const AttributePhrase& phrase, const Vocabulary& vocab);
/// Inverse of encode: drops start/end framing, keeps everything else.
std::vector<std::string> decode_ids(const std::vector<TokenId>& ids, const Vocabulary& vocab);

}  // namespace refgame
