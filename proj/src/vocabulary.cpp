#include "refgame/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "refgame/error.hpp"

namespace refgame {

namespace {
const std::vector<std::string> kSpecials = {"<start>", "<end>", "<unk>", std::string(kPairSeparator)};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> regular_tokens) : tokens_(kSpecials) {
  tokens_.insert(tokens_.end(), std::make_move_iterator(regular_tokens.begin()),
                 std::make_move_iterator(regular_tokens.end()));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary token " + tokens_[i]);
    }
  }
}

TokenId Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xffu;
    h *= 1099511628211ull;
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(const std::vector<AnnotationRecord>& records, std::size_t min_freq) {
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "no training records");
  if (min_freq == 0) throw Error(ErrorCode::InvalidArgument, "min_freq must be >= 1");

  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    for (const auto& pp : r.phrase_pairs) {
      for (const auto& t : pp.left.tokens) ++counts[t];
      for (const auto& t : pp.right.tokens) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_freq && std::find(kSpecials.begin(), kSpecials.end(), tok) == kSpecials.end()) {
      kept.emplace_back(tok, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

std::vector<TokenId> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kStartId);
  for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
  ids.push_back(kEndId);
  return ids;
}

std::vector<TokenId> encode_phrase(const AttributePhrase& phrase, const Vocabulary& vocab) {
  return encode_tokens(phrase.tokens, vocab);
}

std::vector<std::string> decode_ids(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == kStartId || id == kEndId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

}  // namespace refgame
