#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "refgame/phrase.hpp"

namespace refgame {

inline constexpr int kPhrasesPerAnnotation = 5;

/// An image pair plus up to five ordered "P1 vs P2" differences.
struct AnnotationRecord {
  std::string pair_id;
  std::string image_a;
  std::string image_b;
  std::vector<PhrasePair> phrase_pairs;
};

/// Throws InvalidRecord when a record breaks the pair/position invariants.
void validate_record(const AnnotationRecord& record);

/// One JSON object per line, keys in the order pair_id, image_a, image_b, phrases.
std::string serialize_record(const AnnotationRecord& record);
AnnotationRecord parse_record(const std::string& line);

/// Errors: ParseError (message carries the 1-based line), DuplicatePairId.
std::vector<AnnotationRecord> read_annotations(std::istream& in);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& records);
void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records);

}  // namespace refgame
