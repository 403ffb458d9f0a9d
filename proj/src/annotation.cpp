#include "refgame/annotation.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "refgame/error.hpp"

namespace refgame {

using ordered_json = nlohmann::ordered_json;

void validate_record(const AnnotationRecord& record) {
  if (record.pair_id.empty()) throw Error(ErrorCode::InvalidRecord, "empty pair_id");
  if (record.image_a == record.image_b) {
    throw Error(ErrorCode::InvalidRecord, record.pair_id + ": image_a equals image_b");
  }
  if (record.phrase_pairs.empty() || record.phrase_pairs.size() > kPhrasesPerAnnotation) {
    throw Error(ErrorCode::InvalidRecord, record.pair_id + ": needs 1..5 phrase pairs");
  }
  std::set<int> seen;
  for (const auto& pp : record.phrase_pairs) {
    if (pp.position < 1 || pp.position > kPhrasesPerAnnotation) {
      throw Error(ErrorCode::InvalidRecord, record.pair_id + ": position out of range");
    }
    if (!seen.insert(pp.position).second) {
      throw Error(ErrorCode::InvalidRecord, record.pair_id + ": repeated position");
    }
  }
}

std::string serialize_record(const AnnotationRecord& record) {
  ordered_json j;
  j["pair_id"] = record.pair_id;
  j["image_a"] = record.image_a;
  j["image_b"] = record.image_b;
  ordered_json phrases = ordered_json::array();
  for (const auto& pp : record.phrase_pairs) {
    ordered_json p;
    p["left"] = pp.left.raw_text;
    p["right"] = pp.right.raw_text;
    p["position"] = pp.position;
    phrases.push_back(std::move(p));
  }
  j["phrases"] = std::move(phrases);
  return j.dump();
}

AnnotationRecord parse_record(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  AnnotationRecord record;
  record.pair_id = j.at("pair_id").get<std::string>();
  record.image_a = j.at("image_a").get<std::string>();
  record.image_b = j.at("image_b").get<std::string>();
  for (const auto& p : j.at("phrases")) {
    PhrasePair pp;
    pp.left = tokenize_phrase(p.at("left").get<std::string>());
    pp.right = tokenize_phrase(p.at("right").get<std::string>());
    pp.position = p.at("position").get<int>();
    record.phrase_pairs.push_back(std::move(pp));
  }
  validate_record(record);
  return record;
}

std::vector<AnnotationRecord> read_annotations(std::istream& in) {
  std::vector<AnnotationRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    AnnotationRecord record;
    try {
      record = parse_record(line);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(record.pair_id).second) {
      throw Error(ErrorCode::DuplicatePairId, "line " + std::to_string(line_no) + ": " + record.pair_id);
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_annotations(in);
}

void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records) out << serialize_record(r) << '\n';
}

void save_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_annotations(out, records);
}

}  // namespace refgame
