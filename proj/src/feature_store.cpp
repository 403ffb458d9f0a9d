#include "refgame/feature_store.hpp"

#include <fstream>

#include <json.hpp>

#include "refgame/binary_io.hpp"
#include "refgame/error.hpp"

namespace refgame {

void FeatureStore::add(const std::string& image_id, std::span<const float> row) {
  if (row.size() != dim_) {
    throw Error(ErrorCode::ShapeMismatch, "feature row for " + image_id + " has length " +
                                              std::to_string(row.size()) + ", expected " + std::to_string(dim_));
  }
  if (!index_.emplace(image_id, ids_.size()).second) {
    throw Error(ErrorCode::InvalidArgument, "duplicate image id " + image_id);
  }
  ids_.push_back(image_id);
  data_.insert(data_.end(), row.begin(), row.end());
}

std::size_t FeatureStore::row_index(const std::string& image_id) const {
  auto it = index_.find(image_id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "unknown image id " + image_id);
  return it->second;
}

std::span<const float> FeatureStore::row(std::size_t index) const {
  return std::span<const float>(data_).subspan(index * dim_, dim_);
}

std::filesystem::path FeatureStore::sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".ids.jsonl");
}

void FeatureStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write("APFV", 4);
  binary::write_u32(out, static_cast<std::uint32_t>(ids_.size()));
  binary::write_u32(out, static_cast<std::uint32_t>(dim_));
  for (float v : data_) binary::write_f32(out, v);

  std::ofstream ids(sidecar_path(path), std::ios::binary);
  if (!ids) throw Error(ErrorCode::IoError, "cannot write id sidecar for " + path.string());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    nlohmann::ordered_json j;
    j["row"] = i;
    j["image_id"] = ids_[i];
    ids << j.dump() << '\n';
  }
}

FeatureStore FeatureStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "APFV") {
    throw Error(ErrorCode::ParseError, path.string() + ": bad magic");
  }
  const auto count = binary::read_u32(in);
  const auto dim = binary::read_u32(in);
  std::vector<float> data(static_cast<std::size_t>(count) * dim);
  for (auto& v : data) v = binary::read_f32(in);

  std::vector<std::string> ids(count);
  std::ifstream sidecar(sidecar_path(path));
  if (!sidecar) throw Error(ErrorCode::IoError, "missing id sidecar for " + path.string());
  std::string line;
  std::size_t seen = 0;
  while (std::getline(sidecar, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto row = j.at("row").get<std::size_t>();
    if (row >= count) throw Error(ErrorCode::ParseError, "id sidecar row out of range");
    ids[row] = j.at("image_id").get<std::string>();
    ++seen;
  }
  if (seen != count) throw Error(ErrorCode::ParseError, "id sidecar does not cover every row");

  FeatureStore store(dim);
  for (std::size_t i = 0; i < count; ++i) {
    store.add(ids[i], std::span<const float>(data).subspan(i * dim, dim));
  }
  return store;
}

}  // namespace refgame
