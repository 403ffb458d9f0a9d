#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace refgame {

/// Row-per-image float32 feature matrix keyed by image id.
///
/// On disk: "APFV", u32 count, u32 dim, count*dim float32 row-major, all
/// little-endian; the id map lives in a sidecar `<path>.ids.jsonl` with one
/// {"row": int, "image_id": str} object per line.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : dim_(dim) {}

  void add(const std::string& image_id, std::span<const float> row);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  bool contains(const std::string& image_id) const { return index_.count(image_id) != 0; }
  std::size_t row_index(const std::string& image_id) const;
  std::span<const float> row(std::size_t index) const;
  std::span<const float> row(const std::string& image_id) const { return row(row_index(image_id)); }

  void save(const std::filesystem::path& path) const;
  static FeatureStore load(const std::filesystem::path& path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);

  bool operator==(const FeatureStore& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace refgame
