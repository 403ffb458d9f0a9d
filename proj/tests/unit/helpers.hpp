#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "refgame/annotation.hpp"
#include "refgame/phrase.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("refgame_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline refgame::PhrasePair pair_of(const std::string& left, const std::string& right, int position) {
  return {refgame::tokenize_phrase(left), refgame::tokenize_phrase(right), position};
}

inline refgame::AnnotationRecord record_of(const std::string& id, const std::string& a, const std::string& b,
                                           std::vector<refgame::PhrasePair> pairs) {
  return {id, a, b, std::move(pairs)};
}

}  // namespace testing
