#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "refgame/nn/parameters.hpp"

namespace refgame::nn {

/// Flat key/value manifest. Keys starting with "arch." describe the
/// architecture and must match on load; "meta." keys are informational.
using Manifest = std::map<std::string, std::string>;

/// Checkpoint directory layout:
///   manifest.txt        "key value" lines, sorted by key
///   tensors/<name>.bin  u32 rank, u32 dims..., float32 data (row-major), little-endian
void save_checkpoint(const std::filesystem::path& dir, const Manifest& manifest, const ParameterSet& params);

Manifest read_manifest(const std::filesystem::path& dir);

/// Fills `params` (whose layout fixes the expected tensors) from `dir`.
/// Throws ManifestMismatch if any "arch." key in `expected` differs from the
/// stored manifest or a tensor shape disagrees.
Manifest load_checkpoint(const std::filesystem::path& dir, const Manifest& expected, ParameterSet& params);

}  // namespace refgame::nn
