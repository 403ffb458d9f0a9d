#include "refgame/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "refgame/binary_io.hpp"
#include "refgame/error.hpp"

namespace refgame::nn {

namespace {

std::filesystem::path tensor_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / "tensors" / (name + ".bin");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Manifest& manifest, const ParameterSet& params) {
  std::filesystem::create_directories(dir / "tensors");
  {
    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest in " + dir.string());
    for (const auto& [k, v] : manifest) out << k << ' ' << v << '\n';
    for (std::size_t i = 0; i < params.size(); ++i) {
      out << "tensor." << params.name(i) << ' ' << params[i].rows() << 'x' << params[i].cols() << '\n';
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = params[i];
    std::ofstream out(tensor_path(dir, params.name(i)), std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write tensor " + params.name(i));
    binary::write_u32(out, 2);
    binary::write_u32(out, static_cast<std::uint32_t>(m.rows()));
    binary::write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) binary::write_f32(out, static_cast<float>(m(r, c)));
    }
  }
}

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw Error(ErrorCode::IoError, "no manifest in " + dir.string());
  Manifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw Error(ErrorCode::ParseError, "bad manifest line: " + line);
    manifest[line.substr(0, space)] = line.substr(space + 1);
  }
  return manifest;
}

Manifest load_checkpoint(const std::filesystem::path& dir, const Manifest& expected, ParameterSet& params) {
  Manifest stored = read_manifest(dir);
  for (const auto& [k, v] : expected) {
    if (k.rfind("arch.", 0) != 0) continue;
    auto it = stored.find(k);
    if (it == stored.end() || it->second != v) {
      throw Error(ErrorCode::ManifestMismatch, k + ": checkpoint has \"" + (it == stored.end() ? "<missing>" : it->second) +
                                                   "\", model expects \"" + v + "\"");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::ifstream in(tensor_path(dir, params.name(i)), std::ios::binary);
    if (!in) throw Error(ErrorCode::ManifestMismatch, "checkpoint lacks tensor " + params.name(i));
    const auto rank = binary::read_u32(in);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = binary::read_u32(in);
    Matrix& m = params[i];
    if (rank != 2 || dims[0] != m.rows() || dims[1] != m.cols()) {
      throw Error(ErrorCode::ManifestMismatch, "shape mismatch for tensor " + params.name(i));
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<double>(binary::read_f32(in));
    }
  }
  return stored;
}

}  // namespace refgame::nn
