#pragma once

// Little-endian primitives shared by the feature and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "refgame/error.hpp"

namespace refgame::binary {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorCode::IoError, "truncated u32");
  return v;
}

inline float read_f32(std::istream& in) {
  float v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorCode::IoError, "truncated f32");
  return v;
}

}  // namespace refgame::binary
