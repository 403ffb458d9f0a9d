#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "refgame/synthworld.hpp"

namespace refgame::synth {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb at(std::size_t x, std::size_t y) const {
    const std::size_t i = 3 * (y * width + x);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

/// Pixel geometry of a rendered airplane.
struct Layout {
  double cx = 0, cy = 0;           // fuselage centre
  double half_length = 0;          // fuselage semi-axis along x
  double half_height = 0;          // fuselage semi-axis along y
  double nose_base_x = 0;          // right end of the fuselage
  double nose_tip_x = 0;           // apex of a pointy nose
  Rgb body{}, background{}, part{};
};

inline constexpr std::size_t kMinImageSize = 64;

/// Requires the default slot names. Throws UnknownSlotValue for values the
/// drawing has no mapping for and InvalidArgument for size_px < 64.
Layout layout_for(const WorldSpec& spec, const SynthObject& object, std::size_t size_px);

/// body colour fills the fuselage, size scales it, the nose is a triangle or
/// semicircle at the right end, engines are circles under the fuselage, the
/// tail fin carries its stabilizer high or low, background fills the rest.
Image render_image(const WorldSpec& spec, const SynthObject& object, std::size_t size_px);

/// 8-bit RGB PNG, zlib level 9, no ancillary chunks; identical input gives identical bytes.
std::vector<std::uint8_t> encode_png(const Image& image);

}  // namespace refgame::synth
