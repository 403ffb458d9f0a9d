#include "refgame/render.hpp"

#include <cmath>
#include <map>
#include <string>

#include <zlib.h>

#include "refgame/error.hpp"

namespace refgame::synth {

namespace {

const Rgb kPartColor{60, 60, 60};

std::size_t slot_index(const WorldSpec& spec, const std::string& name) {
  for (std::size_t s = 0; s < spec.slots.size(); ++s) {
    if (spec.slots[s].name == name) return s;
  }
  throw Error(ErrorCode::UnknownSlotValue, "renderer needs slot " + name);
}

template <typename T>
const T& lookup(const std::map<std::string, T>& table, const WorldSpec& spec, const SynthObject& o,
                const std::string& slot) {
  const std::size_t s = slot_index(spec, slot);
  if (s >= o.assignment.size() || o.assignment[s] >= spec.slots[s].values.size()) {
    throw Error(ErrorCode::UnknownSlotValue, slot + " index out of range for " + o.object_id);
  }
  const auto& value = spec.slots[s].values[o.assignment[s]];
  const auto it = table.find(value);
  if (it == table.end()) throw Error(ErrorCode::UnknownSlotValue, slot + "=" + value);
  return it->second;
}

const std::map<std::string, Rgb> kBodyColors = {
    {"red", {200, 30, 30}}, {"blue", {30, 60, 200}}, {"white", {245, 245, 245}},
    {"yellow", {240, 210, 40}}, {"green", {40, 150, 60}}};
const std::map<std::string, Rgb> kBackgrounds = {
    {"sky", {150, 200, 250}}, {"runway", {120, 120, 120}}, {"grass", {90, 180, 90}}};
const std::map<std::string, double> kScales = {{"small", 0.7}, {"medium", 0.85}, {"large", 1.0}};
const std::map<std::string, int> kEngineCounts = {{"one", 1}, {"two", 2}, {"four", 4}};
const std::map<std::string, bool> kPointy = {{"pointy", true}, {"round", false}};
const std::map<std::string, bool> kHighTail = {{"high", true}, {"low", false}};

class Canvas {
 public:
  Canvas(std::size_t size, Rgb fill) : image_{size, size, {}} {
    image_.rgb.resize(3 * size * size);
    for (std::size_t i = 0; i < size * size; ++i) put(i, fill);
  }

  template <typename Inside>
  void paint(Inside inside, Rgb color) {
    for (std::size_t y = 0; y < image_.height; ++y) {
      for (std::size_t x = 0; x < image_.width; ++x) {
        if (inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) put(y * image_.width + x, color);
      }
    }
  }

  Image take() { return std::move(image_); }

 private:
  void put(std::size_t i, Rgb c) {
    image_.rgb[3 * i] = c[0];
    image_.rgb[3 * i + 1] = c[1];
    image_.rgb[3 * i + 2] = c[2];
  }
  Image image_;
};

void append_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  append_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  append_u32be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

Layout layout_for(const WorldSpec& spec, const SynthObject& object, std::size_t size_px) {
  if (size_px < kMinImageSize) throw Error(ErrorCode::InvalidArgument, "image size must be >= 64");
  const double s = static_cast<double>(size_px);
  const double scale = lookup(kScales, spec, object, "size");
  Layout l;
  l.cx = 0.5 * s;
  l.cy = 0.5 * s;
  l.half_length = 0.30 * s * scale;
  l.half_height = 0.08 * s * scale;
  l.nose_base_x = l.cx + l.half_length;
  l.nose_tip_x = l.nose_base_x + 0.12 * s * scale;
  l.body = lookup(kBodyColors, spec, object, "body_color");
  l.background = lookup(kBackgrounds, spec, object, "background");
  l.part = kPartColor;
  return l;
}

Image render_image(const WorldSpec& spec, const SynthObject& object, std::size_t size_px) {
  const Layout l = layout_for(spec, object, size_px);
  const double s = static_cast<double>(size_px);
  const double scale = lookup(kScales, spec, object, "size");
  const bool pointy = lookup(kPointy, spec, object, "nose");
  const bool high_tail = lookup(kHighTail, spec, object, "tail");
  const int engines = lookup(kEngineCounts, spec, object, "engines");

  Canvas canvas(size_px, l.background);

  // Tail fin and stabilizer.
  const double fin_left = l.cx - l.half_length;
  const double fin_right = fin_left + 0.06 * s;
  const double fin_top = l.cy - l.half_height - 0.12 * s * scale;
  canvas.paint([&](double x, double y) { return x >= fin_left && x <= fin_right && y >= fin_top && y <= l.cy; },
               l.part);
  const double stab_y = high_tail ? fin_top : l.cy + 0.6 * l.half_height;
  canvas.paint(
      [&](double x, double y) {
        return x >= fin_left - 0.07 * s && x <= fin_left + 0.07 * s && y >= stab_y && y <= stab_y + 0.025 * s;
      },
      l.part);

  // Engines hang under the fuselage.
  const double engine_r = 0.03 * s * scale;
  const double span = 0.30 * s * scale;
  for (int i = 0; i < engines; ++i) {
    const double ex = l.cx - 0.5 * span + (i + 0.5) * span / engines;
    const double ey = l.cy + l.half_height + 0.5 * engine_r;
    canvas.paint([&](double x, double y) { return (x - ex) * (x - ex) + (y - ey) * (y - ey) <= engine_r * engine_r; },
                 l.part);
  }

  // Fuselage.
  canvas.paint(
      [&](double x, double y) {
        const double dx = (x - l.cx) / l.half_length;
        const double dy = (y - l.cy) / l.half_height;
        return dx * dx + dy * dy <= 1.0;
      },
      l.body);

  // Nose.
  const double base = l.nose_base_x - 0.02 * s;
  const double half = 0.9 * l.half_height;
  if (pointy) {
    canvas.paint(
        [&](double x, double y) {
          if (x < base || x > l.nose_tip_x) return false;
          const double t = (l.nose_tip_x - x) / (l.nose_tip_x - base);
          return std::abs(y - l.cy) <= half * t;
        },
        l.part);
  } else {
    canvas.paint(
        [&](double x, double y) { return x >= base && (x - base) * (x - base) + (y - l.cy) * (y - l.cy) <= half * half; },
        l.part);
  }
  return canvas.take();
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> raw;
  raw.reserve((3 * image.width + 1) * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    raw.push_back(0);  // filter: none
    const auto* row = image.rgb.data() + 3 * image.width * y;
    raw.insert(raw.end(), row, row + 3 * image.width);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error(ErrorCode::IoError, "zlib compression failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> header;
  append_u32be(header, static_cast<std::uint32_t>(image.width));
  append_u32be(header, static_cast<std::uint32_t>(image.height));
  header.insert(header.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolour, deflate, adaptive, no interlace
  append_chunk(out, "IHDR", header);
  append_chunk(out, "IDAT", packed);
  append_chunk(out, "IEND", {});
  return out;
}

}  // namespace refgame::synth
