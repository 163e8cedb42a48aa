#pragma once

// Raster exchange formats: YUV4MPEG2 (first frame only) and 8-bit PNG.
//
// PNG samples are converted with the BT.601 full-range matrix.  4:2:0 chroma
// is produced by a 2x2 box average (center siting, as in C420jpeg) and
// upsampled back by sample replication.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dkf/error.hpp"
#include "dkf/image.hpp"

namespace dkf {

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline int parse_positive(std::string_view token, const char* field) {
  if (token.empty()) throw ParseError(std::string("y4m: empty value for field ") + field);
  long v = 0;
  for (char c : token) {
    if (c < '0' || c > '9') throw ParseError(std::string("y4m: malformed field ") + field);
    v = v * 10 + (c - '0');
    if (v > 1 << 20) throw ParseError(std::string("y4m: field ") + field + " out of range");
  }
  if (v <= 0) throw ParseError(std::string("y4m: field ") + field + " must be positive");
  return static_cast<int>(v);
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// y4m

inline PlanarImage parse_y4m(std::span<const std::uint8_t> bytes) {
  constexpr std::string_view kMagic = "YUV4MPEG2";
  auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (newline == bytes.end()) throw ParseError("y4m: missing stream header");
  std::string header(bytes.begin(), newline);
  std::istringstream ss(header);
  std::string token;
  ss >> token;
  if (token != kMagic) throw ParseError("y4m: bad signature");

  int width = 0, height = 0;
  Subsampling sub = Subsampling::k420;
  while (ss >> token) {
    std::string_view value = std::string_view(token).substr(1);
    switch (token[0]) {
      case 'W': width = detail::parse_positive(value, "W"); break;
      case 'H': height = detail::parse_positive(value, "H"); break;
      case 'C':
        if (value == "420jpeg" || value == "420" || value == "420paldv" || value == "420mpeg2") {
          sub = Subsampling::k420;
        } else if (value == "444") {
          sub = Subsampling::k444;
        } else {
          throw UnsupportedFormat("y4m: unsupported chroma tag C" + std::string(value));
        }
        break;
      case 'F': case 'I': case 'A': case 'X': break;
      default: throw ParseError("y4m: unknown header field '" + token + "'");
    }
  }
  if (width == 0) throw ParseError("y4m: missing field W");
  if (height == 0) throw ParseError("y4m: missing field H");

  auto pos = newline + 1;
  auto frame_end = std::find(pos, bytes.end(), std::uint8_t('\n'));
  if (frame_end == bytes.end() || frame_end - pos < 5 ||
      std::string_view(reinterpret_cast<const char*>(&*pos), 5) != "FRAME")
    throw ParseError("y4m: missing FRAME header");
  pos = frame_end + 1;

  PlanarImage img(width, height, sub);
  for (auto& plane : img.planes) {
    const auto n = plane.samples().size();
    if (static_cast<std::size_t>(bytes.end() - pos) < n) throw ParseError("y4m: truncated frame payload");
    std::copy_n(pos, n, plane.samples().begin());
    pos += static_cast<std::ptrdiff_t>(n);
  }
  return img;
}

inline std::vector<std::uint8_t> serialize_y4m(const PlanarImage& img) {
  require(img.valid(), "serialize_y4m: invalid image");
  std::string header = "YUV4MPEG2 W" + std::to_string(img.width) + " H" + std::to_string(img.height) +
                       " F25:1 Ip A1:1 " +
                       (img.subsampling == Subsampling::k420 ? "C420jpeg" : "C444") + "\nFRAME\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (const auto& plane : img.planes) out.insert(out.end(), plane.samples().begin(), plane.samples().end());
  return out;
}

inline PlanarImage read_y4m(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return parse_y4m(bytes);
}

inline void write_y4m(const PlanarImage& img, const std::string& path) {
  detail::write_file(path, serialize_y4m(img));
}

// ---------------------------------------------------------------------------
// Colour conversion

struct Ycc {
  std::uint8_t y, cb, cr;
};
struct Rgb {
  std::uint8_t r, g, b;
};

inline Ycc rgb_to_ycc(Rgb p) {
  const double r = p.r, g = p.g, b = p.b;
  return {detail::clamp_u8(0.299 * r + 0.587 * g + 0.114 * b),
          detail::clamp_u8(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b),
          detail::clamp_u8(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b)};
}

inline Rgb ycc_to_rgb(Ycc p) {
  const double y = p.y, cb = p.cb - 128.0, cr = p.cr - 128.0;
  return {detail::clamp_u8(y + 1.402 * cr), detail::clamp_u8(y - 0.344136 * cb - 0.714136 * cr),
          detail::clamp_u8(y + 1.772 * cb)};
}

// ---------------------------------------------------------------------------
// PNG

inline PlanarImage read_png(const std::string& path, Subsampling sub = Subsampling::k420) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (msg.find("open") != std::string::npos || msg.find("No such") != std::string::npos)
      throw IoError("png: cannot read '" + path + "': " + msg);
    throw ParseError("png: " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_COLORMAP) {
    png_image_free(&image);
    throw UnsupportedFormat("png: paletted images are not supported");
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw UnsupportedFormat("png: only 8-bit samples are supported");
  }
  image.format = PNG_FORMAT_RGB;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("png: " + msg);
  }

  // Full-resolution conversion first, then the box downsample.
  Plane<std::uint8_t> cb(width, height), cr(width, height);
  PlanarImage img(width, height, sub);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const png_byte* p = pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
      const Ycc ycc = rgb_to_ycc({p[0], p[1], p[2]});
      img.planes[0].at(x, y) = ycc.y;
      cb.at(x, y) = ycc.cb;
      cr.at(x, y) = ycc.cr;
    }
  }
  if (sub == Subsampling::k444) {
    img.planes[1] = std::move(cb);
    img.planes[2] = std::move(cr);
  } else {
    for (int c = 1; c < 3; ++c) {
      const auto& full = c == 1 ? cb : cr;
      auto& out = img.planes[c];
      for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
          const int s = full.clamped(2 * x, 2 * y) + full.clamped(2 * x + 1, 2 * y) +
                        full.clamped(2 * x, 2 * y + 1) + full.clamped(2 * x + 1, 2 * y + 1);
          out.at(x, y) = static_cast<std::uint8_t>((s + 2) >> 2);
        }
      }
    }
  }
  return img;
}

inline void write_png(const PlanarImage& img, const std::string& path) {
  require(img.valid(), "write_png: invalid image");
  const int sh = chroma_shift(img.subsampling);
  std::vector<png_byte> pixels(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Rgb rgb = ycc_to_rgb({img.planes[0].at(x, y), img.planes[1].at(x >> sh, y >> sh),
                                  img.planes[2].at(x >> sh, y >> sh)});
      png_byte* p = pixels.data() + (static_cast<std::size_t>(y) * img.width + x) * 3;
      p[0] = rgb.r;
      p[1] = rgb.g;
      p[2] = rgb.b;
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("png: cannot write '" + path + "': " + msg);
  }
}

// Dispatch on extension: ".png" goes through libpng, everything else is y4m.
inline bool has_png_extension(const std::string& path) {
  return path.size() >= 4 && (path.ends_with(".png") || path.ends_with(".PNG"));
}

inline PlanarImage read_image(const std::string& path) {
  return has_png_extension(path) ? read_png(path) : read_y4m(path);
}

inline void write_image(const PlanarImage& img, const std::string& path) {
  if (has_png_extension(path)) write_png(img, path);
  else write_y4m(img, path);
}

}  // namespace dkf
