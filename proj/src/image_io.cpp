#include "lsvt/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lsvt/errors.hpp"

namespace lsvt {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex_prefix(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  char buf[4];
  for (std::size_t i = 0; i < std::min<std::size_t>(bytes.size(), 4); ++i) {
    std::snprintf(buf, sizeof(buf), i ? " %02x" : "%02x", bytes[i]);
    out += buf;
  }
  return out.empty() ? "<empty>" : out;
}

RawImage decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError("png '" + path.string() + "': " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  RawImage out{img.height, img.width, color ? 3u : 1u, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("png '" + path.string() + "': " + msg);
  }
  return out;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::size_t ppm_header_value(const std::vector<std::uint8_t>& b, std::size_t& pos,
                             const std::filesystem::path& path) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0, digits = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    value = value * 10 + (b[pos++] - '0');
    ++digits;
  }
  if (digits == 0) throw FormatError("ppm '" + path.string() + "': malformed header");
  return value;
}

RawImage decode_ppm(const std::vector<std::uint8_t>& b, const std::filesystem::path& path) {
  std::size_t pos = 2;
  const std::size_t width = ppm_header_value(b, pos, path);
  const std::size_t height = ppm_header_value(b, pos, path);
  const std::size_t maxval = ppm_header_value(b, pos, path);
  if (width == 0 || height == 0) throw FormatError("ppm '" + path.string() + "': zero dimension");
  if (maxval == 0 || maxval > 255) {
    throw FormatError("ppm '" + path.string() + "': only 8-bit maxval is supported");
  }
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("ppm '" + path.string() + "': truncated header");
  ++pos;
  const std::size_t need = width * height * 3;
  if (b.size() - pos < need) {
    throw FormatError("ppm '" + path.string() + "': truncated pixel data (" +
                      std::to_string(b.size() - pos) + " of " + std::to_string(need) + " bytes)");
  }
  RawImage out{height, width, 3, std::vector<std::uint8_t>(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                                          b.begin() + static_cast<std::ptrdiff_t>(pos + need))};
  if (maxval != 255) {
    for (auto& v : out.pixels) v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return out;
}

}  // namespace

RawImage decode_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
  throw FormatError("unsupported image format in '" + path.string() + "' (magic bytes " +
                    hex_prefix(bytes) + ")");
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("write_png: need 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw FormatError("cannot write png '" + path.string() + "': " + img.message);
  }
}

void write_ppm(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels != 3) throw ShapeError("write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

}  // namespace lsvt
