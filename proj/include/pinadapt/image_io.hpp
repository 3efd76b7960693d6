#pragma once

// 8-bit image containers and codecs: binary PPM (P6) / PGM (P5) always,
// PNG when built with libpng (PINADAPT_HAVE_PNG).

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifdef PINADAPT_HAVE_PNG
#include <png.h>
#endif

#include "pinadapt/errors.hpp"
#include "pinadapt/metrics.hpp"
#include "pinadapt/rgb_image.hpp"

namespace pinadapt {

class ImageDecodeError : public LoadError {
 public:
  using LoadError::LoadError;
};

namespace detail {

struct PnmHeader {
  std::string magic;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<unsigned char>& bytes, const std::string& name) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_ws();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  auto number = [&] {
    const std::string t = token();
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
      throw ImageDecodeError(name + ": malformed PNM header");
    }
    return static_cast<std::size_t>(std::stoul(t));
  };
  h.magic = token();
  if (h.magic != "P5" && h.magic != "P6") throw ImageDecodeError(name + ": unsupported PNM type '" + h.magic + "'");
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (h.maxval != 255) throw ImageDecodeError(name + ": only 8-bit PNM supported");
  if (pos >= bytes.size()) throw ImageDecodeError(name + ": truncated PNM header");
  h.data_offset = pos + 1;  // single whitespace after maxval
  return h;
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageDecodeError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t w, std::size_t h,
                      const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << magic << '\n' << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

#ifdef PINADAPT_HAVE_PNG
/// Decodes any PNG to 8-bit with the requested channel count (1 or 3).
inline std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels, std::size_t& w,
                                          std::size_t& h) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw ImageDecodeError(path.string() + ": " + image.message);
  }
  // Label masks must keep raw palette/gray indices, so grayscale is read
  // without color-space conversion.
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageDecodeError(path.string() + ": " + msg);
  }
  w = image.width;
  h = image.height;
  return buf;
}

inline void write_png(const std::filesystem::path& path, int channels, std::size_t w, std::size_t h,
                      const std::vector<std::uint8_t>& data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png_image_write_to_file(&image, path.string().c_str(), 0, data.data(), 0, nullptr) == 0) {
    throw std::runtime_error(path.string() + ": " + image.message);
  }
}
#endif

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

}  // namespace detail

inline RgbImage read_rgb(const std::filesystem::path& path) {
  const std::string ext = detail::lower_ext(path);
  RgbImage img;
  if (ext == ".png") {
#ifdef PINADAPT_HAVE_PNG
    img.pixels = detail::read_png(path, 3, img.width, img.height);
    return img;
#else
    throw ImageDecodeError(path.string() + ": built without PNG support");
#endif
  }
  const auto bytes = detail::slurp(path);
  const auto h = detail::parse_pnm_header(bytes, path.string());
  if (h.magic != "P6") throw ImageDecodeError(path.string() + ": expected an RGB (P6) image");
  const std::size_t n = h.width * h.height * 3;
  if (bytes.size() < h.data_offset + n) throw ImageDecodeError(path.string() + ": truncated pixel data");
  img.height = h.height;
  img.width = h.width;
  img.pixels.assign(bytes.begin() + static_cast<long>(h.data_offset), bytes.begin() + static_cast<long>(h.data_offset + n));
  return img;
}

inline LabelMask read_mask(const std::filesystem::path& path) {
  const std::string ext = detail::lower_ext(path);
  LabelMask mask;
  if (ext == ".png") {
#ifdef PINADAPT_HAVE_PNG
    mask.values = detail::read_png(path, 1, mask.width, mask.height);
    return mask;
#else
    throw ImageDecodeError(path.string() + ": built without PNG support");
#endif
  }
  const auto bytes = detail::slurp(path);
  const auto h = detail::parse_pnm_header(bytes, path.string());
  if (h.magic != "P5") throw ImageDecodeError(path.string() + ": expected a single-channel (P5) mask");
  const std::size_t n = h.width * h.height;
  if (bytes.size() < h.data_offset + n) throw ImageDecodeError(path.string() + ": truncated mask data");
  mask.height = h.height;
  mask.width = h.width;
  mask.values.assign(bytes.begin() + static_cast<long>(h.data_offset), bytes.begin() + static_cast<long>(h.data_offset + n));
  return mask;
}

inline void write_rgb(const std::filesystem::path& path, const RgbImage& img) {
  if (detail::lower_ext(path) == ".png") {
#ifdef PINADAPT_HAVE_PNG
    detail::write_png(path, 3, img.width, img.height, img.pixels);
    return;
#else
    throw std::runtime_error(path.string() + ": built without PNG support");
#endif
  }
  detail::write_pnm(path, "P6", img.width, img.height, img.pixels);
}

inline void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  if (detail::lower_ext(path) == ".png") {
#ifdef PINADAPT_HAVE_PNG
    detail::write_png(path, 1, mask.width, mask.height, mask.values);
    return;
#else
    throw std::runtime_error(path.string() + ": built without PNG support");
#endif
  }
  detail::write_pnm(path, "P5", mask.width, mask.height, mask.values);
}

}  // namespace pinadapt
