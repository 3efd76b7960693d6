#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/errors.hpp"
#include "pinadapt/random.hpp"

namespace pinadapt {

/// Raw little-endian float32 array.
inline void write_f32_le(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (const float v : values) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xFFu));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

/// Reads exactly expected_count floats; any other byte count is an error that
/// names both sizes.
inline std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count) {
  const auto bytes = read_bytes(path);
  const std::size_t expected_bytes = expected_count * 4;
  if (bytes.size() != expected_bytes) {
    throw LoadError(path.filename().string() + ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

/// Raw little-endian float64 array (checkpoint weights keep full precision).
inline void write_f64_le(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 8);
  for (const double v : values) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xFFu));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected_count) {
  const auto bytes = read_bytes(path);
  const std::size_t expected_bytes = expected_count * 8;
  if (bytes.size() != expected_bytes) {
    throw LoadError(path.filename().string() + ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

/// FNV-1a 64 over a file's bytes, formatted "fnv1a64:<hex>".
inline std::string file_content_hash(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return "fnv1a64:" + hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

}  // namespace pinadapt
