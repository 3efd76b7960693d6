#pragma once

// On-disk style bank: a directory with manifest.json and styles.f32
// (little-endian float32, layout [count][2][C], mu block before sigma).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/binary_io.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/mining.hpp"

namespace pinadapt {

class BankLoadError : public LoadError {
 public:
  enum class Kind { missing, version, channels, size, schema };

  BankLoadError(Kind kind, const std::string& what) : LoadError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline nlohmann::json to_json(const MiningConfig& c) {
  return {{"iterations", c.iterations}, {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"batch_size", c.batch_size}, {"seed", c.seed},                   {"init", to_string(c.init)},
          {"eps", c.eps}};
}

inline MiningConfig mining_config_from_json(const nlohmann::json& j, MiningConfig c = {}) {
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("init")) c.init = style_init_from_string(j.at("init").get<std::string>());
  c.eps = j.value("eps", c.eps);
  c.workers = j.value("workers", c.workers);
  return c;
}

inline nlohmann::json to_json(const BankManifest& m) {
  return {{"format_version", m.format_version},
          {"channels", m.channels},
          {"count", m.count},
          {"encoder_id", m.encoder_id},
          {"target_descriptor", {{"kind", m.target.kind}, {"value", m.target.value}}},
          {"mining_config", to_json(m.mining)},
          {"seed", m.seed},
          {"sigma_nonpositive_total", m.sigma_nonpositive_total},
          {"feature_stage", m.feature_stage},
          {"crop_policy", m.crop_policy},
          {"layout", "[count][2][C] float32 little-endian, mu before sigma"}};
}

inline BankManifest bank_manifest_from_json(const nlohmann::json& j) {
  BankManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != BankManifest::kFormatVersion) {
      throw BankLoadError(BankLoadError::Kind::version, "style bank format_version " +
                                                            std::to_string(m.format_version) + " not supported (expected " +
                                                            std::to_string(BankManifest::kFormatVersion) + ")");
    }
    m.channels = j.at("channels").get<std::size_t>();
    m.count = j.at("count").get<std::size_t>();
    m.encoder_id = j.at("encoder_id").get<std::string>();
    m.target.kind = j.at("target_descriptor").at("kind").get<std::string>();
    m.target.value = j.at("target_descriptor").at("value").get<std::string>();
    m.mining = mining_config_from_json(j.at("mining_config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sigma_nonpositive_total = j.at("sigma_nonpositive_total").get<std::size_t>();
    m.feature_stage = j.value("feature_stage", m.feature_stage);
    m.crop_policy = j.value("crop_policy", m.crop_policy);
  } catch (const nlohmann::json::exception& e) {
    throw BankLoadError(BankLoadError::Kind::schema, std::string("style bank manifest: ") + e.what());
  }
  if (m.channels == 0) throw BankLoadError(BankLoadError::Kind::channels, "style bank manifest: channels must be >= 1");
  return m;
}

inline void save_bank(const StyleBank& bank, const std::filesystem::path& dir) {
  bank.validate();
  std::filesystem::create_directories(dir);
  const std::size_t c = bank.manifest.channels;
  std::vector<float> data;
  data.reserve(bank.size() * 2 * c);
  for (const auto& s : bank.styles) {
    data.insert(data.end(), s.mu.begin(), s.mu.end());
    data.insert(data.end(), s.sigma.begin(), s.sigma.end());
  }
  write_f32_le(dir / "styles.f32", data);
  write_json(dir / "manifest.json", to_json(bank.manifest));
}

inline StyleBank load_bank(const std::filesystem::path& dir, std::optional<std::size_t> expected_channels = {}) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw BankLoadError(BankLoadError::Kind::missing, "no manifest.json in " + dir.string());
  }
  StyleBank bank;
  bank.manifest = bank_manifest_from_json(read_json(dir / "manifest.json"));
  const std::size_t c = bank.manifest.channels;
  if (expected_channels && *expected_channels != c) {
    throw BankLoadError(BankLoadError::Kind::channels, "style bank has " + std::to_string(c) +
                                                           " channels, expected " + std::to_string(*expected_channels));
  }
  const auto path = dir / "styles.f32";
  if (!std::filesystem::exists(path)) throw BankLoadError(BankLoadError::Kind::missing, "no styles.f32 in " + dir.string());
  const std::size_t expected_bytes = bank.manifest.count * 2 * c * 4;
  const std::size_t actual_bytes = std::filesystem::file_size(path);
  if (actual_bytes != expected_bytes) {
    const std::size_t per_entry = bank.manifest.count * 2 * 4;
    const bool other_stride = per_entry > 0 && actual_bytes > 0 && actual_bytes % per_entry == 0;
    const std::string detail = "styles.f32: expected " + std::to_string(expected_bytes) + " bytes, found " +
                               std::to_string(actual_bytes);
    if (other_stride) {
      throw BankLoadError(BankLoadError::Kind::channels,
                          detail + " (data stride is " + std::to_string(actual_bytes / per_entry) +
                              " channels, manifest says " + std::to_string(c) + ")");
    }
    throw BankLoadError(BankLoadError::Kind::size, detail);
  }
  const auto data = read_f32_le(path, bank.manifest.count * 2 * c);
  bank.styles.reserve(bank.manifest.count);
  for (std::size_t i = 0; i < bank.manifest.count; ++i) {
    const float* base = data.data() + i * 2 * c;
    bank.styles.emplace_back(std::vector<float>(base, base + c), std::vector<float>(base + c, base + 2 * c));
  }
  return bank;
}

}  // namespace pinadapt
