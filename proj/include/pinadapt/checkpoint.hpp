#pragma once

// Segmenter checkpoints: a directory holding meta.json (backend id, shapes,
// training provenance, resolved config) and raw float64 weight blobs.

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "pinadapt/binary_io.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/segmenter.hpp"

namespace pinadapt {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json to_json(const TrainingRecord& r) {
  return {{"source_trained", r.source_trained},
          {"source_config", r.source_config},
          {"adapted_bank_hash", r.adapted_bank_hash ? nlohmann::json(*r.adapted_bank_hash) : nlohmann::json(nullptr)},
          {"adapted_target", r.adapted_target},
          {"adapt_config", r.adapt_config}};
}

inline TrainingRecord training_record_from_json(const nlohmann::json& j) {
  TrainingRecord r;
  r.source_trained = j.value("source_trained", false);
  r.source_config = j.value("source_config", nlohmann::json(nullptr));
  if (j.contains("adapted_bank_hash") && !j.at("adapted_bank_hash").is_null()) {
    r.adapted_bank_hash = j.at("adapted_bank_hash").get<std::string>();
  }
  r.adapted_target = j.value("adapted_target", std::string{});
  r.adapt_config = j.value("adapt_config", nlohmann::json(nullptr));
  return r;
}

inline void save_checkpoint(const Segmenter& model, const std::filesystem::path& dir,
                            const nlohmann::json& resolved_config = nullptr) {
  std::filesystem::create_directories(dir);
  const PixelHead& head = model.head();
  nlohmann::json meta{{"format_version", kCheckpointFormatVersion},
                      {"backend_id", model.backend().id()},
                      {"num_classes", model.num_classes()},
                      {"seed", model.seed()},
                      {"head", {{"in_channels", head.in_channels}, {"hidden", head.hidden}, {"classes", head.classes}}},
                      {"head_checksum", hex64(model.head_checksum())},
                      {"high_stage", nullptr},
                      {"provenance", to_json(model.record())},
                      {"config", resolved_config}};
  write_f64_le(dir / "head.f64", head.params);
  if (const Conv2d* conv = model.trainable_high_stage()) {
    meta["high_stage"] = {{"in_channels", conv->in_channels},
                          {"out_channels", conv->out_channels},
                          {"kernel", conv->kernel},
                          {"stride", conv->stride}};
    std::vector<double> blob = conv->weight;
    blob.insert(blob.end(), conv->bias.begin(), conv->bias.end());
    write_f64_le(dir / "high_stage.f64", blob);
  }
  write_json(dir / "meta.json", meta);
}

/// Restores a checkpoint onto `backend`, which must be the encoder it was
/// trained with.
inline Segmenter load_checkpoint(const std::filesystem::path& dir, std::shared_ptr<const EncoderBackend> backend) {
  if (!std::filesystem::is_directory(dir)) throw LoadError("checkpoint directory " + dir.string() + " does not exist");
  const nlohmann::json meta = read_json(dir / "meta.json");
  try {
    if (meta.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw LoadError("checkpoint format version " + meta.at("format_version").dump() + " is not supported");
    }
    const std::string id = meta.at("backend_id").get<std::string>();
    if (id != backend->id()) {
      throw ValidationError("checkpoint was trained with backend '" + id + "', not '" + backend->id() + "'");
    }
    const auto& h = meta.at("head");
    Segmenter model(std::move(backend), meta.at("num_classes").get<std::size_t>(), meta.at("seed").get<std::uint64_t>(),
                    h.at("hidden").get<std::size_t>());
    if (model.head().in_channels != h.at("in_channels").get<std::size_t>()) {
      throw LoadError("checkpoint head input width does not match the backend's features");
    }
    model.head().params = read_f64_le(dir / "head.f64", model.head().params.size());
    if (!meta.at("high_stage").is_null()) {
      const auto& hs = meta.at("high_stage");
      Conv2d conv(hs.at("in_channels").get<std::size_t>(), hs.at("out_channels").get<std::size_t>(),
                  hs.at("kernel").get<std::size_t>(), hs.at("stride").get<std::size_t>());
      const auto blob = read_f64_le(dir / "high_stage.f64", conv.weight.size() + conv.bias.size());
      std::copy(blob.begin(), blob.begin() + static_cast<long>(conv.weight.size()), conv.weight.begin());
      std::copy(blob.begin() + static_cast<long>(conv.weight.size()), blob.end(), conv.bias.begin());
      model.set_high_stage(std::move(conv));
    }
    model.record() = training_record_from_json(meta.at("provenance"));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(dir.string() + "/meta.json: " + e.what());
  }
}

inline nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir) { return read_json(dir / "meta.json"); }

}  // namespace pinadapt
