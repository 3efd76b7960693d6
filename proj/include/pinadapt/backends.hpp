#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "pinadapt/encoder.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/toy_backend.hpp"

namespace pinadapt {

/// Published geometry of the pretrained CLIP ResNet image encoders.
struct ReferenceModel {
  std::string name;
  std::string weights_file;
  std::size_t feature_channels;  // Layer1 output channels
  std::size_t feature_stride;    // input pixels per Layer1 cell
  std::size_t embedding_dim;
  std::string preprocessing;

  struct Shape {
    std::size_t channels, height, width;
  };

  Shape low_feature_shape(std::size_t input_height, std::size_t input_width) const {
    return {feature_channels, input_height / feature_stride, input_width / feature_stride};
  }

  std::string backend_id() const { return name + ":pre=" + preprocessing; }
};

inline const ReferenceModel& reference_model(std::string_view name) {
  static const std::string kClipNorm = "rgb/255,mean=(0.48145466,0.4578275,0.40821073),std=(0.26862954,0.26130258,0.27577711)";
  static const ReferenceModel rn50{"clip-rn50", "RN50.pt", 256, 4, 1024, kClipNorm};
  static const ReferenceModel rn101{"clip-rn101", "RN101.pt", 256, 4, 512, kClipNorm};
  if (name == "clip-rn50") return rn50;
  if (name == "clip-rn101") return rn101;
  throw ValidationError("unknown reference model '" + std::string(name) + "'");
}

/// Weight directory: explicit config value first, then $PINADAPT_MODEL_DIR.
inline std::optional<std::filesystem::path> resolve_model_dir(const std::optional<std::filesystem::path>& configured) {
  if (configured && !configured->empty()) return configured;
  if (const char* env = std::getenv("PINADAPT_MODEL_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::nullopt;
}

/// Builds a backend by name: "toy", "toy-tok" (toy with token injection),
/// "clip-rn50" or "clip-rn101".
inline std::unique_ptr<EncoderBackend> make_backend(std::string_view name,
                                                    const std::optional<std::filesystem::path>& model_dir = {}) {
  if (name == "toy") return std::make_unique<ToyBackend>();
  if (name == "toy-tok") return std::make_unique<ToyBackend>(ToyBackendOptions{.token_injection = true});
  const ReferenceModel& ref = reference_model(name);
  const auto dir = resolve_model_dir(model_dir);
  if (!dir) {
    throw CapabilityError(ref.name + ": no model directory; set PINADAPT_MODEL_DIR or model_dir in the run config");
  }
  const auto weights = *dir / ref.weights_file;
  if (!std::filesystem::exists(weights)) {
    throw CapabilityError(ref.name + ": weights not found at " + weights.string());
  }
  throw CapabilityError(ref.name + ": this build has no inference runtime for pretrained CLIP weights (" +
                        weights.string() + "); use the toy backend");
}

}  // namespace pinadapt
