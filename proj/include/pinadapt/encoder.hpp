#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pinadapt/errors.hpp"
#include "pinadapt/feature_map.hpp"
#include "pinadapt/rgb_image.hpp"
#include "pinadapt/stats.hpp"

namespace pinadapt {

/// A vector in the joint vision-language space.
struct EmbeddingVector {
  std::vector<double> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const noexcept { return values.size(); }
  std::span<const double> span() const noexcept { return values; }

  double norm() const {
    double sq = 0.0;
    for (const double v : values) sq += v * v;
    return std::sqrt(sq);
  }

  void validate(const char* what = "embedding") const {
    for (const double v : values) {
      if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
    }
    if (!(norm() > 0.0)) throw ValidationError(std::string(what) + ": zero norm");
  }

  EmbeddingVector normalized() const {
    validate();
    const double n = norm();
    EmbeddingVector out = *this;
    for (auto& v : out.values) v /= n;
    return out;
  }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_distance(a.span(), b.span());
}

/// Text description of a domain, rendered through a set of fill-in templates.
struct Prompt {
  std::string text;
  std::vector<std::string> templates{"{}"};

  std::string render(std::string_view tmpl) const {
    std::string out(tmpl);
    const auto pos = out.find("{}");
    if (pos == std::string::npos) return out + " " + text;
    out.replace(pos, 2, text);
    return out;
  }
};

/// Token-sequence level access to a text encoder, needed to optimize a
/// free token embedding (the concept) while the encoder stays frozen.
class TokenTextEncoder {
 public:
  using Tokens = std::vector<std::vector<double>>;

  virtual ~TokenTextEncoder() = default;

  virtual std::size_t token_dim() const = 0;
  /// Embeddings of the tokens of `text`, in order.
  virtual Tokens token_embeddings(std::string_view text) const = 0;
  /// Encodes a token-embedding sequence into the joint space (not normalized).
  virtual EmbeddingVector encode_tokens(const Tokens& tokens) const = 0;
  /// Vector-Jacobian product of encode_tokens w.r.t. every token.
  virtual Tokens encode_tokens_vjp(const Tokens& tokens, std::span<const double> grad_embedding) const = 0;
};

/// Frozen joint vision-language encoder, split after its low-level stage.
///
/// Two heads share the trunk: the pooled embedding head used for guidance
/// and the spatial high-level feature path used by the segmenter.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  /// Identifies weights and preprocessing; recorded into every artifact.
  virtual std::string id() const = 0;
  virtual std::size_t feature_channels() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  /// Stage index after which low-level features are exposed.
  virtual std::size_t layer_split() const = 0;

  /// Decoded 8-bit pixels to the normalized array the trunk consumes.
  virtual Image preprocess(const RgbImage& image) const = 0;

  virtual FeatureMap extract_low_features(const Image& image) const = 0;

  /// Remaining trunk stages plus the pooling/projection head.
  virtual EmbeddingVector embed_from_features(const FeatureMap& low) const = 0;

  /// Same forward as embed_from_features; additionally writes the gradient
  /// of <grad_embedding, embedding> w.r.t. the input features.
  virtual EmbeddingVector embed_from_features_vjp(const FeatureMap& low, std::span<const double> grad_embedding,
                                                  FeatureMap& grad_low) const = 0;

  virtual EmbeddingVector embed_image(const Image& image) const { return embed_from_features(extract_low_features(image)); }

  /// Each rendered template is encoded and L2-normalized; the mean is
  /// normalized again.
  virtual EmbeddingVector embed_text(const Prompt& prompt) const = 0;

  /// Spatial high-level features for the segmenter (no pooling head).
  virtual FeatureMap high_features(const FeatureMap& low) const = 0;

  virtual const TokenTextEncoder* token_encoder() const { return nullptr; }

  virtual std::uint64_t weights_checksum() const = 0;
};

/// Shared template-averaging routine for text encoders.
template <typename EncodeFn>
EmbeddingVector average_templates(const Prompt& prompt, std::size_t dim, EncodeFn&& encode_string) {
  if (prompt.text.empty()) throw ValidationError("embed_text: empty prompt");
  if (prompt.templates.empty()) throw ValidationError("embed_text: empty template set");
  std::vector<double> mean(dim, 0.0);
  for (const auto& t : prompt.templates) {
    const EmbeddingVector e = encode_string(prompt.render(t)).normalized();
    for (std::size_t i = 0; i < dim; ++i) mean[i] += e.values[i];
  }
  for (auto& v : mean) v /= static_cast<double>(prompt.templates.size());
  return EmbeddingVector(std::move(mean)).normalized();
}

}  // namespace pinadapt
