#pragma once

// Deterministic desk-scale encoder. Image trunk:
//   Layer1 = conv(3->8, k3, s2) + ReLU     (64x64 -> 32x32, low-level stage)
//   Layer2 = conv(8->16, k3, s2) + ReLU    (32x32 -> 16x16, high-level stage)
//   head   = spatial mean, then fixed linear 16->16 (embedding, D = 16)
// Text side: bag of word vectors (one seeded unit vector per word), mean,
// then a fixed linear map into the joint space. All weights are drawn once
// from a generator seeded with 1234 and never modified.

#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pinadapt/conv.hpp"
#include "pinadapt/encoder.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/random.hpp"

namespace pinadapt {

struct ToyBackendOptions {
  std::uint64_t seed = 1234;
  /// Expose token-level access to the text encoder (needed by concept
  /// optimization). Off by default: the toy text encoder is a lookup table.
  bool token_injection = false;
};

class ToyBackend final : public EncoderBackend, public TokenTextEncoder {
 public:
  static constexpr std::size_t kImageSize = 64;
  static constexpr std::size_t kLowChannels = 8;
  static constexpr std::size_t kHighChannels = 16;
  static constexpr std::size_t kEmbeddingDim = 16;
  static constexpr std::size_t kTokenDim = 16;

  explicit ToyBackend(ToyBackendOptions options = {}) : options_(options) {
    Rng rng(options_.seed);
    layer1_ = Conv2d::random(3, kLowChannels, 3, 2, rng);
    layer2_ = Conv2d::random(kLowChannels, kHighChannels, 3, 2, rng);
    projection_ = random_matrix(kEmbeddingDim, kHighChannels, rng);
    text_projection_ = random_matrix(kEmbeddingDim, kTokenDim, rng);
  }

  std::string id() const override {
    return "toy-v1:seed=" + std::to_string(options_.seed) + ":pre=(v/255-0.5)/0.25:res=64";
  }
  std::size_t feature_channels() const override { return kLowChannels; }
  std::size_t embedding_dim() const override { return kEmbeddingDim; }
  std::size_t layer_split() const override { return 1; }

  Image preprocess(const RgbImage& rgb) const override {
    if (rgb.height != kImageSize || rgb.width != kImageSize) {
      throw ValidationError("toy backend expects 64x64 images, got " + std::to_string(rgb.height) + "x" +
                            std::to_string(rgb.width));
    }
    Image img(3, kImageSize, kImageSize);
    for (std::size_t y = 0; y < kImageSize; ++y) {
      for (std::size_t x = 0; x < kImageSize; ++x) {
        const std::uint8_t* px = rgb.at(y, x);
        for (std::size_t c = 0; c < 3; ++c) img(c, y, x) = (px[c] / 255.0 - 0.5) / 0.25;
      }
    }
    return img;
  }

  FeatureMap extract_low_features(const Image& image) const override {
    if (image.channels() != 3 || image.height() != kImageSize || image.width() != kImageSize) {
      throw ValidationError("toy backend expects a 3x64x64 image, got " + image.shape_string());
    }
    require_finite(image, "extract_low_features");
    return layer1_.forward(image, true);
  }

  FeatureMap high_features(const FeatureMap& low) const override {
    check_low(low);
    return layer2_.forward(low, true);
  }

  EmbeddingVector embed_from_features(const FeatureMap& low) const override {
    return project(pool(high_features(low)));
  }

  EmbeddingVector embed_from_features_vjp(const FeatureMap& low, std::span<const double> grad_embedding,
                                          FeatureMap& grad_low) const override {
    if (grad_embedding.size() != kEmbeddingDim) throw ValidationError("embedding gradient dimension mismatch");
    const FeatureMap high = high_features(low);
    const std::vector<double> pooled = pool(high);
    EmbeddingVector out = project(pooled);

    // projection^T * g, spread uniformly over the spatial positions.
    std::vector<double> grad_pooled(kHighChannels, 0.0);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      for (std::size_t c = 0; c < kHighChannels; ++c) grad_pooled[c] += projection_[r * kHighChannels + c] * grad_embedding[r];
    }
    FeatureMap grad_high(kHighChannels, high.height(), high.width());
    const double inv_n = 1.0 / static_cast<double>(high.plane_size());
    for (std::size_t c = 0; c < kHighChannels; ++c) {
      for (auto& v : grad_high.channel(c)) v = grad_pooled[c] * inv_n;
    }
    relu_mask(high, grad_high);
    grad_low = layer2_.backward(low, grad_high);
    return out;
  }

  EmbeddingVector embed_text(const Prompt& prompt) const override {
    return average_templates(prompt, kEmbeddingDim,
                             [this](const std::string& s) { return encode_tokens(token_embeddings(s)); });
  }

  const TokenTextEncoder* token_encoder() const override { return options_.token_injection ? this : nullptr; }

  std::uint64_t weights_checksum() const override {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = checksum_doubles(h, layer1_.weight);
    h = checksum_doubles(h, layer1_.bias);
    h = checksum_doubles(h, layer2_.weight);
    h = checksum_doubles(h, layer2_.bias);
    h = checksum_doubles(h, projection_);
    return checksum_doubles(h, text_projection_);
  }

  // TokenTextEncoder

  std::size_t token_dim() const override { return kTokenDim; }

  Tokens token_embeddings(std::string_view text) const override {
    Tokens tokens;
    for (const auto& word : split_words(text)) tokens.push_back(word_vector(word));
    return tokens;
  }

  EmbeddingVector encode_tokens(const Tokens& tokens) const override {
    if (tokens.empty()) throw ValidationError("toy text encoder: empty token sequence");
    std::vector<double> mean(kTokenDim, 0.0);
    for (const auto& t : tokens) {
      if (t.size() != kTokenDim) throw ValidationError("toy text encoder: token dimension mismatch");
      for (std::size_t i = 0; i < kTokenDim; ++i) mean[i] += t[i];
    }
    for (auto& v : mean) v /= static_cast<double>(tokens.size());
    std::vector<double> out(kEmbeddingDim, 0.0);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      for (std::size_t c = 0; c < kTokenDim; ++c) out[r] += text_projection_[r * kTokenDim + c] * mean[c];
    }
    return EmbeddingVector(std::move(out));
  }

  Tokens encode_tokens_vjp(const Tokens& tokens, std::span<const double> grad_embedding) const override {
    if (grad_embedding.size() != kEmbeddingDim) throw ValidationError("embedding gradient dimension mismatch");
    std::vector<double> g(kTokenDim, 0.0);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      for (std::size_t c = 0; c < kTokenDim; ++c) g[c] += text_projection_[r * kTokenDim + c] * grad_embedding[r];
    }
    for (auto& v : g) v /= static_cast<double>(tokens.size());
    return Tokens(tokens.size(), g);
  }

  const Conv2d& layer1() const noexcept { return layer1_; }
  const Conv2d& layer2() const noexcept { return layer2_; }

 private:
  static std::vector<double> random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> m(rows * cols);
    const double std = 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& v : m) v = rng.normal(0.0, std);
    return m;
  }

  static std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (const char ch : text) {
      const auto u = static_cast<unsigned char>(ch);
      if (std::isalnum(u) || u >= 0x80 || ch == '*') {
        cur.push_back(static_cast<char>(std::tolower(u)));
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
  }

  std::vector<double> word_vector(const std::string& word) const {
    Rng rng(mix_seed(options_.seed, fnv1a(word)));
    std::vector<double> v(kTokenDim);
    double sq = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      sq += x * x;
    }
    const double n = std::sqrt(sq);
    for (auto& x : v) x /= n;
    return v;
  }

  void check_low(const FeatureMap& low) const {
    if (low.channels() != kLowChannels || low.height() != kImageSize / 2 || low.width() != kImageSize / 2) {
      throw ValidationError("toy backend expects 8x32x32 low-level features, got " + low.shape_string());
    }
  }

  static std::vector<double> pool(const FeatureMap& high) {
    std::vector<double> pooled(high.channels(), 0.0);
    for (std::size_t c = 0; c < high.channels(); ++c) {
      double s = 0.0;
      for (const double v : high.channel(c)) s += v;
      pooled[c] = s / static_cast<double>(high.plane_size());
    }
    return pooled;
  }

  EmbeddingVector project(const std::vector<double>& pooled) const {
    std::vector<double> out(kEmbeddingDim, 0.0);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      for (std::size_t c = 0; c < kHighChannels; ++c) out[r] += projection_[r * kHighChannels + c] * pooled[c];
    }
    return EmbeddingVector(std::move(out));
  }

  ToyBackendOptions options_;
  Conv2d layer1_;
  Conv2d layer2_;
  std::vector<double> projection_;       // [D][16]
  std::vector<double> text_projection_;  // [D][token_dim]
};

}  // namespace pinadapt
