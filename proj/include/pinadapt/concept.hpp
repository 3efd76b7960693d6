#pragma once

// Concept optimization: a free token embedding ("<concept>") is learned in
// the text encoder's token space so that the prompt "<concept> + suffix"
// embeds close to the source images. Both encoders stay frozen.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/binary_io.hpp"
#include "pinadapt/encoder.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/random.hpp"
#include "pinadapt/stats.hpp"

namespace pinadapt {

struct ConceptConfig {
  long epochs = 10;
  long batch_size = 16;
  double learning_rate = 1e-4;
  double momentum = 0.0;
  std::size_t n_tokens = 1;
  std::uint64_t seed = 0;
  std::string init_word = "driving";

  void validate() const {
    if (epochs < 1) throw ValidationError("concept: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("concept: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ValidationError("concept: learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("concept: momentum must be in [0, 1)");
    if (n_tokens < 1) throw ValidationError("concept: n_tokens must be >= 1");
  }
};

inline nlohmann::json to_json(const ConceptConfig& c) {
  return {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},     {"n_tokens", c.n_tokens},     {"seed", c.seed},
          {"init_word", c.init_word}};
}

inline ConceptConfig concept_config_from_json(const nlohmann::json& j, ConceptConfig c = {}) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.n_tokens = j.value("n_tokens", c.n_tokens);
  c.seed = j.value("seed", c.seed);
  c.init_word = j.value("init_word", c.init_word);
  c.validate();
  return c;
}

struct ConceptEmbedding {
  TokenTextEncoder::Tokens tokens;  // [n_tokens][token_dim]
  std::string suffix_used_in_training;
  std::uint64_t seed = 0;
  std::string backend_id;
  std::vector<double> epoch_losses;

  std::size_t n_tokens() const noexcept { return tokens.size(); }
  std::size_t token_dim() const noexcept { return tokens.empty() ? 0 : tokens.front().size(); }

  void validate() const {
    if (tokens.empty()) throw ValidationError("concept: no tokens");
    for (const auto& t : tokens) {
      if (t.size() != token_dim()) throw ValidationError("concept: ragged tokens");
      for (const double v : t) {
        if (!std::isfinite(v)) throw ValidationError("concept: non-finite token value");
      }
    }
  }
};

inline const TokenTextEncoder& require_token_encoder(const EncoderBackend& backend) {
  const TokenTextEncoder* enc = backend.token_encoder();
  if (enc == nullptr) {
    throw CapabilityError("backend '" + backend.id() +
                          "' does not accept injected token embeddings; use optimize_free_concept for the toy surrogate");
  }
  return *enc;
}

/// Initial concept: the token embedding of cfg.init_word when it is a single
/// token, Gaussian (scale = that vocabulary's token std) otherwise; extra
/// tokens beyond the first are Gaussian.
inline TokenTextEncoder::Tokens initial_concept(const TokenTextEncoder& enc, const ConceptConfig& cfg) {
  const auto word = enc.token_embeddings(cfg.init_word);
  double scale = 1.0 / std::sqrt(static_cast<double>(enc.token_dim()));
  if (!word.empty()) {
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& t : word) {
      for (const double v : t) {
        sq += v * v;
        ++n;
      }
    }
    scale = std::sqrt(sq / static_cast<double>(n));
  }
  Rng rng(mix_seed(cfg.seed, 0xC0));
  TokenTextEncoder::Tokens tokens(cfg.n_tokens, std::vector<double>(enc.token_dim()));
  for (std::size_t k = 0; k < cfg.n_tokens; ++k) {
    if (k == 0 && word.size() == 1) {
      tokens[0] = word.front();
      continue;
    }
    for (auto& v : tokens[k]) v = rng.normal(0.0, scale);
  }
  return tokens;
}

namespace detail {

/// Shared SGD loop over precomputed image embeddings. `embed` maps the
/// parameters to a text-side embedding and `backprop` maps d(loss)/d(emb)
/// to a parameter gradient with the same layout as the parameters.
template <typename Params, typename Embed, typename Backprop>
std::vector<double> sgd_align(Params& params, const std::vector<EmbeddingVector>& images, const ConceptConfig& cfg,
                              Embed&& embed, Backprop&& backprop) {
  std::vector<double> epoch_losses;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0xE0));
  Params velocity = params;
  for (auto& t : velocity) std::fill(t.begin(), t.end(), 0.0);

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const EmbeddingVector text = embed(params);
      std::vector<double> d_text(text.dim(), 0.0);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const EmbeddingVector& img = images[order[k]];
        const double loss = cosine_distance(text, img);
        if (!std::isfinite(loss)) {
          throw OptimizationError("concept: non-finite loss in epoch " + std::to_string(epoch), epoch);
        }
        loss_sum += loss;
        const auto g = cosine_distance_grad(text.span(), img.span());
        for (std::size_t d = 0; d < g.size(); ++d) d_text[d] += g[d] * inv_b;
      }
      const Params grad = backprop(params, d_text);
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t d = 0; d < params[t].size(); ++d) {
          velocity[t][d] = cfg.momentum * velocity[t][d] + grad[t][d];
          params[t][d] -= cfg.learning_rate * velocity[t][d];
        }
      }
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(images.size()));
  }
  return epoch_losses;
}

}  // namespace detail

/// Learns the concept tokens against source image embeddings with the
/// prompt "<concept> <suffix>" (single rendered string, no templates).
inline ConceptEmbedding optimize_concept(const std::vector<Image>& source_images, const std::string& suffix,
                                         const ConceptConfig& cfg, const EncoderBackend& backend) {
  cfg.validate();
  const TokenTextEncoder& enc = require_token_encoder(backend);
  if (source_images.empty()) throw ValidationError("optimize_concept: empty image stream");

  std::vector<EmbeddingVector> images;
  images.reserve(source_images.size());
  for (const auto& img : source_images) images.push_back(backend.embed_image(img));

  const auto suffix_tokens = enc.token_embeddings(suffix);
  ConceptEmbedding concept_emb;
  concept_emb.tokens = initial_concept(enc, cfg);
  concept_emb.suffix_used_in_training = suffix;
  concept_emb.seed = cfg.seed;
  concept_emb.backend_id = backend.id();
  const std::size_t n = concept_emb.tokens.size();

  auto sequence = [&](const TokenTextEncoder::Tokens& concept_tokens) {
    TokenTextEncoder::Tokens seq = concept_tokens;
    seq.insert(seq.end(), suffix_tokens.begin(), suffix_tokens.end());
    return seq;
  };
  concept_emb.epoch_losses = detail::sgd_align(
      concept_emb.tokens, images, cfg, [&](const auto& p) { return enc.encode_tokens(sequence(p)); },
      [&](const auto& p, const std::vector<double>& d_text) {
        auto all = enc.encode_tokens_vjp(sequence(p), d_text);
        all.resize(n);  // suffix tokens are frozen
        return all;
      });
  concept_emb.validate();
  return concept_emb;
}

/// Embedding of "<concept> <style_suffix>", unit-normalized.
inline EmbeddingVector build_concept_prompt_embedding(const ConceptEmbedding& concept_emb, const std::string& style_suffix,
                                                      const EncoderBackend& backend) {
  const TokenTextEncoder& enc = require_token_encoder(backend);
  concept_emb.validate();
  if (concept_emb.token_dim() != enc.token_dim()) {
    throw ValidationError("concept token_dim " + std::to_string(concept_emb.token_dim()) + " does not match encoder " +
                          std::to_string(enc.token_dim()));
  }
  TokenTextEncoder::Tokens seq = concept_emb.tokens;
  const auto suffix = enc.token_embeddings(style_suffix);
  seq.insert(seq.end(), suffix.begin(), suffix.end());
  return enc.encode_tokens(seq).normalized();
}

struct FreeConcept {
  EmbeddingVector vector;
  std::vector<double> epoch_losses;
};

/// Surrogate for backends whose text encoder cannot take injected tokens:
/// optimizes a free vector in the joint space with the same loss and SGD
/// schedule.
inline FreeConcept optimize_free_concept(const std::vector<EmbeddingVector>& image_embeddings, const ConceptConfig& cfg) {
  cfg.validate();
  if (image_embeddings.empty()) throw ValidationError("optimize_free_concept: no image embeddings");
  const std::size_t dim = image_embeddings.front().dim();
  Rng rng(mix_seed(cfg.seed, 0xF0));
  std::vector<std::vector<double>> params(1, std::vector<double>(dim));
  for (auto& v : params[0]) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  FreeConcept out;
  out.epoch_losses = detail::sgd_align(
      params, image_embeddings, cfg, [](const auto& p) { return EmbeddingVector(p[0]); },
      [](const auto&, const std::vector<double>& d_text) { return std::vector<std::vector<double>>{d_text}; });
  out.vector = EmbeddingVector(params[0]);
  return out;
}

inline void save_concept(const ConceptEmbedding& c, const std::filesystem::path& dir) {
  c.validate();
  std::filesystem::create_directories(dir);
  std::vector<float> data;
  for (const auto& t : c.tokens) data.insert(data.end(), t.begin(), t.end());
  write_f32_le(dir / "concept.f32", data);
  write_json(dir / "concept.json", {{"n_tokens", c.n_tokens()},
                                    {"token_dim", c.token_dim()},
                                    {"suffix_used_in_training", c.suffix_used_in_training},
                                    {"seed", c.seed},
                                    {"backend_id", c.backend_id},
                                    {"epoch_losses", c.epoch_losses}});
}

inline ConceptEmbedding load_concept(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "concept.json");
  ConceptEmbedding c;
  std::size_t n = 0;
  std::size_t dim = 0;
  try {
    n = meta.at("n_tokens").get<std::size_t>();
    dim = meta.at("token_dim").get<std::size_t>();
    c.suffix_used_in_training = meta.at("suffix_used_in_training").get<std::string>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.backend_id = meta.at("backend_id").get<std::string>();
    c.epoch_losses = meta.value("epoch_losses", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("concept.json: ") + e.what());
  }
  const auto data = read_f32_le(dir / "concept.f32", n * dim);
  c.tokens.assign(n, std::vector<double>(dim));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t d = 0; d < dim; ++d) c.tokens[k][d] = data[k * dim + d];
  }
  return c;
}

}  // namespace pinadapt
