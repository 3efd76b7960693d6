#pragma once

// Source-only training, feature-statistics augmentation and classifier-only
// fine-tuning of a Segmenter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/bank_io.hpp"
#include "pinadapt/dataset.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/mining.hpp"
#include "pinadapt/random.hpp"
#include "pinadapt/segmenter.hpp"
#include "pinadapt/stats.hpp"

namespace pinadapt {

/// Anything indexable that yields labeled samples: Dataset or InMemorySamples.
template <typename S>
concept SampleSource = requires(const S& s, std::size_t i) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.sample(i) } -> std::convertible_to<SegSample>;
};

struct InMemorySamples {
  std::vector<SegSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  const SegSample& sample(std::size_t i) const { return samples.at(i); }
};

/// base * (1 - it / total)^power; reaches exactly 0 at it == total.
inline double poly_lr(double base, std::size_t it, std::size_t total, double power = 0.9) {
  if (it >= total) return 0.0;
  return base * std::pow(1.0 - static_cast<double>(it) / static_cast<double>(total), power);
}

/// Heavy-ball SGD with coupled L2 weight decay: v = m v + (g + wd p); p -= lr v.
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (velocity_.empty()) velocity_.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i] = momentum_ * velocity_[i] + grad[i] + weight_decay_ * params[i];
      params[i] -= lr * velocity_[i];
    }
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<double> velocity_;
};

struct ColorJitterConfig {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
};

struct SourceTrainConfig {
  std::size_t iterations = 200000;
  std::size_t crop = 768;
  std::size_t batch_size = 2;
  double lr_classifier = 1e-1;
  double lr_trunk = 1e-4;  // used only with unfreeze_high
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  ColorJitterConfig jitter;
  bool hflip = true;
  bool unfreeze_high = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1 || crop < 1 || batch_size < 1) throw ValidationError("source training: sizes must be >= 1");
    if (!(lr_classifier > 0.0) || !(lr_trunk > 0.0)) throw ValidationError("source training: learning rates must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("source training: momentum must be in [0, 1)");
    if (weight_decay < 0.0 || !(poly_power > 0.0)) throw ValidationError("source training: invalid decay settings");
    if (jitter.brightness < 0.0 || jitter.contrast < 0.0 || jitter.saturation < 0.0 || jitter.brightness >= 1.0 ||
        jitter.contrast >= 1.0 || jitter.saturation >= 1.0) {
      throw ValidationError("source training: jitter strengths must be in [0, 1)");
    }
  }

  /// Desk-scale preset for the 64x64 toy data.
  static SourceTrainConfig toy() {
    SourceTrainConfig c;
    c.iterations = 600;
    c.crop = 64;
    c.batch_size = 4;
    c.jitter = {0.1, 0.1, 0.1};
    return c;
  }
};

/// How a bank style is chosen for each source instance: uniformly at random
/// with replacement, or the entry mined from that same instance (bank order
/// must then match the dataset order).
enum class StyleSampling { uniform, paired };

inline const char* to_string(StyleSampling s) { return s == StyleSampling::paired ? "paired" : "uniform"; }

inline StyleSampling style_sampling_from_string(const std::string& s) {
  if (s == "uniform") return StyleSampling::uniform;
  if (s == "paired") return StyleSampling::paired;
  throw ValidationError("unknown style sampling '" + s + "'");
}

struct AdaptConfig {
  std::size_t iterations = 2000;
  std::size_t batch_size = 8;
  double lr_init = 1e-2;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool style_mix = false;
  std::optional<double> gauss_snr_db;
  StyleSampling sampling = StyleSampling::uniform;
  bool cache_features = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1 || batch_size < 1) throw ValidationError("adapt: iterations and batch_size must be >= 1");
    if (!(lr_init > 0.0)) throw ValidationError("adapt: lr_init must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("adapt: momentum must be in [0, 1)");
    if (weight_decay < 0.0 || !(poly_power > 0.0)) throw ValidationError("adapt: invalid decay settings");
    if (gauss_snr_db) detail::check_snr(*gauss_snr_db);
  }

  static AdaptConfig toy() {
    AdaptConfig c;
    c.iterations = 300;
    return c;
  }
};

inline nlohmann::json to_json(const SourceTrainConfig& c) {
  return {{"iterations", c.iterations},
          {"crop", c.crop},
          {"batch_size", c.batch_size},
          {"lr_classifier", c.lr_classifier},
          {"lr_trunk", c.lr_trunk},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"poly_power", c.poly_power},
          {"jitter", {{"brightness", c.jitter.brightness}, {"contrast", c.jitter.contrast}, {"saturation", c.jitter.saturation}}},
          {"hflip", c.hflip},
          {"unfreeze_high", c.unfreeze_high},
          {"seed", c.seed}};
}

inline SourceTrainConfig source_train_config_from_json(const nlohmann::json& j, SourceTrainConfig c = {}) {
  c.iterations = j.value("iterations", c.iterations);
  c.crop = j.value("crop", c.crop);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_classifier = j.value("lr_classifier", c.lr_classifier);
  c.lr_trunk = j.value("lr_trunk", c.lr_trunk);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.poly_power = j.value("poly_power", c.poly_power);
  if (j.contains("jitter")) {
    const auto& jj = j.at("jitter");
    c.jitter.brightness = jj.value("brightness", c.jitter.brightness);
    c.jitter.contrast = jj.value("contrast", c.jitter.contrast);
    c.jitter.saturation = jj.value("saturation", c.jitter.saturation);
  }
  c.hflip = j.value("hflip", c.hflip);
  c.unfreeze_high = j.value("unfreeze_high", c.unfreeze_high);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const AdaptConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"lr_init", c.lr_init},
          {"lr_schedule", "poly"},
          {"poly_power", c.poly_power},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"style_mix", c.style_mix},
          {"gauss_snr_db", !c.gauss_snr_db             ? nlohmann::json(nullptr)
                           : std::isinf(*c.gauss_snr_db) ? nlohmann::json("inf")
                                                         : nlohmann::json(*c.gauss_snr_db)},
          {"style_sampling", to_string(c.sampling)},
          {"cache_features", c.cache_features},
          {"seed", c.seed}};
}

inline AdaptConfig adapt_config_from_json(const nlohmann::json& j, AdaptConfig c = {}) {
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_init = j.value("lr_init", c.lr_init);
  c.poly_power = j.value("poly_power", c.poly_power);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.style_mix = j.value("style_mix", c.style_mix);
  if (j.contains("gauss_snr_db")) {
    const auto& v = j.at("gauss_snr_db");
    if (v.is_null()) {
      c.gauss_snr_db.reset();
    } else if (v.is_string() && v.get<std::string>() == "inf") {
      c.gauss_snr_db = kNoNoise;
    } else {
      c.gauss_snr_db = v.get<double>();
    }
  }
  if (j.contains("style_sampling")) c.sampling = style_sampling_from_string(j.at("style_sampling").get<std::string>());
  c.cache_features = j.value("cache_features", c.cache_features);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

/// Content hash of a bank's styles and manifest identity, recorded in
/// adapted checkpoints.
inline std::string bank_content_hash(const StyleBank& bank) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(bank.manifest.encoder_id.data(), bank.manifest.encoder_id.size());
  for (const auto& s : bank.styles) {
    mix(s.mu.data(), s.mu.size() * sizeof(float));
    mix(s.sigma.data(), s.sigma.size() * sizeof(float));
  }
  return "fnv1a64:" + hex64(h);
}

// ---------------------------------------------------------------------------
// Photometric and geometric source augmentation.

inline RgbImage color_jitter(const RgbImage& img, const ColorJitterConfig& cfg, Rng& rng) {
  const double b = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double s = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation);
  std::vector<double> px(img.pixels.begin(), img.pixels.end());
  double gray_mean = 0.0;
  for (std::size_t i = 0; i < px.size(); i += 3) {
    for (int k = 0; k < 3; ++k) px[i + k] *= b;
    gray_mean += 0.299 * px[i] + 0.587 * px[i + 1] + 0.114 * px[i + 2];
  }
  gray_mean /= static_cast<double>(px.size() / 3);
  RgbImage out = img;
  for (std::size_t i = 0; i < px.size(); i += 3) {
    double rgb[3];
    for (int k = 0; k < 3; ++k) rgb[k] = (px[i + k] - gray_mean) * c + gray_mean;
    const double g = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    for (int k = 0; k < 3; ++k) out.pixels[i + k] = detail::clamp_u8((rgb[k] - g) * s + g);
  }
  return out;
}

namespace detail {

inline SegSample crop_and_flip(const SegSample& in, std::size_t crop, bool flip, Rng& rng) {
  const std::size_t ch = std::min(crop, in.image.height);
  const std::size_t cw = std::min(crop, in.image.width);
  const std::size_t oy = in.image.height > ch ? rng.index(in.image.height - ch + 1) : 0;
  const std::size_t ox = in.image.width > cw ? rng.index(in.image.width - cw + 1) : 0;
  const bool do_flip = flip && rng.uniform() < 0.5;
  SegSample out;
  out.name = in.name;
  out.image = RgbImage(ch, cw);
  out.label = LabelMask(ch, cw);
  for (std::size_t y = 0; y < ch; ++y) {
    for (std::size_t x = 0; x < cw; ++x) {
      const std::size_t sx = ox + (do_flip ? cw - 1 - x : x);
      const std::uint8_t* src = in.image.at(oy + y, sx);
      std::uint8_t* dst = out.image.at(y, x);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
      out.label.at(y, x) = in.label.at(oy + y, sx);
    }
  }
  return out;
}

/// Seeded epoch-wise shuffled sampling without replacement.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) { reshuffle(); }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.index(i)]);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

inline void check_label_range(const LabelMask& label, std::size_t k, int ignore_index, const std::string& name) {
  for (const auto v : label.values) {
    if (v != ignore_index && v >= k) {
      throw ValidationError("label value " + std::to_string(v) + " in " + name + " outside [0, " + std::to_string(k) +
                            ") and not ignore");
    }
  }
}

/// Scales the summed gradient by 1/valid and applies one optimizer step.
inline void apply_step(Segmenter& model, Segmenter::Gradients& grad, std::size_t valid, SgdMomentum& head_opt,
                       SgdMomentum* trunk_opt_w, SgdMomentum* trunk_opt_b, double lr_head, double lr_trunk) {
  if (valid == 0) return;
  const double inv = 1.0 / static_cast<double>(valid);
  for (auto& g : grad.head) g *= inv;
  head_opt.step(model.head().params, grad.head, lr_head);
  if (Conv2d* conv = model.trainable_high_stage(); conv != nullptr && trunk_opt_w != nullptr) {
    for (auto& g : grad.high_weight) g *= inv;
    for (auto& g : grad.high_bias) g *= inv;
    trunk_opt_w->step(conv->weight, grad.high_weight, lr_trunk);
    trunk_opt_b->step(conv->bias, grad.high_bias, lr_trunk);
  }
}

}  // namespace detail

/// Supervised cross-entropy training of the head (and the high stage when
/// cfg.unfreeze_high). The low-level stage is never updated.
template <SampleSource Samples>
Segmenter train_source(Segmenter model, const Samples& data, const SourceTrainConfig& cfg,
                       std::vector<double>* loss_log = nullptr, int ignore_index = kDefaultIgnoreIndex) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("train_source: empty dataset");
  if (cfg.unfreeze_high) model.unfreeze_high_stage();

  SgdMomentum head_opt(cfg.momentum, cfg.weight_decay);
  SgdMomentum trunk_w(cfg.momentum, cfg.weight_decay);
  SgdMomentum trunk_b(cfg.momentum, cfg.weight_decay);
  detail::EpochSampler sampler(data.size(), mix_seed(cfg.seed, 0xA11));
  Rng aug_rng(mix_seed(cfg.seed, 0xA12));

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Segmenter::Gradients grad = model.zero_gradients();
    double loss = 0.0;
    std::size_t valid = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const SegSample& raw = data.sample(sampler.next());
      detail::check_label_range(raw.label, model.num_classes(), ignore_index, raw.name);
      SegSample s = detail::crop_and_flip(raw, cfg.crop, cfg.hflip, aug_rng);
      s.image = color_jitter(s.image, cfg.jitter, aug_rng);
      const auto [l, n] = model.loss_and_grad(model.low_features(s.image), s.label, grad, ignore_index);
      loss += l;
      valid += n;
    }
    if (loss_log != nullptr) loss_log->push_back(valid > 0 ? loss / static_cast<double>(valid) : 0.0);
    detail::apply_step(model, grad, valid, head_opt, &trunk_w, &trunk_b,
                       poly_lr(cfg.lr_classifier, it, cfg.iterations, cfg.poly_power),
                       poly_lr(cfg.lr_trunk, it, cfg.iterations, cfg.poly_power));
  }
  model.record().source_trained = true;
  model.record().source_config = to_json(cfg);
  return model;
}

/// AdaIN toward `style`, optionally mixed with the feature's own statistics
/// (alpha weights the mined style) and perturbed at the given SNR.
inline FeatureMap stylize(const FeatureMap& f, const StyleStats<double>& style, const std::vector<double>* alpha,
                          std::optional<double> snr_db, Rng& rng) {
  StyleStats<double> applied = style;
  if (alpha != nullptr) applied = mix_stats(channel_stats(f), style, *alpha);
  if (snr_db && !std::isinf(*snr_db)) applied = gaussian_perturb_stats(applied, *snr_db, rng);
  return adain(f, applied);
}

/// One augmented view of f_s: a bank style (drawn uniformly unless
/// style_index is given), optional style mixing with alpha ~ U[0,1]^C,
/// optional Gaussian perturbation.
inline FeatureMap augment_features(const FeatureMap& f_s, const StyleBank& bank, const AdaptConfig& cfg, Rng& rng,
                                   std::optional<std::size_t> style_index = {}) {
  if (bank.empty()) throw ValidationError("augment_features: empty style bank");
  if (bank.manifest.channels != f_s.channels()) {
    throw ValidationError("augment_features: bank has " + std::to_string(bank.manifest.channels) +
                          " channels, feature has " + std::to_string(f_s.channels()));
  }
  const std::size_t k = style_index ? *style_index : rng.index(bank.size());
  if (k >= bank.size()) throw ValidationError("augment_features: style index out of range");
  const StyleStats<double> style = bank.styles[k].cast<double>();
  std::vector<double> alpha;
  if (cfg.style_mix) {
    alpha.resize(f_s.channels());
    for (auto& a : alpha) a = rng.uniform();
  }
  return stylize(f_s, style, cfg.style_mix ? &alpha : nullptr, cfg.gauss_snr_db, rng);
}

namespace detail {

/// Source low-level features and labels, either precomputed once or
/// extracted on demand. The trunk is frozen, so both paths are identical.
template <SampleSource Samples>
class SourceFeatures {
 public:
  SourceFeatures(const Segmenter& model, const Samples& data, bool cache, std::size_t num_classes, int ignore_index)
      : model_(model), data_(data), k_(num_classes), ignore_(ignore_index) {
    if (!cache) return;
    low_.reserve(data.size());
    labels_.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const SegSample& s = data.sample(i);
      check_label_range(s.label, k_, ignore_, s.name);
      low_.push_back(model.low_features(s.image));
      labels_.push_back(s.label);
    }
  }

  std::pair<FeatureMap, LabelMask> get(std::size_t i) const {
    if (!low_.empty()) return {low_[i], labels_[i]};
    const SegSample& s = data_.sample(i);
    check_label_range(s.label, k_, ignore_, s.name);
    return {model_.low_features(s.image), s.label};
  }

 private:
  const Segmenter& model_;
  const Samples& data_;
  std::size_t k_;
  int ignore_;
  std::vector<FeatureMap> low_;
  std::vector<LabelMask> labels_;
};

/// Shared classifier fine-tuning loop. `style_batch(step_rng, features,
/// source_indices)` rewrites a batch of low-level features in place.
template <SampleSource Samples, typename StyleFn>
Segmenter finetune_loop(Segmenter model, const Samples& data, const AdaptConfig& cfg, StyleFn&& style_batch,
                        std::vector<double>* loss_log, int ignore_index) {
  if (data.size() == 0) throw ValidationError("fine-tuning: empty dataset");
  SourceFeatures<Samples> source(model, data, cfg.cache_features, model.num_classes(), ignore_index);
  SgdMomentum head_opt(cfg.momentum, cfg.weight_decay);
  EpochSampler sampler(data.size(), mix_seed(cfg.seed, 0xF17));

  std::vector<FeatureMap> batch(cfg.batch_size);
  std::vector<LabelMask> labels(cfg.batch_size);
  std::vector<std::size_t> indices(cfg.batch_size);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      indices[b] = sampler.next();
      std::tie(batch[b], labels[b]) = source.get(indices[b]);
    }
    Rng step_rng(mix_seed(cfg.seed, 0x57E9'0000'0000ULL + it));
    style_batch(step_rng, batch, indices);

    Segmenter::Gradients grad = model.zero_gradients();
    double loss = 0.0;
    std::size_t valid = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto [l, n] = model.loss_and_grad(batch[b], labels[b], grad, ignore_index);
      loss += l;
      valid += n;
    }
    if (loss_log != nullptr) loss_log->push_back(valid > 0 ? loss / static_cast<double>(valid) : 0.0);
    detail::apply_step(model, grad, valid, head_opt, nullptr, nullptr,
                       poly_lr(cfg.lr_init, it, cfg.iterations, cfg.poly_power), 0.0);
  }
  return model;
}

}  // namespace detail

/// Classifier-only fine-tuning on source features restyled with bank styles,
/// supervised by the unchanged source labels. Only the head is updated.
template <SampleSource Samples>
Segmenter finetune_classifier(Segmenter model, const Samples& data, const StyleBank& bank, const AdaptConfig& cfg,
                              std::vector<double>* loss_log = nullptr, int ignore_index = kDefaultIgnoreIndex) {
  cfg.validate();
  bank.validate();
  if (bank.empty()) throw ValidationError("finetune_classifier: empty style bank");
  if (bank.manifest.encoder_id != model.backend().id()) {
    throw ValidationError("style bank was mined with encoder '" + bank.manifest.encoder_id +
                          "' but the model uses '" + model.backend().id() +
                          "'; styles live in that encoder's feature space and cannot be reused");
  }
  if (bank.manifest.channels != model.backend().feature_channels()) {
    throw ValidationError("style bank channel count does not match the model's low-level features");
  }
  if (cfg.sampling == StyleSampling::paired && bank.size() != data.size()) {
    throw ValidationError("paired style sampling needs one bank entry per source sample (" + std::to_string(bank.size()) +
                          " vs " + std::to_string(data.size()) + ")");
  }
  Segmenter out = detail::finetune_loop(
      std::move(model), data, cfg,
      [&](Rng& rng, std::vector<FeatureMap>& batch, const std::vector<std::size_t>& indices) {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const auto pick = cfg.sampling == StyleSampling::paired ? std::optional<std::size_t>(indices[b]) : std::nullopt;
          batch[b] = augment_features(batch[b], bank, cfg, rng, pick);
        }
      },
      loss_log, ignore_index);
  out.record().adapted_bank_hash = bank_content_hash(bank);
  out.record().adapted_target = bank.manifest.target.kind + ":" + bank.manifest.target.value;
  out.record().adapt_config = to_json(cfg);
  return out;
}

/// Draws the unit noise shared by one batch; every instance scales it by its
/// own statistics power.
inline std::vector<double> draw_batch_noise(std::size_t channels, Rng& rng) {
  std::vector<double> z(2 * channels);
  for (auto& v : z) v = rng.normal();
  return z;
}

/// Baseline without any target guidance: each feature is re-normalized to its
/// own statistics perturbed by Gaussian noise at cfg.gauss_snr_db (20 dB when
/// unset). The noise is redrawn every batch.
template <SampleSource Samples>
Segmenter source_only_g_train(Segmenter model, const Samples& data, AdaptConfig cfg,
                              std::vector<double>* loss_log = nullptr, int ignore_index = kDefaultIgnoreIndex) {
  if (!cfg.gauss_snr_db) cfg.gauss_snr_db = 20.0;
  cfg.validate();
  const double snr = *cfg.gauss_snr_db;
  const std::size_t channels = model.backend().feature_channels();
  Segmenter out = detail::finetune_loop(
      std::move(model), data, cfg,
      [&](Rng& rng, std::vector<FeatureMap>& batch, const std::vector<std::size_t>&) {
        if (std::isinf(snr)) return;
        const std::vector<double> z = draw_batch_noise(channels, rng);
        for (auto& f : batch) f = adain(f, gaussian_perturb_stats(channel_stats(f), snr, std::span<const double>(z)));
      },
      loss_log, ignore_index);
  out.record().adapted_target = "gaussian:" + std::to_string(snr) + "dB";
  out.record().adapt_config = to_json(cfg);
  return out;
}

}  // namespace pinadapt
