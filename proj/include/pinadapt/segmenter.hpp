#pragma once

// Segmenter = frozen encoder trunk split after its low-level stage, plus a
// trainable per-pixel classifier over the concatenation of the low-level
// features and the (nearest-upsampled) high-level features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/binary_io.hpp"
#include "pinadapt/conv.hpp"
#include "pinadapt/encoder.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/metrics.hpp"
#include "pinadapt/random.hpp"
#include "pinadapt/toy_backend.hpp"

namespace pinadapt {

/// Two-layer per-pixel MLP: in -> hidden (ReLU) -> classes. Parameters are
/// stored flat as [w1 | b1 | w2 | b2].
struct PixelHead {
  std::size_t in_channels = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<double> params;

  PixelHead() = default;
  PixelHead(std::size_t in, std::size_t h, std::size_t k) : in_channels(in), hidden(h), classes(k), params(size_for(in, h, k), 0.0) {}

  static std::size_t size_for(std::size_t in, std::size_t h, std::size_t k) { return h * in + h + k * h + k; }

  static PixelHead random(std::size_t in, std::size_t h, std::size_t k, Rng& rng) {
    PixelHead head(in, h, k);
    const double s1 = std::sqrt(2.0 / static_cast<double>(in));
    const double s2 = std::sqrt(1.0 / static_cast<double>(h));
    for (std::size_t i = 0; i < h * in; ++i) head.params[i] = rng.normal(0.0, s1);
    for (std::size_t i = 0; i < k * h; ++i) head.params[head.w2_offset() + i] = rng.normal(0.0, s2);
    return head;
  }

  std::size_t b1_offset() const noexcept { return hidden * in_channels; }
  std::size_t w2_offset() const noexcept { return b1_offset() + hidden; }
  std::size_t b2_offset() const noexcept { return w2_offset() + classes * hidden; }

  const double* w1() const noexcept { return params.data(); }
  const double* b1() const noexcept { return params.data() + b1_offset(); }
  const double* w2() const noexcept { return params.data() + w2_offset(); }
  const double* b2() const noexcept { return params.data() + b2_offset(); }
};

/// Which training stages a checkpoint went through.
struct TrainingRecord {
  bool source_trained = false;
  nlohmann::json source_config = nullptr;
  std::optional<std::string> adapted_bank_hash;
  std::string adapted_target;
  nlohmann::json adapt_config = nullptr;
};

class Segmenter {
 public:
  static constexpr std::size_t kDefaultHidden = 32;

  Segmenter(std::shared_ptr<const EncoderBackend> backend, std::size_t num_classes, std::uint64_t seed,
            std::size_t hidden = kDefaultHidden)
      : backend_(std::move(backend)), num_classes_(num_classes), seed_(seed) {
    if (!backend_) throw ValidationError("segmenter: null backend");
    if (num_classes_ < 1) throw ValidationError("segmenter: num_classes must be >= 1");
    Rng rng(mix_seed(seed, 0x5E6));
    const std::size_t in = backend_->feature_channels() + high_channels();
    head_ = PixelHead::random(in, hidden, num_classes_, rng);
  }

  const EncoderBackend& backend() const noexcept { return *backend_; }
  std::shared_ptr<const EncoderBackend> backend_ptr() const noexcept { return backend_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::uint64_t seed() const noexcept { return seed_; }

  PixelHead& head() noexcept { return head_; }
  const PixelHead& head() const noexcept { return head_; }

  TrainingRecord& record() noexcept { return record_; }
  const TrainingRecord& record() const noexcept { return record_; }

  /// Makes the high-level stage trainable (the low-level stage always stays
  /// frozen). Needs a backend whose high stage is a plain convolution.
  void unfreeze_high_stage() {
    const auto* toy = dynamic_cast<const ToyBackend*>(backend_.get());
    if (toy == nullptr) throw CapabilityError("partial unfreeze is only available for the toy backend");
    if (!high_stage_) high_stage_ = toy->layer2();
  }

  bool high_stage_trainable() const noexcept { return high_stage_.has_value(); }
  Conv2d* trainable_high_stage() noexcept { return high_stage_ ? &*high_stage_ : nullptr; }
  const Conv2d* trainable_high_stage() const noexcept { return high_stage_ ? &*high_stage_ : nullptr; }
  void set_high_stage(Conv2d conv) { high_stage_ = std::move(conv); }

  FeatureMap low_features(const RgbImage& image) const {
    return backend_->extract_low_features(backend_->preprocess(image));
  }

  FeatureMap high_features(const FeatureMap& low) const {
    if (high_stage_) return high_stage_->forward(low, true);
    return backend_->high_features(low);
  }

  /// Checksum over every frozen parameter: the whole encoder, plus the
  /// segmenter's copy of the high stage when it is frozen (absent).
  std::uint64_t frozen_checksum() const { return backend_->weights_checksum(); }

  std::uint64_t head_checksum() const { return checksum_doubles(0xcbf29ce484222325ULL, head_.params); }

  /// Per-feature-pixel logits [K, h, w].
  FeatureMap logits(const FeatureMap& low, const FeatureMap& high) const {
    const std::size_t h = low.height();
    const std::size_t w = low.width();
    FeatureMap out(num_classes_, h, w);
    std::vector<double> x(head_.in_channels);
    std::vector<double> hid(head_.hidden);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        gather(low, high, y, xx, x);
        forward_pixel(x, hid);
        for (std::size_t k = 0; k < num_classes_; ++k) {
          double v = head_.b2()[k];
          const double* row = head_.w2() + k * head_.hidden;
          for (std::size_t j = 0; j < head_.hidden; ++j) v += row[j] * hid[j];
          out(k, y, xx) = v;
        }
      }
    }
    return out;
  }

  /// Prediction at the given output resolution (nearest mapping onto the
  /// feature grid).
  LabelMask predict_from_low(const FeatureMap& low, std::size_t out_h, std::size_t out_w) const {
    const FeatureMap lg = logits(low, high_features(low));
    std::vector<std::uint8_t> argmax(low.plane_size());
    for (std::size_t p = 0; p < low.plane_size(); ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < num_classes_; ++k) {
        if (lg.values()[k * low.plane_size() + p] > lg.values()[best * low.plane_size() + p]) best = k;
      }
      argmax[p] = static_cast<std::uint8_t>(best);
    }
    LabelMask out(out_h, out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t fy = y * low.height() / out_h;
      for (std::size_t x = 0; x < out_w; ++x) out.at(y, x) = argmax[fy * low.width() + x * low.width() / out_w];
    }
    return out;
  }

  LabelMask predict(const RgbImage& image) const { return predict_from_low(low_features(image), image.height, image.width); }

  struct Gradients {
    std::vector<double> head;
    std::vector<double> high_weight;
    std::vector<double> high_bias;
  };

  Gradients zero_gradients() const {
    Gradients g;
    g.head.assign(head_.params.size(), 0.0);
    if (high_stage_) {
      g.high_weight.assign(high_stage_->weight.size(), 0.0);
      g.high_bias.assign(high_stage_->bias.size(), 0.0);
    }
    return g;
  }

  /// Summed pixel cross-entropy of one sample against `label` (at label
  /// resolution, ignore_index skipped); adds summed gradients to `grad` and
  /// returns (loss_sum, counted_pixels).
  std::pair<double, std::size_t> loss_and_grad(const FeatureMap& low, const LabelMask& label, Gradients& grad,
                                               int ignore_index = kDefaultIgnoreIndex) const {
    const FeatureMap high = high_features(low);
    const std::size_t h = low.height();
    const std::size_t w = low.width();
    const std::size_t k_classes = num_classes_;

    // Class histogram of the label pixels that land on each feature pixel.
    std::vector<double> counts(h * w * k_classes, 0.0);
    std::size_t valid = 0;
    for (std::size_t y = 0; y < label.height; ++y) {
      const std::size_t fy = y * h / label.height;
      for (std::size_t x = 0; x < label.width; ++x) {
        const int g = label.at(y, x);
        if (g == ignore_index) continue;
        if (g < 0 || static_cast<std::size_t>(g) >= k_classes) {
          throw ValidationError("label value " + std::to_string(g) + " outside [0, " + std::to_string(k_classes) + ")");
        }
        const std::size_t fx = x * w / label.width;
        counts[(fy * w + fx) * k_classes + static_cast<std::size_t>(g)] += 1.0;
        ++valid;
      }
    }

    FeatureMap grad_high;
    if (high_stage_) grad_high = FeatureMap(high.channels(), high.height(), high.width());

    std::vector<double> x(head_.in_channels);
    std::vector<double> hid(head_.hidden);
    std::vector<double> logit(k_classes);
    std::vector<double> dlogit(k_classes);
    std::vector<double> dhid(head_.hidden);
    const std::size_t low_c = low.channels();
    double loss = 0.0;
    double* gw1 = grad.head.data();
    double* gb1 = gw1 + head_.b1_offset();
    double* gw2 = gw1 + head_.w2_offset();
    double* gb2 = gw1 + head_.b2_offset();

    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double* cnt = counts.data() + (y * w + xx) * k_classes;
        double n = 0.0;
        for (std::size_t k = 0; k < k_classes; ++k) n += cnt[k];
        if (n == 0.0) continue;
        gather(low, high, y, xx, x);
        forward_pixel(x, hid);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_classes; ++k) {
          double v = head_.b2()[k];
          const double* row = head_.w2() + k * head_.hidden;
          for (std::size_t j = 0; j < head_.hidden; ++j) v += row[j] * hid[j];
          logit[k] = v;
          mx = std::max(mx, v);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < k_classes; ++k) z += std::exp(logit[k] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t k = 0; k < k_classes; ++k) {
          loss += cnt[k] * (lse - logit[k]);
          dlogit[k] = n * std::exp(logit[k] - lse) - cnt[k];
        }
        std::fill(dhid.begin(), dhid.end(), 0.0);
        for (std::size_t k = 0; k < k_classes; ++k) {
          gb2[k] += dlogit[k];
          double* grow = gw2 + k * head_.hidden;
          const double* wrow = head_.w2() + k * head_.hidden;
          for (std::size_t j = 0; j < head_.hidden; ++j) {
            grow[j] += dlogit[k] * hid[j];
            dhid[j] += dlogit[k] * wrow[j];
          }
        }
        for (std::size_t j = 0; j < head_.hidden; ++j) {
          if (hid[j] <= 0.0) continue;
          const double d = dhid[j];
          gb1[j] += d;
          double* grow = gw1 + j * head_.in_channels;
          for (std::size_t i = 0; i < head_.in_channels; ++i) grow[i] += d * x[i];
          if (high_stage_) {
            const double* wrow = head_.w1() + j * head_.in_channels;
            const std::size_t hy = y * high.height() / h;
            const std::size_t hx = xx * high.width() / w;
            for (std::size_t c = 0; c < high.channels(); ++c) grad_high(c, hy, hx) += d * wrow[low_c + c];
          }
        }
      }
    }

    if (high_stage_) {
      relu_mask(high, grad_high);
      high_stage_->backward(low, grad_high, &grad.high_weight, &grad.high_bias);
    }
    return {loss, valid};
  }

 private:
  std::size_t high_channels() const {
    if (const auto* toy = dynamic_cast<const ToyBackend*>(backend_.get())) return toy->layer2().out_channels;
    throw CapabilityError("segmenter: cannot determine high-level channel count for backend " + backend_->id());
  }

  void gather(const FeatureMap& low, const FeatureMap& high, std::size_t y, std::size_t x, std::vector<double>& out) const {
    const std::size_t lc = low.channels();
    for (std::size_t c = 0; c < lc; ++c) out[c] = low(c, y, x);
    const std::size_t hy = y * high.height() / low.height();
    const std::size_t hx = x * high.width() / low.width();
    for (std::size_t c = 0; c < high.channels(); ++c) out[lc + c] = high(c, hy, hx);
  }

  void forward_pixel(const std::vector<double>& x, std::vector<double>& hid) const {
    for (std::size_t j = 0; j < head_.hidden; ++j) {
      double v = head_.b1()[j];
      const double* row = head_.w1() + j * head_.in_channels;
      for (std::size_t i = 0; i < head_.in_channels; ++i) v += row[i] * x[i];
      hid[j] = v > 0.0 ? v : 0.0;
    }
  }

  std::shared_ptr<const EncoderBackend> backend_;
  std::size_t num_classes_;
  std::uint64_t seed_;
  PixelHead head_;
  std::optional<Conv2d> high_stage_;
  TrainingRecord record_;
};

}  // namespace pinadapt
