#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/errors.hpp"

namespace pinadapt {

inline constexpr int kDefaultIgnoreIndex = 255;

/// Integer class mask [H, W].
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  LabelMask() = default;
  LabelMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}
  LabelMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw ValidationError("label mask size mismatch");
  }

  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// counts[g][p]: pixels of ground-truth class g predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes, int ignore_index = kDefaultIgnoreIndex)
      : k_(num_classes), ignore_(ignore_index), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw ValidationError("confusion matrix: num_classes must be >= 1");
  }

  std::size_t num_classes() const noexcept { return k_; }
  int ignore_index() const noexcept { return ignore_; }
  std::uint64_t at(std::size_t g, std::size_t p) const { return counts_[g * k_ + p]; }
  std::uint64_t total() const noexcept { return total_; }

  void accumulate(const LabelMask& pred, const LabelMask& label) {
    if (pred.height != label.height || pred.width != label.width) {
      throw ValidationError("accumulate: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                            " vs label " + std::to_string(label.height) + "x" + std::to_string(label.width));
    }
    for (std::size_t i = 0; i < label.values.size(); ++i) {
      const int g = label.values[i];
      if (g == ignore_) continue;
      const int p = pred.values[i];
      if (g < 0 || static_cast<std::size_t>(g) >= k_) {
        throw ValidationError("accumulate: label value " + std::to_string(g) + " out of range");
      }
      if (p < 0 || static_cast<std::size_t>(p) >= k_) {
        throw ValidationError("accumulate: predicted value " + std::to_string(p) + " out of range");
      }
      ++counts_[static_cast<std::size_t>(g) * k_ + static_cast<std::size_t>(p)];
      ++total_;
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ValidationError("confusion matrix merge: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct MiouResult {
  double miou = 0.0;                           // in [0, 1]
  std::vector<std::optional<double>> per_class;  // nullopt: empty union, excluded
};

/// IoU_k = TP / (TP + FP + FN); classes with an empty union are excluded.
inline MiouResult miou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  MiouResult r;
  r.per_class.resize(k);
  // Extended precision keeps simple rational cases such as 7/12 correctly rounded.
  long double sum = 0.0L;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t tp = cm.at(c, c);
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fn += cm.at(c, o);
      fp += cm.at(o, c);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni == 0) continue;
    const long double iou = static_cast<long double>(tp) / static_cast<long double>(uni);
    r.per_class[c] = static_cast<double>(iou);
    sum += iou;
    ++present;
  }
  if (present == 0) throw ValidationError("miou: every class has an empty union");
  r.miou = static_cast<double>(sum / static_cast<long double>(present));
  return r;
}

inline nlohmann::json to_json(const MiouResult& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : r.per_class) per.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"miou", r.miou}, {"per_class_iou", per}};
}

/// Mean and population standard deviation of a run series.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) throw ValidationError("mean_std: empty series");
  MeanStd out;
  for (const double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  for (const double x : v) out.std += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(v.size()));
  return out;
}

}  // namespace pinadapt
