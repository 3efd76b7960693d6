#pragma once

// Image-folder segmentation datasets. Layout:
//   <root>/<image_dir>/<split>/**/<stem><image_suffix>
//   <root>/<label_dir>/<split>/**/<stem><label_suffix>
// Samples are decoded lazily in sorted path order.

#include <algorithm>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/binary_io.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/image_io.hpp"
#include "pinadapt/metrics.hpp"

namespace pinadapt {

/// Raw label id -> train id (or ignore). Unmapped raw ids are errors.
class LabelRemap {
 public:
  LabelRemap() { table_.fill(-1); }

  static LabelRemap identity(std::size_t num_classes, int ignore_index) {
    LabelRemap r;
    for (std::size_t k = 0; k < num_classes; ++k) r.table_[k] = static_cast<int>(k);
    r.table_[static_cast<std::size_t>(ignore_index)] = ignore_index;
    return r;
  }

  void set(int raw, int train) {
    if (raw < 0 || raw > 255) throw ValidationError("label remap: raw id " + std::to_string(raw) + " outside 0..255");
    table_[static_cast<std::size_t>(raw)] = train;
  }

  std::optional<int> map(int raw) const {
    const int v = table_[static_cast<std::size_t>(raw)];
    if (v < 0) return std::nullopt;
    return v;
  }

  /// Every mapped value lies in [0, K) or is ignore; no two raw ids share a train id.
  void validate(std::size_t num_classes, int ignore_index) const {
    std::vector<int> owner(num_classes, -1);
    for (int raw = 0; raw < 256; ++raw) {
      const int t = table_[static_cast<std::size_t>(raw)];
      if (t < 0 || t == ignore_index) continue;
      if (static_cast<std::size_t>(t) >= num_classes) {
        throw ValidationError("label remap: raw id " + std::to_string(raw) + " maps to " + std::to_string(t) +
                              ", outside [0, " + std::to_string(num_classes) + ")");
      }
      if (owner[static_cast<std::size_t>(t)] >= 0) {
        throw ValidationError("label remap: raw ids " + std::to_string(owner[static_cast<std::size_t>(t)]) + " and " +
                              std::to_string(raw) + " both map to " + std::to_string(t));
      }
      owner[static_cast<std::size_t>(t)] = raw;
    }
  }

  static LabelRemap from_json(const nlohmann::json& j) {
    LabelRemap r;
    for (const auto& [k, v] : j.items()) r.set(std::stoi(k), v.get<int>());
    return r;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (int raw = 0; raw < 256; ++raw) {
      if (table_[static_cast<std::size_t>(raw)] >= 0) j[std::to_string(raw)] = table_[static_cast<std::size_t>(raw)];
    }
    return j;
  }

  friend bool operator==(const LabelRemap&, const LabelRemap&) = default;

 private:
  std::array<int, 256> table_{};
};

/// Cityscapes labelIds -> 19 train ids (also used by ACDC and GTA5 labels).
inline LabelRemap cityscapes_remap() {
  LabelRemap r;
  for (int raw = 0; raw <= 33; ++raw) r.set(raw, kDefaultIgnoreIndex);
  const std::array<std::pair<int, int>, 19> pairs{{{7, 0},   {8, 1},   {11, 2},  {12, 3},  {13, 4},
                                                   {17, 5},  {19, 6},  {20, 7},  {21, 8},  {22, 9},
                                                   {23, 10}, {24, 11}, {25, 12}, {26, 13}, {27, 14},
                                                   {28, 15}, {31, 16}, {32, 17}, {33, 18}}};
  for (const auto& [raw, train] : pairs) r.set(raw, train);
  r.set(255, kDefaultIgnoreIndex);
  return r;
}

struct DatasetSpec {
  std::filesystem::path root;
  std::string split = "train";
  std::string image_dir = "images";
  std::string label_dir = "labels";
  std::string image_suffix = ".ppm";
  std::string label_suffix = ".pgm";
  std::size_t num_classes = 0;
  int ignore_index = kDefaultIgnoreIndex;
  bool labeled = true;
  std::optional<LabelRemap> remap;  // identity when absent

  /// Standard Cityscapes layout (leftImg8bit / gtFine), K = 19.
  static DatasetSpec cityscapes(std::filesystem::path root, std::string split) {
    DatasetSpec s;
    s.root = std::move(root);
    s.split = std::move(split);
    s.image_dir = "leftImg8bit";
    s.label_dir = "gtFine";
    s.image_suffix = "_leftImg8bit.png";
    s.label_suffix = "_gtFine_labelIds.png";
    s.num_classes = 19;
    s.remap = cityscapes_remap();
    return s;
  }
};

inline nlohmann::json to_json(const DatasetSpec& s) {
  nlohmann::json j{{"root", s.root.string()},         {"split", s.split},
                   {"image_dir", s.image_dir},        {"label_dir", s.label_dir},
                   {"image_suffix", s.image_suffix},  {"label_suffix", s.label_suffix},
                   {"num_classes", s.num_classes},    {"ignore_index", s.ignore_index},
                   {"labeled", s.labeled}};
  if (s.remap) j["remap"] = s.remap->to_json();
  return j;
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  DatasetSpec s;
  if (j.value("layout", std::string{}) == "cityscapes") {
    s = DatasetSpec::cityscapes(j.at("root").get<std::string>(), j.value("split", std::string("train")));
  }
  s.root = j.at("root").get<std::string>();
  if (s.root.is_relative() && !base.empty()) s.root = base / s.root;
  s.split = j.value("split", s.split);
  s.image_dir = j.value("image_dir", s.image_dir);
  s.label_dir = j.value("label_dir", s.label_dir);
  s.image_suffix = j.value("image_suffix", s.image_suffix);
  s.label_suffix = j.value("label_suffix", s.label_suffix);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.ignore_index = j.value("ignore_index", s.ignore_index);
  s.labeled = j.value("labeled", s.labeled);
  if (j.contains("remap")) {
    const auto& r = j.at("remap");
    s.remap = r.is_string() ? LabelRemap::from_json(read_json(base / r.get<std::string>())) : LabelRemap::from_json(r);
  }
  return s;
}

struct SegSample {
  std::string name;
  RgbImage image;
  LabelMask label;  // empty when the split is unlabeled
};

/// Per-file dataset failure naming the offending path.
class DatasetError : public LoadError {
 public:
  DatasetError(const std::string& what, std::filesystem::path file) : LoadError(what), file_(std::move(file)) {}
  const std::filesystem::path& file() const noexcept { return file_; }

 private:
  std::filesystem::path file_;
};

class Dataset {
 public:
  explicit Dataset(DatasetSpec spec) : spec_(std::move(spec)) {
    if (spec_.num_classes == 0) throw ValidationError("dataset: num_classes must be >= 1");
    if (spec_.ignore_index < 0 || spec_.ignore_index > 255) throw ValidationError("dataset: ignore_index must be in 0..255");
    if (static_cast<std::size_t>(spec_.ignore_index) < spec_.num_classes) {
      throw ValidationError("dataset: ignore_index collides with a class id");
    }
    if (!spec_.remap) spec_.remap = LabelRemap::identity(spec_.num_classes, spec_.ignore_index);
    spec_.remap->validate(spec_.num_classes, spec_.ignore_index);

    const auto image_root = spec_.root / spec_.image_dir / spec_.split;
    if (!std::filesystem::is_directory(image_root)) {
      throw ValidationError("dataset: image directory " + image_root.string() + " does not exist");
    }
    for (const auto& entry : std::filesystem::recursive_directory_iterator(image_root)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (name.size() < spec_.image_suffix.size() ||
          name.compare(name.size() - spec_.image_suffix.size(), spec_.image_suffix.size(), spec_.image_suffix) != 0) {
        continue;
      }
      images_.push_back(entry.path());
    }
    if (images_.empty()) throw ValidationError("dataset: no images under " + image_root.string());
    std::sort(images_.begin(), images_.end());
  }

  const DatasetSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return images_.size(); }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }

  std::filesystem::path label_path(std::size_t i) const {
    const auto image_root = spec_.root / spec_.image_dir / spec_.split;
    const auto rel = std::filesystem::relative(images_[i], image_root);
    std::string file = rel.filename().string();
    file = file.substr(0, file.size() - spec_.image_suffix.size()) + spec_.label_suffix;
    return spec_.root / spec_.label_dir / spec_.split / rel.parent_path() / file;
  }

  SegSample sample(std::size_t i) const {
    SegSample s;
    const auto& path = images_.at(i);
    s.name = std::filesystem::relative(path, spec_.root / spec_.image_dir / spec_.split).string();
    try {
      s.image = read_rgb(path);
    } catch (const LoadError& e) {
      throw DatasetError(std::string("undecodable image: ") + e.what(), path);
    }
    if (!spec_.labeled) return s;
    const auto lp = label_path(i);
    if (!std::filesystem::exists(lp)) throw DatasetError("missing label " + lp.string(), lp);
    try {
      s.label = read_mask(lp);
    } catch (const LoadError& e) {
      throw DatasetError(std::string("undecodable label: ") + e.what(), lp);
    }
    if (s.label.height != s.image.height || s.label.width != s.image.width) {
      throw DatasetError("label " + lp.string() + " is not aligned with its image", lp);
    }
    for (auto& v : s.label.values) {
      const auto mapped = spec_.remap->map(v);
      if (!mapped) throw DatasetError("remap violation: raw id " + std::to_string(v) + " in " + lp.string(), lp);
      v = static_cast<std::uint8_t>(*mapped);
    }
    return s;
  }

  class iterator {
   public:
    using value_type = SegSample;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const Dataset* d, std::size_t i) : d_(d), i_(i) {}
    SegSample operator*() const { return d_->sample(i_); }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    void operator++(int) { ++i_; }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const Dataset* d_ = nullptr;
    std::size_t i_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, images_.size()}; }

 private:
  DatasetSpec spec_;
  std::vector<std::filesystem::path> images_;
};

inline Dataset load_dataset(const DatasetSpec& spec) { return Dataset(spec); }

}  // namespace pinadapt
