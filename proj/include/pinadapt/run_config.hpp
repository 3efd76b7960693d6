#pragma once

// Run configuration shared by every CLI stage: a JSON document with the
// backend, dataset specs, per-stage sub-configs, seed and output directory.

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pinadapt/adaptation.hpp"
#include "pinadapt/bank_io.hpp"
#include "pinadapt/binary_io.hpp"
#include "pinadapt/concept.hpp"
#include "pinadapt/dataset.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/mining.hpp"

namespace pinadapt {

inline constexpr int kRunConfigVersion = 1;

struct RunConfig {
  std::string backend = "toy";
  std::optional<std::filesystem::path> model_dir;
  std::optional<DatasetSpec> source;  // labeled source training split
  std::optional<DatasetSpec> eval;    // split scored by `eval`
  MiningConfig mining;
  ConceptConfig concept_opt;
  SourceTrainConfig source_train;
  AdaptConfig adapt;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  int workers = 1;

  /// Full-scale reference values (Cityscapes source, CLIP ResNet-50).
  static RunConfig reference() {
    RunConfig c;
    c.backend = "clip-rn50";
    c.source = DatasetSpec::cityscapes("data/cityscapes", "train");
    c.eval = DatasetSpec::cityscapes("data/cityscapes", "val");
    return c;
  }

  /// Desk-scale presets for the procedural toy data.
  static RunConfig toy() {
    RunConfig c;
    c.source_train = SourceTrainConfig::toy();
    c.adapt = AdaptConfig::toy();
    c.mining = MiningConfig::toy();
    return c;
  }

  /// Propagates the run seed into every stage and checks value ranges.
  void resolve() {
    mining.seed = seed;
    concept_opt.seed = seed;
    source_train.seed = seed;
    adapt.seed = seed;
    mining.workers = workers;
    if (workers < 1) throw ValidationError("run config: workers must be >= 1");
    mining.validate();
    concept_opt.validate();
    source_train.validate();
    adapt.validate();
  }

  /// Every referenced path must exist.
  void validate_paths() const {
    auto check = [](const std::optional<DatasetSpec>& d, const char* what) {
      if (d && !std::filesystem::is_directory(d->root)) {
        throw ValidationError(std::string("run config: ") + what + " root " + d->root.string() + " does not exist");
      }
    };
    check(source, "source dataset");
    check(eval, "eval dataset");
    if (model_dir && !std::filesystem::is_directory(*model_dir)) {
      throw ValidationError("run config: model_dir " + model_dir->string() + " does not exist");
    }
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"version", kRunConfigVersion},
          {"backend", c.backend},
          {"model_dir", c.model_dir ? nlohmann::json(c.model_dir->string()) : nlohmann::json(nullptr)},
          {"source", c.source ? to_json(*c.source) : nlohmann::json(nullptr)},
          {"eval", c.eval ? to_json(*c.eval) : nlohmann::json(nullptr)},
          {"mining", to_json(c.mining)},
          {"concept", to_json(c.concept_opt)},
          {"source_train", to_json(c.source_train)},
          {"adapt", to_json(c.adapt)},
          {"seed", c.seed},
          {"out_dir", c.out_dir.string()},
          {"workers", c.workers}};
}

/// Fields absent from `j` keep the values of `base`. Relative paths are
/// taken relative to `dir` (the config file's directory).
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}, const std::filesystem::path& dir = {}) {
  RunConfig c = std::move(base);
  try {
    if (j.contains("version") && j.at("version").get<int>() != kRunConfigVersion) {
      throw ValidationError("run config: unsupported version " + j.at("version").dump());
    }
    c.backend = j.value("backend", c.backend);
    if (j.contains("model_dir") && !j.at("model_dir").is_null()) {
      std::filesystem::path p = j.at("model_dir").get<std::string>();
      c.model_dir = p.is_relative() && !dir.empty() ? dir / p : p;
    }
    if (j.contains("source") && !j.at("source").is_null()) c.source = dataset_spec_from_json(j.at("source"), dir);
    if (j.contains("eval") && !j.at("eval").is_null()) c.eval = dataset_spec_from_json(j.at("eval"), dir);
    if (j.contains("mining")) c.mining = mining_config_from_json(j.at("mining"), c.mining);
    if (j.contains("concept")) c.concept_opt = concept_config_from_json(j.at("concept"), c.concept_opt);
    if (j.contains("source_train")) c.source_train = source_train_config_from_json(j.at("source_train"), c.source_train);
    if (j.contains("adapt")) c.adapt = adapt_config_from_json(j.at("adapt"), c.adapt);
    c.seed = j.value("seed", c.seed);
    if (j.contains("out_dir")) {
      std::filesystem::path p = j.at("out_dir").get<std::string>();
      c.out_dir = p.is_relative() && !dir.empty() && !p.empty() ? dir / p : p;
    }
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  return run_config_from_json(read_json(path), std::move(base), path.parent_path());
}

}  // namespace pinadapt
