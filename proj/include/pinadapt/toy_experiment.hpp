#pragma once

// Desk-scale end-to-end run on the procedural toy data: source-only
// training, image-guided style mining against held-out shifted images,
// classifier fine-tuning and evaluation on the shifted validation split.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinadapt/adaptation.hpp"
#include "pinadapt/backends.hpp"
#include "pinadapt/bank_io.hpp"
#include "pinadapt/checkpoint.hpp"
#include "pinadapt/evaluation.hpp"
#include "pinadapt/mining.hpp"
#include "pinadapt/toy_data.hpp"

namespace pinadapt {

struct ToyExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t n_train = 96;
  std::size_t n_val = 48;
  std::size_t n_reference = 16;
  ToyShift shift;
  SourceTrainConfig source = SourceTrainConfig::toy();
  MiningConfig mining = MiningConfig::toy();
  AdaptConfig adapt = AdaptConfig::toy();
  unsigned workers = 1;

  void validate() const {
    if (n_train < 1 || n_val < 1 || n_reference < 1) throw ValidationError("toy experiment: split sizes must be >= 1");
    if (workers < 1) throw ValidationError("toy experiment: workers must be >= 1");
    source.validate();
    mining.validate();
    adapt.validate();
  }

  /// Every stage seed derives from `seed`.
  ToyExperimentConfig reseeded(std::uint64_t s) const {
    ToyExperimentConfig c = *this;
    c.seed = s;
    c.source.seed = mix_seed(s, 1);
    c.mining.seed = mix_seed(s, 2);
    c.adapt.seed = mix_seed(s, 3);
    return c;
  }
};

inline nlohmann::json to_json(const ToyExperimentConfig& c) {
  return {{"seed", c.seed},
          {"n_train", c.n_train},
          {"n_val", c.n_val},
          {"n_reference", c.n_reference},
          {"shift", {{"value_scale", c.shift.value_scale}, {"hue_degrees", c.shift.hue_degrees}}},
          {"source_train", to_json(c.source)},
          {"mining", to_json(c.mining)},
          {"adapt", to_json(c.adapt)},
          {"workers", c.workers}};
}

inline InMemorySamples load_samples(const DatasetSpec& spec) {
  const Dataset ds(spec);
  InMemorySamples out;
  out.samples.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.samples.push_back(ds.sample(i));
  return out;
}

/// Normalized mean image embedding of a set of unlabeled target images.
template <SampleSource Samples>
EmbeddingVector mean_image_embedding(const EncoderBackend& backend, const Samples& images) {
  if (images.size() == 0) throw ValidationError("mean_image_embedding: no images");
  std::vector<double> acc(backend.embedding_dim(), 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const EmbeddingVector e = backend.embed_image(backend.preprocess(images.sample(i).image)).normalized();
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += e.values[d];
  }
  return EmbeddingVector{std::move(acc)}.normalized();
}

template <SampleSource Samples>
std::vector<FeatureMap> low_features_of(const Segmenter& model, const Samples& data) {
  std::vector<FeatureMap> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(model.low_features(data.sample(i).image));
  return out;
}

/// Materialized toy splits for one seed.
struct ToySplits {
  InMemorySamples train;
  InMemorySamples val;
  InMemorySamples val_shifted;
  InMemorySamples reference_shifted;
};

inline ToySplits make_toy_splits(const std::filesystem::path& root, const ToyExperimentConfig& cfg) {
  const ToyDatasets specs = generate_toy_dataset(root, cfg.seed, cfg.n_train, cfg.n_val, cfg.n_reference, cfg.shift);
  return {load_samples(specs.source_train), load_samples(specs.source_val), load_samples(specs.target_val),
          load_samples(specs.target_reference)};
}

struct ToyExperimentResult {
  double source_only_clean = 0.0;    // source-only on unshifted val
  double source_only_shifted = 0.0;  // source-only on shifted val
  double adapted_shifted = 0.0;
  double delta() const noexcept { return adapted_shifted - source_only_shifted; }
  std::size_t bank_size = 0;
  std::size_t sigma_nonpositive = 0;
  nlohmann::json report;
};

/// Runs every stage; when out_dir is non-empty the data, bank, checkpoints
/// and report are written beneath it.
inline ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& cfg, const std::filesystem::path& data_root,
                                              const std::filesystem::path& out_dir = {}) {
  cfg.validate();
  const ToySplits splits = make_toy_splits(data_root, cfg);
  auto backend = std::make_shared<const ToyBackend>();

  Segmenter source_only = train_source(Segmenter(backend, kToyClasses, cfg.seed), splits.train, cfg.source);
  const EmbeddingVector target = mean_image_embedding(*backend, splits.reference_shifted);
  MiningConfig mcfg = cfg.mining;
  mcfg.workers = static_cast<int>(cfg.workers);
  const StyleBank bank = mine_bank(low_features_of(source_only, splits.train), target, mcfg, *backend,
                                   {"image", "toy:reference_shifted:seed=" + std::to_string(cfg.seed)});
  const Segmenter adapted = finetune_classifier(source_only, splits.train, bank, cfg.adapt);

  const auto clean = evaluate_model(source_only, splits.val, kToyClasses, kDefaultIgnoreIndex, cfg.workers);
  const auto src_shift = evaluate_model(source_only, splits.val_shifted, kToyClasses, kDefaultIgnoreIndex, cfg.workers);
  const auto ada_shift = evaluate_model(adapted, splits.val_shifted, kToyClasses, kDefaultIgnoreIndex, cfg.workers);

  ToyExperimentResult r;
  r.source_only_clean = clean.miou();
  r.source_only_shifted = src_shift.miou();
  r.adapted_shifted = ada_shift.miou();
  r.bank_size = bank.size();
  r.sigma_nonpositive = bank.manifest.sigma_nonpositive_total;
  r.report = {{"schema_version", kReportSchemaVersion},
              {"seed", cfg.seed},
              {"source_only_miou_clean", r.source_only_clean},
              {"source_only_miou_shifted", r.source_only_shifted},
              {"adapted_miou_shifted", r.adapted_shifted},
              {"delta_miou", r.delta()},
              {"bank", {{"count", bank.size()}, {"sigma_nonpositive", r.sigma_nonpositive}, {"hash", bank_content_hash(bank)}}},
              {"source_only_shifted", to_json(src_shift)},
              {"adapted_shifted", to_json(ada_shift)},
              {"config", to_json(cfg)}};
  if (!out_dir.empty()) {
    const nlohmann::json resolved = to_json(cfg);
    save_bank(bank, out_dir / "bank");
    save_checkpoint(source_only, out_dir / "source_only", resolved);
    save_checkpoint(adapted, out_dir / "adapted", resolved);
    for (const char* sub : {"", "bank", "source_only", "adapted"}) write_json(out_dir / sub / "resolved_config.json", resolved);
    write_json(out_dir / "report.json", r.report);
  }
  return r;
}

}  // namespace pinadapt
