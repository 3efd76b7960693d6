// pinadapt: command-line driver for style mining, concept optimization,
// source training, adaptation, evaluation and the toy end-to-end run.
//
// Exit codes: 0 ok, 2 usage or validation error, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pinadapt/adaptation.hpp"
#include "pinadapt/backends.hpp"
#include "pinadapt/bank_io.hpp"
#include "pinadapt/bank_report.hpp"
#include "pinadapt/checkpoint.hpp"
#include "pinadapt/concept.hpp"
#include "pinadapt/evaluation.hpp"
#include "pinadapt/image_io.hpp"
#include "pinadapt/mining.hpp"
#include "pinadapt/run_config.hpp"
#include "pinadapt/templates.hpp"
#include "pinadapt/toy_experiment.hpp"

namespace fs = std::filesystem;
using namespace pinadapt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Failure inside a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::exception& cause, bool validation)
      : std::runtime_error("stage '" + stage + "': " + cause.what()), validation_(validation) {}
  bool validation() const noexcept { return validation_; }

 private:
  bool validation_;
};

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  std::cerr << "[" << name << "]\n";
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw StageError(name, e, true);
  } catch (const std::exception& e) {
    throw StageError(name, e, false);
  }
}

struct CommonOptions {
  std::string preset = "toy";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string backend;
  std::string model_dir;
  std::string source_root;
  std::string source_split = "train";
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_out) {
  cmd->add_option("--preset", o.preset, "Base values: toy or reference")->check(CLI::IsMember({"toy", "reference"}));
  cmd->add_option("--config", o.config_path, "Run config JSON layered over the preset")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Run seed (overrides the config file)");
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--backend", o.backend, "Encoder backend: toy, toy-tok, clip-rn50, clip-rn101");
  cmd->add_option("--model-dir", o.model_dir, "Pretrained weight directory (else $PINADAPT_MODEL_DIR)");
  cmd->add_option("--source-root", o.source_root, "Source dataset root (images/<split>, labels/<split>)");
  cmd->add_option("--source-split", o.source_split, "Source split name");
  auto* out = cmd->add_option("--out", o.out, "Output directory");
  if (needs_out) out->required();
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.preset == "reference" ? RunConfig::reference() : RunConfig::toy();
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path, std::move(cfg));
  if (!o.backend.empty()) cfg.backend = o.backend;
  if (!o.model_dir.empty()) cfg.model_dir = fs::path(o.model_dir);
  if (!o.source_root.empty()) {
    DatasetSpec s = cfg.source.value_or(toy_split_spec(o.source_root, o.source_split));
    s.root = o.source_root;
    s.split = o.source_split;
    cfg.source = s;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.resolve();
  return cfg;
}

/// Reproducibility contract: the resolved config lands in the output
/// directory before any work starts.
void echo_config(const fs::path& out, const nlohmann::json& resolved) {
  fs::create_directories(out);
  write_json(out / "resolved_config.json", resolved);
}

std::shared_ptr<const EncoderBackend> open_backend(const RunConfig& cfg) {
  return std::shared_ptr<const EncoderBackend>(make_backend(cfg.backend, cfg.model_dir));
}

const DatasetSpec& require_source(const RunConfig& cfg) {
  if (!cfg.source) throw ValidationError("no source dataset: pass --source-root or set \"source\" in the config");
  return *cfg.source;
}

std::vector<FeatureMap> source_features(const EncoderBackend& backend, const Dataset& data) {
  std::vector<FeatureMap> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(backend.extract_low_features(backend.preprocess(data.sample(i).image)));
  }
  return out;
}

DatasetSpec unlabeled(DatasetSpec s) {
  s.labeled = false;
  if (s.num_classes == 0) s.num_classes = 1;
  return s;
}

Segmenter load_model(const fs::path& checkpoint, const RunConfig& cfg) {
  return load_checkpoint(checkpoint, open_backend(cfg));
}

// --- subcommands -----------------------------------------------------------

struct MineOptions {
  std::string prompt;
  std::string image;
  std::string concept_dir;
  std::string suffix;
  std::string init;
  std::string templates = "imagenet";
};

int run_mine(const CommonOptions& co, const MineOptions& mo) {
  const int guidance = !mo.prompt.empty() + !mo.image.empty() + !mo.concept_dir.empty();
  if (guidance != 1) throw ValidationError("mine needs exactly one of --prompt, --image or --concept");
  if (!mo.concept_dir.empty() && mo.suffix.empty()) throw ValidationError("--concept requires --suffix");
  if (mo.concept_dir.empty() && !mo.suffix.empty()) throw ValidationError("--suffix is only valid with --concept");

  RunConfig cfg = resolve_config(co);
  if (!mo.init.empty()) cfg.mining.init = style_init_from_string(mo.init);
  cfg.validate_paths();
  nlohmann::json echo = to_json(cfg);
  echo["guidance"] = {{"prompt", mo.prompt}, {"image", mo.image}, {"concept", mo.concept_dir}, {"suffix", mo.suffix},
                      {"templates", mo.templates}};
  echo_config(cfg.out_dir, echo);

  const auto backend = stage("backend", [&] { return open_backend(cfg); });
  TargetDescriptor desc;
  const EmbeddingVector target = stage("target", [&] {
    if (!mo.prompt.empty()) {
      desc = {"prompt", mo.prompt};
      return backend->embed_text(Prompt{mo.prompt, template_set(mo.templates)}).normalized();
    }
    if (!mo.image.empty()) {
      desc = {"image", file_content_hash(mo.image)};
      return backend->embed_image(backend->preprocess(read_rgb(mo.image))).normalized();
    }
    const ConceptEmbedding c = load_concept(mo.concept_dir);
    if (c.backend_id != backend->id()) {
      throw ValidationError("concept was optimized with backend '" + c.backend_id + "', not '" + backend->id() + "'");
    }
    desc = {"concept+suffix", file_content_hash(fs::path(mo.concept_dir) / "concept.f32") + "+" + mo.suffix};
    return build_concept_prompt_embedding(c, mo.suffix, *backend);
  });

  const Dataset data(unlabeled(require_source(cfg)));
  const std::vector<FeatureMap> features = stage("features", [&] { return source_features(*backend, data); });
  const StyleBank bank = stage("mine", [&] { return mine_bank(features, target, cfg.mining, *backend, desc); });
  stage("write", [&] {
    save_bank(bank, cfg.out_dir);
    if (bank.size() >= 2) write_json(cfg.out_dir / "bank_report.json", to_json(bank_diversity_report(bank)));
  });
  if (bank.manifest.sigma_nonpositive_total > 0) {
    std::cerr << "warning: " << bank.manifest.sigma_nonpositive_total
              << " mined sigma values are <= 0 (sign-flipped channels are kept as mined)\n";
  }
  std::cout << "mined " << bank.size() << " styles -> " << cfg.out_dir.string() << "\n";
  return kExitOk;
}

int run_concept(const CommonOptions& co, const std::string& suffix) {
  RunConfig cfg = resolve_config(co);
  cfg.validate_paths();
  nlohmann::json echo = to_json(cfg);
  echo["suffix"] = suffix;
  echo_config(cfg.out_dir, echo);
  const auto backend = stage("backend", [&] { return open_backend(cfg); });
  const Dataset data(unlabeled(require_source(cfg)));
  std::vector<Image> images;
  stage("images", [&] {
    for (std::size_t i = 0; i < data.size(); ++i) images.push_back(backend->preprocess(data.sample(i).image));
  });
  const ConceptEmbedding c = stage("optimize", [&] { return optimize_concept(images, suffix, cfg.concept_opt, *backend); });
  stage("write", [&] { save_concept(c, cfg.out_dir); });
  std::cout << "concept loss " << c.epoch_losses.front() << " -> " << c.epoch_losses.back() << "\n";
  return kExitOk;
}

int run_train_source(const CommonOptions& co, std::optional<std::size_t> iterations, bool unfreeze) {
  RunConfig cfg = resolve_config(co);
  if (iterations) cfg.source_train.iterations = *iterations;
  if (unfreeze) cfg.source_train.unfreeze_high = true;
  cfg.source_train.validate();
  cfg.validate_paths();
  echo_config(cfg.out_dir, to_json(cfg));
  const auto backend = stage("backend", [&] { return open_backend(cfg); });
  const Dataset data(require_source(cfg));
  std::vector<double> losses;
  const Segmenter model = stage("train-source", [&] {
    return train_source(Segmenter(backend, data.num_classes(), cfg.seed), data, cfg.source_train, &losses,
                        data.spec().ignore_index);
  });
  stage("write", [&] {
    save_checkpoint(model, cfg.out_dir, to_json(cfg));
    write_json(cfg.out_dir / "train_log.json", {{"loss", losses}});
  });
  std::cout << "loss " << losses.front() << " -> " << losses.back() << "\n";
  return kExitOk;
}

int run_adapt(const CommonOptions& co, const std::string& checkpoint, const std::string& bank_dir,
              std::optional<double> snr_db, bool style_mix, std::optional<std::size_t> iterations) {
  if (bank_dir.empty() && !snr_db) throw ValidationError("adapt needs --bank, or --gauss-snr-db for the Gaussian baseline");
  RunConfig cfg = resolve_config(co);
  if (snr_db) cfg.adapt.gauss_snr_db = *snr_db;
  if (style_mix) cfg.adapt.style_mix = true;
  if (iterations) cfg.adapt.iterations = *iterations;
  cfg.adapt.validate();
  cfg.validate_paths();
  nlohmann::json echo = to_json(cfg);
  echo["checkpoint"] = checkpoint;
  echo["bank"] = bank_dir;
  echo_config(cfg.out_dir, echo);

  const Segmenter model = stage("load", [&] { return load_model(checkpoint, cfg); });
  if (!model.record().source_trained) {
    std::cerr << "warning: checkpoint " << checkpoint
              << " has no source-training record; adapting an untrained classifier usually degrades results\n";
  }
  const Dataset data(require_source(cfg));
  if (data.num_classes() != model.num_classes()) {
    throw ValidationError("source dataset has " + std::to_string(data.num_classes()) + " classes, checkpoint " +
                          std::to_string(model.num_classes()));
  }
  std::vector<double> losses;
  const Segmenter adapted = stage("adapt", [&] {
    if (bank_dir.empty()) return source_only_g_train(model, data, cfg.adapt, &losses, data.spec().ignore_index);
    const StyleBank bank = load_bank(bank_dir, model.backend().feature_channels());
    return finetune_classifier(model, data, bank, cfg.adapt, &losses, data.spec().ignore_index);
  });
  stage("write", [&] {
    save_checkpoint(adapted, cfg.out_dir, echo);
    write_json(cfg.out_dir / "train_log.json", {{"loss", losses}});
  });
  return kExitOk;
}

int run_eval(const CommonOptions& co, const std::string& checkpoint, const std::string& eval_root,
             const std::string& eval_split) {
  RunConfig cfg = resolve_config(co);
  if (!eval_root.empty()) {
    DatasetSpec s = cfg.eval.value_or(toy_split_spec(eval_root, eval_split));
    s.root = eval_root;
    s.split = eval_split;
    cfg.eval = s;
  }
  if (!cfg.eval) throw ValidationError("no eval dataset: pass --eval-root or set \"eval\" in the config");
  cfg.validate_paths();
  nlohmann::json echo = to_json(cfg);
  echo["checkpoint"] = checkpoint;
  echo_config(cfg.out_dir, echo);
  const Segmenter model = stage("load", [&] { return load_model(checkpoint, cfg); });
  const Dataset data(*cfg.eval);
  const EvaluationReport report =
      stage("eval", [&] { return evaluate_model(model, data, static_cast<unsigned>(cfg.workers), echo); });
  write_json(cfg.out_dir / "report.json", to_json(report));
  std::printf("mIoU %.4f over %zu images\n", report.miou(), report.images);
  return kExitOk;
}

int run_augment(const CommonOptions& co, const std::string& bank_dir, const std::string& image, bool style_mix,
                std::optional<double> snr_db) {
  RunConfig cfg = resolve_config(co);
  if (style_mix) cfg.adapt.style_mix = true;
  if (snr_db) cfg.adapt.gauss_snr_db = *snr_db;
  cfg.adapt.validate();
  nlohmann::json echo = to_json(cfg);
  echo["bank"] = bank_dir;
  echo["image"] = image;
  echo_config(cfg.out_dir, echo);
  const auto backend = stage("backend", [&] { return open_backend(cfg); });
  const StyleBank bank = stage("load", [&] { return load_bank(bank_dir, backend->feature_channels()); });
  if (bank.manifest.encoder_id != backend->id()) {
    throw ValidationError("bank was mined with encoder '" + bank.manifest.encoder_id + "', not '" + backend->id() + "'");
  }
  const FeatureMap f = backend->extract_low_features(backend->preprocess(read_rgb(image)));
  Rng rng(mix_seed(cfg.seed, 0xA06));
  const FeatureMap g = stage("augment", [&] { return augment_features(f, bank, cfg.adapt, rng); });
  std::vector<float> data(g.values().begin(), g.values().end());
  write_f32_le(cfg.out_dir / "features.f32", data);
  auto stats_json = [](const StyleStats<double>& s) { return nlohmann::json{{"mu", s.mu}, {"sigma", s.sigma}}; };
  write_json(cfg.out_dir / "features.json", {{"shape", {g.channels(), g.height(), g.width()}},
                                             {"layout", "f32 little-endian [C][H][W]"},
                                             {"input_stats", stats_json(channel_stats(f))},
                                             {"output_stats", stats_json(channel_stats(g))}});
  return kExitOk;
}

int run_toy_e2e(const CommonOptions& co, std::size_t n_train, std::size_t n_val) {
  if (!co.config_path.empty() || co.preset != "toy") throw ValidationError("toy-e2e uses the built-in toy presets only");
  ToyExperimentConfig cfg = ToyExperimentConfig{}.reseeded(co.seed.value_or(1));
  cfg.n_train = n_train;
  cfg.n_val = n_val;
  if (co.workers) cfg.workers = static_cast<unsigned>(*co.workers);
  cfg.mining.workers = static_cast<int>(cfg.workers);
  cfg.validate();
  const fs::path out = co.out;
  echo_config(out, to_json(cfg));
  const ToyExperimentResult r = stage("toy-e2e", [&] { return run_toy_experiment(cfg, out / "data", out); });
  std::printf("source-only %.4f  adapted %.4f  delta %+.4f (shifted val), clean %.4f\n", r.source_only_shifted,
              r.adapted_shifted, r.delta(), r.source_only_clean);
  if (r.sigma_nonpositive > 0) std::cerr << "warning: " << r.sigma_nonpositive << " mined sigma values are <= 0\n";
  if (!(r.delta() > 0.0)) {
    std::cerr << "adapted model did not beat source-only\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_show_config(const CommonOptions& co) {
  const RunConfig cfg = resolve_config(co);
  const nlohmann::json j = to_json(cfg);
  if (!co.out.empty()) echo_config(co.out, j);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot domain adaptation by feature-statistics mining"};
  app.require_subcommand(1);

  CommonOptions common;
  MineOptions mine;
  std::string suffix;
  std::string checkpoint;
  std::string bank_dir;
  std::string image;
  std::string eval_root;
  std::string eval_split = "val";
  std::optional<double> snr_db;
  std::optional<std::size_t> iterations;
  bool style_mix = false;
  bool unfreeze = false;
  std::size_t n_train = 96;
  std::size_t n_val = 48;

  auto* mine_cmd = app.add_subcommand("mine", "Mine a style bank from source features");
  add_common(mine_cmd, common, true);
  mine_cmd->add_option("--prompt", mine.prompt, "Target domain description");
  mine_cmd->add_option("--image", mine.image, "Single unlabeled target image")->check(CLI::ExistingFile);
  mine_cmd->add_option("--concept", mine.concept_dir, "Optimized concept directory")->check(CLI::ExistingDirectory);
  mine_cmd->add_option("--suffix", mine.suffix, "Style text appended to the concept");
  mine_cmd->add_option("--init", mine.init, "Style init: source, identity, random");
  mine_cmd->add_option("--templates", mine.templates, "Prompt templates: imagenet or single");

  auto* concept_cmd = app.add_subcommand("concept", "Optimize a concept token on source images");
  add_common(concept_cmd, common, true);
  concept_cmd->add_option("--suffix", suffix, "Suffix text used during optimization")->required();

  auto* train_cmd = app.add_subcommand("train-source", "Train the classifier on labeled source data");
  add_common(train_cmd, common, true);
  train_cmd->add_option("--iterations", iterations, "Override the iteration count");
  train_cmd->add_flag("--unfreeze-high", unfreeze, "Also train the high-level trunk stage (toy backend only)");

  auto* adapt_cmd = app.add_subcommand("adapt", "Fine-tune the classifier on bank-stylized source features");
  add_common(adapt_cmd, common, true);
  adapt_cmd->add_option("--checkpoint", checkpoint, "Source-trained checkpoint")->required()->check(CLI::ExistingDirectory);
  adapt_cmd->add_option("--bank", bank_dir, "Style bank directory")->check(CLI::ExistingDirectory);
  adapt_cmd->add_option("--gauss-snr-db", snr_db, "Gaussian statistics perturbation SNR (dB)");
  adapt_cmd->add_flag("--style-mix", style_mix, "Mix mined and source statistics per channel");
  adapt_cmd->add_option("--iterations", iterations, "Override the iteration count");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint (mIoU) on a labeled split");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--eval-root", eval_root, "Dataset root");
  eval_cmd->add_option("--eval-split", eval_split, "Split name");

  auto* aug_cmd = app.add_subcommand("augment", "Write one bank-stylized feature map for an image");
  add_common(aug_cmd, common, true);
  aug_cmd->add_option("--bank", bank_dir, "Style bank directory")->required()->check(CLI::ExistingDirectory);
  aug_cmd->add_option("--image", image, "Source image")->required()->check(CLI::ExistingFile);
  aug_cmd->add_flag("--style-mix", style_mix, "Mix mined and source statistics per channel");
  aug_cmd->add_option("--gauss-snr-db", snr_db, "Gaussian statistics perturbation SNR (dB)");

  auto* toy_cmd = app.add_subcommand("toy-e2e", "Toy end-to-end: source-only vs adapted on shifted data");
  add_common(toy_cmd, common, true);
  toy_cmd->add_option("--n-train", n_train, "Training images")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--n-val", n_val, "Validation images")->check(CLI::PositiveNumber);

  auto* show_cmd = app.add_subcommand("show-config", "Print the resolved run configuration");
  add_common(show_cmd, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (mine_cmd->parsed()) return run_mine(common, mine);
    if (concept_cmd->parsed()) return run_concept(common, suffix);
    if (train_cmd->parsed()) return run_train_source(common, iterations, unfreeze);
    if (adapt_cmd->parsed()) return run_adapt(common, checkpoint, bank_dir, snr_db, style_mix, iterations);
    if (eval_cmd->parsed()) return run_eval(common, checkpoint, eval_root, eval_split);
    if (aug_cmd->parsed()) return run_augment(common, bank_dir, image, style_mix, snr_db);
    if (toy_cmd->parsed()) return run_toy_e2e(common, n_train, n_val);
    if (show_cmd->parsed()) return run_show_config(common);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.validation() ? kExitUsage : kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
