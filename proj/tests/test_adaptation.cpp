#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pinadapt/adaptation.hpp"
#include "pinadapt/checkpoint.hpp"
#include "pinadapt/toy_data.hpp"
#include "pinadapt/toy_experiment.hpp"
#include "test_support.hpp"

using namespace pinadapt;
using testing_support::central_diff;
using testing_support::rel_err;
using testing_support::TempDir;
using testing_support::toy_backend;

namespace {

InMemorySamples toy_samples(std::size_t n, std::uint64_t seed) {
  InMemorySamples out;
  for (std::size_t i = 0; i < n; ++i) {
    ToySample t = render_toy_sample(mix_seed(seed, i));
    out.samples.push_back({"s" + std::to_string(i), std::move(t.image), std::move(t.label)});
  }
  return out;
}

SourceTrainConfig quick_source() {
  SourceTrainConfig c = SourceTrainConfig::toy();
  c.iterations = 60;
  c.seed = 4;
  return c;
}

AdaptConfig quick_adapt() {
  AdaptConfig c = AdaptConfig::toy();
  c.iterations = 20;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

StyleBank bank_for(const Segmenter& model, const InMemorySamples& data, std::uint64_t seed) {
  StyleBank bank;
  bank.manifest.encoder_id = model.backend().id();
  bank.manifest.target = {"prompt", "test"};
  Rng rng(seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto s = channel_stats(model.low_features(data.sample(i).image));
    for (auto& v : s.mu) v *= rng.uniform(0.3, 1.5);
    for (auto& v : s.sigma) v *= rng.uniform(0.3, 1.5);
    bank.add(s);
  }
  return bank;
}

double loss_of(const Segmenter& m, const FeatureMap& low, const LabelMask& label) {
  auto g = m.zero_gradients();
  return m.loss_and_grad(low, label, g).first;
}

}  // namespace

TEST(Segmenter, HeadGradientMatchesFiniteDifferences) {
  Segmenter model(toy_backend(), kToyClasses, 1);
  const auto data = toy_samples(1, 2);
  const FeatureMap low = model.low_features(data.sample(0).image);
  auto grad = model.zero_gradients();
  const auto [loss, valid] = model.loss_and_grad(low, data.sample(0).label, grad);
  EXPECT_EQ(valid, 64u * 64u);
  EXPECT_GT(loss, 0.0);
  Rng rng(3);
  for (int probe = 0; probe < 25; ++probe) {
    const std::size_t idx = rng.index(model.head().params.size());
    auto fn = [&](double x) {
      Segmenter m = model;
      m.head().params[idx] = x;
      return loss_of(m, low, data.sample(0).label);
    };
    const double fd = central_diff(fn, model.head().params[idx], 1e-5);
    EXPECT_LE(rel_err(grad.head[idx], fd, 1e-4), 1e-4) << "param " << idx;
  }
}

TEST(Segmenter, HighStageGradientMatchesFiniteDifferences) {
  Segmenter model(toy_backend(), kToyClasses, 1);
  model.unfreeze_high_stage();
  const auto data = toy_samples(1, 3);
  const FeatureMap low = model.low_features(data.sample(0).image);
  auto grad = model.zero_gradients();
  model.loss_and_grad(low, data.sample(0).label, grad);
  ASSERT_EQ(grad.high_weight.size(), model.trainable_high_stage()->weight.size());
  Rng rng(4);
  for (int probe = 0; probe < 20; ++probe) {
    const std::size_t idx = rng.index(grad.high_weight.size());
    auto fn = [&](double x) {
      Segmenter m = model;
      m.trainable_high_stage()->weight[idx] = x;
      return loss_of(m, low, data.sample(0).label);
    };
    const double fd = central_diff(fn, model.trainable_high_stage()->weight[idx], 1e-6);
    EXPECT_LE(rel_err(grad.high_weight[idx], fd, 1e-3), 1e-3) << "weight " << idx;
  }
  for (std::size_t o = 0; o < 16; o += 5) {
    auto fn = [&](double x) {
      Segmenter m = model;
      m.trainable_high_stage()->bias[o] = x;
      return loss_of(m, low, data.sample(0).label);
    };
    EXPECT_LE(rel_err(grad.high_bias[o], central_diff(fn, model.trainable_high_stage()->bias[o], 1e-6), 1e-3), 1e-3);
  }
}

TEST(Segmenter, IgnoredAndOutOfRangeLabels) {
  Segmenter model(toy_backend(), kToyClasses, 1);
  const auto data = toy_samples(1, 2);
  const FeatureMap low = model.low_features(data.sample(0).image);
  auto g = model.zero_gradients();
  EXPECT_EQ(model.loss_and_grad(low, LabelMask(64, 64, 255), g).second, 0u);
  EXPECT_THROW(model.loss_and_grad(low, LabelMask(64, 64, 9), g), ValidationError);
}

TEST(Segmenter, PartialUnfreezeNeedsToyBackend) {
  Segmenter model(toy_backend(), kToyClasses, 1);
  EXPECT_FALSE(model.high_stage_trainable());
  model.unfreeze_high_stage();
  EXPECT_TRUE(model.high_stage_trainable());
}

TEST(Optimizer, PolyScheduleAndMomentum) {
  EXPECT_DOUBLE_EQ(poly_lr(0.1, 0, 100), 0.1);
  EXPECT_DOUBLE_EQ(poly_lr(0.1, 50, 100), 0.1 * std::pow(0.5, 0.9));
  EXPECT_DOUBLE_EQ(poly_lr(0.1, 100, 100), 0.0);
  SgdMomentum opt(0.9, 0.0);
  std::vector<double> p{1.0};
  opt.step(p, {1.0}, 0.1);  // v = 1
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  opt.step(p, {1.0}, 0.1);  // v = 1.9
  EXPECT_DOUBLE_EQ(p[0], 0.9 - 0.19);
  SgdMomentum decay(0.0, 0.5);
  std::vector<double> q{2.0};
  decay.step(q, {0.0}, 1.0);
  EXPECT_DOUBLE_EQ(q[0], 1.0);
}

TEST(SourceTraining, LossDecreasesAndEncoderStaysFrozen) {
  const auto data = toy_samples(24, 7);
  Segmenter model(toy_backend(), kToyClasses, 2);
  const auto frozen = model.frozen_checksum();
  std::vector<double> losses;
  const Segmenter trained = train_source(model, data, quick_source(), &losses);
  ASSERT_EQ(losses.size(), 60u);
  double first = 0.0;
  double last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += losses[static_cast<std::size_t>(i)];
    last += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(trained.frozen_checksum(), frozen);
  EXPECT_NE(trained.head_checksum(), model.head_checksum());
  EXPECT_TRUE(trained.record().source_trained);
}

TEST(SourceTraining, IsDeterministic) {
  const auto data = toy_samples(8, 7);
  const Segmenter a = train_source(Segmenter(toy_backend(), kToyClasses, 2), data, quick_source());
  const Segmenter b = train_source(Segmenter(toy_backend(), kToyClasses, 2), data, quick_source());
  EXPECT_EQ(a.head().params, b.head().params);
}

TEST(SourceTraining, RejectsOutOfRangeLabels) {
  auto data = toy_samples(2, 7);
  data.samples[1].label.values[5] = 7;
  EXPECT_THROW(train_source(Segmenter(toy_backend(), kToyClasses, 2), data, quick_source()), ValidationError);
}

TEST(SourceTraining, UnfrozenHighStageMoves) {
  const auto data = toy_samples(8, 7);
  SourceTrainConfig cfg = quick_source();
  cfg.unfreeze_high = true;
  cfg.lr_trunk = 1e-2;
  const Segmenter trained = train_source(Segmenter(toy_backend(), kToyClasses, 2), data, cfg);
  ASSERT_TRUE(trained.high_stage_trainable());
  EXPECT_NE(trained.trainable_high_stage()->weight, toy_backend()->layer2().weight);
  EXPECT_EQ(trained.frozen_checksum(), toy_backend()->weights_checksum());
}

TEST(Augment, IdentityStyleKeepsFeature) {
  const FeatureMap f = testing_support::toy_low_map(2);
  StyleBank bank;
  bank.add(channel_stats(f));
  Rng rng(1);
  const FeatureMap out = augment_features(f, bank, AdaptConfig{}, rng);
  ASSERT_TRUE(out.same_shape(f));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out.values()[i], f.values()[i], 1e-5);
}

TEST(Augment, AppliesBankStatisticsAndValidates) {
  const FeatureMap f = testing_support::toy_low_map(2);
  StyleBank bank;
  const StyleStats<double> style(std::vector<double>(8, 0.5), std::vector<double>(8, 2.0));
  bank.add(style);
  Rng rng(1);
  const auto s = channel_stats(augment_features(f, bank, AdaptConfig{}, rng), StatsEpsilon{1e-12});
  const auto src = channel_stats(f);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(s.mu[c], 0.5, 1e-5);
    // Normalizing by sqrt(var + eps) shrinks the output spread slightly.
    const double var = src.sigma[c] * src.sigma[c] - StatsEpsilon{}.eps;
    EXPECT_NEAR(s.sigma[c], 2.0 * std::sqrt(var / (var + StatsEpsilon{}.eps)), 1e-9);
  }
  EXPECT_THROW(augment_features(f, StyleBank{}, AdaptConfig{}, rng), ValidationError);
  StyleBank wrong;
  wrong.add(StyleStats<double>(std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)));
  EXPECT_THROW(augment_features(f, wrong, AdaptConfig{}, rng), ValidationError);
}

TEST(Augment, ZeroAlphaMixIsSourceStatistics) {
  const FeatureMap f = testing_support::toy_low_map(5);
  const StyleStats<double> style(std::vector<double>(8, 3.0), std::vector<double>(8, 0.1));
  const std::vector<double> zero(8, 0.0);
  Rng rng(1);
  const FeatureMap out = stylize(f, style, &zero, std::nullopt, rng);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out.values()[i], f.values()[i], 1e-5);
}

TEST(Finetune, RefusesBankFromAnotherEncoder) {
  const auto data = toy_samples(4, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  StyleBank bank = bank_for(model, data, 1);
  bank.manifest.encoder_id = "clip-rn50:pre=x";
  try {
    finetune_classifier(model, data, bank, quick_adapt());
    FAIL() << "expected refusal";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("clip-rn50"), std::string::npos);
  }
}

TEST(Finetune, CachedAndOnTheFlyFeaturesAgree) {
  const auto data = toy_samples(6, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  const StyleBank bank = bank_for(model, data, 1);
  AdaptConfig cfg = quick_adapt();
  const Segmenter cached = finetune_classifier(model, data, bank, cfg);
  cfg.cache_features = false;
  const Segmenter streamed = finetune_classifier(model, data, bank, cfg);
  for (std::size_t i = 0; i < cached.head().params.size(); ++i) {
    EXPECT_LE(std::abs(cached.head().params[i] - streamed.head().params[i]), 1e-6);
  }
}

TEST(Finetune, DeterministicOnlyHeadChangesAndProvenanceRecorded) {
  const auto data = toy_samples(6, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  const StyleBank bank = bank_for(model, data, 1);
  const Segmenter a = finetune_classifier(model, data, bank, quick_adapt());
  const Segmenter b = finetune_classifier(model, data, bank, quick_adapt());
  EXPECT_EQ(a.head().params, b.head().params);
  EXPECT_NE(a.head().params, model.head().params);
  EXPECT_EQ(a.frozen_checksum(), model.frozen_checksum());
  EXPECT_EQ(a.record().adapted_bank_hash, bank_content_hash(bank));
  EXPECT_EQ(a.record().adapted_target, "prompt:test");
}

TEST(Finetune, PairedSamplingNeedsMatchingBank) {
  const auto data = toy_samples(6, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  StyleBank bank = bank_for(model, data, 1);
  bank.styles.pop_back();
  bank.manifest.count = bank.styles.size();
  AdaptConfig cfg = quick_adapt();
  cfg.sampling = StyleSampling::paired;
  EXPECT_THROW(finetune_classifier(model, data, bank, cfg), ValidationError);
}

TEST(SourceOnlyG, InfiniteSnrEqualsPlainFinetune) {
  const auto data = toy_samples(6, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  AdaptConfig cfg = quick_adapt();
  cfg.gauss_snr_db = kNoNoise;
  const Segmenter g = source_only_g_train(model, data, cfg);
  // Paired bank of each sample's own statistics: AdaIN is then the identity.
  StyleBank own;
  own.manifest.encoder_id = model.backend().id();
  for (std::size_t i = 0; i < data.size(); ++i) own.add(channel_stats(model.low_features(data.sample(i).image)));
  AdaptConfig paired = quick_adapt();
  paired.sampling = StyleSampling::paired;
  const Segmenter plain = finetune_classifier(model, data, own, paired);
  for (std::size_t i = 0; i < g.head().params.size(); ++i) {
    EXPECT_NEAR(g.head().params[i], plain.head().params[i], 1e-4);
  }
}

TEST(SourceOnlyG, NoiseIsSharedWithinBatchAndRedrawnAcrossBatches) {
  Rng a(mix_seed(5, 0x57E9'0000'0000ULL + 0));
  Rng b(mix_seed(5, 0x57E9'0000'0000ULL + 1));
  EXPECT_NE(draw_batch_noise(8, a), draw_batch_noise(8, b));

  const auto data = toy_samples(6, 7);
  const Segmenter model(toy_backend(), kToyClasses, 2);
  AdaptConfig cfg = quick_adapt();
  const Segmenter g20 = source_only_g_train(model, data, cfg);
  EXPECT_EQ(g20.record().adapted_target, "gaussian:20.000000dB");
  cfg.gauss_snr_db = 5.0;
  const Segmenter g5 = source_only_g_train(model, data, cfg);
  EXPECT_NE(g20.head().params, g5.head().params);
  EXPECT_EQ(source_only_g_train(model, data, cfg).head().params, g5.head().params);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  TempDir dir("ckpt");
  const auto data = toy_samples(6, 7);
  SourceTrainConfig cfg = quick_source();
  cfg.unfreeze_high = true;
  const Segmenter model = train_source(Segmenter(toy_backend(), kToyClasses, 2), data, cfg);
  save_checkpoint(model, dir.path(), {{"seed", 2}});
  const Segmenter back = load_checkpoint(dir.path(), toy_backend());
  EXPECT_EQ(back.head().params, model.head().params);
  EXPECT_EQ(back.trainable_high_stage()->weight, model.trainable_high_stage()->weight);
  EXPECT_TRUE(back.record().source_trained);
  EXPECT_EQ(back.predict(data.sample(0).image), model.predict(data.sample(0).image));
  EXPECT_EQ(read_checkpoint_meta(dir.path()).at("config").at("seed"), 2);
}

TEST(Checkpoint, RejectsOtherBackendAndCorruption) {
  TempDir dir("ckpt");
  const Segmenter model(toy_backend(), kToyClasses, 2);
  save_checkpoint(model, dir.path());
  const auto other = std::make_shared<const ToyBackend>(ToyBackendOptions{.seed = 7});
  EXPECT_THROW(load_checkpoint(dir.path(), other), ValidationError);
  std::filesystem::resize_file(dir / "head.f64", 16);
  EXPECT_THROW(load_checkpoint(dir.path(), toy_backend()), LoadError);
  EXPECT_THROW(load_checkpoint(dir / "absent", toy_backend()), LoadError);
}

TEST(Configs, JsonRoundTrip) {
  AdaptConfig a = AdaptConfig::toy();
  a.gauss_snr_db = kNoNoise;
  a.sampling = StyleSampling::paired;
  a.style_mix = true;
  const AdaptConfig back = adapt_config_from_json(to_json(a));
  EXPECT_TRUE(std::isinf(*back.gauss_snr_db));
  EXPECT_EQ(back.sampling, StyleSampling::paired);
  EXPECT_TRUE(back.style_mix);
  EXPECT_EQ(back.iterations, a.iterations);

  SourceTrainConfig s = SourceTrainConfig::toy();
  s.unfreeze_high = true;
  const SourceTrainConfig sb = source_train_config_from_json(to_json(s));
  EXPECT_EQ(sb.crop, 64u);
  EXPECT_TRUE(sb.unfreeze_high);
  EXPECT_DOUBLE_EQ(sb.jitter.contrast, 0.1);
}
