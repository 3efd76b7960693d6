#include <gtest/gtest.h>

#include <vector>

#include "pinadapt/backends.hpp"
#include "pinadapt/concept.hpp"
#include "pinadapt/toy_data.hpp"
#include "test_support.hpp"

using namespace pinadapt;
using testing_support::TempDir;

namespace {

std::vector<Image> toy_images(const EncoderBackend& b, std::size_t n) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(b.preprocess(render_toy_sample(mix_seed(5, i)).image));
  return out;
}

}  // namespace

TEST(Concept, RequiresTokenInjection) {
  const auto plain = make_backend("toy");
  EXPECT_THROW(optimize_concept(toy_images(*plain, 2), "driving", ConceptConfig{}, *plain), CapabilityError);
  ConceptEmbedding c;
  c.tokens = {std::vector<double>(16, 0.1)};
  EXPECT_THROW(build_concept_prompt_embedding(c, "at night", *plain), CapabilityError);
}

TEST(Concept, LossDecreasesOnTokenBackend) {
  const auto backend = make_backend("toy-tok");
  ConceptConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 15;
  cfg.batch_size = 4;
  cfg.seed = 3;
  const auto c = optimize_concept(toy_images(*backend, 16), "driving", cfg, *backend);
  ASSERT_EQ(c.epoch_losses.size(), 15u);
  EXPECT_LT(c.epoch_losses.back(), c.epoch_losses.front());
  EXPECT_EQ(c.n_tokens(), 1u);
  EXPECT_EQ(c.token_dim(), 16u);
  EXPECT_EQ(c.backend_id, backend->id());
  const auto again = optimize_concept(toy_images(*backend, 16), "driving", cfg, *backend);
  EXPECT_EQ(again.tokens, c.tokens);
}

TEST(Concept, InitialTokenIsTheInitWord) {
  const auto backend = make_backend("toy-tok");
  const auto& enc = *backend->token_encoder();
  ConceptConfig cfg;
  cfg.n_tokens = 3;
  const auto tokens = initial_concept(enc, cfg);
  ASSERT_EQ(tokens.size(), 3u);
  EXPECT_EQ(tokens[0], enc.token_embeddings("driving")[0]);
  EXPECT_NE(tokens[1], tokens[2]);
}

TEST(Concept, PromptEmbeddingIsUnitNorm) {
  const auto backend = make_backend("toy-tok");
  ConceptEmbedding c;
  c.tokens = {std::vector<double>(16, 0.25)};
  const auto e = build_concept_prompt_embedding(c, "at night", *backend);
  EXPECT_NEAR(e.norm(), 1.0, 1e-12);
  c.tokens = {std::vector<double>(7, 0.25)};
  EXPECT_THROW(build_concept_prompt_embedding(c, "at night", *backend), ValidationError);
}

TEST(Concept, SaveLoadRoundTrip) {
  TempDir dir("concept");
  ConceptEmbedding c;
  c.tokens = {std::vector<double>{0.5, -0.25, 1.0}, std::vector<double>{0.125, 2.0, -4.0}};
  c.suffix_used_in_training = "driving";
  c.seed = 9;
  c.backend_id = "toy-tok";
  c.epoch_losses = {0.5, 0.4};
  save_concept(c, dir.path());
  const auto back = load_concept(dir.path());
  EXPECT_EQ(back.tokens, c.tokens);  // values chosen to be exact in float32
  EXPECT_EQ(back.suffix_used_in_training, "driving");
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.epoch_losses, c.epoch_losses);
}

TEST(Concept, FreeSurrogateAlignsWithImages) {
  const auto backend = make_backend("toy");
  std::vector<EmbeddingVector> embs;
  for (const auto& img : toy_images(*backend, 12)) embs.push_back(backend->embed_image(img));
  ConceptConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  const auto fc = optimize_free_concept(embs, cfg);
  EXPECT_LT(fc.epoch_losses.back(), fc.epoch_losses.front());
  EXPECT_EQ(fc.vector.dim(), 16u);
  EXPECT_THROW(optimize_free_concept({}, cfg), ValidationError);
}

TEST(Concept, ConfigValidation) {
  ConceptConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  const auto parsed = concept_config_from_json({{"learning_rate", 0.01}, {"n_tokens", 2}});
  EXPECT_DOUBLE_EQ(parsed.learning_rate, 0.01);
  EXPECT_EQ(parsed.n_tokens, 2u);
}
