#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentsteer/latent_mapper.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

MapperConfig small_config() {
  MapperConfig cfg;
  cfg.hidden_dim = 16;
  cfg.layers_per_branch = 3;
  cfg.seed = 3;
  return cfg;
}

MapperConfig random_final_config() {
  MapperConfig cfg = small_config();
  cfg.zero_init_final = false;
  return cfg;
}

/// W+ rows [begin, end) of a flat code.
Vector layer_slice(const Vector& flat, LayerRange r, int d) {
  return flat.segment(static_cast<Eigen::Index>(r.begin) * d, static_cast<Eigen::Index>(r.size()) * d);
}

TEST(LatentMapper, ZeroInitIsIdentity) {
  const BackendBundle b = testing::toy();
  const MapperModel model = MapperModel::create(b.geometry(), small_config());
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const WPlusCode w = b.generator->sample_wplus(rng);
    EXPECT_TRUE(model.forward(w).values().isZero(0.0));
    const MapperApplication app = apply_mapper(b, model, w);
    EXPECT_EQ(app.code.values(), w.values());
    EXPECT_EQ(encode_png(app.image), encode_png(generate_from_wplus(b, w)));
  }
}

TEST(LatentMapper, BranchLocality) {
  const BackendBundle b = testing::toy();
  const auto& g = *b.geometry();
  const MapperModel model = MapperModel::create(b.geometry(), random_final_config());
  const int d = g.latent_dim();
  Rng rng(2);
  for (int probe = 0; probe < 30; ++probe) {
    const WPlusCode w = b.generator->sample_wplus(rng);
    const Vector base = model.forward(w).flat();
    for (int grp = 0; grp < 3; ++grp) {
      const LayerRange changed = g.group(static_cast<LayerGroup>(grp));
      Vector moved = w.flat();
      moved.segment(changed.begin * d, changed.size() * d) += testing::gaussian_vector(rng, changed.size() * d);
      const Vector out = model.forward(WPlusCode::from_flat(b.geometry(), moved)).flat();
      for (int other = 0; other < 3; ++other) {
        const LayerRange r = g.group(static_cast<LayerGroup>(other));
        const bool same = (layer_slice(out, r, d).array() == layer_slice(base, r, d).array()).all();
        EXPECT_EQ(same, other != grp) << "group " << grp << " -> " << other;
      }
    }
  }
}

TEST(LatentMapper, DisabledBranchIsZero) {
  const BackendBundle b = testing::toy();
  const auto& g = *b.geometry();
  MapperConfig cfg = random_final_config();
  cfg.enabled_branches = {true, false, true};
  const MapperModel model = MapperModel::create(b.geometry(), cfg);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vector out = model.forward(b.generator->sample_wplus(rng)).flat();
    EXPECT_TRUE(layer_slice(out, g.group(LayerGroup::kMedium), 4).isZero(0.0));
    EXPECT_FALSE(layer_slice(out, g.group(LayerGroup::kFine), 4).isZero(0.0));
  }
  cfg.enabled_branches = {false, false, false};
  EXPECT_EQ(error_code_of([&] { MapperModel::create(b.geometry(), cfg); }), ErrorCode::kInvalidArgument);
}

TEST(LatentMapper, SingleArchitectureCoversAllLayers) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = random_final_config();
  cfg.architecture = MapperArchitecture::kSingle;
  const MapperModel model = MapperModel::create(b.geometry(), cfg);
  ASSERT_EQ(model.branches().size(), 1u);
  EXPECT_EQ(model.branches()[0].layers.size(), 6);
  Rng rng(4);
  EXPECT_EQ(model.forward(b.generator->sample_wplus(rng)).values().size(), 24);
}

TEST(LatentMapper, LossDecomposition) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = random_final_config();
  cfg.lambda_l2 = 0.8;
  cfg.lambda_id = 0.1;
  const MapperModel model = MapperModel::create(b.geometry(), cfg);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const WPlusCode w = b.generator->sample_wplus(rng);
    const ObjectiveTerms t = mapper_loss(b, model, w, "curly hair");
    const WPlusCode edited(w.geometry(), w.values() + model.forward(w).values());
    const double clip = clip_distance(b, generate_from_wplus(b, edited), "curly hair");
    const double l2 = model.forward(w).flat().norm();
    const double id = identity_loss(b, w, edited);
    EXPECT_NEAR(t.total, clip + 0.8 * l2 + 0.1 * id, 1e-10);
  }
}

TEST(LatentMapper, ParameterGradientMatchesFiniteDifferences) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = random_final_config();
  cfg.lambda_id = 0.1;
  const MapperModel model = MapperModel::create(b.geometry(), cfg);
  Rng rng(6);
  const WPlusCode w = b.generator->sample_wplus(rng);
  EXPECT_LT(mapper_gradient_check(b, model, w, "a mohawk", 64), 1e-3);
  EXPECT_EQ(error_code_of([&] { mapper_gradient_check(b, model, w, "a mohawk", 0); }), ErrorCode::kInvalidArgument);
}

TEST(LatentMapper, TrainingReducesMeanLoss) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = small_config();
  cfg.lambda_l2 = 0.05;
  cfg.lambda_id = 0.0;
  cfg.steps = 100;
  cfg.learning_rate = 1e-2;
  const auto latents = sample_training_latents(b, 16, 1);
  const MapperModel model = train_mapper(b, latents, "a purple face", cfg);
  ASSERT_TRUE(model.initial_mean_loss && model.final_mean_loss);
  EXPECT_LT(*model.final_mean_loss, *model.initial_mean_loss);
  EXPECT_EQ(model.steps_trained, 100);
  EXPECT_EQ(model.loss_history.size(), 100u);
  EXPECT_EQ(model.prompt, "a purple face");
}

TEST(LatentMapper, TrainingIsDeterministic) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = small_config();
  cfg.steps = 5;
  const auto latents = sample_training_latents(b, 4, 2);
  EXPECT_EQ(train_mapper(b, latents, "x", cfg).parameters(), train_mapper(b, latents, "x", cfg).parameters());
}

TEST(LatentMapper, TrainingErrors) {
  ToyConfig no_id;
  no_id.identity_dim = 0;
  const BackendBundle plain = make_toy_backend(no_id);
  const auto latents = sample_training_latents(plain, 2, 0);
  MapperConfig cfg = small_config();
  cfg.steps = 1;
  EXPECT_EQ(error_code_of([&] { train_mapper(plain, latents, "x", cfg); }), ErrorCode::kIdentityUnavailable);
  cfg.lambda_id = 0.0;
  EXPECT_EQ(error_code_of([&] { train_mapper(plain, {}, "x", cfg); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { train_mapper(plain, latents, "", cfg); }), ErrorCode::kInvalidArgument);
  const auto wide = sample_training_latents(testing::wide_toy(), 2, 0);
  EXPECT_EQ(error_code_of([&] { train_mapper(plain, wide, "x", cfg); }), ErrorCode::kShapeMismatch);
}

TEST(LatentMapper, CheckpointRoundTrip) {
  const BackendBundle b = testing::toy();
  MapperModel model = MapperModel::create(b.geometry(), random_final_config());
  model.prompt = "afro";
  model.steps_trained = 7;
  model.loss_history = {0.9, 0.8};
  const MapperModel back = decode_checkpoint(encode_checkpoint(model));
  EXPECT_EQ(back.prompt, "afro");
  EXPECT_EQ(back.steps_trained, 7);
  EXPECT_EQ(back.config().to_json(), model.config().to_json());
  EXPECT_TRUE(*back.geometry() == *model.geometry());
  EXPECT_LE((back.parameters() - model.parameters()).cwiseAbs().maxCoeff(), 1e-6);
  std::string bad = encode_checkpoint(model);
  bad.resize(bad.size() - 3);
  EXPECT_EQ(error_code_of([&] { decode_checkpoint(bad); }), ErrorCode::kFormat);
}

TEST(LatentMapper, ConfigJsonRoundTrip) {
  MapperConfig cfg = small_config();
  cfg.enabled_branches = {false, true, true};
  cfg.architecture = MapperArchitecture::kThreeBranch;
  const MapperConfig back = MapperConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(error_code_of([] { MapperConfig::from_json({{"architecture", "tree"}}); }), ErrorCode::kFormat);
}

TEST(DirectionSimilarity, ConstantResidualIsPerfectlyAligned) {
  const BackendBundle b = testing::toy();
  MapperConfig cfg = small_config();
  MapperModel model = MapperModel::create(b.geometry(), cfg);
  // Only the final biases are nonzero: the residual no longer depends on w.
  Rng rng(7);
  for (const auto& branch : model.branches()) {
    const auto& last = branch.dense.back();
    model.mutable_parameters().segment(last.bias_offset, last.out) = testing::gaussian_vector(rng, last.out);
  }
  const auto latents = sample_training_latents(b, 10, 3);
  const SimilarityReport r = direction_similarity_report(model, latents);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.stddev, 0.0);
  EXPECT_EQ(r.pair_count, 45);
}

TEST(DirectionSimilarity, OrthogonalAndExcluded) {
  std::vector<Vector> dirs = {Vector::Unit(3, 0), Vector::Unit(3, 1), Vector::Zero(3)};
  const SimilarityReport r = direction_similarity(dirs);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.pair_count, 1);
  EXPECT_EQ(r.excluded_pairs, 2);
  dirs.push_back(-Vector::Unit(3, 0));
  const SimilarityReport r2 = direction_similarity(dirs);
  EXPECT_EQ(r2.pair_count, 3);
  EXPECT_NEAR(r2.mean, -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r2.stddev, std::sqrt(2.0 / 9.0), 1e-15);
}

TEST(DirectionSimilarity, RandomResidualsAverageToZero) {
  std::mt19937_64 rng(42);
  std::vector<Vector> dirs;
  for (int i = 0; i < 50; ++i) dirs.push_back(testing::gaussian_vector(rng, 18 * 512));
  const SimilarityReport r = direction_similarity(dirs);
  EXPECT_EQ(r.pair_count, 50 * 49 / 2);
  EXPECT_LT(std::abs(r.mean), 0.05);
  // Monte-Carlo oracle: cosine of independent Gaussians has sd 1/sqrt(dim).
  EXPECT_NEAR(r.stddev, 1.0 / std::sqrt(18.0 * 512.0), 0.003);
}

TEST(DirectionSimilarity, NeedsTwoLatents) {
  const BackendBundle b = testing::toy();
  const MapperModel model = MapperModel::create(b.geometry(), small_config());
  const auto one = sample_training_latents(b, 1, 0);
  EXPECT_EQ(error_code_of([&] { direction_similarity_report(model, one); }), ErrorCode::kInvalidArgument);
}

TEST(LatentMapper, PublishedConstants) {
  const MapperConfig cfg;
  EXPECT_EQ(cfg.lambda_l2, 0.8);
  EXPECT_EQ(cfg.lambda_id, 0.1);
  EXPECT_EQ(kMapperTrumpLambdaL2, 2.0);
  EXPECT_EQ(kMapperTrumpLambdaId, 0.0);
  EXPECT_EQ(kPublishedDirectionSimilarity[0].mean, 0.82);
}

}  // namespace
}  // namespace latentsteer
