#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "latentsteer/latent_optimizer.hpp"

namespace latentsteer {
namespace {

using testing::error_code_of;

struct RidgeFixture {
  Eigen::MatrixXd design;
  Vector target;
  WPlusCode source;
  double lambda;

  Vector closed_form() const {
    const Eigen::Index n = design.cols();
    const Eigen::MatrixXd lhs = design.transpose() * design + 2.0 * lambda * Eigen::MatrixXd::Identity(n, n);
    const Vector rhs = design.transpose() * target + 2.0 * lambda * source.flat();
    return lhs.ldlt().solve(rhs);
  }
  double lipschitz() const {
    const Eigen::MatrixXd gram = design.transpose() * design;
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff() + 2.0 * lambda;
  }
};

RidgeFixture ridge_fixture(const BackendBundle& b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index n = b.geometry()->wplus_size();
  Eigen::MatrixXd design(30, n);
  for (Eigen::Index i = 0; i < design.size(); ++i) design.data()[i] = testing::gaussian_vector(rng, 1)[0];
  return {design, testing::gaussian_vector(rng, 30), testing::random_code(b.geometry(), rng), 0.5};
}

TEST(LatentOptimizer, ObjectiveAtSourceIsClipDistance) {
  const BackendBundle b = testing::toy();
  Rng rng(1);
  const WPlusCode w = b.generator->sample_wplus(rng);
  OptimizeConfig cfg;
  cfg.lambda_id = 0.0;
  const ObjectiveTerms t = objective(b, w, w, "a smiling face", cfg);
  EXPECT_EQ(t.l2, 0.0);
  EXPECT_EQ(t.id, 0.0);
  EXPECT_EQ(t.total, t.clip);
  EXPECT_EQ(t.clip, clip_distance(b, generate_from_wplus(b, w), "a smiling face"));
}

TEST(LatentOptimizer, ZeroWeightsGiveClipDistanceExactly) {
  const BackendBundle b = testing::toy();
  Rng rng(2);
  OptimizeConfig cfg;
  cfg.lambda_l2 = 0.0;
  cfg.lambda_id = 0.0;
  const WPlusCode ws = b.generator->sample_wplus(rng);
  const WPlusCode w = b.generator->sample_wplus(rng);
  EXPECT_EQ(objective(b, w, ws, "x", cfg).total, clip_distance(b, generate_from_wplus(b, w), "x"));
}

TEST(LatentOptimizer, DecompositionMatchesHandComposedTerms) {
  const BackendBundle b = testing::toy();
  Rng rng(3);
  OptimizeConfig cfg;
  cfg.lambda_l2 = 0.3;
  cfg.lambda_id = 0.7;
  for (int i = 0; i < 50; ++i) {
    const WPlusCode ws = b.generator->sample_wplus(rng);
    const WPlusCode w = b.generator->sample_wplus(rng);
    const ObjectiveTerms t = objective(b, w, ws, "blonde hair", cfg);
    const double clip = clip_distance(b, generate_from_wplus(b, w), "blonde hair");
    const double l2 = (w.flat() - ws.flat()).norm();
    const double id = identity_loss(b, ws, w);
    EXPECT_NEAR(t.total, clip + 0.3 * l2 + 0.7 * id, 1e-8);
    EXPECT_NEAR(t.total - (t.clip + 0.3 * t.l2 + 0.7 * t.id), 0.0, 1e-10);
  }
}

TEST(LatentOptimizer, SquaredModeUsesSquaredDistance) {
  const BackendBundle b = testing::toy();
  Rng rng(4);
  OptimizeConfig cfg;
  cfg.lambda_id = 0.0;
  cfg.l2_mode = L2Mode::kSquared;
  const WPlusCode ws = b.generator->sample_wplus(rng);
  const WPlusCode w = b.generator->sample_wplus(rng);
  EXPECT_NEAR(objective(b, w, ws, "x", cfg).l2, (w.flat() - ws.flat()).squaredNorm(), 1e-14);
}

TEST(LatentOptimizer, GradientMatchesFiniteDifferences) {
  const BackendBundle b = testing::wide_toy();
  Rng rng(5);
  const WPlusCode ws = b.generator->sample_wplus(rng);
  const WPlusCode w = b.generator->sample_wplus(rng);
  for (L2Mode mode : {L2Mode::kNorm, L2Mode::kSquared}) {
    OptimizeConfig cfg;
    cfg.lambda_l2 = 0.05;
    cfg.lambda_id = 0.2;
    cfg.l2_mode = mode;
    EXPECT_LT(gradient_check(b, w, ws, "a face with glasses", cfg, 64), 1e-3);
  }
}

TEST(LatentOptimizer, GradientCheckRejectsZeroProbes) {
  const BackendBundle b = testing::toy();
  Rng rng(6);
  const WPlusCode w = b.generator->sample_wplus(rng);
  EXPECT_EQ(error_code_of([&] { gradient_check(b, w, w, "x", {}, 0); }), ErrorCode::kInvalidArgument);
}

TEST(LatentOptimizer, ConvergesToClosedFormRidge) {
  const BackendBundle b = testing::toy();
  const RidgeFixture f = ridge_fixture(b, 7);
  OptimizeConfig cfg;
  cfg.lambda_l2 = f.lambda;
  cfg.lambda_id = 0.0;
  cfg.l2_mode = L2Mode::kSquared;
  cfg.learning_rate = 1.0 / f.lipschitz();
  cfg.steps = 1000;
  const auto term = std::make_shared<QuadraticTerm>(f.design, f.target);
  const OptimizeTrace trace = optimize_latent(b, f.source, term, cfg);
  EXPECT_LT((trace.final_code.flat() - f.closed_form()).cwiseAbs().maxCoeff(), 1e-4);
  double prev = trace.initial.total;
  // Non-increasing up to round-off once the loss sits at its floor.
  for (const auto& t : trace.steps) {
    EXPECT_LE(t.total, prev * (1.0 + 1e-12));
    prev = t.total;
  }
  EXPECT_EQ(trace.steps.size(), 1000u);
}

TEST(LatentOptimizer, HugeL2KeepsSourceCode) {
  const BackendBundle b = testing::toy();
  Rng rng(8);
  const WPlusCode ws = b.generator->sample_wplus(rng);
  OptimizeConfig cfg;
  cfg.lambda_l2 = 1e6;
  cfg.lambda_id = 0.0;
  cfg.steps = 100;
  // Step length lambda * lr bounds the oscillation around the exact-penalty minimum w_s.
  cfg.learning_rate = 1e-10;
  EXPECT_LT((optimize_latent(b, ws, "a face", cfg).final_code.flat() - ws.flat()).cwiseAbs().maxCoeff(), 1e-3);
  cfg.l2_mode = L2Mode::kSquared;
  cfg.learning_rate = 1.0 / (2.0 * cfg.lambda_l2 + 10.0);
  EXPECT_LT((optimize_latent(b, ws, "a face", cfg).final_code.flat() - ws.flat()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(LatentOptimizer, ReducesClipLossAndIsDeterministic) {
  const BackendBundle b = testing::toy();
  Rng rng(9);
  const WPlusCode ws = b.generator->sample_wplus(rng);
  OptimizeConfig cfg;
  cfg.steps = 40;
  const OptimizeTrace t1 = optimize_latent(b, ws, "a purple face", cfg);
  const OptimizeTrace t2 = optimize_latent(b, ws, "a purple face", cfg);
  EXPECT_LE(t1.steps.back().total, t1.initial.total);
  EXPECT_EQ(t1.to_csv(), t2.to_csv());
  EXPECT_EQ(t1.final_code.values(), t2.final_code.values());
  const std::string csv = t1.to_csv();
  EXPECT_EQ(csv.rfind("step,total,clip,l2,id\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 42);
}

TEST(LatentOptimizer, AdamVariantRuns) {
  const BackendBundle b = testing::toy();
  Rng rng(10);
  const WPlusCode ws = b.generator->sample_wplus(rng);
  OptimizeConfig cfg;
  cfg.steps = 30;
  cfg.step_rule = StepRule::kAdam;
  cfg.learning_rate = 0.01;
  const OptimizeTrace t = optimize_latent(b, ws, "a purple face", cfg);
  EXPECT_LT(t.steps.back().clip, t.initial.clip);
}

TEST(LatentOptimizer, ConfigErrors) {
  ToyConfig no_id;
  no_id.identity_dim = 0;
  const BackendBundle plain = make_toy_backend(no_id);
  Rng rng(11);
  const WPlusCode w = plain.generator->sample_wplus(rng);
  OptimizeConfig cfg;  // lambda_id = 0.005 by default
  EXPECT_EQ(error_code_of([&] { optimize_latent(plain, w, "x", cfg); }), ErrorCode::kIdentityUnavailable);
  cfg.lambda_id = 0.0;
  EXPECT_EQ(error_code_of([&] { optimize_latent(plain, w, "", cfg); }), ErrorCode::kInvalidArgument);
  cfg.steps = 0;
  EXPECT_EQ(error_code_of([&] { optimize_latent(plain, w, "x", cfg); }), ErrorCode::kInvalidArgument);
  cfg.steps = 1;
  cfg.learning_rate = -1;
  EXPECT_EQ(error_code_of([&] { optimize_latent(plain, w, "x", cfg); }), ErrorCode::kInvalidArgument);
  cfg.learning_rate = 0.1;
  cfg.lambda_l2 = -1;
  EXPECT_EQ(error_code_of([&] { optimize_latent(plain, w, "x", cfg); }), ErrorCode::kInvalidArgument);
}

TEST(LatentOptimizer, DivergenceKeepsPartialTrace) {
  const BackendBundle b = testing::toy();
  Rng rng(12);
  const WPlusCode ws = b.generator->sample_wplus(rng);
  Eigen::MatrixXd design = Eigen::MatrixXd::Identity(24, 24) * 1e3;
  const auto term = std::make_shared<QuadraticTerm>(design, Vector::Ones(24));
  OptimizeConfig cfg;
  cfg.lambda_id = 0.0;
  cfg.learning_rate = 1.0;
  cfg.steps = 500;
  try {
    optimize_latent(b, ws, term, cfg);
    FAIL() << "expected divergence";
  } catch (const OptimizationDiverged& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDiverged);
    EXPECT_GT(e.partial_trace().steps.size(), 0u);
    EXPECT_LT(e.partial_trace().steps.size(), 500u);
  }
}

TEST(LatentOptimizer, ProgressCanCancel) {
  const BackendBundle b = testing::toy();
  Rng rng(13);
  OptimizeConfig cfg;
  cfg.steps = 10;
  EXPECT_EQ(error_code_of([&] {
              optimize_latent(b, b.generator->sample_wplus(rng), "x", cfg, [](int done, int) { return done < 3; });
            }),
            ErrorCode::kCancelled);
}

TEST(LatentOptimizer, PublishedSettings) {
  EXPECT_EQ(kPublishedOptimizeSettings[0].lambda_l2, 0.004);
  EXPECT_EQ(kPublishedOptimizeSettings[3].lambda_id, 0.005);
  EXPECT_EQ(kPublishedOptimizeSettings[5].lambda_l2, 0.0025);
  OptimizeConfig cfg;
  EXPECT_GE(cfg.steps, kPublishedIterationsMin);
  EXPECT_LE(cfg.steps, kPublishedIterationsMax);
}

}  // namespace
}  // namespace latentsteer
