#include <gtest/gtest.h>

#include <cmath>

#include "msrpb/errors.hpp"
#include "msrpb/metrics.hpp"
#include "msrpb/rpca.hpp"
#include "msrpb/synth.hpp"
#include "oracles.hpp"

using namespace msrpb;

namespace {

rpca::SolverConfig solver(double l1, double l2, std::size_t iters = 500) {
  rpca::SolverConfig c;
  c.lambda1 = l1;
  c.lambda2 = l2;
  c.max_iters = iters;
  return c;
}

} // namespace

TEST(Objective, TrivialCases) {
  oracle::Rng rng(1);
  const Eigen::MatrixXd L = oracle::random_matrix(5, 3, rng), S = oracle::random_matrix(5, 3, rng);
  EXPECT_LT(rpca::objective(L + S, L, S, 0.0, 0.0), 1e-28);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(5, 3);
  EXPECT_DOUBLE_EQ(rpca::objective(L, Z, Z, 1.0, 1.0), 0.5 * L.squaredNorm());
}

TEST(Objective, MatchesDirectRecomputation) {
  oracle::Rng rng(2);
  const Eigen::MatrixXd D = oracle::random_matrix(4, 4, rng), L = oracle::random_matrix(4, 4, rng),
                        S = oracle::random_matrix(4, 4, rng);
  const double nuclear = Eigen::BDCSVD<Eigen::MatrixXd>(L).singularValues().sum();
  double rows = 0;
  for (Eigen::Index i = 0; i < 4; ++i)
    rows += S.row(i).norm();
  const double expect = 0.5 * (D - L - S).squaredNorm() + 0.7 * nuclear + 0.3 * rows;
  EXPECT_NEAR(rpca::objective(D, L, S, 0.7, 0.3), expect, 1e-12);
}

TEST(IstaStep, FromZeroIsHalfDataProx) {
  oracle::Rng rng(3);
  const Eigen::MatrixXd D = oracle::random_matrix(8, 4, rng);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(8, 4);
  const auto cfg = solver(0.6, 0.4);
  const auto next = rpca::ista_step(D, Z, Z, cfg);
  EXPECT_LT((next.L - svt(D / 2, 0.3)).norm(), 1e-14);
  EXPECT_LT((next.S - row_group_shrink(D / 2, 0.2)).norm(), 1e-14);
  EXPECT_NEAR(next.nuclear_L, nuclear_norm(next.L), 1e-12);
}

TEST(IstaStep, HugeLambda2KillsSparse) {
  oracle::Rng rng(4);
  const Eigen::MatrixXd D = oracle::random_matrix(8, 4, rng);
  const auto next = rpca::ista_step(D, oracle::random_matrix(8, 4, rng), oracle::random_matrix(8, 4, rng),
                                    solver(0.5, 1e6 * D.cwiseAbs().maxCoeff()));
  EXPECT_EQ(next.S.norm(), 0.0);
}

TEST(IstaStep, NeverIncreasesObjective) {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd D = oracle::random_matrix(8, 4, rng), L = oracle::random_matrix(8, 4, rng),
                          S = oracle::random_matrix(8, 4, rng);
    const auto cfg = solver(0.5, 0.3);
    const auto next = rpca::ista_step(D, L, S, cfg);
    EXPECT_LE(rpca::objective(D, next.L, next.S, cfg), rpca::objective(D, L, S, cfg) + 1e-9);
  }
}

TEST(Solve, ZeroDataStopsAtOnce) {
  const auto r = rpca::solve(Eigen::MatrixXd::Zero(6, 3), solver(1, 1));
  EXPECT_EQ(r.iterations_run, 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.L.norm() + r.S.norm(), 0.0);
}

TEST(Solve, ObjectiveTraceNonincreasing) {
  oracle::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd D = oracle::random_matrix(20, 8, rng);
    const auto r = rpca::solve(D, solver(0.8, 0.4, 200));
    ASSERT_EQ(r.objective_trace.size(), r.iterations_run + 1);
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1] + 1e-9);
  }
}

TEST(Solve, RecoversPlantedDecomposition) {
  const auto p = oracle::planted_rpca();
  const auto r = rpca::solve(p.D, solver(0.15, 0.08, 500));
  EXPECT_LE(r.iterations_run, 500u);
  EXPECT_LT((r.L - p.L0).norm() / p.L0.norm(), 1e-2);
  EXPECT_LT((r.S - p.S0).norm() / p.S0.norm(), 1e-2);
}

TEST(Solve, ScalingCovariance) {
  oracle::Rng rng(7);
  const Eigen::MatrixXd D = oracle::random_matrix(16, 6, rng);
  auto cfg = solver(0.9, 0.5, 300);
  cfg.tol = 1e-300;
  const auto a = rpca::solve(D, cfg);
  const double c = 3.0;
  auto scaled = cfg;
  scaled.lambda1 *= c;
  scaled.lambda2 *= c;
  const auto b = rpca::solve(c * D, scaled);
  EXPECT_LT((b.L - c * a.L).norm(), 1e-6);
  EXPECT_LT((b.S - c * a.S).norm(), 1e-6);
}

TEST(Solve, ConvergedPointIsFixed) {
  oracle::Rng rng(8);
  const Eigen::MatrixXd D = oracle::random_matrix(12, 5, rng);
  const auto cfg = solver(0.7, 0.4, 5000);
  const auto r = rpca::solve(D, cfg);
  ASSERT_TRUE(r.converged);
  const auto next = rpca::ista_step(D, r.L, r.S, cfg);
  const double before = rpca::objective(D, r.L, r.S, cfg);
  EXPECT_LT(std::abs(rpca::objective(D, next.L, next.S, cfg) - before), cfg.tol * before);
}

TEST(Solve, DefaultLambda1) {
  rpca::SolverConfig c;
  c.lambda1 = 0.0;
  EXPECT_DOUBLE_EQ(c.lambda1_for(400, 20), 1.0 / 20.0);
}

TEST(Solve, RejectsBadConfigAndData) {
  EXPECT_THROW(rpca::solve(Eigen::MatrixXd::Zero(2, 2), solver(1, 0)), ConfigError);
  auto c = solver(1, 1);
  c.lipschitz = 1.0;
  EXPECT_THROW(rpca::solve(Eigen::MatrixXd::Zero(2, 2), c), ConfigError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(rpca::solve(bad, solver(1, 1)), InputError);
}

TEST(WeakLabel, NoiseFreeSceneFindsVessels) {
  for (std::uint64_t seed : {1u, 2u}) {
    synth::SceneSpec s;
    s.seed = seed;
    s.noise_a = s.noise_b = 0.0;
    const auto scene = synth::make_scene(s);
    const auto label = rpca::weak_label(scene.observed, solver(6.0, 0.15));
    const auto f = metrics::dr_p_f(metrics::confusion(label.vessel_mask, scene.truth.vessel_mask)).f_measure;
    EXPECT_GE(f, 0.70) << "seed " << seed;
  }
}

TEST(WeakLabel, ZeroVesselSceneHasLittleSparseEnergy) {
  synth::SceneSpec s;
  s.vessel_count = 0;
  s.noise_a = s.noise_b = 0.0;
  const Tensor video = synth::make_scene(s).observed;
  const auto label = rpca::weak_label(video, solver(6.0, 0.15));
  EXPECT_LT(std::sqrt(dot(label.sparse, label.sparse) / dot(video, video)), 0.05);
}

TEST(WeakLabel, LayersAreConsistentAndDeterministic) {
  synth::SceneSpec s;
  s.height = s.width = 32;
  s.frames = 10;
  const Tensor video = synth::make_scene(s).observed;
  const auto a = rpca::weak_label(video, solver(6.0, 0.15, 200));
  const auto b = rpca::weak_label(video, solver(6.0, 0.15, 200));
  EXPECT_EQ(max_abs_diff(a.vessel_layer, b.vessel_layer), 0.0);
  for (std::size_t i = 0; i < video.size(); ++i)
    ASSERT_EQ(a.vessel_layer[i], a.vessel_mask[i] != 0.0 ? a.sparse[i] : 0.0);
}

TEST(TuneLambda2, PicksBestGridEntry) {
  synth::SceneSpec s;
  s.height = s.width = 32;
  s.frames = 10;
  const auto scene = synth::make_scene(s);
  const auto choice = rpca::tune_lambda2({scene.observed}, {scene.truth.vessel_mask}, solver(6.0, 0.1, 200),
                                         {0.05, 0.15, 0.4});
  ASSERT_EQ(choice.scores.size(), 3u);
  const auto best = std::max_element(choice.scores.begin(), choice.scores.end());
  EXPECT_EQ(choice.f_measure, *best);
  EXPECT_EQ(choice.lambda2, (std::vector<double>{0.05, 0.15, 0.4})[best - choice.scores.begin()]);
  EXPECT_THROW(rpca::tune_lambda2({scene.observed}, {scene.truth.vessel_mask}, solver(6, 0.1), {}), ConfigError);
}
