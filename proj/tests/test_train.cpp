#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "msrpb/errors.hpp"
#include "msrpb/metrics.hpp"
#include "msrpb/synth.hpp"
#include "msrpb/train.hpp"
#include "oracles.hpp"

using namespace msrpb;

namespace {

pipeline::NetworkConfig mini_network() {
  pipeline::NetworkConfig c;
  c.scales = {1, 2};
  c.kernel_sizes = {{3, 3, 3}};
  c.channels = 4;
  c.seed = 3;
  return c;
}

pipeline::PatchSpec mini_patch() {
  pipeline::PatchSpec s;
  s.patch_h = s.patch_w = 8;
  s.patch_t = 4;
  s.overlap = 0.5;
  return s;
}

struct MiniData {
  std::vector<train::Sample> train, val;
};

MiniData mini_data() {
  std::vector<Tensor> videos, targets;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synth::SceneSpec s;
    s.height = s.width = 16;
    s.frames = 4;
    s.vessel_count = 1;
    s.seed = seed;
    const auto scene = synth::make_scene(s);
    videos.push_back(scene.observed);
    targets.push_back(scene.truth.vessel_layer);
  }
  return {train::make_samples(videos, targets, {0, 1}, mini_patch()),
          train::make_samples(videos, targets, {2}, mini_patch())};
}

train::TrainConfig quick(std::size_t epochs) {
  train::TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = epochs;
  c.batch_size = 4;
  return c;
}

std::vector<Tensor *> tensors_of(pipeline::NetworkParams &p) {
  std::vector<Tensor *> out;
  pipeline::visit(p, [&](const std::string &, Tensor &t) { out.push_back(&t); });
  return out;
}

} // namespace

TEST(Split, LargestRemainderCounts) {
  train::TrainConfig c;
  auto s = train::split_dataset(10, c);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  s = train::split_dataset(8, c);
  EXPECT_EQ(s.train.size(), 5u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DisjointCoveringAndDeterministic) {
  train::TrainConfig c;
  c.seed = 11;
  const auto a = train::split_dataset(13, c), b = train::split_dataset(13, c);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::vector<std::size_t> all;
  for (const auto *part : {&a.train, &a.val, &a.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    all.insert(all.end(), part->begin(), part->end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i)
    ASSERT_EQ(all[i], i);
  EXPECT_EQ(all.size(), 13u);
}

TEST(Split, TooFewSequences) {
  EXPECT_THROW(train::split_dataset(2, train::TrainConfig{}), ConfigError);
}

TEST(MseLoss, ZeroAndPermutationInvariant) {
  oracle::Rng rng(1);
  const Tensor a = oracle::random_tensor({1, 2, 3, 4}, rng), b = oracle::random_tensor({1, 2, 3, 4}, rng);
  EXPECT_EQ(train::mse_loss(a, a), 0.0);
  double expect = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    expect += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(train::mse_loss(a, b), expect / static_cast<double>(a.size()), 1e-15);
  Tensor pa = a, pb = b;
  std::reverse(pa.values().begin(), pa.values().end());
  std::reverse(pb.values().begin(), pb.values().end());
  EXPECT_NEAR(train::mse_loss(pa, pb), train::mse_loss(a, b), 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  oracle::Rng rng(2);
  Tensor param = oracle::random_tensor({50}, rng);
  round_to_float(param);
  const Tensor before = param, grad = oracle::random_tensor({50}, rng);
  Tensor m({50}), v({50});
  train::TrainConfig c;
  c.learning_rate = 1e-2;
  train::adam_update(param, grad, m, v, 1, c);
  for (std::size_t i = 0; i < 50; ++i) {
    const double expected = before[i] - c.learning_rate * (grad[i] > 0 ? 1.0 : -1.0);
    ASSERT_NEAR(param[i], expected, 1e-6);
    ASSERT_EQ(static_cast<double>(static_cast<float>(param[i])), param[i]);
  }
  EXPECT_THROW(train::adam_update(param, grad, m, v, 0, c), ContractError);
}

TEST(Train, ZeroEpochsKeepsInitialParameters) {
  const auto data = mini_data();
  const auto init = pipeline::init_network(mini_network());
  const auto r = train::train(data.train, data.val, init, quick(0));
  auto a = r.params, b = init;
  const auto pa = tensors_of(a), pb = tensors_of(b);
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(max_abs_diff(*pa[i], *pb[i]), 0.0);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.epochs_run, 0u);
}

TEST(Train, ReproducibleAndReducesTrainingLoss) {
  const auto data = mini_data();
  const auto init = pipeline::init_network(mini_network());
  std::vector<std::size_t> seen;
  const auto a = train::train(data.train, data.val, init, quick(3),
                              [&](const train::EpochRecord &rec) { seen.push_back(rec.epoch); });
  const auto b = train::train(data.train, data.val, init, quick(3));
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.val_curve, b.val_curve);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
  ASSERT_EQ(a.val_curve.size(), 4u);
  EXPECT_LT(a.loss_curve.back(), a.loss_curve.front());
  EXPECT_EQ(a.val_curve[a.best_epoch], *std::min_element(a.val_curve.begin(), a.val_curve.end()));
}

TEST(Train, ExplodingParametersAreDivergence) {
  const auto data = mini_data();
  const auto init = pipeline::init_network(mini_network());
  auto cfg = quick(1);
  cfg.learning_rate = 1e37;
  EXPECT_THROW(train::train(data.train, data.val, init, cfg), DivergenceError);
}

TEST(Train, NonFiniteSampleIsInputError) {
  auto data = mini_data();
  data.train[0].input[0] = std::numeric_limits<double>::quiet_NaN();
  const auto init = pipeline::init_network(mini_network());
  EXPECT_THROW(train::train(data.train, data.val, init, quick(1)), InputError);
}

TEST(BatchGradient, IndependentOfBatchOrderForTheLoss) {
  const auto data = mini_data();
  const auto p = pipeline::init_network(mini_network());
  std::vector<const train::Sample *> batch{&data.train[0], &data.train[1], &data.train[2]};
  const auto a = train::batch_gradient(batch, p);
  double mean = 0;
  for (const auto *s : batch)
    mean += train::mse_loss(pipeline::forward(s->input, p), s->target);
  EXPECT_NEAR(a.loss, mean / 3.0, 1e-12);
}

TEST(Segment, OtsuOnMagnitude) {
  Tensor layer({1, 1, 2, 2});
  layer[0] = -0.9;
  layer[1] = 0.01;
  layer[2] = 0.0;
  layer[3] = 0.8;
  const Tensor m = train::segment(layer);
  EXPECT_EQ(std::vector<double>(m.values().begin(), m.values().end()), (std::vector<double>{1, 0, 0, 1}));
}

TEST(Evaluate, ScoresMatchDirectComputation) {
  synth::SceneSpec s;
  s.height = s.width = 32;
  s.frames = 6;
  s.noise_a = s.noise_b = 0.0;
  const auto scene = synth::make_scene(s);
  const Tensor &pred = scene.truth.vessel_layer;
  const auto r = train::evaluate(pred, scene.truth.vessel_mask, pred);
  const auto direct = metrics::dr_p_f(metrics::confusion(train::segment(pred), scene.truth.vessel_mask));
  EXPECT_EQ(r.dr, direct.dr);
  EXPECT_EQ(r.precision, direct.precision);
  EXPECT_EQ(r.f_measure, direct.f_measure);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_GT(r.cnr_global, 0.0);
  EXPECT_GT(r.cnr_local, 0.0);
  EXPECT_THROW(train::evaluate(pred, Tensor::like(pred), pred), UndefinedMetricError);
}
