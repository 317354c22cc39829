#include <gtest/gtest.h>

#include "msrpb/errors.hpp"
#include "msrpb/pipeline.hpp"
#include "msrpb/synth.hpp"
#include "oracles.hpp"

using namespace msrpb;
namespace ad = msrpb::autodiff;

namespace {

pipeline::PatchSpec patch_spec(std::size_t h, std::size_t w, std::size_t t, double overlap) {
  pipeline::PatchSpec s;
  s.patch_h = h;
  s.patch_w = w;
  s.patch_t = t;
  s.overlap = overlap;
  return s;
}

pipeline::NetworkConfig mini_network() {
  pipeline::NetworkConfig c;
  c.scales = {1, 2};
  c.kernel_sizes = {{3, 3, 3}};
  c.channels = 4;
  c.perturbation = 0.05;
  c.seed = 3;
  return c;
}

std::vector<Tensor *> tensors_of(pipeline::NetworkParams &p) {
  std::vector<Tensor *> out;
  pipeline::visit(p, [&](const std::string &, Tensor &t) { out.push_back(&t); });
  return out;
}

} // namespace

TEST(Patchify, PositionCount) {
  const Tensor video({1, 8, 64, 64});
  const auto set = pipeline::patchify(video, patch_spec(32, 32, 8, 0.5));
  EXPECT_EQ(set.patches.size(), 9u);
  EXPECT_EQ(set.origins.back().h, 32u);
  EXPECT_EQ(set.origins.back().w, 32u);
}

TEST(Patchify, NoOverlapPartitionsExactTiling) {
  oracle::Rng rng(1);
  const Tensor video = oracle::random_tensor({1, 4, 8, 12}, rng);
  const auto set = pipeline::patchify(video, patch_spec(4, 4, 2, 0.0));
  EXPECT_EQ(set.patches.size(), 2u * 2u * 3u);
  EXPECT_EQ(set.padded, (Extent3{4, 8, 12}));
  std::size_t covered = 0;
  for (const auto &p : set.patches)
    covered += p.size();
  EXPECT_EQ(covered, video.size());
}

TEST(Patchify, PatchesAreSlicesAtTheirOrigins) {
  oracle::Rng rng(2);
  const Tensor video = oracle::random_tensor({1, 9, 20, 22}, rng);
  const auto spec = patch_spec(8, 8, 4, 0.5);
  const auto set = pipeline::patchify(video, spec);
  const Tensor padded = pipeline::reflect_pad(video, set.padded);
  for (std::size_t k = 0; k < set.patches.size(); ++k) {
    const Extent3 o = set.origins[k];
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t w = 0; w < 8; ++w)
          ASSERT_EQ(set.patches[k].at(0, t, h, w), padded.at(0, o.t + t, o.h + h, o.w + w));
  }
}

TEST(ReflectPad, MirrorsWithoutRepeatingTheEdge) {
  Tensor v({1, 1, 1, 3});
  v[0] = 1;
  v[1] = 2;
  v[2] = 3;
  const Tensor p = pipeline::reflect_pad(v, {1, 1, 5});
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), (std::vector<double>{1, 2, 3, 2, 1}));
}

TEST(Depatchify, RoundTripIdentity) {
  oracle::Rng rng(3);
  for (auto shape : {std::vector<std::size_t>{1, 20, 64, 64}, {1, 9, 37, 50}}) {
    const Tensor video = oracle::random_tensor(shape, rng);
    const Tensor back = pipeline::depatchify(pipeline::patchify(video, patch_spec(32, 32, 8, 0.5)));
    EXPECT_LT(max_abs_diff(back, video), 1e-12);
  }
}

TEST(Depatchify, AveragesOverlaps) {
  pipeline::PatchSet set;
  set.padded = set.source = {1, 1, 3};
  set.patches = {Tensor({1, 1, 1, 2}, 0.0), Tensor({1, 1, 1, 2}, 1.0)};
  set.origins = {{0, 0, 0}, {0, 0, 1}};
  const Tensor out = pipeline::depatchify(set);
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Depatchify, Linear) {
  oracle::Rng rng(4);
  const auto spec = patch_spec(8, 8, 4, 0.5);
  auto p = pipeline::patchify(oracle::random_tensor({1, 6, 12, 12}, rng), spec);
  auto q = pipeline::patchify(oracle::random_tensor({1, 6, 12, 12}, rng), spec);
  auto mix = p;
  for (std::size_t k = 0; k < mix.patches.size(); ++k)
    mix.patches[k] = p.patches[k] * 2.0 + q.patches[k] * -0.5;
  const Tensor lhs = pipeline::depatchify(mix);
  const Tensor rhs = pipeline::depatchify(p) * 2.0 + pipeline::depatchify(q) * -0.5;
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Depatchify, CoverageGapIsAnError) {
  oracle::Rng rng(5);
  auto set = pipeline::patchify(oracle::random_tensor({1, 4, 8, 8}, rng), patch_spec(4, 4, 4, 0.0));
  set.patches.pop_back();
  set.origins.pop_back();
  EXPECT_THROW(pipeline::depatchify(set), ContractError);
}

TEST(PatchSpec, RejectsFractionalStride) {
  EXPECT_THROW(patch_spec(5, 5, 4, 0.5).validate(), ConfigError);
  EXPECT_THROW(patch_spec(4, 4, 4, 1.0).validate(), ConfigError);
}

TEST(Network, OutputKeepsPatchShape) {
  const auto p = pipeline::init_network(pipeline::profile("desk").network);
  oracle::Rng rng(6);
  const Tensor x = oracle::random_tensor({1, 8, 32, 32}, rng, 0.1);
  EXPECT_EQ(pipeline::forward(x, p).shape(), x.shape());
}

TEST(Network, SingleScaleIsDirectComposition) {
  auto cfg = mini_network();
  cfg.scales = {1};
  const auto p = pipeline::init_network(cfg);
  oracle::Rng rng(7);
  const Tensor x = oracle::random_tensor({1, 4, 8, 8}, rng);
  const auto d = unroll::unrolled_forward(avg_pool(x, 2), p.branches[0].stack);
  const Tensor composed = conv3(clstm::sr_head(d.S, p.branches[0].head), p.fusion);
  EXPECT_LT(max_abs_diff(pipeline::forward(x, p), composed), 1e-12);
}

TEST(Network, ParametersAreFloat32) {
  auto p = pipeline::init_network(pipeline::profile("desk").network);
  for (Tensor *t : tensors_of(p))
    for (double v : t->values())
      ASSERT_EQ(static_cast<double>(static_cast<float>(v)), v);
  EXPECT_EQ(pipeline::parameter_count(p), [&] {
    std::size_t n = 0;
    for (Tensor *t : tensors_of(p))
      n += t->size();
    return n;
  }());
}

TEST(Network, MiniatureGradientsMatchFiniteDifferences) {
  auto p = pipeline::init_network(mini_network());
  oracle::Rng rng(8);
  Tensor x = oracle::random_tensor({1, 4, 8, 8}, rng, 0.5);
  const Tensor w = oracle::random_tensor(x.shape(), rng);
  auto grad = pipeline::zeros_like(p);
  Tensor gx;
  bool degenerate = false;
  {
    ad::Graph g;
    g.backward(pipeline::forward(g, g.leaf(x, &gx), p, &grad, &degenerate), w);
  }
  ASSERT_FALSE(degenerate);
  auto loss = [&] { return dot(pipeline::forward(x, p), w); };
  EXPECT_LT(oracle::check_gradient(loss, x, gx, 1e-6, 64, rng).relative_error, 1e-3);
  const auto ps = tensors_of(p), gs = tensors_of(grad);
  for (std::size_t i = 0; i < ps.size(); ++i)
    EXPECT_LT(oracle::check_gradient(loss, *ps[i], *gs[i], 1e-6, 24, rng).relative_error, 1e-3) << "tensor " << i;
}

TEST(Network, ConfigValidation) {
  EXPECT_THROW(pipeline::profile("laptop"), ConfigError);
  auto c = mini_network();
  c.scales = {3};
  EXPECT_THROW(c.validate(), ConfigError);
  c = mini_network();
  c.scales = {1, 4};
  EXPECT_THROW(c.check_patch(patch_spec(12, 12, 4, 0.5)), ConfigError);
  EXPECT_NO_THROW(c.check_patch(patch_spec(16, 16, 4, 0.5)));
}

TEST(DecomposeSequence, LayersSumToVideoExactly) {
  const auto profile = pipeline::profile("desk");
  const auto p = pipeline::init_network(profile.network);
  synth::SceneSpec s;
  s.height = 40;
  s.width = 36;
  s.frames = 10;
  const Tensor video = synth::make_scene(s).observed;
  const auto d = pipeline::decompose_sequence(video, p, profile.patch);
  for (std::size_t i = 0; i < video.size(); ++i)
    ASSERT_EQ(d.vessel[i] + d.background[i], video[i]);
  const auto again = pipeline::decompose_sequence(video, p, profile.patch);
  EXPECT_EQ(max_abs_diff(again.vessel, d.vessel), 0.0);
}

TEST(DecomposeSequence, UntrainedNetworkAlreadySeparatesVessels) {
  const auto profile = pipeline::profile("desk");
  const auto p = pipeline::init_network(profile.network);
  synth::SceneSpec s;
  s.noise_a = s.noise_b = 0.0;
  const auto scene = synth::make_scene(s);
  const auto d = pipeline::decompose_sequence(scene.observed, p, profile.patch);
  EXPECT_GT(oracle::pearson(d.vessel, scene.truth.vessel_layer), 0.5);
}
