#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "msrpb/config.hpp"
#include "msrpb/errors.hpp"
#include "msrpb/io.hpp"
#include "oracles.hpp"

using namespace msrpb;
namespace fs = std::filesystem;

namespace {

Tensor float_video(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
  oracle::Rng rng(seed);
  Tensor v = oracle::random_tensor({1, t, h, w}, rng);
  round_to_float(v);
  return v;
}

void write_bytes(const std::string &path, const std::vector<char> &bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST(Config, UnknownKeyAndBadValueAreErrors) {
  auto cfg = config::defaults("desk");
  EXPECT_THROW(config::set(cfg, "foo", "1"), ConfigError);
  EXPECT_THROW(config::set(cfg, "scene.height", "tall"), ConfigError);
  EXPECT_THROW(config::apply(cfg, "seed = 3\nnot a line\n"), ConfigError);
  try {
    config::apply(cfg, "# comment\nseed = 3\nbogus.key = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
  }
  EXPECT_THROW(config::defaults("laptop"), ConfigError);
  EXPECT_NO_THROW(config::apply(cfg, "profile = desk\n"));
  EXPECT_THROW(config::apply(cfg, "profile = paper\n"), ConfigError);
}

TEST(Config, CanonicalTextRoundTrips) {
  auto cfg = config::defaults("desk");
  config::set(cfg, "solver.lambda2", "0.123456789012345");
  config::set(cfg, "network.kernel_sizes", "5x5x5,3x3x3");
  config::set(cfg, "solver.lambda2_grid", "0.1,0.3");
  cfg.finalize();
  auto back = config::defaults("desk");
  config::apply(back, config::canonical(cfg));
  back.finalize();
  EXPECT_EQ(config::canonical(back), config::canonical(cfg));
  EXPECT_EQ(config::hash(back), config::hash(cfg));
  EXPECT_EQ(back.solver.lambda2, 0.123456789012345);
}

TEST(Config, HashTracksEveryKey) {
  auto a = config::defaults("desk");
  a.finalize();
  const std::string h = config::hash(a);
  EXPECT_EQ(h.size(), io::kHashLength);
  EXPECT_EQ(config::hash(a), h);
  auto b = a;
  config::set(b, "train.epochs", "11");
  b.finalize();
  EXPECT_NE(config::hash(b), h);
  auto c = a;
  config::set(c, "seed", "2");
  c.finalize();
  EXPECT_NE(config::hash(c), h);
  const std::string text = config::canonical(a);
  EXPECT_EQ(config::keys().size() + 1, static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(Config, SceneSeedsDifferPerSequence) {
  auto cfg = config::defaults("desk");
  cfg.seed = 4;
  cfg.finalize();
  EXPECT_EQ(cfg.scene_for(0).seed, 4000u);
  EXPECT_EQ(cfg.scene_for(7).seed, 4007u);
}

TEST(VideoContainer, RoundTripIsExact) {
  const std::string dir = oracle::temp_dir("vseq");
  const std::string path = dir + "/a.vseq";
  const Tensor v = float_video(5, 7, 9, 1);
  io::write_video(path, v, "0123456789abcdef");
  EXPECT_EQ(fs::file_size(path), io::video_file_size(7, 9, 5));
  EXPECT_EQ(io::video_file_size(7, 9, 5), io::kVideoHeader + 5 * 7 * 9 * 4);
  const auto back = io::read_video(path);
  EXPECT_EQ(back.hash, "0123456789abcdef");
  EXPECT_EQ(back.data.shape(), v.shape());
  EXPECT_EQ(max_abs_diff(back.data, v), 0.0);
  EXPECT_EQ(max_abs_diff(io::read_video(path, "0123456789abcdef"), v), 0.0);
  EXPECT_THROW(io::read_video(path, "fedcba9876543210"), ConfigError);
  fs::remove_all(dir);
}

TEST(VideoContainer, CorruptFilesAreIoErrors) {
  const std::string dir = oracle::temp_dir("vseq_bad");
  const std::string path = dir + "/a.vseq";
  io::write_video(path, float_video(2, 3, 4, 2), "0123456789abcdef");
  auto bytes = io::read_bytes(path);

  EXPECT_THROW(io::read_video(dir + "/missing.vseq"), IoError);
  auto truncated = bytes;
  truncated.pop_back();
  write_bytes(path, truncated);
  EXPECT_THROW(io::read_video(path), IoError);
  auto longer = bytes;
  longer.push_back(0);
  write_bytes(path, longer);
  EXPECT_THROW(io::read_video(path), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(path, magic);
  EXPECT_THROW(io::read_video(path), IoError);

  Tensor bad = float_video(2, 3, 4, 3);
  bad[5] = std::nan("");
  EXPECT_THROW(io::write_video(path, bad, "0123456789abcdef"), IoError);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  pipeline::NetworkConfig nc;
  nc.scales = {1, 2};
  nc.kernel_sizes = {{3, 3, 3}};
  nc.channels = 3;
  auto p = pipeline::init_network(nc);
  auto adam = train::make_adam(p);
  adam.step = 17;
  oracle::Rng rng(4);
  pipeline::visit(adam.m, [&](const std::string &, Tensor &t) {
    t = oracle::random_tensor(t.shape(), rng);
    round_to_float(t);
  });
  const std::string dir = oracle::temp_dir("ckpt");
  const std::string path = dir + "/m.ckpt";
  io::write_checkpoint(path, io::make_checkpoint(p, adam, 3, "00112233445566aa"));
  const auto bytes = io::read_bytes(path);
  const auto c = io::read_checkpoint(path, "00112233445566aa");
  EXPECT_EQ(c.epoch, 3u);
  EXPECT_EQ(c.step, 17u);
  auto q = pipeline::init_network(nc);
  pipeline::visit(q, [](const std::string &, Tensor &t) { t.fill(0.0); });
  auto adam2 = train::make_adam(q);
  io::restore(c, q, &adam2);
  EXPECT_EQ(adam2.step, 17u);
  std::vector<const Tensor *> a, b, ma, mb;
  pipeline::visit(p, [&](const std::string &, Tensor &t) { a.push_back(&t); });
  pipeline::visit(q, [&](const std::string &, Tensor &t) { b.push_back(&t); });
  pipeline::visit(adam.m, [&](const std::string &, Tensor &t) { ma.push_back(&t); });
  pipeline::visit(adam2.m, [&](const std::string &, Tensor &t) { mb.push_back(&t); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(max_abs_diff(*a[i], *b[i]), 0.0);
    EXPECT_EQ(max_abs_diff(*ma[i], *mb[i]), 0.0);
  }
  // Rewriting the restored state reproduces the file byte for byte.
  io::write_checkpoint(path, io::make_checkpoint(q, adam2, 3, "00112233445566aa"));
  EXPECT_EQ(io::read_bytes(path), bytes);
  EXPECT_THROW(io::read_checkpoint(path, "ffffffffffffffff"), ConfigError);

  nc.channels = 4;
  auto other = pipeline::init_network(nc);
  EXPECT_THROW(io::restore(c, other), ConfigError);
  EXPECT_THROW(io::read_checkpoint(dir + "/missing.ckpt"), IoError);
  fs::remove_all(dir);
}

TEST(SplitFloat32, LayersSumExactly) {
  oracle::Rng rng(5);
  const Tensor video = float_video(4, 16, 16, 6);
  const Tensor vessel = oracle::random_tensor(video.shape(), rng, 0.1);
  const auto l = io::split_float32(video, vessel);
  for (std::size_t i = 0; i < video.size(); ++i) {
    ASSERT_EQ(static_cast<double>(static_cast<float>(l.vessel[i])), l.vessel[i]);
    ASSERT_EQ(static_cast<double>(static_cast<float>(l.background[i])), l.background[i]);
    ASSERT_EQ(l.vessel[i] + l.background[i], video[i]);
    if (std::abs(vessel[i]) <= std::abs(video[i]))
      ASSERT_LE(std::abs(l.vessel[i] - vessel[i]), std::ldexp(1.0, std::ilogb(video[i]) - 23)) << video[i];
  }
}

TEST(SplitFloat32, LargeVesselMovesToNearestExactSplit) {
  Tensor video({1, 1, 1, 1}), vessel({1, 1, 1, 1});
  video[0] = static_cast<double>(-0.0098191378638148308f);
  vessel[0] = -0.05786;
  const auto l = io::split_float32(video, vessel);
  EXPECT_EQ(l.vessel[0] + l.background[0], video[0]);
  // Any exact split keeps one layer below 2^-6 in magnitude here.
  EXPECT_NEAR(l.vessel[0], video[0] - 0x1p-6, 1e-8);
}
