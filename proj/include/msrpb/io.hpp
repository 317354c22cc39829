#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msrpb/pipeline.hpp"
#include "msrpb/tensor.hpp"
#include "msrpb/train.hpp"

namespace msrpb::io {

constexpr std::size_t kHashLength = 16;

/// VSEQ1 container, all integers and floats little-endian:
///   "VSEQ1" | u32 height | u32 width | u32 frames | 16-byte config hash |
///   height*width*frames f32, frame-major (row-major within a frame).
constexpr std::size_t kVideoHeader = 5 + 3 * 4 + kHashLength;

std::size_t video_file_size(std::size_t height, std::size_t width, std::size_t frames);

struct Video {
  Tensor data; ///< (1, frames, height, width)
  std::string hash;
};

/// Values are stored as float32; non-finite values are rejected (IoError).
void write_video(const std::string &path, const Tensor &video, const std::string &hash);

/// Throws IoError for missing, truncated or oversized files and bad magic.
Video read_video(const std::string &path);

/// As read_video, and throws ConfigError when the embedded hash differs.
Tensor read_video(const std::string &path, const std::string &expected_hash);

/// MSRPB1 checkpoint:
///   "MSRPB1" | 16-byte config hash | u32 epoch | u64 adam step | u32 count |
///   count x (u32 name length | name | u32 rank | rank x u32 dims |
///            values, first moments, second moments as f32)
struct Checkpoint {
  std::string hash;
  std::uint32_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor> params, m, v;
};

Checkpoint make_checkpoint(const pipeline::NetworkParams &p, const train::AdamState &adam, std::uint32_t epoch,
                           const std::string &hash);

/// Copies the stored tensors into `p` (and `adam` when given). Names and
/// shapes must match the network exactly (ConfigError otherwise).
void restore(const Checkpoint &c, pipeline::NetworkParams &p, train::AdamState *adam = nullptr);

void write_checkpoint(const std::string &path, const Checkpoint &c);
Checkpoint read_checkpoint(const std::string &path);

/// Checkpoint whose hash must equal `expected_hash` (ConfigError otherwise).
Checkpoint read_checkpoint(const std::string &path, const std::string &expected_hash);

struct Layers {
  Tensor vessel;
  Tensor background;
};

/// Float32-representable vessel and background layers with
/// vessel + background == video exactly, for a float32-representable video.
/// Where |vessel| <= |video| the vessel layer moves by at most one float32 ulp
/// of the video value; larger values move to the nearest exact split.
Layers split_float32(const Tensor &video, const Tensor &vessel);

std::vector<char> read_bytes(const std::string &path);

} // namespace msrpb::io
