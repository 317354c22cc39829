#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msrpb/tensor.hpp"

namespace msrpb::report {

/// 8-bit RGB raster.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image(std::size_t w, std::size_t h, std::uint8_t grey = 255);
  void set(long x, long y, std::uint32_t colour); ///< 0xRRGGBB, clipped to the canvas
  std::uint32_t get(std::size_t x, std::size_t y) const;
};

void write_png(const std::string &path, const Image &img);

/// Colour of series k in every plot.
std::uint32_t palette(std::size_t k);

/// Curves over a shared index axis (x = entry index) with axes drawn at the
/// data minimum and at x = 0; the y range spans all finite values.
Image line_plot(const std::vector<std::vector<double>> &series, std::size_t width = 480, std::size_t height = 320);

/// Groups of bars (group g, bar k coloured palette(k)) from zero.
Image bar_chart(const std::vector<std::vector<double>> &groups, std::size_t width = 480, std::size_t height = 320);

/// Frames side by side, each (H,W) or one frame of a (1,T,H,W) video,
/// linearly mapped from its own [min, max] to grey and upscaled by `zoom`.
Image frame_strip(const std::vector<Tensor> &frames, std::size_t zoom = 3);

/// Frame t of a (1,T,H,W) video as an (H,W) tensor.
Tensor frame_of(const Tensor &video, std::size_t t);

} // namespace msrpb::report
