#include "msrpb/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "msrpb/errors.hpp"

namespace msrpb::report {

namespace {

constexpr std::size_t kMargin = 24;
constexpr std::uint32_t kAxis = 0x404040;

void line(Image &img, double x0, double y0, double x1, double y1, std::uint32_t colour) {
  const double n = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
  for (double s = 0; s <= n; s += 1.0) {
    const double t = s / n;
    const long x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
    img.set(x, y, colour);
    img.set(x, y + 1, colour);
  }
}

void fill_rect(Image &img, long x0, long y0, long x1, long y1, std::uint32_t colour) {
  for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
    for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x)
      img.set(x, y, colour);
}

void axes(Image &img) {
  const long l = kMargin, b = static_cast<long>(img.height - kMargin);
  line(img, l, kMargin, l, b, kAxis);
  line(img, l, b, static_cast<long>(img.width - kMargin), b, kAxis);
}

} // namespace

Image::Image(std::size_t w, std::size_t h, std::uint8_t grey) : width(w), height(h), rgb(3 * w * h, grey) {}

void Image::set(long x, long y, std::uint32_t c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height))
    return;
  std::uint8_t *p = &rgb[3 * (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x))];
  p[0] = static_cast<std::uint8_t>(c >> 16);
  p[1] = static_cast<std::uint8_t>(c >> 8);
  p[2] = static_cast<std::uint8_t>(c);
}

std::uint32_t Image::get(std::size_t x, std::size_t y) const {
  const std::uint8_t *p = &rgb[3 * (y * width + x)];
  return (std::uint32_t{p[0]} << 16) | (std::uint32_t{p[1]} << 8) | p[2];
}

void write_png(const std::string &path, const Image &img) {
  if (img.width == 0 || img.height == 0)
    throw ContractError("write_png: empty image");
  FILE *fp = std::fopen(path.c_str(), "wb");
  if (!fp)
    throw IoError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("PNG encoding of '" + path + "' failed");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.rgb[3 * y * img.width]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0)
    throw IoError("write to '" + path + "' failed");
}

std::uint32_t palette(std::size_t k) {
  static const std::uint32_t colours[] = {0x1f77b4, 0xff7f0e, 0x2ca02c, 0xd62728, 0x9467bd, 0x8c564b};
  return colours[k % 6];
}

Image line_plot(const std::vector<std::vector<double>> &series, std::size_t width, std::size_t height) {
  Image img(width, height);
  axes(img);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto &s : series) {
    n = std::max(n, s.size());
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (n == 0 || !(hi >= lo))
    return img;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double w = static_cast<double>(width - 2 * kMargin), h = static_cast<double>(height - 2 * kMargin);
  auto px = [&](std::size_t i) { return kMargin + (n > 1 ? w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double v) { return kMargin + h * (hi - v) / (hi - lo); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto &s = series[k];
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!std::isfinite(s[i]))
        continue;
      fill_rect(img, std::lround(px(i)) - 2, std::lround(py(s[i])) - 2, std::lround(px(i)) + 2,
                std::lround(py(s[i])) + 2, palette(k));
      if (i + 1 < s.size() && std::isfinite(s[i + 1]))
        line(img, px(i), py(s[i]), px(i + 1), py(s[i + 1]), palette(k));
    }
  }
  return img;
}

Image bar_chart(const std::vector<std::vector<double>> &groups, std::size_t width, std::size_t height) {
  Image img(width, height);
  axes(img);
  double hi = 0.0;
  std::size_t bars = 0;
  for (const auto &g : groups) {
    bars = std::max(bars, g.size());
    for (double v : g)
      if (std::isfinite(v))
        hi = std::max(hi, v);
  }
  if (groups.empty() || bars == 0 || hi <= 0.0)
    return img;
  const double w = static_cast<double>(width - 2 * kMargin), h = static_cast<double>(height - 2 * kMargin);
  const double slot = w / static_cast<double>(groups.size());
  const double bar = slot / static_cast<double>(bars + 1);
  const long base = static_cast<long>(height - kMargin) - 1;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t k = 0; k < groups[g].size(); ++k) {
      const double v = groups[g][k];
      if (!std::isfinite(v) || v <= 0.0)
        continue;
      const double x0 = kMargin + g * slot + (static_cast<double>(k) + 0.5) * bar;
      fill_rect(img, std::lround(x0), base, std::lround(x0 + bar) - 1, base - std::lround(h * v / hi), palette(k));
    }
  return img;
}

Tensor frame_of(const Tensor &video, std::size_t t) {
  if (video.rank() != 4 || video.dim(0) != 1 || t >= video.dim(1))
    throw ContractError("frame_of: frame " + std::to_string(t) + " of " + shape_string(video.shape()));
  const std::size_t H = video.dim(2), W = video.dim(3);
  Tensor out({H, W});
  std::copy_n(video.data() + t * H * W, H * W, out.data());
  return out;
}

Image frame_strip(const std::vector<Tensor> &frames, std::size_t zoom) {
  if (frames.empty() || zoom == 0)
    throw ContractError("frame_strip needs frames and a positive zoom");
  std::size_t W = 0, H = 0;
  for (const Tensor &f : frames) {
    if (f.rank() != 2)
      throw ContractError("frame_strip expects (H,W) frames");
    W += f.dim(1) * zoom + 4;
    H = std::max(H, f.dim(0) * zoom);
  }
  Image img(W + 4, H + 8, 255);
  std::size_t x0 = 4;
  for (const Tensor &f : frames) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : f.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t y = 0; y < f.dim(0) * zoom; ++y)
      for (std::size_t x = 0; x < f.dim(1) * zoom; ++x) {
        const double v = (f[(y / zoom) * f.dim(1) + x / zoom] - lo) / span;
        const auto g = static_cast<std::uint32_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        img.set(static_cast<long>(x0 + x), static_cast<long>(4 + y), (g << 16) | (g << 8) | g);
      }
    x0 += f.dim(1) * zoom + 4;
  }
  return img;
}

} // namespace msrpb::report
