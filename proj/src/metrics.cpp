#include "msrpb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "msrpb/errors.hpp"

namespace msrpb::metrics {

ConfusionCounts confusion(const Tensor &predicted, const Tensor &truth) {
  require_same_shape(predicted, truth, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0.0, t = truth[i] != 0.0;
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

DetectionScores dr_p_f(const ConfusionCounts &c) {
  if (c.tp + c.fn == 0)
    throw UndefinedMetricError("detection rate undefined: no foreground in ground truth (tp + fn = 0)");
  if (c.tp + c.fp == 0)
    throw UndefinedMetricError("precision undefined: nothing predicted as foreground (tp + fp = 0)");
  DetectionScores s;
  s.dr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double sum = s.dr + s.precision;
  s.f_measure = sum > 0.0 ? 2.0 * s.dr * s.precision / sum : 0.0;
  return s;
}

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
};

Moments region_moments(const double *img, const double *mask, std::size_t count) {
  Moments m;
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    if (mask[i] != 0.0) {
      sum += img[i];
      ++m.n;
    }
  if (m.n == 0)
    return m;
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    if (mask[i] != 0.0) {
      const double d = img[i] - m.mean;
      ss += d * d;
    }
  m.var = ss / static_cast<double>(m.n);
  return m;
}

double cnr_raw(const double *img, const double *vessel, const double *bg, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i)
    if (vessel[i] != 0.0 && bg[i] != 0.0)
      throw UndefinedMetricError("cnr: vessel and background regions overlap");
  const Moments v = region_moments(img, vessel, count);
  const Moments b = region_moments(img, bg, count);
  if (v.n == 0 || b.n == 0)
    throw UndefinedMetricError("cnr: empty vessel or background region");
  const double num = std::abs(v.mean - b.mean);
  const double den = std::sqrt(v.var + b.var);
  if (den == 0.0) {
    if (num == 0.0)
      throw UndefinedMetricError("cnr: both regions constant and equal");
    return std::numeric_limits<double>::infinity();
  }
  return num / den;
}

} // namespace

double cnr(const Tensor &image, const Tensor &vessel, const Tensor &background) {
  require_same_shape(image, vessel, "cnr");
  require_same_shape(image, background, "cnr");
  return cnr_raw(image.data(), vessel.data(), background.data(), image.size());
}

double cnr_sequence(const Tensor &video, const Tensor &vessel, const Tensor &background) {
  require_same_shape(video, vessel, "cnr_sequence");
  require_same_shape(video, background, "cnr_sequence");
  if (video.rank() != 4 || video.dim(0) != 1)
    throw ContractError("cnr_sequence expects a (1,T,H,W) video");
  const std::size_t T = video.dim(1), hw = video.dim(2) * video.dim(3);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double *v = vessel.data() + t * hw;
    const double *b = background.data() + t * hw;
    const bool has_v = std::any_of(v, v + hw, [](double x) { return x != 0.0; });
    const bool has_b = std::any_of(b, b + hw, [](double x) { return x != 0.0; });
    if (!has_v || !has_b)
      continue;
    total += cnr_raw(video.data() + t * hw, v, b, hw);
    ++used;
  }
  if (used == 0)
    throw UndefinedMetricError("cnr_sequence: no frame has both regions");
  return total / static_cast<double>(used);
}

BackgroundRegions background_regions(const Tensor &vessel_mask, std::size_t radius) {
  std::size_t frames = 1, H = 0, W = 0;
  if (vessel_mask.rank() == 2) {
    H = vessel_mask.dim(0);
    W = vessel_mask.dim(1);
  } else if (vessel_mask.rank() == 4 && vessel_mask.dim(0) == 1) {
    frames = vessel_mask.dim(1);
    H = vessel_mask.dim(2);
    W = vessel_mask.dim(3);
  } else {
    throw ContractError("background_regions expects an (H,W) or (1,T,H,W) mask");
  }
  std::size_t on = 0;
  for (double v : vessel_mask.values())
    on += v != 0.0;
  if (on == 0)
    throw UndefinedMetricError("background_regions: empty vessel mask");
  if (on == vessel_mask.size())
    throw UndefinedMetricError("background_regions: vessel mask covers the whole image");

  BackgroundRegions out{Tensor::like(vessel_mask), Tensor::like(vessel_mask)};
  const long r = static_cast<long>(radius);
  std::vector<double> rows(H * W);
  for (std::size_t t = 0; t < frames; ++t) {
    const double *m = vessel_mask.data() + t * H * W;
    // Separable chessboard dilation: along w, then along h.
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const long lo = std::max(0L, static_cast<long>(w) - r);
        const long hi = std::min(static_cast<long>(W) - 1, static_cast<long>(w) + r);
        double any = 0.0;
        for (long j = lo; j <= hi && any == 0.0; ++j)
          any = m[h * W + static_cast<std::size_t>(j)] != 0.0 ? 1.0 : 0.0;
        rows[h * W + w] = any;
      }
    double *g = out.global.data() + t * H * W;
    double *l = out.local.data() + t * H * W;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const long lo = std::max(0L, static_cast<long>(h) - r);
        const long hi = std::min(static_cast<long>(H) - 1, static_cast<long>(h) + r);
        double dil = 0.0;
        for (long i = lo; i <= hi && dil == 0.0; ++i)
          dil = rows[static_cast<std::size_t>(i) * W + w];
        const bool vessel = m[h * W + w] != 0.0;
        g[h * W + w] = vessel ? 0.0 : 1.0;
        l[h * W + w] = (!vessel && dil != 0.0) ? 1.0 : 0.0;
      }
  }
  return out;
}

std::size_t OtsuThreshold::bin_of(double v) const {
  if (v <= low)
    return 0;
  const double pos = (v - low) / (high - low) * static_cast<double>(kOtsuBins);
  return std::min(kOtsuBins - 1, static_cast<std::size_t>(pos));
}

OtsuThreshold otsu_threshold(const std::vector<double> &values) {
  if (values.empty())
    throw InputError("otsu: empty input");
  OtsuThreshold th;
  th.low = th.high = values.front();
  for (double v : values) {
    if (!std::isfinite(v))
      throw InputError("otsu: non-finite input");
    th.low = std::min(th.low, v);
    th.high = std::max(th.high, v);
  }
  if (th.high <= th.low)
    throw InputError("otsu: constant input has no threshold");

  std::vector<double> hist(kOtsuBins, 0.0);
  for (double v : values)
    hist[th.bin_of(v)] += 1.0;
  const double n = static_cast<double>(values.size());
  const double width = (th.high - th.low) / static_cast<double>(kOtsuBins);
  auto centre = [&](std::size_t b) { return th.low + (static_cast<double>(b) + 0.5) * width; };

  double total = 0.0;
  for (std::size_t b = 0; b < kOtsuBins; ++b)
    total += hist[b] * centre(b);

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  for (std::size_t k = 0; k + 1 < kOtsuBins; ++k) {
    w0 += hist[k];
    sum0 += hist[k] * centre(k);
    const double w1 = n - w0;
    if (w0 == 0.0 || w1 == 0.0)
      continue;
    const double m0 = sum0 / w0, m1 = (total - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      th.bin = k;
    }
  }
  th.value = th.low + static_cast<double>(th.bin + 1) * width;
  return th;
}

OtsuThreshold otsu_threshold(const Tensor &values) {
  return otsu_threshold(std::vector<double>(values.values().begin(), values.values().end()));
}

Tensor otsu(const Tensor &values) {
  const OtsuThreshold th = otsu_threshold(values);
  Tensor mask = Tensor::like(values);
  for (std::size_t i = 0; i < values.size(); ++i)
    mask[i] = th.foreground(values[i]) ? 1.0 : 0.0;
  return mask;
}

} // namespace msrpb::metrics
