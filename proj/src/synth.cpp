#include "msrpb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "msrpb/errors.hpp"

namespace msrpb::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum Stream : std::uint64_t { kBackground = 1, kVessel = 2, kNoise = 3 };

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

// Random low-frequency field normalised to max |value| = 1.
std::vector<double> smooth_field(std::mt19937_64 &rng, std::size_t H, std::size_t W) {
  std::uniform_real_distribution<double> freq(0.2, 1.8), phase(0.0, kTwoPi), amp(0.5, 1.0);
  std::vector<double> f(H * W, 0.0);
  for (int term = 0; term < 5; ++term) {
    const double ky = freq(rng), kx = freq(rng), ph = phase(rng), a = amp(rng);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        f[h * W + w] += a * std::cos(kTwoPi * (ky * h / H + kx * w / W) + ph);
  }
  double m = 0.0;
  for (double v : f)
    m = std::max(m, std::abs(v));
  if (m > 0)
    for (double &v : f)
      v /= m;
  return f;
}

double segment_distance(double py, double px, double ay, double ax, double by, double bx) {
  const double dy = by - ay, dx = bx - ax;
  const double len2 = dy * dy + dx * dx;
  double t = len2 > 0 ? ((py - ay) * dy + (px - ax) * dx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qy = ay + t * dy - py, qx = ax + t * dx - px;
  return std::sqrt(qy * qy + qx * qx);
}

struct VesselPlan {
  std::vector<std::pair<double, double>> points;
  double start_fraction = 0.3;
  double fill_frames = 12.0;
  double dir_y = 0.0, dir_x = 1.0;
};

VesselPlan plan_vessel(const SceneSpec &spec, std::size_t index) {
  auto rng = make_rng(spec.seed, kVessel, index);
  const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> bend(0.0, 0.07);

  VesselPlan plan;
  const double margin = 0.15;
  double y = std::round(H * (margin + (1 - 2 * margin) * unit(rng)));
  double x = std::round(W * (margin + (1 - 2 * margin) * unit(rng)));
  double angle = kTwoPi * unit(rng);
  const double length = (0.6 + 0.6 * unit(rng)) * std::max(H, W);
  const double step = 0.5;
  plan.points.emplace_back(y, x);
  for (double s = 0; s < length; s += step) {
    angle += bend(rng);
    y += step * std::sin(angle);
    x += step * std::cos(angle);
    if (y < -spec.vessel_width_px || y > H + spec.vessel_width_px || x < -spec.vessel_width_px ||
        x > W + spec.vessel_width_px)
      break;
    plan.points.emplace_back(y, x);
  }
  plan.start_fraction = 0.2 + 0.2 * unit(rng);
  plan.fill_frames = std::max(1.0, (0.5 + 0.2 * unit(rng)) * static_cast<double>(spec.frames));
  const double dir = kTwoPi * unit(rng);
  plan.dir_y = std::sin(dir);
  plan.dir_x = std::cos(dir);
  return plan;
}

} // namespace

void SceneSpec::validate() const {
  if (height == 0 || width == 0 || frames == 0)
    throw ConfigError("scene dimensions must be positive");
  if (bg_rank == 0 || bg_rank > std::min(height * width, frames))
    throw ConfigError("bg_rank must lie in [1, min(pixels, frames)]");
  if (vessel_peak_intensity < 0.0 || vessel_peak_intensity > 1.0)
    throw ConfigError("vessel_peak_intensity must lie in [0, 1]");
  if (noise_a < 0.0 || noise_b < 0.0)
    throw ConfigError("noise coefficients must be nonnegative");
  if (vessel_width_px <= 0.0)
    throw ConfigError("vessel_width_px must be positive");
  if (bg_drift < 0.0 || vessel_motion_px < 0.0)
    throw ConfigError("drift and motion amplitudes must be nonnegative");
}

Tensor make_background(const SceneSpec &spec) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width, T = spec.frames;
  auto rng = make_rng(spec.seed, kBackground);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Static component: base level, smooth texture and an optional spine-like band.
  std::vector<double> base = smooth_field(rng, H, W);
  for (double &v : base)
    v = 0.4 + 0.1 * v;
  if (spec.static_edges) {
    const double centre = W * (0.25 + 0.5 * unit(rng));
    const double half = 0.06 * W;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const double d = std::abs(static_cast<double>(w) - centre + 0.1 * (static_cast<double>(h) - H / 2.0));
        const double edge = std::clamp(half + 0.5 - d, 0.0, 1.0);
        base[h * W + w] += 0.12 * edge;
      }
  }
  const double breath_period = 0.8 * T + 4.0 * unit(rng);
  const double breath_phase = kTwoPi * unit(rng);
  double base_mean = 0.0;
  for (double v : base)
    base_mean += v;
  base_mean /= static_cast<double>(H * W);

  Tensor out({1, T, H, W});
  for (std::size_t t = 0; t < T; ++t) {
    const double c0 = 1.0 + spec.bg_drift / base_mean * std::sin(kTwoPi * t / breath_period + breath_phase);
    for (std::size_t p = 0; p < H * W; ++p)
      out[t * H * W + p] = c0 * base[p];
  }

  // Dynamic components: smooth fields with distinct slow temporal curves.
  for (std::size_t r = 1; r < spec.bg_rank; ++r) {
    const std::vector<double> field = smooth_field(rng, H, W);
    const double period = (0.7 + 1.3 * unit(rng)) * static_cast<double>(T) + static_cast<double>(r);
    const double phase = kTwoPi * unit(rng);
    for (std::size_t t = 0; t < T; ++t) {
      const double c = std::cos(kTwoPi * t / period + phase);
      for (std::size_t p = 0; p < H * W; ++p)
        out[t * H * W + p] += 0.05 * c * field[p];
    }
  }
  return out;
}

std::vector<std::pair<double, double>> vessel_centerline(const SceneSpec &spec, std::size_t index) {
  return plan_vessel(spec, index).points;
}

VesselLayer make_vessels(const SceneSpec &spec) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width, T = spec.frames;
  VesselLayer out{Tensor({1, T, H, W}), Tensor({1, T, H, W})};
  const double half_width = spec.vessel_width_px / 2.0;
  const double heart_period = 8.0;

  for (std::size_t v = 0; v < spec.vessel_count; ++v) {
    const VesselPlan plan = plan_vessel(spec, v);
    const std::size_t n = plan.points.size();
    for (std::size_t t = 0; t < T; ++t) {
      const double visible =
          std::min(1.0, plan.start_fraction + (1.0 - plan.start_fraction) * static_cast<double>(t) / plan.fill_frames);
      const std::size_t last = std::max<std::size_t>(
          1, std::min(n, static_cast<std::size_t>(std::ceil(visible * static_cast<double>(n)))));
      const double shift = spec.vessel_motion_px * std::sin(kTwoPi * static_cast<double>(t) / heart_period);
      const double oy = shift * plan.dir_y, ox = shift * plan.dir_x;
      double *frame = out.intensity.data() + t * H * W;

      for (std::size_t j = 0; j < last; ++j) {
        const auto [ay, ax] = plan.points[j];
        const auto [by, bx] = plan.points[std::min(j + 1, last - 1)];
        const double y0 = std::min(ay, by) + oy - half_width, y1 = std::max(ay, by) + oy + half_width;
        const double x0 = std::min(ax, bx) + ox - half_width, x1 = std::max(ax, bx) + ox + half_width;
        const long h0 = std::max(0L, static_cast<long>(std::floor(y0))),
                   h1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::ceil(y1)));
        const long w0 = std::max(0L, static_cast<long>(std::floor(x0))),
                   w1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::ceil(x1)));
        for (long h = h0; h <= h1; ++h)
          for (long w = w0; w <= w1; ++w) {
            const double d = segment_distance(static_cast<double>(h), static_cast<double>(w), ay + oy, ax + ox,
                                              by + oy, bx + ox);
            const double r = d / half_width;
            const double value = spec.vessel_peak_intensity * std::max(0.0, 1.0 - r * r);
            double &dst = frame[static_cast<std::size_t>(h) * W + static_cast<std::size_t>(w)];
            dst = std::max(dst, value);
          }
      }
    }
  }
  for (std::size_t i = 0; i < out.mask.size(); ++i)
    out.mask[i] = out.intensity[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

Tensor add_noise(const Tensor &clean, const SceneSpec &spec) {
  if (spec.noise_a < 0.0 || spec.noise_b < 0.0)
    throw ConfigError("noise coefficients must be nonnegative");
  Tensor out = clean;
  if (spec.noise_a == 0.0 && spec.noise_b == 0.0)
    return out;
  auto rng = make_rng(spec.seed, kNoise);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = std::max(0.0, clean[i]);
    out[i] += std::sqrt(spec.noise_a * s + spec.noise_b) * normal(rng);
  }
  return out;
}

Scene make_scene(const SceneSpec &spec) {
  Scene scene;
  scene.truth.background = make_background(spec);
  VesselLayer vessels = make_vessels(spec);
  scene.truth.vessel_layer = std::move(vessels.intensity);
  scene.truth.vessel_mask = std::move(vessels.mask);
  const Tensor clean = scene.truth.background + scene.truth.vessel_layer;
  const Tensor noisy = add_noise(clean, spec);
  scene.truth.noise = noisy - clean;
  scene.observed = noisy;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    double v = noisy[i];
    if (v < 0.0 || v > 1.0) {
      ++clipped;
      v = std::clamp(v, 0.0, 1.0);
    } else {
      // Observations are float32 values, as in the on-disk container; the
      // rounding is folded into the noise realisation.
      v = v < 0x1p-24 ? 0.0 : static_cast<double>(static_cast<float>(v));
      scene.truth.noise[i] = v - clean[i];
    }
    scene.observed[i] = v;
  }
  scene.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(scene.observed.size());
  return scene;
}

} // namespace msrpb::synth
