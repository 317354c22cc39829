#pragma once

#include <cstdint>

#include "msrpb/tensor.hpp"

namespace msrpb::synth {

/// Parameters of one synthetic angiography-like sequence. Videos are
/// (1, frames, height, width) tensors with grey levels nominally in [0, 1].
struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 20;
  std::size_t bg_rank = 3;
  double bg_drift = 0.03; ///< breathing-like modulation amplitude, grey levels
  std::size_t vessel_count = 3;
  double vessel_width_px = 5.0;
  double vessel_peak_intensity = 0.3;
  double vessel_motion_px = 1.5; ///< cardiac displacement amplitude
  double noise_a = 0.004;        ///< variance slope: sigma^2 = a*s + b
  double noise_b = 0.0004;
  bool static_edges = true; ///< spine-like high-contrast static band
  std::uint64_t seed = 1;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

struct VesselLayer {
  Tensor intensity; ///< V
  Tensor mask;      ///< 1 where V > 0, else 0
};

struct GroundTruth {
  Tensor background;
  Tensor vessel_layer;
  Tensor vessel_mask;
  Tensor noise;
};

struct Scene {
  Tensor observed; ///< D = clip(B + V + eta, 0, 1), rounded to float32
  GroundTruth truth;
  double clipped_fraction = 0.0;
};

/// Sum of bg_rank separable terms (smooth spatial field x smooth temporal
/// coefficient curve). The matrix view has rank exactly bg_rank.
Tensor make_background(const SceneSpec &spec);

/// Curvilinear tubes with a parabolic cross-section
/// peak * (1 - (d/w)^2)+, w = width/2, whose visible length grows over the
/// frames (contrast propagation) while the whole tube oscillates (heartbeat).
VesselLayer make_vessels(const SceneSpec &spec);

/// clean + eta, eta ~ N(0, a*s + b) per pixel with s the clean value.
/// Not clipped; make_scene() clips the composed observation.
Tensor add_noise(const Tensor &clean, const SceneSpec &spec);

Scene make_scene(const SceneSpec &spec);

/// Centerline of vessel `index` in frame 0 coordinates (row, col pairs), as
/// used by make_vessels. Exposed for tests.
std::vector<std::pair<double, double>> vessel_centerline(const SceneSpec &spec, std::size_t index);

} // namespace msrpb::synth
