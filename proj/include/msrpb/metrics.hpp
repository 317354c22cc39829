#pragma once

#include <cstddef>
#include <vector>

#include "msrpb/tensor.hpp"

namespace msrpb::metrics {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Pixelwise counts of two binary masks of equal shape (nonzero = foreground).
ConfusionCounts confusion(const Tensor &predicted, const Tensor &truth);

struct DetectionScores {
  double dr = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
};

/// DR = tp/(tp+fn), P = tp/(tp+fp), F = 2 DR P / (DR + P).
/// Throws UndefinedMetricError naming the empty denominator. F is 0 when
/// DR = P = 0.
DetectionScores dr_p_f(const ConfusionCounts &c);

/// |mu_V - mu_B| / sqrt(var_B + var_V) with population variances over the
/// pixels selected by the two masks. `image`, `vessel` and `background` share
/// one shape. Throws UndefinedMetricError for empty or overlapping regions and
/// for the 0/0 case.
double cnr(const Tensor &image, const Tensor &vessel, const Tensor &background);

/// Per-frame CNR of a (1,T,H,W) sequence averaged over frames whose vessel
/// and background regions are both nonempty.
double cnr_sequence(const Tensor &video, const Tensor &vessel, const Tensor &background);

struct BackgroundRegions {
  Tensor global; ///< complement of the vessel mask
  Tensor local;  ///< chessboard dilation by `radius` minus the vessel mask
};

/// Works frame by frame on (1,T,H,W) masks, or on a single (H,W) mask.
BackgroundRegions background_regions(const Tensor &vessel_mask, std::size_t radius = 7);

constexpr std::size_t kOtsuBins = 256;

struct OtsuThreshold {
  double low = 0.0;    ///< histogram range
  double high = 0.0;
  std::size_t bin = 0; ///< last bin of the background class
  double value = 0.0;  ///< boundary between bin and bin + 1

  std::size_t bin_of(double v) const;
  bool foreground(double v) const { return bin_of(v) > bin; }
};

/// Threshold maximising the between-class variance of a 256-bin histogram
/// spanning [min, max]. Class means use bin centres. The first maximum wins.
/// Throws InputError for constant or non-finite input.
OtsuThreshold otsu_threshold(const std::vector<double> &values);
OtsuThreshold otsu_threshold(const Tensor &values);

/// Binary mask of values above the Otsu threshold.
Tensor otsu(const Tensor &values);

} // namespace msrpb::metrics
