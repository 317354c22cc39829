#pragma once

#include <cstddef>

#include "msrpb/tensor.hpp"

namespace msrpb {

struct Extent3 {
  std::size_t t = 1, h = 1, w = 1;
  bool operator==(const Extent3 &) const = default;
};

/// Learnable 3-d convolution kernel over (channels, frames, height, width)
/// feature maps. Convolutions are cross-correlations: no kernel flip.
///
/// For an ordinary kernel `weights` has shape (out, in, kt, kh, kw). For a
/// transposed kernel (deconv3) it has shape (in, out, kt, kh, kw), i.e. the
/// layout of the convolution whose adjoint it applies, so that a conv3 kernel
/// and a deconv3 kernel sharing one weight array are exact adjoints.
struct ConvKernel {
  Tensor weights;
  Tensor bias;
  Extent3 stride{};
  Extent3 padding{0, 0, 0};
  bool transposed = false;

  static ConvKernel make(std::size_t out_channels, std::size_t in_channels, Extent3 size,
                         Extent3 stride = {}, Extent3 padding = {0, 0, 0});
  static ConvKernel make_transposed(std::size_t in_channels, std::size_t out_channels, Extent3 size,
                                    Extent3 stride = {}, Extent3 padding = {0, 0, 0});
  /// Stride-1 kernel whose padding keeps the input shape (odd extents only).
  static ConvKernel same(std::size_t out_channels, std::size_t in_channels, Extent3 size);

  std::size_t out_channels() const { return transposed ? weights.dim(1) : weights.dim(0); }
  std::size_t in_channels() const { return transposed ? weights.dim(0) : weights.dim(1); }
  Extent3 size() const { return {weights.dim(2), weights.dim(3), weights.dim(4)}; }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  /// Output shape for a (C, T, H, W) input:
  ///   conv3:   out = (in + 2*pad - k) / stride + 1
  ///   deconv3: out = (in - 1) * stride - 2*pad + k
  std::vector<std::size_t> output_shape(const std::vector<std::size_t> &input) const;
};

/// Strided cross-correlation plus bias. Input (C_in, T, H, W).
Tensor conv3(const Tensor &x, const ConvKernel &k);
/// Transposed convolution plus bias, the adjoint of conv3 for the same weights.
Tensor deconv3(const Tensor &x, const ConvKernel &k);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

ConvGrads conv3_backward(const Tensor &x, const Tensor &grad_out, const ConvKernel &k);
ConvGrads deconv3_backward(const Tensor &x, const Tensor &grad_out, const ConvKernel &k);

/// Non-overlapping spatial mean pooling; frames untouched. H and W must be
/// multiples of `factor`.
Tensor avg_pool(const Tensor &x, std::size_t factor);
Tensor avg_pool_backward(const Tensor &grad_out, std::size_t factor);

namespace kernels {

// The three loop nests every convolution reduces to. OpenMP-parallel over the
// channel that owns each output element, so results do not depend on the
// thread count. `w` is always indexed (a, b, kt, kh, kw).

/// out[a, p] = sum_{b,k} w[a,b,k] * x[b, p*stride + k - pad]
Tensor correlate(const Tensor &x, const Tensor &w, Extent3 stride, Extent3 pad,
                 const std::vector<std::size_t> &out_shape);
/// out[b, p*stride + k - pad] += w[a,b,k] * y[a, p]
Tensor scatter(const Tensor &y, const Tensor &w, Extent3 stride, Extent3 pad,
               const std::vector<std::size_t> &out_shape);
/// gw[a,b,k] = sum_p y[a, p] * x[b, p*stride + k - pad]
Tensor weight_grad(const Tensor &x, const Tensor &y, Extent3 stride, Extent3 pad, Extent3 size);

} // namespace kernels

/// Serial six-loop versions of the kernels above, kept as test oracles and
/// benchmark baselines.
namespace reference {

Tensor correlate(const Tensor &x, const Tensor &w, Extent3 stride, Extent3 pad,
                 const std::vector<std::size_t> &out_shape);
Tensor scatter(const Tensor &y, const Tensor &w, Extent3 stride, Extent3 pad,
               const std::vector<std::size_t> &out_shape);
Tensor weight_grad(const Tensor &x, const Tensor &y, Extent3 stride, Extent3 pad, Extent3 size);

Tensor conv3(const Tensor &x, const ConvKernel &k);
Tensor deconv3(const Tensor &x, const ConvKernel &k);

} // namespace reference

} // namespace msrpb
