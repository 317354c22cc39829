#pragma once

#include <Eigen/Dense>

#include "msrpb/tensor.hpp"

namespace msrpb {

/// Pixels x frames matrix view of a video (rows = pixel trajectories).
using MatrixView = Eigen::MatrixXd;

/// (H*W) x T view of a (T,H,W) or (1,T,H,W) tensor. Lossless; the inverse is
/// `from_matrix_view` with the original shape.
MatrixView matrix_view(const Tensor &video);
Tensor from_matrix_view(const MatrixView &m, const std::vector<std::size_t> &shape);

double nuclear_norm(const MatrixView &m);
/// Sum of row l2 norms.
double mixed_norm_12(const MatrixView &m);

double soft_threshold(double x, double tau);
Tensor soft_threshold(const Tensor &x, double tau);

/// Forward state kept for the SVT differential.
struct SvtCache {
  Eigen::MatrixXd u; // m x n, m >= n (after an internal transpose)
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v; // n x n
  double tau = 0.0;
  bool transposed = false;
};

/// Singular value thresholding: U diag(max(sigma - tau, 0)) V^T, the prox of
/// tau*||.||_*. Singular values equal to tau map to zero.
MatrixView svt(const MatrixView &m, double tau, SvtCache *cache = nullptr);

struct SvtGrad {
  MatrixView input;
  double tau = 0.0;
  bool degenerate = false; ///< some singular-value gap fell below 1e-6*sigma_max
};

/// Vector-Jacobian product of svt. The Jacobian of a prox of a convex spectral
/// function is self-adjoint, so this is also the directional derivative.
///   core_ij = (f_i - f_j)/(s_i - s_j) sym_ij + (f_i + f_j)/(s_i + s_j) skew_ij
///   core_ii = f'(s_i) G^_ii,       G^ = U^T G V
///   grad    = U core V^T + (I - U U^T) G V diag(f/s) V^T
/// Near-equal singular values use the limiting slope and set `degenerate`.
SvtGrad svt_backward(const SvtCache &cache, const MatrixView &grad_out);

/// Prox of tau * sum_rows ||row||_2: each row r -> r * max(0, 1 - tau/||r||).
MatrixView row_group_shrink(const MatrixView &s, double tau);

struct ShrinkGrad {
  MatrixView input;
  double tau = 0.0;
};

ShrinkGrad row_group_shrink_backward(const MatrixView &input, double tau, const MatrixView &grad_out);

} // namespace msrpb
