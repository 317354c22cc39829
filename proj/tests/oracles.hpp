#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msrpb/conv.hpp"
#include "msrpb/tensor.hpp"

// Independent reference computations and helpers shared by the unit tests and
// the acceptance binary. Nothing here calls the routine it checks.
namespace msrpb::oracle {

using Rng = std::mt19937_64;

Tensor random_tensor(const std::vector<std::size_t> &shape, Rng &rng, double scale = 1.0);
Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng, double scale = 1.0);

/// argmin_X tau*||X||_* + 1/2||X - M||^2 by block-coordinate descent on the
/// factorised objective 1/2||A B^T - M||^2 + tau/2 (||A||^2 + ||B||^2), whose
/// minimum over full-width factors equals the nuclear-norm prox. Each block
/// update is a ridge solve, so no SVD is involved. Stops when the gradient of
/// the factorised objective falls below `stationarity`.
struct ProxResult {
  Eigen::MatrixXd x;
  double stationarity = 0.0;
  std::size_t sweeps = 0;
};
ProxResult nuclear_prox_descent(const Eigen::MatrixXd &m, double tau, double stationarity = 1e-10,
                                std::size_t max_sweeps = 1000000, std::uint64_t seed = 1);

/// argmin_v tau*||v|| + 1/2||v - r||^2 by bisection on the stationarity of the length
/// of v along r (any orthogonal component only increases both terms).
Eigen::VectorXd row_shrink_minimize(const Eigen::VectorXd &r, double tau);

/// Direct six-loop convolution: out[a,p] = bias[a] + sum_{b,k} w[a,b,k] x[b, p*stride + k - pad].
Tensor direct_conv3(const Tensor &x, const ConvKernel &k);

/// Otsu by trying all 255 splits of a 256-bin histogram over [min, max] and
/// evaluating the between-class variance from the pixels of each class
/// directly (bin centres as values). Returns the last background bin.
std::size_t otsu_brute_force(const std::vector<double> &values);

double pearson(const Tensor &a, const Tensor &b);

/// Normwise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
/// over up to `max_entries` randomly chosen entries of `param`, using central
/// differences of `loss` with step h. `param` is restored afterwards.
struct GradCheck {
  double relative_error = 0.0;
  std::size_t entries = 0;
};
GradCheck check_gradient(const std::function<double()> &loss, Tensor &param, const Tensor &analytic, double h,
                         std::size_t max_entries, Rng &rng, double floor = 1e-9);

/// Planted RPCA instance D = L0 + S0: L0 has rank 2, S0 has nonzero rows on
/// `outlier_rows` only. The outlier rows of L0 are zero and the outliers lie in
/// the orthogonal complement of the row space of L0, which makes the split
/// identifiable under the row-group penalty.
struct Planted {
  Eigen::MatrixXd D, L0, S0;
  std::vector<Eigen::Index> outlier_rows;
};
Planted planted_rpca(Eigen::Index rows = 64, Eigen::Index cols = 16, double low_rank_scale = 5.0,
                     double outlier_norm = 12.0, std::uint64_t seed = 5);

/// Fresh directory under the system temp path.
std::string temp_dir(const std::string &tag);

} // namespace msrpb::oracle
