#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "msrpb/linalg.hpp"
#include "msrpb/tensor.hpp"

namespace msrpb::rpca {

/// Batch solver for 1/2||D - L - S||_F^2 + lambda1 ||L||_* + lambda2 ||S||_{1,2}
/// by proximal gradient steps on (L, S) jointly.
struct SolverConfig {
  /// Non-positive means 1/sqrt(max(rows, cols)) of the matrix being solved.
  double lambda1 = 0.0;
  double lambda2 = 0.1;
  double lipschitz = 2.0;
  std::size_t max_iters = 500;
  double tol = 1e-7; ///< stop when |delta objective| / objective < tol

  void validate() const;
  double lambda1_for(Eigen::Index rows, Eigen::Index cols) const;
};

struct DecompositionResult {
  MatrixView L;
  MatrixView S;
  std::vector<double> objective_trace; ///< entry 0 is the initial point
  std::size_t iterations_run = 0;
  bool converged = false;
};

double objective(const MatrixView &D, const MatrixView &L, const MatrixView &S, double lambda1,
                 double lambda2);
double objective(const MatrixView &D, const MatrixView &L, const MatrixView &S, const SolverConfig &cfg);

struct Iterate {
  MatrixView L;
  MatrixView S;
  double nuclear_L = 0.0; ///< ||L||_*, free from the SVT
};

Iterate ista_step(const MatrixView &D, const MatrixView &L, const MatrixView &S, const SolverConfig &cfg);

DecompositionResult solve(const MatrixView &D, const SolverConfig &cfg,
                          const std::optional<std::pair<MatrixView, MatrixView>> &init = std::nullopt);

struct WeakLabel {
  Tensor vessel_layer; ///< S inside the mask, zero outside
  Tensor vessel_mask;
  Tensor sparse;       ///< S
  Tensor background;   ///< L
};

/// Weak supervision target for one (1,T,H,W) video: S from solve(), masked by
/// Otsu on |S|. An all-zero S gives an empty mask.
WeakLabel weak_label(const Tensor &video, const SolverConfig &cfg);

struct Lambda2Choice {
  double lambda2 = 0.0;
  double f_measure = 0.0;
  std::vector<double> scores; ///< mean F per grid entry
};

/// Grid search of lambda2 by mean weak-label F-measure against planted masks
/// (validation sequences only).
Lambda2Choice tune_lambda2(const std::vector<Tensor> &videos, const std::vector<Tensor> &masks,
                           const SolverConfig &base, const std::vector<double> &grid);

} // namespace msrpb::rpca
