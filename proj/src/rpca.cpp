#include "msrpb/rpca.hpp"

#include <cmath>
#include <string>

#include "msrpb/errors.hpp"
#include "msrpb/metrics.hpp"

namespace msrpb::rpca {

void SolverConfig::validate() const {
  if (!(lambda2 > 0.0))
    throw ConfigError("solver.lambda2 must be positive");
  if (!(lipschitz >= 2.0))
    throw ConfigError("solver.lipschitz must be at least 2");
  if (!(tol > 0.0))
    throw ConfigError("solver.tol must be positive");
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2))
    throw ConfigError("solver lambdas must be finite");
}

double SolverConfig::lambda1_for(Eigen::Index rows, Eigen::Index cols) const {
  if (lambda1 > 0.0)
    return lambda1;
  return 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>({rows, cols, 1})));
}

double objective(const MatrixView &D, const MatrixView &L, const MatrixView &S, double lambda1,
                 double lambda2) {
  if (D.rows() != L.rows() || D.cols() != L.cols() || D.rows() != S.rows() || D.cols() != S.cols())
    throw ContractError("objective: D, L and S must share a shape");
  return 0.5 * (D - L - S).squaredNorm() + lambda1 * nuclear_norm(L) + lambda2 * mixed_norm_12(S);
}

double objective(const MatrixView &D, const MatrixView &L, const MatrixView &S, const SolverConfig &cfg) {
  return objective(D, L, S, cfg.lambda1_for(D.rows(), D.cols()), cfg.lambda2);
}

Iterate ista_step(const MatrixView &D, const MatrixView &L, const MatrixView &S, const SolverConfig &cfg) {
  if (D.rows() != L.rows() || D.cols() != L.cols() || D.rows() != S.rows() || D.cols() != S.cols())
    throw ContractError("ista_step: D, L and S must share a shape");
  const double step = 1.0 / cfg.lipschitz;
  const double lambda1 = cfg.lambda1_for(D.rows(), D.cols());
  // Both blocks take the gradient at the same point (L, S).
  const MatrixView residual = step * (D - L - S);
  SvtCache cache;
  Iterate next;
  next.L = svt(L + residual, lambda1 * step, &cache);
  next.S = row_group_shrink(S + residual, cfg.lambda2 * step);
  for (Eigen::Index i = 0; i < cache.sigma.size(); ++i)
    next.nuclear_L += std::max(cache.sigma[i] - cache.tau, 0.0);
  return next;
}

DecompositionResult solve(const MatrixView &D, const SolverConfig &cfg,
                          const std::optional<std::pair<MatrixView, MatrixView>> &init) {
  cfg.validate();
  if (!D.allFinite())
    throw InputError("solve: non-finite data");
  const double lambda1 = cfg.lambda1_for(D.rows(), D.cols());

  DecompositionResult r;
  if (init) {
    r.L = init->first;
    r.S = init->second;
  } else {
    r.L = MatrixView::Zero(D.rows(), D.cols());
    r.S = MatrixView::Zero(D.rows(), D.cols());
  }
  double obj = objective(D, r.L, r.S, lambda1, cfg.lambda2);
  r.objective_trace.push_back(obj);

  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    Iterate next = ista_step(D, r.L, r.S, cfg);
    const double value = 0.5 * (D - next.L - next.S).squaredNorm() + lambda1 * next.nuclear_L +
                         cfg.lambda2 * mixed_norm_12(next.S);
    if (!std::isfinite(value))
      throw DivergenceError("solve: non-finite objective at iteration " + std::to_string(k + 1));
    r.L = std::move(next.L);
    r.S = std::move(next.S);
    r.objective_trace.push_back(value);
    r.iterations_run = k + 1;
    const double change = std::abs(obj - value);
    obj = value;
    if (value == 0.0 || change <= cfg.tol * value) {
      r.converged = true;
      break;
    }
  }
  return r;
}

WeakLabel weak_label(const Tensor &video, const SolverConfig &cfg) {
  const DecompositionResult r = solve(matrix_view(video), cfg);
  WeakLabel out;
  out.vessel_layer = from_matrix_view(r.S, video.shape());
  out.sparse = out.vessel_layer;
  out.background = from_matrix_view(r.L, video.shape());
  out.vessel_mask = Tensor::like(video);
  Tensor magnitude = Tensor::like(video);
  double peak = 0.0;
  for (std::size_t i = 0; i < magnitude.size(); ++i) {
    magnitude[i] = std::abs(out.vessel_layer[i]);
    peak = std::max(peak, magnitude[i]);
  }
  if (peak > 0.0)
    out.vessel_mask = metrics::otsu(magnitude);
  for (std::size_t i = 0; i < magnitude.size(); ++i)
    if (out.vessel_mask[i] == 0.0)
      out.vessel_layer[i] = 0.0;
  return out;
}

Lambda2Choice tune_lambda2(const std::vector<Tensor> &videos, const std::vector<Tensor> &masks,
                           const SolverConfig &base, const std::vector<double> &grid) {
  if (videos.empty() || videos.size() != masks.size())
    throw ContractError("tune_lambda2: need matching nonempty video and mask lists");
  if (grid.empty())
    throw ConfigError("tune_lambda2: empty lambda2 grid");
  Lambda2Choice choice;
  choice.f_measure = -1.0;
  for (double lambda2 : grid) {
    SolverConfig cfg = base;
    cfg.lambda2 = lambda2;
    double total = 0.0;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      const WeakLabel label = weak_label(videos[i], cfg);
      const metrics::ConfusionCounts c = metrics::confusion(label.vessel_mask, masks[i]);
      double f = 0.0;
      if (c.tp > 0)
        f = metrics::dr_p_f(c).f_measure;
      total += f;
    }
    const double mean = total / static_cast<double>(videos.size());
    choice.scores.push_back(mean);
    if (mean > choice.f_measure) {
      choice.f_measure = mean;
      choice.lambda2 = lambda2;
    }
  }
  return choice;
}

} // namespace msrpb::rpca
