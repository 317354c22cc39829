#include "msrpb/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "msrpb/errors.hpp"

namespace msrpb {

namespace {

void require_finite(const MatrixView &m, const char *what) {
  if (!m.allFinite())
    throw InputError(std::string(what) + ": non-finite input");
}

std::pair<std::size_t, std::size_t> video_dims(const Tensor &v) {
  const auto &s = v.shape();
  if (s.size() == 3)
    return {s[1] * s[2], s[0]};
  if (s.size() == 4 && s[0] == 1)
    return {s[2] * s[3], s[1]};
  throw ContractError("matrix view needs a (T,H,W) or (1,T,H,W) tensor, got " + shape_string(s));
}

} // namespace

MatrixView matrix_view(const Tensor &video) {
  const auto [rows, cols] = video_dims(video);
  return Eigen::Map<const Eigen::MatrixXd>(video.data(), static_cast<Eigen::Index>(rows),
                                           static_cast<Eigen::Index>(cols));
}

Tensor from_matrix_view(const MatrixView &m, const std::vector<std::size_t> &shape) {
  Tensor out(shape);
  const auto [rows, cols] = video_dims(out);
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols)
    throw ContractError("matrix view does not match shape " + shape_string(shape));
  Eigen::Map<Eigen::MatrixXd>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

double nuclear_norm(const MatrixView &m) {
  if (m.size() == 0)
    return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().sum();
}

double mixed_norm_12(const MatrixView &m) { return m.rowwise().norm().sum(); }

double soft_threshold(double x, double tau) {
  const double mag = std::abs(x) - tau;
  if (mag <= 0.0)
    return 0.0;
  return x > 0.0 ? mag : -mag;
}

Tensor soft_threshold(const Tensor &x, double tau) {
  if (tau < 0.0)
    throw ContractError("soft_threshold: negative threshold");
  if (!all_finite(x))
    throw InputError("soft_threshold: non-finite input");
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = soft_threshold(x[i], tau);
  return out;
}

MatrixView svt(const MatrixView &m, double tau, SvtCache *cache) {
  if (tau < 0.0)
    throw ContractError("svt: negative threshold");
  require_finite(m, "svt");
  const bool transposed = m.rows() < m.cols();
  const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(m.transpose()) : m;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd &s = svd.singularValues();
  Eigen::VectorXd f(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    f[i] = s[i] > tau ? s[i] - tau : 0.0;
  Eigen::MatrixXd out = svd.matrixU() * f.asDiagonal() * svd.matrixV().transpose();
  if (cache) {
    cache->u = svd.matrixU();
    cache->sigma = s;
    cache->v = svd.matrixV();
    cache->tau = tau;
    cache->transposed = transposed;
  }
  return transposed ? Eigen::MatrixXd(out.transpose()) : out;
}

SvtGrad svt_backward(const SvtCache &c, const MatrixView &grad_out) {
  const Eigen::MatrixXd g = c.transposed ? Eigen::MatrixXd(grad_out.transpose()) : grad_out;
  const Eigen::Index n = c.sigma.size();
  const Eigen::VectorXd &s = c.sigma;
  const double smax = n ? s.maxCoeff() : 0.0;
  const double eps = 1e-6 * smax;

  auto f = [&](double x) { return x > c.tau ? x - c.tau : 0.0; };
  auto slope = [&](double x) { return x > c.tau ? 1.0 : 0.0; };

  SvtGrad out;
  const Eigen::MatrixXd gv = g * c.v;
  const Eigen::MatrixXd gh = c.u.transpose() * gv;
  Eigen::MatrixXd core(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        core(i, i) = slope(s[i]) * gh(i, i);
        continue;
      }
      const double sym = 0.5 * (gh(i, j) + gh(j, i));
      const double skew = 0.5 * (gh(i, j) - gh(j, i));
      double a;
      const double gap = s[i] - s[j];
      if (std::abs(gap) < eps) {
        a = slope(0.5 * (s[i] + s[j]));
        if (s[i] > c.tau || s[j] > c.tau)
          out.degenerate = true;
      } else {
        a = (f(s[i]) - f(s[j])) / gap;
      }
      const double sum = s[i] + s[j];
      const double b = sum < eps ? 0.0 : (f(s[i]) + f(s[j])) / sum;
      core(i, j) = a * sym + b * skew;
    }
  }

  Eigen::VectorXd ratio(n);
  for (Eigen::Index i = 0; i < n; ++i)
    ratio[i] = s[i] < eps || s[i] == 0.0 ? 0.0 : f(s[i]) / s[i];
  const Eigen::MatrixXd residual = gv - c.u * gh; // (I - U U^T) G V
  Eigen::MatrixXd grad = c.u * core * c.v.transpose() + residual * ratio.asDiagonal() * c.v.transpose();

  double gtau = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (s[i] > c.tau)
      gtau -= gh(i, i);

  out.input = c.transposed ? Eigen::MatrixXd(grad.transpose()) : grad;
  out.tau = gtau;
  return out;
}

MatrixView row_group_shrink(const MatrixView &s, double tau) {
  if (tau < 0.0)
    throw ContractError("row_group_shrink: negative threshold");
  require_finite(s, "row_group_shrink");
  MatrixView out = MatrixView::Zero(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double norm = s.row(r).norm();
    if (norm > tau)
      out.row(r) = s.row(r) * (1.0 - tau / norm);
  }
  return out;
}

ShrinkGrad row_group_shrink_backward(const MatrixView &x, double tau, const MatrixView &g) {
  ShrinkGrad out;
  out.input = MatrixView::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm <= tau)
      continue;
    const double rg = x.row(r).dot(g.row(r));
    out.input.row(r) = (1.0 - tau / norm) * g.row(r) + (tau * rg / (norm * norm * norm)) * x.row(r);
    out.tau -= rg / norm;
  }
  return out;
}

} // namespace msrpb
