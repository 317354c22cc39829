#include <gtest/gtest.h>

#include <cmath>

#include "msrpb/errors.hpp"
#include "msrpb/linalg.hpp"
#include "oracles.hpp"

using namespace msrpb;

TEST(SoftThreshold, ScalarCases) {
  EXPECT_DOUBLE_EQ(soft_threshold(1.2, 0.5), 0.7);
  EXPECT_EQ(soft_threshold(-0.3, 0.5), 0.0);
  EXPECT_EQ(soft_threshold(0.5, 0.5), 0.0);
}

TEST(SoftThreshold, TensorIsOddSymmetric) {
  Tensor x({3});
  x[0] = -2;
  x[1] = 0;
  x[2] = 2;
  const Tensor y = soft_threshold(x, 1.0);
  EXPECT_EQ(y[0], -1.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 1.0);
}

TEST(Svt, DiagonalMatrix) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 3;
  m(1, 1) = 1;
  const MatrixView out = svt(m, 2.0);
  EXPECT_NEAR(out(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(out(1, 1), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(out(0, 1)) + std::abs(out(1, 0)), 0.0, 1e-14);
}

TEST(Svt, ZeroThresholdIsIdentity) {
  oracle::Rng rng(3);
  for (auto [r, c] : {std::pair{7, 4}, {4, 7}, {5, 5}}) {
    const Eigen::MatrixXd m = oracle::random_matrix(r, c, rng);
    EXPECT_LT((svt(m, 0.0) - m).norm(), 1e-12);
  }
}

TEST(Svt, MatchesDescentProxOracle) {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd m = oracle::random_matrix(6, 6, rng);
    const auto ref = oracle::nuclear_prox_descent(m, 0.5, 1e-10, 1000000, 100 + trial);
    EXPECT_LT(ref.stationarity, 1e-10);
    EXPECT_LT((svt(m, 0.5) - ref.x).norm(), 1e-6);
  }
}

TEST(Svt, RectangularBothOrientations) {
  oracle::Rng rng(12);
  const Eigen::MatrixXd tall = oracle::random_matrix(9, 4, rng);
  const auto ref = oracle::nuclear_prox_descent(tall, 0.7);
  EXPECT_LT((svt(tall, 0.7) - ref.x).norm(), 1e-6);
  EXPECT_LT((svt(tall.transpose(), 0.7) - ref.x.transpose()).norm(), 1e-6);
}

TEST(Svt, NuclearNormDropsByThresholdPerSurvivingValue) {
  oracle::Rng rng(13);
  const Eigen::MatrixXd m = oracle::random_matrix(8, 5, rng);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  const double tau = s(2);
  double expect = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    expect += std::max(s(i) - tau, 0.0);
  EXPECT_NEAR(nuclear_norm(svt(m, tau)), expect, 1e-10);
}

TEST(Svt, RejectsNegativeThreshold) {
  EXPECT_THROW(svt(Eigen::MatrixXd::Identity(2, 2), -1.0), ContractError);
}

TEST(RowGroupShrink, HandCases) {
  Eigen::MatrixXd r(1, 2);
  r << 3, 4;
  const MatrixView a = row_group_shrink(r, 2.5);
  EXPECT_NEAR(a(0, 0), 1.5, 1e-15);
  EXPECT_NEAR(a(0, 1), 2.0, 1e-15);
  EXPECT_EQ(row_group_shrink(r, 6.0).norm(), 0.0);
  EXPECT_EQ(row_group_shrink(r, 5.0).norm(), 0.0);
  EXPECT_EQ((row_group_shrink(r, 0.0) - r).norm(), 0.0);
}

TEST(RowGroupShrink, MatchesPerRowMinimization) {
  oracle::Rng rng(21);
  const Eigen::MatrixXd s = oracle::random_matrix(30, 5, rng);
  for (double tau : {0.3, 1.0, 2.5}) {
    const MatrixView out = row_group_shrink(s, tau);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const Eigen::VectorXd ref = oracle::row_shrink_minimize(s.row(i).transpose(), tau);
      EXPECT_LT((out.row(i).transpose() - ref).norm(), 1e-8);
    }
  }
}

TEST(Norms, AgainstDirectComputation) {
  oracle::Rng rng(31);
  const Eigen::MatrixXd m = oracle::random_matrix(4, 4, rng);
  EXPECT_NEAR(nuclear_norm(m), Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues().sum(), 1e-12);
  double rows = 0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    double sq = 0;
    for (Eigen::Index j = 0; j < 4; ++j)
      sq += m(i, j) * m(i, j);
    rows += std::sqrt(sq);
  }
  EXPECT_NEAR(mixed_norm_12(m), rows, 1e-12);
}

TEST(MatrixView, RoundTripAndLayout) {
  oracle::Rng rng(41);
  const Tensor v = oracle::random_tensor({1, 3, 4, 5}, rng);
  const MatrixView m = matrix_view(v);
  ASSERT_EQ(m.rows(), 20);
  ASSERT_EQ(m.cols(), 3);
  EXPECT_EQ(m(2 * 5 + 3, 1), v.at(0, 1, 2, 3));
  const Tensor back = from_matrix_view(m, v.shape());
  EXPECT_EQ(max_abs_diff(back, v), 0.0);
}

namespace {

// Central-difference directional derivative of f at m along e.
Eigen::MatrixXd numeric_vjp(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd &)> &f, const Eigen::MatrixXd &m,
                            const Eigen::MatrixXd &g, double h) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      Eigen::MatrixXd up = m, down = m;
      up(i, j) += h;
      down(i, j) -= h;
      out(i, j) = ((f(up) - f(down)).array() * g.array()).sum() / (2 * h);
    }
  return out;
}

} // namespace

TEST(Svt, BackwardMatchesFiniteDifferences) {
  oracle::Rng rng(51);
  for (auto [r, c] : {std::pair{6, 4}, {4, 6}, {5, 5}}) {
    const Eigen::MatrixXd m = oracle::random_matrix(r, c, rng);
    const Eigen::MatrixXd g = oracle::random_matrix(r, c, rng);
    const double tau = 0.8;
    SvtCache cache;
    svt(m, tau, &cache);
    const SvtGrad grad = svt_backward(cache, g);
    EXPECT_FALSE(grad.degenerate);
    const Eigen::MatrixXd num = numeric_vjp([&](const Eigen::MatrixXd &x) { return svt(x, tau); }, m, g, 1e-6);
    EXPECT_LT((grad.input - num).norm() / num.norm(), 1e-6);
    const double h = 1e-6;
    const double dtau = ((svt(m, tau + h) - svt(m, tau - h)).array() * g.array()).sum() / (2 * h);
    EXPECT_NEAR(grad.tau, dtau, 1e-6 * std::max(1.0, std::abs(dtau)));
  }
}

TEST(RowGroupShrink, BackwardMatchesFiniteDifferences) {
  oracle::Rng rng(61);
  const Eigen::MatrixXd s = oracle::random_matrix(12, 4, rng);
  const Eigen::MatrixXd g = oracle::random_matrix(12, 4, rng);
  const double tau = 1.5;
  const ShrinkGrad grad = row_group_shrink_backward(s, tau, g);
  const Eigen::MatrixXd num = numeric_vjp([&](const Eigen::MatrixXd &x) { return row_group_shrink(x, tau); }, s, g, 1e-6);
  EXPECT_LT((grad.input - num).norm() / num.norm(), 1e-7);
  const double h = 1e-6;
  const double dtau = ((row_group_shrink(s, tau + h) - row_group_shrink(s, tau - h)).array() * g.array()).sum() / (2 * h);
  EXPECT_NEAR(grad.tau, dtau, 1e-6);
}
