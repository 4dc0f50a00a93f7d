#include <gtest/gtest.h>

#include <random>

#include "cvalue/linalg.hpp"
#include "oracles.hpp"

namespace {

using cvalue::Mat;
using cvalue::Vec;

TEST(SymMatrixSqrt, Identity) {
  const Mat s = cvalue::sym_matrix_sqrt(Mat::Identity(5, 5));
  EXPECT_LT((s - Mat::Identity(5, 5)).norm(), 1e-14);
}

TEST(SymMatrixSqrt, DiagonalIsElementwise) {
  Vec d(4);
  d << 4.0, 9.0, 0.25, 2.0;
  const Mat s = cvalue::sym_matrix_sqrt(d.asDiagonal());
  EXPECT_LT((s - Mat(d.cwiseSqrt().asDiagonal())).norm(), 1e-14);
}

TEST(SymMatrixSqrt, ReconstructsRandomSpd) {
  std::mt19937_64 rng(7);
  for (int n : {2, 10, 60}) {
    const Mat sigma = oracle::random_spd(n, rng);
    const Mat s = cvalue::sym_matrix_sqrt(sigma);
    EXPECT_LT((s * s - sigma).norm() / sigma.norm(), 1e-10);
    EXPECT_LT((s - s.transpose()).norm(), 1e-14);
  }
}

TEST(SymMatrixSqrt, ClampsTinyNegativeEigenvalues) {
  Mat sigma = Mat::Zero(3, 3);
  sigma(0, 0) = 1.0;
  sigma(1, 1) = -1e-12;
  EXPECT_NO_THROW(cvalue::sym_matrix_sqrt(sigma));
  sigma(1, 1) = -1e-6;
  EXPECT_THROW(cvalue::sym_matrix_sqrt(sigma), cvalue::DomainError);
}

TEST(SymMatrixSqrt, RejectsNonSymmetric) {
  Mat m = Mat::Identity(2, 2);
  m(0, 1) = 0.5;
  EXPECT_THROW(cvalue::sym_matrix_sqrt(m), cvalue::DomainError);
  EXPECT_THROW(cvalue::sym_matrix_sqrt(Mat::Identity(2, 3)), cvalue::DimensionError);
}

TEST(OperatorNorm, MatchesLargestSingularValue) {
  std::mt19937_64 rng(11);
  const Mat m = oracle::random_matrix(8, 8, rng);
  Eigen::JacobiSVD<Mat> svd(m);
  EXPECT_NEAR(cvalue::operator_norm(m), svd.singularValues()(0), 1e-10 * svd.singularValues()(0));
}

TEST(ConditionNumber, ScaleFreeAndInfiniteWhenSingular) {
  std::mt19937_64 rng(12);
  const Mat m = oracle::random_spd(6, rng);
  EXPECT_NEAR(cvalue::condition_number(3.7 * m), cvalue::condition_number(m), 1e-9 * cvalue::condition_number(m));
  EXPECT_DOUBLE_EQ(cvalue::condition_number(Mat::Identity(4, 4)), 1.0);
  Mat s = Mat::Identity(3, 3);
  s(2, 2) = 0.0;
  EXPECT_TRUE(std::isinf(cvalue::condition_number(s)));
}

TEST(Projector, AnnihilatesColumnSpace) {
  std::mt19937_64 rng(13);
  const Mat x = oracle::random_matrix(9, 3, rng);
  const Mat p = cvalue::orthocomplement_projector(x);
  EXPECT_LT((p * x).norm(), 1e-12);
  EXPECT_LT((p * p - p).norm(), 1e-12);
  EXPECT_NEAR(p.trace(), 6.0, 1e-12);
  EXPECT_LT((cvalue::orthocomplement_projector(Mat(9, 0)) - Mat::Identity(9, 9)).norm(), 0.0 + 1e-300);
}

TEST(Projector, RejectsRankDeficientDesign) {
  Mat x(4, 2);
  x << 1, 2, 1, 2, 1, 2, 1, 2;
  EXPECT_THROW(cvalue::orthocomplement_projector(x), cvalue::DomainError);
}

TEST(LeastSquares, RecoversCoefficients) {
  std::mt19937_64 rng(14);
  const Mat x = oracle::random_matrix(20, 3, rng);
  const Vec beta = Vec::LinSpaced(3, -1.0, 2.0);
  EXPECT_LT((cvalue::least_squares(x, x * beta) - beta).norm(), 1e-12);
  EXPECT_THROW(cvalue::least_squares(x, Vec::Zero(5)), cvalue::DimensionError);
}

TEST(SpdInverse, InvertsAndRejectsIndefinite) {
  std::mt19937_64 rng(15);
  const Mat m = oracle::random_spd(5, rng);
  EXPECT_LT((cvalue::spd_inverse(m, "test") * m - Mat::Identity(5, 5)).norm(), 1e-10);
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1.0;
  EXPECT_THROW(cvalue::spd_inverse(bad, "test"), cvalue::DomainError);
}

}  // namespace
