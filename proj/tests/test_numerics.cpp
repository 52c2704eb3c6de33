#include "hsics/numerics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace hsics;

namespace {

void expect_valid_svd(const Matrix& a, const SvdResult& f) {
  const Index r = std::min(a.rows(), a.cols());
  ASSERT_EQ(f.u.rows(), a.rows());
  ASSERT_EQ(f.u.cols(), r);
  ASSERT_EQ(f.v.rows(), a.cols());
  ASSERT_EQ(f.v.cols(), r);
  ASSERT_EQ(f.sigma.size(), r);
  for (Index i = 0; i < r; ++i) {
    EXPECT_GE(f.sigma(i), 0.0);
    if (i > 0) EXPECT_LE(f.sigma(i), f.sigma(i - 1));
  }
  const Matrix recomposed = f.u * f.sigma.asDiagonal() * f.v.transpose();
  EXPECT_LE((a - recomposed).norm() / std::max(1.0, a.norm()), 1e-10);
  EXPECT_LE((f.u.transpose() * f.u - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((f.v.transpose() * f.v - Matrix::Identity(r, r)).cwiseAbs().maxCoeff(), 1e-10);
}

} // namespace

TEST(Svd, Identity) {
  const Matrix id = Matrix::Identity(3, 3);
  const SvdResult f = svd(id);
  EXPECT_TRUE(f.sigma.isApprox(Vector::Ones(3)));
  EXPECT_LE((f.u * f.v.transpose() - id).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Svd, DiagonalSortedDescending) {
  Matrix a(2, 2);
  a << 2, 0, 0, 3;
  const SvdResult f = svd(a);
  EXPECT_DOUBLE_EQ(f.sigma(0), 3.0);
  EXPECT_DOUBLE_EQ(f.sigma(1), 2.0);
  expect_valid_svd(a, f);
}

TEST(Svd, WideRandomMatchesGramOracle) {
  std::mt19937_64 rng(11);
  const Matrix a = oracle::random_matrix(10, 25, rng);
  const SvdResult f = svd(a);
  expect_valid_svd(a, f);
  const Vector ref = oracle::gram_singular_values(a);
  for (Index i = 0; i < ref.size(); ++i) EXPECT_NEAR(f.sigma(i), ref(i), 1e-8 * ref(i));
}

TEST(Svd, TallAndRankDeficient) {
  std::mt19937_64 rng(3);
  const Matrix tall = oracle::random_matrix(30, 7, rng);
  expect_valid_svd(tall, svd(tall));

  // rank 2 matrix, 6 x 5
  const Matrix low = oracle::random_matrix(6, 2, rng) * oracle::random_matrix(2, 5, rng);
  const SvdResult f = svd(low);
  expect_valid_svd(low, f);
  EXPECT_LE(f.sigma(2), 1e-12 * f.sigma(0));

  const Matrix zero = Matrix::Zero(4, 3);
  const SvdResult z = svd(zero);
  expect_valid_svd(zero, z);
  EXPECT_EQ(z.sigma.maxCoeff(), 0.0);
}

TEST(Svd, SignConventionIsDeterministic) {
  std::mt19937_64 rng(5);
  const Matrix a = oracle::random_matrix(8, 12, rng);
  const SvdResult f1 = svd(a);
  const SvdResult f2 = svd(a);
  EXPECT_EQ(f1.u, f2.u);
  EXPECT_EQ(f1.v, f2.v);
  for (Index k = 0; k < f1.u.cols(); ++k) {
    Index imax = 0;
    f1.u.col(k).cwiseAbs().maxCoeff(&imax);
    EXPECT_GT(f1.u(imax, k), 0.0);
  }
}

TEST(Svd, RejectsNonFinite) {
  Matrix a = Matrix::Ones(2, 2);
  a(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(svd(a), ValidationError);
}

TEST(Svd, RecompositionProperty) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int trial = 0; trial < 60; ++trial) {
    const Matrix a = oracle::random_matrix(dim(rng), dim(rng), rng);
    expect_valid_svd(a, svd(a));
  }
}

TEST(ConditionNumber, TrivialCases) {
  EXPECT_DOUBLE_EQ(condition_number(Matrix(Matrix::Identity(4, 4))), 1.0);
  Matrix d(2, 2);
  d << 10, 0, 0, 1;
  EXPECT_DOUBLE_EQ(condition_number(d), 10.0);
  Matrix singular(2, 2);
  singular << 1, 0, 0, 0;
  EXPECT_TRUE(std::isinf(condition_number(singular)));
  EXPECT_THROW(condition_number(Matrix(Matrix::Zero(2, 2))), ValidationError);
}

TEST(ConditionNumber, MatchesGramOracleAndIsScaleInvariant) {
  std::mt19937_64 rng(8);
  const Matrix a = oracle::random_matrix(5, 8, rng);
  const Vector ref = oracle::gram_singular_values(a);
  const double expected = ref(0) / ref(ref.size() - 1);
  EXPECT_NEAR(condition_number(a), expected, 1e-8 * expected);
  for (double c : {-3.0, 1e-3, 250.0}) {
    const Matrix scaled = c * a;
    EXPECT_NEAR(condition_number(scaled), condition_number(a), 1e-12 * condition_number(a));
  }
}

TEST(DctBasis, SingleBand) {
  const Matrix psi = dct_basis(1);
  ASSERT_EQ(psi.rows(), 1);
  EXPECT_DOUBLE_EQ(psi(0, 0), 1.0);
}

TEST(DctBasis, ConstantSignalHasOnlyDcCoefficient) {
  const Matrix psi = dct_basis(4);
  const Vector coef = psi.transpose() * Vector::Ones(4);
  EXPECT_NEAR(coef(0), 2.0, 1e-15);
  for (Index k = 1; k < 4; ++k) EXPECT_NEAR(coef(k), 0.0, 1e-15);
}

TEST(DctBasis, OrthonormalAcrossSizes) {
  for (Index d = 1; d <= 512; ++d) {
    const Matrix psi = dct_basis(d);
    EXPECT_LE((psi.transpose() * psi - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12) << "d=" << d;
  }
  const Vector sv = svd(dct_basis(64)).sigma;
  EXPECT_LE((sv - Vector::Ones(64)).cwiseAbs().maxCoeff(), 1e-12);
}
