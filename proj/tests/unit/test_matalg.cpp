#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "skf/matalg.hpp"

using namespace skf;

namespace {

Matrix random_spd(Index n, double cond, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector ev(n);
  for (Index i = 0; i < n; ++i) ev(i) = std::pow(cond, -static_cast<double>(i) / static_cast<double>(std::max<Index>(1, n - 1)));
  Matrix x = q * ev.asDiagonal() * q.transpose();
  symmetrize(x);
  return x;
}

// Reference root through the eigendecomposition.
Matrix eig_power(const Matrix& x, double power) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(x);
  return es.eigenvectors() * es.eigenvalues().array().pow(power).matrix().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

TEST(SpdMatrix, DiagonalRootsAreElementwise) {
  const SpdMatrix x = SpdMatrix::diagonal(Vector::Map(std::vector<double>{4.0, 9.0, 0.25}.data(), 3));
  const RootResult r = spd_sqrt(x);
  EXPECT_NEAR(r.value(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(r.value(1, 1), 3.0, 1e-12);
  EXPECT_NEAR(r.value(2, 2), 0.5, 1e-12);
  EXPECT_NEAR(r.value(0, 1), 0.0, 1e-14);
  const RootResult ri = spd_inv_sqrt(x);
  EXPECT_NEAR(ri.value(1, 1), 1.0 / 3.0, 1e-12);
}

TEST(SpdMatrix, SqrtMatchesEigenReference) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const Matrix x = random_spd(25, 1e4, seed);
    const RootResult r = spd_sqrt(SpdMatrix(x));
    const Matrix ref = eig_power(x, 0.5);
    EXPECT_LT((r.value - ref).norm() / ref.norm(), 1e-9);
    EXPECT_LT((r.value * r.value - x).norm() / x.norm(), 1e-10);
    EXPECT_LE(r.residual, 1e-11);
    EXPECT_LT(symmetry_defect(r.value), 1e-13);
  }
}

TEST(SpdMatrix, InverseSqrtMatchesEigenReference) {
  const Matrix x = random_spd(30, 1e4, 7);
  const RootResult r = spd_inv_sqrt(SpdMatrix(x), {1e-9, 100});
  const Matrix ref = eig_power(x, -0.5);
  EXPECT_LT((r.value - ref).norm() / ref.norm(), 1e-9);
  EXPECT_LE((r.value * x * r.value - Matrix::Identity(30, 30)).norm(), 1e-9);
}

TEST(SpdMatrix, LargeRandomResidualContracts) {
  const Matrix x50 = random_spd(50, 1e3, 21);
  const RootResult y = spd_sqrt(SpdMatrix(x50), {1e-10, 100});
  EXPECT_LE((y.value * y.value - x50).norm() / x50.norm(), 1e-10);
  const Matrix x100 = random_spd(100, 1e3, 22);
  const RootResult z = spd_inv_sqrt(SpdMatrix(x100), {1e-9, 100});
  EXPECT_LE((z.value * x100 * z.value - Matrix::Identity(100, 100)).norm(), 1e-9);
}

TEST(SpdMatrix, IllConditionedSqrtStaysAccurate) {
  const Matrix x = random_spd(40, 1e10, 11);
  const RootResult r = spd_sqrt(SpdMatrix(x), {1e-10, 100});
  EXPECT_LT((r.value * r.value - x).norm() / x.norm(), 1e-9);
}

TEST(SpdMatrix, SmallAsymmetryIsRepaired) {
  Matrix x = random_spd(6, 10.0, 5);
  x(0, 1) += 1e-10;
  const SpdMatrix s(x);
  EXPECT_TRUE(s.symmetrized());
  EXPECT_EQ(symmetry_defect(s.matrix()), 0.0);
  EXPECT_TRUE(spd_sqrt(s).input_symmetrized);
}

TEST(SpdMatrix, LargeAsymmetryIsRejected) {
  Matrix x = random_spd(6, 10.0, 5);
  x(0, 1) += 1e-3;
  EXPECT_THROW(SpdMatrix{x}, DomainError);
}

TEST(SpdMatrix, RejectsNonSquareEmptyAndNonFinite) {
  EXPECT_THROW(SpdMatrix(Matrix::Zero(2, 3)), DomainError);
  EXPECT_THROW(SpdMatrix(Matrix(0, 0)), DomainError);
  Matrix x = Matrix::Identity(3, 3);
  x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(SpdMatrix{x}, DomainError);
}

TEST(SpdMatrix, IndefiniteInputRaisesDomainError) {
  Matrix x = Matrix::Identity(3, 3);
  x(2, 2) = -1.0;
  EXPECT_THROW(spd_sqrt(SpdMatrix(x)), DomainError);
  EXPECT_THROW(spd_solve(SpdMatrix(x), Vector::Ones(3)), DomainError);
}

TEST(SpdMatrix, NonPositiveToleranceRejected) {
  EXPECT_THROW(spd_sqrt(SpdMatrix::identity(3), {0.0, 10}), DomainError);
  EXPECT_THROW(spd_inv_sqrt(SpdMatrix::identity(3), {-1.0, 10}), DomainError);
}

TEST(SpdMatrix, IterationBudgetExhaustionRaises) {
  const Matrix x = random_spd(10, 1e8, 3);
  try {
    spd_sqrt(SpdMatrix(x), {1e-14, 1});
    FAIL() << "expected IterationFailure";
  } catch (const IterationFailure& e) {
    EXPECT_EQ(e.iterations(), 1);
    EXPECT_GT(e.last_residual(), 1e-14);
  }
}

TEST(SpdSolve, MatchesNaiveInverse) {
  const Matrix x = random_spd(12, 100.0, 9);
  const Matrix b = Matrix::Random(12, 3);
  const Matrix sol = spd_solve(SpdMatrix(x), b);
  EXPECT_LT((sol - x.inverse() * b).norm(), 1e-10);
  EXPECT_THROW(spd_solve(SpdMatrix(x), Matrix::Ones(5, 1)), PreconditionError);
}

TEST(BlockSpdMatrix, AssembleSplitRoundTrip) {
  const Matrix full = random_spd(8, 50.0, 4);
  const BlockSpdMatrix b = BlockSpdMatrix::split(full, 4);
  EXPECT_EQ(b.block_dim(), 4);
  EXPECT_LT((b.assemble() - full).norm(), 1e-15);
  EXPECT_LT((block_extract_marginal(b).matrix() - full.topLeftCorner(4, 4)).norm(), 1e-15);
  EXPECT_LT((b.c - full.bottomLeftCorner(4, 4)).norm(), 1e-15);
}
