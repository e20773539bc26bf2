#include <gtest/gtest.h>

#include <cmath>

#include "evd/matgen.hpp"
#include "evd/tridiag.hpp"
#include "evd/verify.hpp"
#include "oracles.hpp"

using namespace evd;

TEST(BackwardError, ExactDecomposition) {
  for (index_t n : {8, 40}) {
    auto lam = eigen_spectrum({SpectrumKind::Uniform, n, 1e8, 1e6, 1});
    Matrix v = random_orthogonal(n, 2);
    auto a = assemble(v.view(), lam);
    EXPECT_LE(backward_error(a.view(), v.view(), lam), 4 * n * kEps);
  }
}

TEST(BackwardError, IdentityQOnDenseA) {
  Matrix a = oracle::random_symmetric(6, 3);
  std::vector<double> diag;
  double off = 0;
  for (index_t j = 0; j < 6; ++j)
    for (index_t i = 0; i < 6; ++i) {
      if (i == j) diag.push_back(a(i, i));
      else off += a(i, j) * a(i, j);
    }
  EXPECT_NEAR(backward_error(a.view(), Matrix::identity(6).view(), diag), std::sqrt(off) / (6 * oracle::frob(a)),
              1e-15);
}

TEST(BackwardError, ShapeMismatch) {
  EXPECT_THROW(backward_error(Matrix(3, 3).view(), Matrix(3, 3).view(), std::vector<double>{1, 2}), ShapeError);
}

TEST(Orthogonality, Examples) {
  EXPECT_EQ(orthogonality(Matrix::identity(5).view()), 0.0);
  Matrix q = Matrix::identity(2);
  q(0, 0) = q(1, 1) = 2;
  EXPECT_NEAR(orthogonality(q.view()), 3 * std::sqrt(2.0) / 2, 1e-15);
  EXPECT_LE(orthogonality(random_orthogonal(64, 5).view()), 2 * kEps * 16);
  EXPECT_THROW(orthogonality(Matrix(2, 3).view()), ShapeError);
}

TEST(AccuracyReport, BoundFlagAndJson) {
  Matrix v = random_orthogonal(16, 1);
  auto lam = eigen_spectrum({SpectrumKind::Geometric, 16, 1e8, 1e6, 0});
  auto a = assemble(v.view(), lam);
  auto r = accuracy_report(a.view(), v.view(), lam);
  EXPECT_TRUE(r.bound_ok);
  EXPECT_GE(r.backward, 0.0);
  EXPECT_EQ(r.bound_ok, r.ortho <= 2 * r.eps * r.slack);
  nlohmann::json j = r;
  EXPECT_EQ(j["bound_ok"], true);
  EXPECT_EQ(j["slack"], 16.0);
  v(3, 3) += 1e-3;
  EXPECT_FALSE(accuracy_report(a.view(), v.view(), lam).bound_ok);
  auto tight = accuracy_report(a.view(), random_orthogonal(16, 1).view(), lam, 0.0);
  EXPECT_EQ(tight.bound_ok, tight.ortho == 0.0);
}

TEST(Jacobi, DiagonalAndSwap) {
  Matrix d(3, 3);
  d(0, 0) = 3, d(1, 1) = -2, d(2, 2) = 0.5;
  EXPECT_EQ(jacobi_eig_oracle(d.view()), (std::vector<double>{-2, 0.5, 3}));
  Matrix s(2, 2);
  s(0, 1) = s(1, 0) = 1;
  auto l = jacobi_eig_oracle(s.view());
  EXPECT_NEAR(l[0], -1, 1e-15);
  EXPECT_NEAR(l[1], 1, 1e-15);
}

TEST(Jacobi, VectorsDiagonalize) {
  Matrix a = oracle::random_symmetric(20, 4);
  auto r = jacobi_eig(a.view(), true);
  EXPECT_LE(orthogonality(r.vectors.view()), 2 * kEps * 16);
  EXPECT_LE(backward_error(a.view(), r.vectors.view(), r.values), 1e-15);
  EXPECT_GT(r.sweeps, 0);
}

TEST(Jacobi, AgreesWithTridiagSolver) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Matrix t = oracle::random_matrix(32, 2, 10 + seed);
    TridiagonalMatrix tm;
    for (index_t i = 0; i < 32; ++i) tm.d.push_back(t(i, 0));
    for (index_t i = 0; i < 31; ++i) tm.e.push_back(t(i, 1));
    auto a = jacobi_eig_oracle(tm.to_dense().view());
    auto b = tridiag_eig(tm, false).lambda;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * tm.norm_bound());
  }
}

TEST(GemmBounds, Identity) {
  auto c = check_gemm_bounds(Matrix::identity(4).view(), Matrix::identity(4).view());
  EXPECT_TRUE(c.ok);
  EXPECT_EQ(c.metric, 0.0);
}

TEST(GemmBounds, HaarFactors) {
  auto c = check_gemm_bounds(random_orthogonal(128, 1).view(), random_orthogonal(128, 2).view());
  EXPECT_TRUE(c);
  EXPECT_LE(c.metric, 2 * kEps * 16);
}

TEST(GemmBounds, ScaledColumnFails) {
  Matrix q1 = random_orthogonal(32, 3);
  for (index_t i = 0; i < 32; ++i) q1(i, 5) *= 1.001;
  EXPECT_FALSE(check_gemm_bounds(q1.view(), random_orthogonal(32, 4).view()).ok);
  EXPECT_THROW(check_gemm_bounds(Matrix(3, 3).view(), Matrix(4, 4).view()), ShapeError);
}
