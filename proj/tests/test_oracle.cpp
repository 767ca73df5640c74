#include "cma/efie.hpp"
#include "cma/modes.hpp"
#include "cma/oracle.hpp"

#include "frozen/mie_ka1.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cma;

TEST(Mie, MatchesFrozenValues) {
  for (const auto& r : frozen::mie::rows) {
    const double l = sphere_lambda(r.tau, r.l, r.ka);
    EXPECT_NEAR(l, r.lambda, 1e-11 * std::abs(r.lambda)) << r.tau << " " << r.l << " " << r.ka;
    const cdouble t = sphere_t(r.tau, r.l, r.ka);
    EXPECT_NEAR(t.real(), r.t_re, 1e-11 * std::abs(cdouble(r.t_re, r.t_im)) + 1e-300);
    EXPECT_NEAR(t.imag(), r.t_im, 1e-11 * std::abs(cdouble(r.t_re, r.t_im)) + 1e-300);
  }
}

TEST(Mie, ScatteringCoefficientMatchesEigenvalueMap) {
  for (int tau = 1; tau <= 2; ++tau)
    for (int l = 1; l <= 6; ++l)
      for (double ka : {0.3, 1.0, 2.7}) {
        const cdouble t = sphere_t(tau, l, ka);
        EXPECT_NEAR(std::abs(t - lambda_to_t(sphere_lambda(tau, l, ka))), 0.0, 1e-12 * std::abs(t) + 1e-15);
      }
}

TEST(Mie, LowOrderSigns) {
  // magnetic dipole inductive, electric dipole capacitive below resonance
  EXPECT_GT(sphere_lambda(1, 1, 1.0), 0.0);
  EXPECT_LT(sphere_lambda(2, 1, 1.0), 0.0);
}

TEST(Mie, MultiplicitiesAreOddIntegers) {
  const auto ev = sphere_eigenvalues(1.0, 5);
  ASSERT_EQ(ev.size(), 10u);
  for (const auto& e : ev) EXPECT_EQ(e.multiplicity, 2 * e.l + 1);
  EXPECT_EQ(sphere_spectrum(1.0, 3).size(), 2u * (3 + 5 + 7));
}

TEST(Mie, SpectrumSortedByMagnitude) {
  const auto s = sphere_spectrum(1.0, 6);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LE(std::abs(s[i - 1]), std::abs(s[i]));
}

TEST(Mie, ElectricDipoleResonanceBracketed) {
  // sign change of the TM1 eigenvalue = zero of d/dx[x y_1(x)], written out
  const auto d = [](double x) { return -std::cos(x) + std::cos(x) / (x * x) + std::sin(x) / x; };
  double lo = 0.0, hi = 0.0;
  for (double x = 0.5; x < 10.0; x += 0.05)
    if (sphere_lambda(2, 1, x) * sphere_lambda(2, 1, x + 0.05) < 0 && std::abs(sphere_lambda(2, 1, x)) < 10) {
      lo = x;
      hi = x + 0.05;
      break;
    }
  ASSERT_GT(hi, 0.0);
  for (int i = 0; i < 60; ++i) {
    const double m = 0.5 * (lo + hi);
    (sphere_lambda(2, 1, lo) * sphere_lambda(2, 1, m) <= 0 ? hi : lo) = m;
  }
  EXPECT_NEAR(d(lo), 0.0, 1e-10);
}

TEST(Mie, InvalidArguments) {
  EXPECT_THROW(sphere_lambda(3, 1, 1.0), error);
  EXPECT_THROW(sphere_lambda(1, 0, 1.0), error);
  EXPECT_THROW(sphere_lambda(1, 1, -1.0), error);
}

TEST(BruteGep, Diagonal) {
  const auto r = brute_small_gep(Eigen::Vector2d(1, 2).asDiagonal(), Eigen::Matrix2d::Identity());
  ASSERT_EQ(r.lambda.size(), 2);
  EXPECT_NEAR(r.lambda(0), 1.0, 1e-12);
  EXPECT_NEAR(r.lambda(1), 2.0, 1e-12);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.vectors.col(i).norm(), std::sqrt(2.0), 1e-10);
}

TEST(BruteGep, RandomFourByFourMatchesFull) {
  std::mt19937 rng(4);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(4, 4), B(4, 4);
  for (Eigen::Index i = 0; i < 16; ++i) {
    A.data()[i] = nd(rng);
    B.data()[i] = nd(rng);
  }
  const Eigen::MatrixXd X = A + A.transpose(), R = B * B.transpose();
  Eigen::MatrixXcd Z(4, 4);
  Z.real() = R;
  Z.imag() = X;
  const auto ms = decompose_full(Z, 1.0);
  const auto r = brute_small_gep(X, R);
  ASSERT_EQ(r.lambda.size(), 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.lambda(i), ms.lambda(i), 1e-8 * (1 + std::abs(r.lambda(i))));
    const double c = std::abs(0.5 * r.vectors.col(i).dot(R * ms.currents.col(i)));
    EXPECT_NEAR(c, 1.0, 1e-8);
  }
}

TEST(BruteGep, RankDeficientRGivesRankManyRoots) {
  std::mt19937 rng(6);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(3, 3), b(3, 2);
  for (Eigen::Index i = 0; i < 9; ++i) A.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < 6; ++i) b.data()[i] = nd(rng);
  const auto r = brute_small_gep(A + A.transpose(), b * b.transpose());
  EXPECT_EQ(r.lambda.size(), 2);
}

TEST(BruteGep, RejectsZeroR) {
  EXPECT_THROW(brute_small_gep(Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Zero()), error);
}

TEST(BruteGep, DeterminantPolynomial) {
  // det(X - l R) for X = diag(1, 2), R = I is 2 - 3 l + l^2
  const auto r = brute_small_gep(Eigen::Vector2d(1, 2).asDiagonal(), Eigen::Matrix2d::Identity());
  ASSERT_EQ(r.poly.size(), 3u);
  EXPECT_NEAR(r.poly[0], 2.0, 1e-14);
  EXPECT_NEAR(r.poly[1], -3.0, 1e-14);
  EXPECT_NEAR(r.poly[2], 1.0, 1e-14);
}

class ReferenceZ : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    basis_ = new BasisSet(build_rwg(generate_plate(1.0, 1.0, 6, 6)));
    z_ = new ImpedanceMatrix(assemble_impedance(*basis_, MediumParams::free_space(2.0)));
  }
  static void TearDownTestSuite() {
    delete basis_;
    delete z_;
  }
  static BasisSet* basis_;
  static ImpedanceMatrix* z_;
};
BasisSet* ReferenceZ::basis_ = nullptr;
ImpedanceMatrix* ReferenceZ::z_ = nullptr;

TEST_F(ReferenceZ, WellSeparatedPair) {
  ReferenceZOptions opt;
  opt.tol = 1e-8;
  const cdouble ref = reference_z_entry(*basis_, 0, 95, z_->medium, opt);
  // default orders (3 outer, 6 inner) are low-order on regular pairs
  EXPECT_LE(std::abs(ref - z_->Z(0, 95)), 1e-2 * std::abs(ref));
  QuadratureConfig q;
  q.outer = q.inner = q.radiation = 64;
  const auto fine = assemble_impedance(*basis_, z_->medium, q);
  EXPECT_LE(std::abs(ref - fine.Z(0, 95)), 1e-6 * std::abs(ref));
}

TEST_F(ReferenceZ, TouchingPair) {
  // two functions sharing a triangle
  std::size_t m = 0, n = 0;
  const auto& f0 = basis_->functions[0];
  for (std::size_t i = 1; i < basis_->size(); ++i) {
    const auto& f = basis_->functions[i];
    if (f.tri_plus == f0.tri_plus || f.tri_minus == f0.tri_plus || f.tri_plus == f0.tri_minus ||
        f.tri_minus == f0.tri_minus) {
      n = i;
      break;
    }
  }
  ASSERT_GT(n, m);
  ReferenceZOptions opt;
  opt.tol = 1e-5;
  const cdouble ref = reference_z_entry(*basis_, m, n, z_->medium, opt);
  EXPECT_LE(std::abs(ref - z_->Z(m, n)), 1e-3 * std::abs(ref));
}

TEST_F(ReferenceZ, EntryIsSymmetric) {
  ReferenceZOptions opt;
  opt.tol = 1e-12;
  const cdouble a = reference_z_entry(*basis_, 0, 95, z_->medium, opt);
  const cdouble b = reference_z_entry(*basis_, 95, 0, z_->medium, opt);
  EXPECT_LE(std::abs(a - b), 1e-10 * std::abs(a));
}

TEST_F(ReferenceZ, WithoutPolarPathSingularPairsDoNotConverge) {
  ReferenceZOptions opt;
  opt.polar = false;
  opt.max_level = 2;
  opt.tol = 1e-9;
  try {
    reference_z_entry(*basis_, 0, 0, z_->medium, opt);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::convergence);
  }
}
