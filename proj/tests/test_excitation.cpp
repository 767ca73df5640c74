#include "cma/efie.hpp"
#include "cma/excitation.hpp"
#include "cma/modes.hpp"
#include "cma/oracle.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace cma;

namespace {

struct Dipole {
  TriMesh mesh = generate_strip_dipole(1.0, 0.01, 50);
  BasisSet basis = build_rwg(mesh);
  Eigen::Index feed = feed_index(basis, mesh.feed_candidates[0]);
};

}  // namespace

TEST(DeltaGap, SingleEdge) {
  Dipole d;
  const auto V = delta_gap(d.basis, d.feed);
  EXPECT_EQ((V.array() != cdouble(0.0)).count(), 1);
  EXPECT_DOUBLE_EQ(V(d.feed).real(), d.basis.functions[d.feed].length);
}

TEST(DeltaGap, ZeroVoltage) {
  Dipole d;
  EXPECT_EQ(delta_gap(d.basis, d.feed, 0.0).norm(), 0.0);
}

TEST(DeltaGap, TwoSymmetricFeeds) {
  const auto a = generate_strip_dipole(1.0, 0.02, 4);
  const auto m = merge(a, translate(a, Vec3(0.5, 0, 0)));
  const auto b = build_rwg(m);
  const auto V = delta_gap(b, m.feed_candidates);
  EXPECT_EQ((V.array() != cdouble(0.0)).count(), 2);
  // equal edge lengths up to the roundoff of the translation
  EXPECT_NEAR(std::abs(V(feed_index(b, m.feed_candidates[0])) - V(feed_index(b, m.feed_candidates[1]))), 0.0, 1e-15);
}

TEST(DeltaGap, UnknownEdge) {
  Dipole d;
  try {
    delta_gap(d.basis, edge_key(0, 1));  // boundary edge
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_argument);
  }
}

TEST(PlaneWave, ZeroAmplitude) {
  const auto b = build_rwg(generate_plate(1, 1, 2, 2));
  EXPECT_EQ(plane_wave(b, 1.0, Vec3(0, 0, -1), Vec3(1, 0, 0), 0.0).norm(), 0.0);
}

TEST(PlaneWave, RejectsLongitudinalPolarization) {
  const auto b = build_rwg(generate_plate(1, 1, 2, 2));
  EXPECT_THROW(plane_wave(b, 1.0, Vec3(0, 0, -1), Vec3(0, 0, 1)), error);
}

TEST(PlaneWave, MirrorSymmetry) {
  const auto b = build_rwg(generate_plate(1.0, 1.0, 4, 4));
  const auto V = plane_wave(b, 3.0, Vec3(0, 0, -1), Vec3(1, 0, 0));
  // mirror x -> -x maps each edge to another edge; |V| must agree
  for (std::size_t n = 0; n < b.size(); ++n) {
    Vec3 m = b.edge_midpoint(n);
    m.x() = -m.x();
    std::size_t partner = b.size();
    for (std::size_t k = 0; k < b.size(); ++k)
      if ((b.edge_midpoint(k) - m).norm() < 1e-12) partner = k;
    ASSERT_LT(partner, b.size());
    EXPECT_NEAR(std::abs(V(n)), std::abs(V(partner)), 1e-12 * V.cwiseAbs().maxCoeff());
  }
}

TEST(PlaneWave, ExtinctionAgreesWithMie) {
  const auto b = build_rwg(generate_sphere(1.0, 2));
  const double ka = 0.5;
  const auto Z = assemble_impedance(b, MediumParams::free_space(ka));
  const auto V = plane_wave(b, ka, Vec3(0, 0, -1), Vec3(1, 0, 0));
  const auto I = solve_driven(Z, V).current;
  const double sigma = Z.medium.impedance() * I.dot(V).real();  // Re(I^H V) Z0 with |E0| = 1
  double mie = 0.0;
  for (int l = 1; l <= 6; ++l)
    for (int tau = 1; tau <= 2; ++tau) mie -= 2.0 * pi / (ka * ka) * (2 * l + 1) * sphere_t(tau, l, ka).real();
  EXPECT_GT(sigma, 0.0);
  EXPECT_NEAR(sigma, mie, 0.1 * mie);
}

class PlateModes : public ::testing::Test {
 protected:
  void SetUp() override {
    basis = build_rwg(generate_plate(1.0, 0.5, 4, 2));
    Z = assemble_impedance(basis, MediumParams::free_space(2.0));
    ms = decompose_full(Z);
  }
  BasisSet basis;
  ImpedanceMatrix Z;
  ModeSet ms;
};

TEST_F(PlateModes, BiorthogonalCoefficients) {
  const Eigen::MatrixXd R = Z.R();
  for (auto m : ms.valid_indices()) {
    const Eigen::VectorXcd V = cdouble(1.0, ms.lambda(m)) * (R * ms.currents.col(m)).cast<cdouble>();
    const auto c = modal_coefficients(ms, V);
    // alpha_n - delta_nm = (1 + j lambda_m) / (1 + j lambda_n) * (1/2) I_n^T R I_m - delta_nm, so the
    // R-orthogonality error is scaled by the eigenvalue ratio
    for (auto n : ms.valid_indices()) {
      const double scale = std::abs(cdouble(1.0, ms.lambda(m))) / std::abs(cdouble(1.0, ms.lambda(n)));
      EXPECT_NEAR(std::abs(c.alpha(n) - (n == m ? 1.0 : 0.0)), 0.0, 1e-8 * std::max(1.0, scale)) << m << ' ' << n;
    }
  }
}

TEST_F(PlateModes, OrthogonalExcitationGivesZeroCoefficient) {
  Eigen::VectorXcd V = Eigen::VectorXcd::Ones(ms.unknowns());
  const Eigen::VectorXcd u = ms.currents.col(0).cast<cdouble>();
  V -= u * (u.dot(V) / u.squaredNorm());
  EXPECT_NEAR(std::abs(modal_coefficients(ms, V).alpha(0)), 0.0, 1e-14);
}

TEST_F(PlateModes, FullReconstruction) {
  ASSERT_EQ(ms.size(), ms.unknowns());
  Eigen::VectorXcd V = Eigen::VectorXcd::Zero(ms.unknowns());
  V(3) = 1.0;
  V(7) = cdouble(0, 2);
  const auto c = modal_coefficients(ms, V);
  const auto direct = solve_driven(Z, V).current;
  EXPECT_LE((reconstruct(ms, c.alpha, ms.size()) - direct).norm() / direct.norm(), 1e-8);
}

TEST_F(PlateModes, SignificanceMatchesMetrics) {
  const auto c = modal_coefficients(ms, Eigen::VectorXcd::Ones(ms.unknowns()));
  for (Eigen::Index i = 0; i < ms.num_valid(); ++i) EXPECT_DOUBLE_EQ(c.significance(i), modal_metrics(ms.lambda(i)).significance);
}

TEST_F(PlateModes, UnnormalizedSetIsRejected) {
  ModeSet raw = ms;
  raw.normalized = false;
  EXPECT_THROW(modal_coefficients(raw, Eigen::VectorXcd::Ones(ms.unknowns())), error);
}

TEST(Convergence, DipoleEndpointsAndOrdering) {
  Dipole d;
  const auto Z = assemble_impedance(d.basis, MediumParams::free_space(pi));
  const auto ms = decompose_full(Z);
  const auto V = delta_gap(d.basis, d.feed);
  const auto direct = solve_driven(Z, V);
  const cdouble Yref = direct.current(d.feed) * d.basis.functions[d.feed].length;
  const auto c = modal_coefficients(ms, V);
  const auto conv = admittance_convergence(ms, c.alpha, d.basis, d.feed, 1.0, Yref);
  ASSERT_EQ(conv.size(), static_cast<std::size_t>(ms.size() + 1));
  EXPECT_DOUBLE_EQ(conv.front().eps_G, 1.0);
  EXPECT_DOUBLE_EQ(conv.front().eps_B, 1.0);
  EXPECT_LE(conv.back().eps_G, 1e-8);
  EXPECT_LE(conv.back().eps_B, 1e-8);
  // conductance converges within a few modes; susceptance does not
  EXPECT_LT(conv[3].eps_G, 1e-2);
  EXPECT_GT(conv[3].eps_B, 10.0 * conv[3].eps_G);
}

TEST(Convergence, CsvHeader) {
  std::ostringstream os;
  write_convergence_csv(os, {{0, 1.0, 1.0, 0.0}});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "M,eps_G,eps_B,ReY,ImY");
}
