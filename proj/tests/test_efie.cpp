#include "cma/efie.hpp"
#include "cma/oracle.hpp"

#include "frozen/plate2x2_zref.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace cma;

namespace {

ImpedanceMatrix plate_z(int nx, int ny, double ka) {
  const auto mesh = generate_plate(1.0, 1.0, nx, ny);
  return assemble_impedance(build_rwg(mesh), MediumParams::free_space(ka / bounding_sphere(mesh).radius));
}

}  // namespace

TEST(Medium, FreeSpaceImpedance) {
  const auto m = MediumParams::free_space(2.0);
  EXPECT_NEAR(m.impedance(), 376.730313, 1e-5);
  EXPECT_NEAR(m.omega, 2.0 * speed_of_light, 1e-3);
  EXPECT_THROW(MediumParams::free_space(0.0), error);
}

TEST(Assembly, SymmetricToRoundoff) {
  EXPECT_LE(symmetry_defect(plate_z(3, 2, 1.0)), 1e-10);
  const auto s = generate_sphere(1.0, 1);
  EXPECT_LE(symmetry_defect(assemble_impedance(build_rwg(s), MediumParams::free_space(1.0))), 1e-10);
}

TEST(Assembly, MatchesFrozenReferenceOnTwoByTwoPlate) {
  const auto Z = plate_z(2, 2, 1.0);
  ASSERT_EQ(Z.size(), frozen::plate2x2::N);
  EXPECT_NEAR(Z.medium.k, frozen::plate2x2::k, 1e-15);
  double worst = 0.0;
  for (const auto& e : frozen::plate2x2::Z) {
    const cdouble ref(e.re, e.im);
    const double rel = std::abs(Z.Z(e.m, e.n) - ref) / std::abs(ref);
    worst = std::max(worst, rel);
    EXPECT_LE(rel, 1e-3) << "Z(" << e.m << "," << e.n << ")";
  }
  RecordProperty("max_rel_error", std::to_string(worst));
}

TEST(Assembly, SmallElementIsCapacitive) {
  const auto mesh = load_mesh_string("4 2\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 1 2\n0 2 3\n");
  const auto b = build_rwg(mesh);
  const auto medium = MediumParams::free_space(0.01 / bounding_sphere(mesh).radius);
  const auto Z = assemble_impedance(b, medium);
  EXPECT_LT(Z.Z(0, 0).imag(), 0.0);
  ReferenceZOptions opt;
  opt.tol = 1e-6;
  const cdouble ref = reference_z_entry(b, 0, 0, medium, opt);
  EXPECT_LT(ref.imag(), 0.0);
  EXPECT_NEAR(Z.Z(0, 0).imag(), ref.imag(), 1e-3 * std::abs(ref.imag()));
}

TEST(Assembly, RadiationPartIsPositiveSemidefinite) {
  const auto Z = plate_z(4, 4, 2.0);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Z.R()).eigenvalues();
  EXPECT_GE(ev.minCoeff(), -1e-10 * ev.maxCoeff());
}

TEST(Assembly, ElectricallySmallPlateHasSmallR) {
  // R scales as k^2 relative to the reactance for small bodies
  const auto a = plate_z(2, 2, 0.05), b = plate_z(2, 2, 0.1);
  const double ra = a.R().norm() / a.X().norm(), rb = b.R().norm() / b.X().norm();
  EXPECT_NEAR(rb / ra, 8.0, 0.5);  // R ~ k^2, X ~ 1/k
}

TEST(Assembly, RejectsOversizedSystems) {
  const auto b = build_rwg(generate_plate(1, 1, 4, 4));
  QuadratureConfig q;
  q.max_unknowns = 10;
  try {
    assemble_impedance(b, MediumParams::free_space(1.0), q);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::numerical);
  }
}

TEST(Assembly, ThreadCountDoesNotChangeResult) {
  const auto b = build_rwg(generate_plate(1, 1, 3, 3));
  QuadratureConfig one, four;
  one.threads = 1;
  four.threads = 4;
  const auto za = assemble_impedance(b, MediumParams::free_space(3.0), one);
  const auto zb = assemble_impedance(b, MediumParams::free_space(3.0), four);
  EXPECT_EQ((za.Z - zb.Z).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Symmetry, DefectExamples) {
  Eigen::MatrixXcd s(2, 2);
  s << 1.0, 2.0, 2.0, 3.0;
  EXPECT_EQ(symmetry_defect(s), 0.0);
  Eigen::MatrixXcd u(2, 2);
  u << 0.0, 1.0, 0.0, 0.0;
  EXPECT_DOUBLE_EQ(symmetry_defect(u), 1.0);
}

TEST(Symmetry, SymmetrizeExamples) {
  ImpedanceMatrix Z;
  Z.Z.resize(2, 2);
  Z.Z << 0.0, 2.0, 0.0, 0.0;
  const auto s = symmetrize(Z);
  EXPECT_EQ(s.Z(0, 1), cdouble(1.0));
  EXPECT_EQ(s.Z(1, 0), cdouble(1.0));
  EXPECT_EQ(s.Z(0, 0), cdouble(0.0));
  const auto ss = symmetrize(s);
  EXPECT_EQ((ss.Z - s.Z).norm(), 0.0);
  ImpedanceMatrix sym;
  sym.Z = Eigen::MatrixXcd::Identity(3, 3) * cdouble(1, 2);
  EXPECT_EQ((symmetrize(sym).Z - sym.Z).norm(), 0.0);
}

TEST(Driven, ScaledIdentity) {
  const Eigen::MatrixXcd Z = Eigen::MatrixXcd::Identity(3, 3) * cdouble(2.0, -1.0);
  const Eigen::VectorXcd V = Eigen::VectorXcd::Unit(3, 0);
  const auto s = solve_driven(Z, V);
  EXPECT_NEAR(std::abs(s.current(0) - 1.0 / cdouble(2.0, -1.0)), 0.0, 1e-15);
  EXPECT_EQ(s.current(1), cdouble(0.0));
}

TEST(Driven, RandomSymmetricResidual) {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd A(30, 30);
  for (Eigen::Index i = 0; i < 30; ++i)
    for (Eigen::Index j = 0; j < 30; ++j) A(i, j) = {nd(rng), nd(rng)};
  const Eigen::MatrixXcd Z = A + A.transpose() + 20.0 * Eigen::MatrixXcd::Identity(30, 30);
  Eigen::VectorXcd V(30);
  for (auto& v : V) v = {nd(rng), nd(rng)};
  EXPECT_LE(solve_driven(Z, V).residual, 1e-10);
}

TEST(Driven, SingularMatrixIsReported) {
  const Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(2, 2);
  try {
    solve_driven(Z, Eigen::VectorXcd::Ones(2));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::numerical);
  }
}

TEST(Driven, DipoleNearResonanceAbsorbsPower) {
  const auto mesh = generate_strip_dipole(1.0, 0.01, 20);
  const auto b = build_rwg(mesh);
  const auto Z = assemble_impedance(b, MediumParams::free_space(pi));  // half wavelength
  const auto feed = *b.find_edge(mesh.feed_candidates[0].first, mesh.feed_candidates[0].second);
  Eigen::VectorXcd V = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(b.size()));
  V(static_cast<Eigen::Index>(feed)) = b.functions[feed].length;
  const auto s = solve_driven(Z, V);
  const cdouble Y = s.current(static_cast<Eigen::Index>(feed)) * b.functions[feed].length;
  EXPECT_GT(Y.real(), 0.0);
  // 50 to 100 ohm input resistance for a thin half-wave dipole
  const double Rin = (1.0 / Y).real();
  EXPECT_GT(Rin, 50.0);
  EXPECT_LT(Rin, 110.0);
}

TEST(Container, RoundTrip) {
  const auto Z = plate_z(2, 2, 1.0);
  const auto path = (std::filesystem::temp_directory_path() / "cma_test_roundtrip.cmaz").string();
  write_impedance(path, Z);
  const auto r = read_impedance(path);
  EXPECT_EQ((r.Z - Z.Z).norm(), 0.0);
  EXPECT_EQ(r.medium.k, Z.medium.k);
  EXPECT_EQ(r.medium.omega, Z.medium.omega);
  std::filesystem::remove(path);
}

TEST(Container, RejectsWrongVersion) {
  const auto Z = plate_z(1, 2, 1.0);
  const auto path = (std::filesystem::temp_directory_path() / "cma_test_version.cmaz").string();
  write_impedance(path, Z);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t bad = impedance_format_version + 1;
    f.write(reinterpret_cast<const char*>(&bad), sizeof bad);
  }
  try {
    read_impedance(path);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::parse);
  }
  std::filesystem::remove(path);
}

TEST(Container, RejectsTruncatedFile) {
  const auto path = (std::filesystem::temp_directory_path() / "cma_test_trunc.cmaz").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "CMAZ";
  }
  EXPECT_THROW(read_impedance(path), error);
  std::filesystem::remove(path);
}
