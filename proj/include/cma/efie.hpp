#pragma once

#include "cma/core.hpp"
#include "cma/geometry.hpp"
#include "cma/potentials.hpp"
#include "cma/quadrature.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

namespace cma {

inline constexpr double speed_of_light = 299792458.0;
inline constexpr double mu0 = 1.25663706212e-6;
inline constexpr double eps0 = 1.0 / (mu0 * speed_of_light * speed_of_light);

/// Homogeneous lossless medium at one frequency. Time convention exp(+j w t).
struct MediumParams {
  double k = 0.0;      // rad/m
  double omega = 0.0;  // rad/s
  double mu = mu0;
  double eps = eps0;

  [[nodiscard]] double impedance() const { return std::sqrt(mu / eps); }

  static MediumParams free_space(double wavenumber) {
    require(wavenumber > 0, errc::invalid_argument, "MediumParams: wavenumber must be positive");
    MediumParams m;
    m.k = wavenumber;
    m.omega = wavenumber / std::sqrt(m.mu * m.eps);
    return m;
  }
};

struct QuadratureConfig {
  int outer = 3;           // test-triangle points, regular pairs
  int inner = 6;           // source-triangle points
  /// Test-triangle points for pairs with static-term extraction (collapsed
  /// Gauss 8x8). The outer integrand has logarithmic edge derivatives there;
  /// 7 points leave about 1% error in self terms.
  int singular_outer = 64;
  /// Pairs with centroid distance below near_factor * (larger triangle diameter)
  /// use analytic extraction of the 1/R term.
  double near_factor = 1.5;
  /// Points per triangle for the radiating (real) part, integrated with the
  /// smooth dyadic kernel and the same rule on test and source triangles.
  /// 0 keeps the real part of the mixed-potential integrals.
  int radiation = 6;
  std::size_t max_unknowns = 5000;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Dense complex symmetric impedance matrix Z = R + jX (ohms).
struct ImpedanceMatrix {
  Eigen::MatrixXcd Z;
  MediumParams medium;
  std::uint64_t basis_hash = 0;

  [[nodiscard]] Eigen::Index size() const { return Z.rows(); }
  [[nodiscard]] Eigen::MatrixXd R() const { return Z.real(); }
  [[nodiscard]] Eigen::MatrixXd X() const { return Z.imag(); }
};

namespace detail {

struct TriangleGeom {
  Vec3 p[3];
  Vec3 centroid;
  double area;
  double diameter;
};

inline std::vector<TriangleGeom> triangle_geometry(const TriMesh& mesh) {
  std::vector<TriangleGeom> g(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    auto& tg = g[t];
    for (int i = 0; i < 3; ++i) tg.p[i] = mesh.vertices[static_cast<std::size_t>(mesh.triangles[t][static_cast<std::size_t>(i)])];
    tg.centroid = (tg.p[0] + tg.p[1] + tg.p[2]) / 3.0;
    tg.area = mesh.area(t);
    tg.diameter = std::max({(tg.p[1] - tg.p[0]).norm(), (tg.p[2] - tg.p[1]).norm(), (tg.p[0] - tg.p[2]).norm()});
  }
  return g;
}

inline std::vector<Vec3> map_rule(const TriangleGeom& t, const TriangleRule& rule) {
  std::vector<Vec3> pts(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const auto& b = rule.points[i];
    pts[i] = b[0] * t.p[0] + b[1] * t.p[1] + b[2] * t.p[2];
  }
  return pts;
}

inline bool share_vertex(const Triangle& a, const Triangle& b) {
  for (int u : a)
    for (int v : b)
      if (u == v) return true;
  return false;
}

// Source-triangle integrals at one observation point:
// g0 = int G dS', g1 = int G r' dS'.
struct SourceMoments {
  cdouble g0;
  CVec3 g1;
};

// (I + grad grad / k^2) sin(kR)/R = k [a I + b d d^T] with d = r - r'.
// a = (2 j0 - j2)/3, b = k^2 j2(x)/x^2, x = kR.
inline void radiation_kernel(double x, double k, double& a, double& b) {
  if (x < 0.5) {
    const double x2 = x * x;
    const double j0 = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
    const double j2x2 = 1.0 / 15.0 - x2 / 210.0 + x2 * x2 / 7560.0 - x2 * x2 * x2 / 498960.0 +
                        x2 * x2 * x2 * x2 / 51891840.0;
    a = (2.0 * j0 - j2x2 * x2) / 3.0;
    b = k * k * j2x2;
    return;
  }
  const double s = std::sin(x), c = std::cos(x);
  const double j0 = s / x;
  const double j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
  a = (2.0 * j0 - j2) / 3.0;
  b = k * k * j2 / (x * x);
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  unsigned nt = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, std::max<std::size_t>(n, 1)));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < nt; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Galerkin RWG discretisation of the free-space EFIE in mixed-potential form,
///   Z_mn = jkZ0 [ <f_m, G f_n> - k^-2 <div f_m, G div f_n> ],
/// with G = exp(-jkR)/(4 pi R). The real part is by default re-integrated
/// from the equivalent dyadic form (see QuadratureConfig::radiation). Rows are
/// assembled independently (row m only touches row m, columns n >= m) and
/// mirrored, so Z is exactly symmetric and the result does not depend on the
/// thread schedule.
inline ImpedanceMatrix assemble_impedance(const BasisSet& basis, const MediumParams& medium,
                                          const QuadratureConfig& quad = {}) {
  const std::size_t N = basis.size();
  require(N >= 1, errc::empty_basis, "assemble_impedance: empty basis");
  require(medium.k > 0, errc::invalid_argument, "assemble_impedance: k must be positive");
  require(quad.outer >= 1 && quad.inner >= 1 && quad.singular_outer >= 1, errc::invalid_argument,
          "assemble_impedance: quadrature orders must be >= 1");
  require(N <= quad.max_unknowns, errc::numerical,
          "assemble_impedance: " + std::to_string(N) + " unknowns exceed the dense cap of " +
              std::to_string(quad.max_unknowns));

  const auto& mesh = basis.mesh;
  const auto geom = detail::triangle_geometry(mesh);
  const auto outer = triangle_rule(quad.outer);
  const auto inner = triangle_rule(quad.inner);
  const auto sing = triangle_rule(quad.singular_outer);
  const std::size_t T = mesh.triangles.size();
  std::vector<std::vector<Vec3>> inner_pts(T);
  for (std::size_t t = 0; t < T; ++t) inner_pts[t] = detail::map_rule(geom[t], inner);

  const double k = medium.k;
  const cdouble jkz0 = j_unit * k * medium.impedance();
  const double inv_k2 = 1.0 / (k * k);
  constexpr double inv4pi = 1.0 / (4.0 * pi);

  ImpedanceMatrix out;
  out.medium = medium;
  out.basis_hash = basis.hash();
  out.Z = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));

  const auto row_task = [&](std::size_t m) {
    const auto& fm = basis.functions[m];
    for (int side = 0; side < 2; ++side) {
      const int t = side == 0 ? fm.tri_plus : fm.tri_minus;
      const auto& tg = geom[static_cast<std::size_t>(t)];
      const double sm = side == 0 ? 1.0 : -1.0;
      const Vec3 vm = basis.vertex(side == 0 ? fm.free_plus : fm.free_minus);
      const double am = side == 0 ? fm.area_plus : fm.area_minus;
      const double cm = sm * fm.length / (2.0 * am);  // f_m = cm (r - vm)
      const double dm = sm * fm.length / am;          // div f_m
      const auto pts_reg = detail::map_rule(tg, outer);
      const auto pts_sing = detail::map_rule(tg, sing);

      for (std::size_t s = 0; s < T; ++s) {
        const auto& supports = basis.by_triangle[s];
        bool any = false;
        for (const auto& sup : supports) any |= static_cast<std::size_t>(sup.basis) >= m;
        if (!any) continue;
        const auto& sg = geom[s];
        const bool near = detail::share_vertex(mesh.triangles[static_cast<std::size_t>(t)], mesh.triangles[s]) ||
                          (tg.centroid - sg.centroid).norm() < quad.near_factor * std::max(tg.diameter, sg.diameter);
        const auto& rule = near ? sing : outer;
        const auto& opts = near ? pts_sing : pts_reg;

        // test-point sums shared by every source function on s:
        // <f_m, G f_n> = cm cn (a_dot - vs . a_vec), <div, G div> = dm dn phi0
        cdouble phi0 = 0.0;
        cdouble a_dot = 0.0;          // sum w (r - vm) . g1
        CVec3 a_vec = CVec3::Zero();  // sum w (r - vm) g0
        for (std::size_t i = 0; i < rule.size(); ++i) {
          const Vec3& r = opts[i];
          detail::SourceMoments mom{0.0, CVec3::Zero()};
          const auto& ip = inner_pts[s];
          for (std::size_t q = 0; q < inner.size(); ++q) {
            const double R = (r - ip[q]).norm();
            cdouble g;
            if (near) {
              g = R > 1e-14 * sg.diameter ? (std::exp(-j_unit * k * R) - 1.0) / R : -j_unit * k;
            } else {
              g = std::exp(-j_unit * k * R) / R;
            }
            g *= inner.weights[q] * sg.area;
            mom.g0 += g;
            mom.g1 += g * ip[q].cast<cdouble>();
          }
          if (near) {
            const auto sp = static_potentials(sg.p[0], sg.p[1], sg.p[2], r);
            mom.g0 += sp.scalar;
            mom.g1 += (sp.vector + r * sp.scalar).cast<cdouble>();
          }
          const double w = rule.weights[i] * tg.area * inv4pi;
          const Vec3 rv = r - vm;
          phi0 += w * mom.g0;
          a_dot += w * rv.cast<cdouble>().dot(mom.g1);
          a_vec += w * mom.g0 * rv.cast<cdouble>();
        }
        for (const auto& sup : supports) {
          const auto n = static_cast<std::size_t>(sup.basis);
          if (n < m) continue;
          const auto& fn = basis.functions[n];
          const double as = sup.sign > 0 ? fn.area_plus : fn.area_minus;
          const double cn = sup.sign * fn.length / (2.0 * as);
          const double dn = sup.sign * fn.length / as;
          const Vec3 vs = basis.vertex(sup.free_vertex);
          const cdouble aterm = cm * cn * (a_dot - vs.cast<cdouble>().dot(a_vec));
          const cdouble pterm = dm * dn * phi0;
          out.Z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) += jkz0 * (aterm - inv_k2 * pterm);
        }
      }
    }
  };
  detail::parallel_for(N, quad.threads, row_task);

  if (quad.radiation > 0) {
    // Same point set on both triangles: R is then a Gram form of a positive
    // definite kernel and stays positive semidefinite to round-off.
    const auto rad = triangle_rule(quad.radiation);
    std::vector<std::vector<Vec3>> rad_pts(T);
    for (std::size_t t = 0; t < T; ++t) rad_pts[t] = detail::map_rule(geom[t], rad);
    const double rz = k * k * medium.impedance() * inv4pi;
    const auto rad_task = [&](std::size_t m) {
      const auto& fm = basis.functions[m];
      Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
      for (int side = 0; side < 2; ++side) {
        const int t = side == 0 ? fm.tri_plus : fm.tri_minus;
        const auto& tg = geom[static_cast<std::size_t>(t)];
        const double sm = side == 0 ? 1.0 : -1.0;
        const Vec3 vm = basis.vertex(side == 0 ? fm.free_plus : fm.free_minus);
        const double cm = sm * fm.length / (2.0 * (side == 0 ? fm.area_plus : fm.area_minus));
        const auto& tp = rad_pts[static_cast<std::size_t>(t)];
        for (std::size_t s = 0; s < T; ++s) {
          const auto& supports = basis.by_triangle[s];
          bool any = false;
          for (const auto& sup : supports) any |= static_cast<std::size_t>(sup.basis) >= m;
          if (!any) continue;
          const auto& sp = rad_pts[s];
          Vec3 hsum = Vec3::Zero();
          double hdot = 0.0;
          for (std::size_t q = 0; q < rad.size(); ++q) {
            Vec3 h = Vec3::Zero();
            for (std::size_t i = 0; i < rad.size(); ++i) {
              const Vec3 d = tp[i] - sp[q];
              double a = 0, b = 0;
              detail::radiation_kernel(k * d.norm(), k, a, b);
              const Vec3 rv = tp[i] - vm;
              h += rad.weights[i] * (a * rv + b * rv.dot(d) * d);
            }
            h *= tg.area * rad.weights[q] * geom[s].area;
            hsum += h;
            hdot += h.dot(sp[q]);
          }
          for (const auto& sup : supports) {
            const auto n = static_cast<std::size_t>(sup.basis);
            if (n < m) continue;
            const auto& fn = basis.functions[n];
            const double cn = sup.sign * fn.length / (2.0 * (sup.sign > 0 ? fn.area_plus : fn.area_minus));
            const Vec3 vs = basis.vertex(sup.free_vertex);
            row(static_cast<Eigen::Index>(n)) += rz * cm * cn * (hdot - vs.dot(hsum));
          }
        }
      }
      for (std::size_t n = m; n < N; ++n) {
        auto& z = out.Z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        z = cdouble(row(static_cast<Eigen::Index>(n)), z.imag());
      }
    };
    detail::parallel_for(N, quad.threads, rad_task);
  }

  for (Eigen::Index m = 0; m < out.Z.rows(); ++m)
    for (Eigen::Index n = m + 1; n < out.Z.cols(); ++n) out.Z(n, m) = out.Z(m, n);
  return out;
}

/// max|Z - Z^T| / max|Z|.
inline double symmetry_defect(const Eigen::MatrixXcd& Z) {
  require(Z.rows() == Z.cols(), errc::invalid_argument, "symmetry_defect: matrix must be square");
  const double scale = Z.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (Z - Z.transpose()).cwiseAbs().maxCoeff() / scale;
}

inline double symmetry_defect(const ImpedanceMatrix& Z) { return symmetry_defect(Z.Z); }

inline ImpedanceMatrix symmetrize(ImpedanceMatrix Z) {
  require(Z.Z.rows() == Z.Z.cols(), errc::invalid_argument, "symmetrize: matrix must be square");
  const Eigen::MatrixXcd S = 0.5 * (Z.Z + Z.Z.transpose());
  Z.Z = S;
  return Z;
}

struct DrivenSolution {
  Eigen::VectorXcd current;
  double residual = 0.0;  // ||ZI - V|| / ||V||
  double rcond = 0.0;     // reciprocal condition estimate
};

/// Direct LU solve of Z I = V. Near-singular systems are reported, not solved silently.
inline DrivenSolution solve_driven(const Eigen::MatrixXcd& Z, const Eigen::VectorXcd& V, double min_rcond = 1e-14) {
  require(Z.rows() == Z.cols() && Z.rows() == V.size(), errc::invalid_argument, "solve_driven: dimension mismatch");
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Z);
  DrivenSolution s;
  s.rcond = lu.rcond();
  require(std::isfinite(s.rcond) && s.rcond >= min_rcond, errc::numerical,
          "solve_driven: impedance matrix is singular or ill-conditioned (rcond ~ " + std::to_string(s.rcond) + ")");
  s.current = lu.solve(V);
  const double vn = V.norm();
  s.residual = vn > 0 ? (Z * s.current - V).norm() / vn : (Z * s.current).norm();
  return s;
}

inline DrivenSolution solve_driven(const ImpedanceMatrix& Z, const Eigen::VectorXcd& V, double min_rcond = 1e-14) {
  return solve_driven(Z.Z, V, min_rcond);
}

// Binary container: "CMAZ", u32 version, u64 N, f64 k, f64 omega, then N*N
// row-major (re, im) doubles. Little-endian host layout.
inline constexpr std::uint32_t impedance_format_version = 1;

inline void write_impedance(const std::string& path, const ImpedanceMatrix& Z) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), errc::io, "write_impedance: cannot open " + path);
  f.write("CMAZ", 4);
  const std::uint32_t ver = impedance_format_version;
  const auto n = static_cast<std::uint64_t>(Z.Z.rows());
  f.write(reinterpret_cast<const char*>(&ver), sizeof ver);
  f.write(reinterpret_cast<const char*>(&n), sizeof n);
  f.write(reinterpret_cast<const char*>(&Z.medium.k), sizeof(double));
  f.write(reinterpret_cast<const char*>(&Z.medium.omega), sizeof(double));
  for (Eigen::Index r = 0; r < Z.Z.rows(); ++r)
    for (Eigen::Index c = 0; c < Z.Z.cols(); ++c) {
      const double re = Z.Z(r, c).real(), im = Z.Z(r, c).imag();
      f.write(reinterpret_cast<const char*>(&re), sizeof re);
      f.write(reinterpret_cast<const char*>(&im), sizeof im);
    }
  require(static_cast<bool>(f), errc::io, "write_impedance: write failed for " + path);
}

inline ImpedanceMatrix read_impedance(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), errc::io, "read_impedance: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  require(f && std::string(magic, 4) == "CMAZ", errc::parse, "read_impedance: bad magic in " + path);
  std::uint32_t ver = 0;
  std::uint64_t n = 0;
  ImpedanceMatrix Z;
  f.read(reinterpret_cast<char*>(&ver), sizeof ver);
  f.read(reinterpret_cast<char*>(&n), sizeof n);
  require(f && ver == impedance_format_version, errc::parse, "read_impedance: unsupported format version");
  f.read(reinterpret_cast<char*>(&Z.medium.k), sizeof(double));
  f.read(reinterpret_cast<char*>(&Z.medium.omega), sizeof(double));
  require(f && n > 0 && n < (1ULL << 20), errc::parse, "read_impedance: bad header");
  Z.Z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index r = 0; r < Z.Z.rows(); ++r)
    for (Eigen::Index c = 0; c < Z.Z.cols(); ++c) {
      double re = 0, im = 0;
      f.read(reinterpret_cast<char*>(&re), sizeof re);
      f.read(reinterpret_cast<char*>(&im), sizeof im);
      Z.Z(r, c) = {re, im};
    }
  require(static_cast<bool>(f), errc::parse, "read_impedance: truncated payload in " + path);
  return Z;
}

}  // namespace cma
