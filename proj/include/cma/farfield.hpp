#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"
#include "cma/geometry.hpp"
#include "cma/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace cma {

/// Far-field amplitudes, E(r) ~ F exp(-jkr)/r, on a set of directions.
/// Stored in spherical components, so F is transverse by construction.
struct FarField {
  std::vector<double> theta;
  std::vector<double> phi;
  std::vector<double> weights;  // empty for pattern cuts
  Eigen::VectorXcd f_theta;
  Eigen::VectorXcd f_phi;

  [[nodiscard]] std::size_t size() const { return theta.size(); }
};

inline Vec3 direction(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}
inline Vec3 theta_hat(double theta, double phi) {
  return {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta)};
}
inline Vec3 phi_hat(double phi) { return {-std::sin(phi), std::cos(phi), 0.0}; }

/// Per-basis radiation integrals projected on (theta, phi):
///   F_n(r) = -jkZ0/(4 pi) [ int f_n exp(jk r.(r' - origin)) dS' ]_perp.
/// Returns a (2 * ndir) x N matrix: rows [0, ndir) hold F_theta, [ndir, 2 ndir) hold F_phi.
inline Eigen::MatrixXcd radiation_matrix(const BasisSet& basis, double k, double impedance,
                                         const std::vector<double>& theta, const std::vector<double>& phi,
                                         const Vec3& origin = Vec3::Zero(), int points = 12) {
  require(theta.size() == phi.size() && !theta.empty(), errc::invalid_argument,
          "radiation_matrix: need matching, nonempty direction lists");
  const auto nd = static_cast<Eigen::Index>(theta.size());
  const auto N = static_cast<Eigen::Index>(basis.size());
  const auto rule = triangle_rule(points);
  const auto geom = detail::triangle_geometry(basis.mesh);
  std::vector<Vec3> dirs(theta.size()), th(theta.size()), ph(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    dirs[i] = direction(theta[i], phi[i]);
    th[i] = theta_hat(theta[i], phi[i]);
    ph[i] = phi_hat(phi[i]);
  }
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(2 * nd, N);
  const cdouble pref = -j_unit * k * impedance / (4.0 * pi);
  std::vector<std::vector<Vec3>> pts(basis.mesh.triangles.size());
  for (std::size_t t = 0; t < pts.size(); ++t) pts[t] = detail::map_rule(geom[t], rule);
  // one direction per task: each task owns rows d and nd + d
  detail::parallel_for(theta.size(), 0, [&](std::size_t di) {
    const auto d = static_cast<Eigen::Index>(di);
    const CVec3 tc = th[di].cast<cdouble>(), pc = ph[di].cast<cdouble>();
    for (std::size_t t = 0; t < pts.size(); ++t) {
      const auto& supports = basis.by_triangle[t];
      if (supports.empty()) continue;
      // m0 = int e dS, m1 = int e r dS
      cdouble m0 = 0.0;
      CVec3 m1 = CVec3::Zero();
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec3 r = pts[t][q] - origin;
        const cdouble e = std::exp(j_unit * (k * dirs[di].dot(r))) * (rule.weights[q] * geom[t].area);
        m0 += e;
        m1 += e * pts[t][q].cast<cdouble>();
      }
      for (const auto& sup : supports) {
        const auto& f = basis.functions[static_cast<std::size_t>(sup.basis)];
        const double a = sup.sign > 0 ? f.area_plus : f.area_minus;
        const double c = sup.sign * f.length / (2.0 * a);
        const CVec3 v = c * (m1 - m0 * basis.vertex(sup.free_vertex).cast<cdouble>());
        A(d, sup.basis) += pref * tc.dot(v);
        A(nd + d, sup.basis) += pref * pc.dot(v);
      }
    }
  });
  return A;
}

/// Far field of a current vector on the given directions.
inline FarField radiation_vector(const Eigen::VectorXcd& I, const BasisSet& basis, const MediumParams& medium,
                                 const std::vector<double>& theta, const std::vector<double>& phi,
                                 const Vec3& origin = Vec3::Zero(), int points = 12) {
  require(I.size() == static_cast<Eigen::Index>(basis.size()), errc::invalid_argument,
          "radiation_vector: current length differs from the basis size");
  const Eigen::MatrixXcd A = radiation_matrix(basis, medium.k, medium.impedance(), theta, phi, origin, points);
  const Eigen::VectorXcd F = A * I;
  FarField ff;
  ff.theta = theta;
  ff.phi = phi;
  const auto nd = static_cast<Eigen::Index>(theta.size());
  ff.f_theta = F.head(nd);
  ff.f_phi = F.tail(nd);
  return ff;
}

inline FarField radiation_vector(const Eigen::VectorXcd& I, const BasisSet& basis, const MediumParams& medium,
                                 const SphereRule& rule, const Vec3& origin = Vec3::Zero(), int points = 12) {
  auto ff = radiation_vector(I, basis, medium, rule.theta, rule.phi, origin, points);
  ff.weights = rule.weights;
  return ff;
}

/// (1/(2 Z0)) sum w |F|^2, the radiated power of a far field on a sphere rule.
inline double radiated_power(const FarField& ff, double impedance) {
  require(ff.weights.size() == ff.size(), errc::invalid_argument, "radiated_power: far field has no quadrature weights");
  double s = 0.0;
  for (std::size_t i = 0; i < ff.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s += ff.weights[i] * (std::norm(ff.f_theta(ii)) + std::norm(ff.f_phi(ii)));
  }
  return s / (2.0 * impedance);
}

/// G_mn = (1/(2 Z0)) oint F_m* . F_n dOmega for the columns of `currents`.
inline Eigen::MatrixXcd farfield_gram(const Eigen::MatrixXcd& currents, const BasisSet& basis,
                                      const MediumParams& medium, const SphereRule& rule,
                                      const Vec3& origin = Vec3::Zero(), int points = 12) {
  const Eigen::MatrixXcd A = radiation_matrix(basis, medium.k, medium.impedance(), rule.theta, rule.phi, origin, points);
  const Eigen::MatrixXcd F = A * currents;
  const auto nd = static_cast<Eigen::Index>(rule.size());
  Eigen::VectorXd w(2 * nd);
  for (Eigen::Index i = 0; i < nd; ++i) w(i) = w(nd + i) = rule.weights[static_cast<std::size_t>(i)];
  return F.adjoint() * w.asDiagonal() * F / (2.0 * medium.impedance());
}

/// Default wave truncation L_max = ceil(ka + 7 (ka)^(1/3) + 3).
inline int default_lmax(double ka) {
  require(ka > 0, errc::invalid_argument, "default_lmax: ka must be positive");
  return static_cast<int>(std::ceil(ka + 7.0 * std::cbrt(ka) + 3.0));
}

/// Spherical wave index (tau, l, m): tau = 1 for TE (Phi_lm), 2 for TM (Psi_lm).
struct WaveIndex {
  int tau;
  int l;
  int m;
};

inline std::vector<WaveIndex> wave_indices(int lmax) {
  std::vector<WaveIndex> v;
  for (int tau = 1; tau <= 2; ++tau)
    for (int l = 1; l <= lmax; ++l)
      for (int m = -l; m <= l; ++m) v.push_back({tau, l, m});
  return v;
}

/// Orthonormal scalar harmonic Y_lm and d/dtheta Y_lm (Condon-Shortley phase).
inline void scalar_harmonic(int l, int m, double theta, double phi, cdouble& y, cdouble& dy) {
  const int am = std::abs(m);
  const auto ul = static_cast<unsigned>(l);
  const double p = std::sph_legendre(ul, static_cast<unsigned>(am), theta);
  const double p1 = am + 1 <= l ? std::sph_legendre(ul, static_cast<unsigned>(am + 1), theta) : 0.0;
  const double ct = std::cos(theta) / std::sin(theta);
  // for m >= 0: dY/dtheta = m cot(theta) Y + sqrt((l-m)(l+m+1)) e^{-j phi} Y_{l,m+1}
  const double dp = am * ct * p + std::sqrt(static_cast<double>((l - am) * (l + am + 1))) * p1;
  const cdouble e = std::exp(j_unit * (am * phi));
  y = p * e;
  dy = dp * e;
  if (m < 0) {
    const double s = (am % 2 == 0) ? 1.0 : -1.0;
    y = s * std::conj(y);
    dy = s * std::conj(dy);
  }
}

/// Theta and phi components of the vector harmonic (tau, l, m) at one direction.
inline void vector_harmonic(const WaveIndex& w, double theta, double phi, cdouble& yt, cdouble& yp) {
  cdouble y, dy;
  scalar_harmonic(w.l, w.m, theta, phi, y, dy);
  const double norm = 1.0 / std::sqrt(static_cast<double>(w.l * (w.l + 1)));
  const cdouble dphi = j_unit * static_cast<double>(w.m) * y / std::sin(theta);
  if (w.tau == 2) {  // Psi = r grad Y
    yt = norm * dy;
    yp = norm * dphi;
  } else {  // Phi = r x Psi
    yt = -norm * dphi;
    yp = norm * dy;
  }
}

/// Projection of basis far fields on orthonormal vector harmonics up to lmax,
///   S_an = Z0^-1/2 oint Y_a* . F_n dOmega,
/// normalised so that S^H S approximates R. The expansion origin is the
/// bounding-sphere centre of the mesh.
struct SWEMatrix {
  Eigen::MatrixXcd S;
  std::vector<WaveIndex> waves;
  double k = 0.0;
  int lmax = 0;
  Vec3 origin = Vec3::Zero();
};

inline SWEMatrix swe_matrix(const BasisSet& basis, const MediumParams& medium, int lmax = 0, int points = 12) {
  const auto bs = bounding_sphere(basis.mesh);
  if (lmax <= 0) lmax = default_lmax(medium.k * bs.radius);
  const int deg = 2 * lmax + 2 * static_cast<int>(std::ceil(medium.k * bs.radius)) + 8;
  const auto rule = sphere_rule_for_degree(deg);
  const Eigen::MatrixXcd A =
      radiation_matrix(basis, medium.k, medium.impedance(), rule.theta, rule.phi, bs.center, points);
  SWEMatrix out;
  out.waves = wave_indices(lmax);
  out.k = medium.k;
  out.lmax = lmax;
  out.origin = bs.center;
  const auto nd = static_cast<Eigen::Index>(rule.size());
  const auto nw = static_cast<Eigen::Index>(out.waves.size());
  Eigen::MatrixXcd Y(nw, 2 * nd);  // conj(Y) * weight
  for (Eigen::Index a = 0; a < nw; ++a)
    for (Eigen::Index i = 0; i < nd; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      cdouble yt, yp;
      vector_harmonic(out.waves[static_cast<std::size_t>(a)], rule.theta[ii], rule.phi[ii], yt, yp);
      Y(a, i) = std::conj(yt) * rule.weights[ii];
      Y(a, nd + i) = std::conj(yp) * rule.weights[ii];
    }
  out.S = Y * A / std::sqrt(medium.impedance());
  return out;
}

/// Pattern cut at fixed phi (theta from 0 to pi) or fixed theta (phi from 0 to 2 pi).
inline FarField pattern_cut(const Eigen::VectorXcd& I, const BasisSet& basis, const MediumParams& medium,
                            bool fixed_phi, double angle, int samples, const Vec3& origin = Vec3::Zero()) {
  require(samples >= 2, errc::invalid_argument, "pattern_cut: need at least two samples");
  std::vector<double> th(static_cast<std::size_t>(samples)), ph(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (fixed_phi) {
      th[ii] = pi * i / (samples - 1);
      ph[ii] = angle;
    } else {
      th[ii] = angle;
      ph[ii] = 2.0 * pi * i / (samples - 1);
    }
  }
  return radiation_vector(I, basis, medium, th, ph, origin);
}

/// CSV `theta_rad, phi_rad, Re(F_theta), Im(F_theta), Re(F_phi), Im(F_phi)`;
/// with `normalize` the amplitudes are divided by the peak |F|.
inline void write_farfield_csv(std::ostream& out, const FarField& ff, bool normalize = false) {
  double peak = 1.0;
  if (normalize) {
    peak = 0.0;
    for (std::size_t i = 0; i < ff.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      peak = std::max(peak, std::sqrt(std::norm(ff.f_theta(ii)) + std::norm(ff.f_phi(ii))));
    }
    if (peak == 0.0) peak = 1.0;
  }
  out << "theta_rad,phi_rad,Re(F_theta),Im(F_theta),Re(F_phi),Im(F_phi)\n";
  out.precision(12);
  for (std::size_t i = 0; i < ff.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const cdouble a = ff.f_theta(ii) / peak, b = ff.f_phi(ii) / peak;
    out << ff.theta[i] << ',' << ff.phi[i] << ',' << a.real() << ',' << a.imag() << ',' << b.real() << ','
        << b.imag() << '\n';
  }
}

}  // namespace cma
