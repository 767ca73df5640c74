#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"
#include "cma/geometry.hpp"
#include "cma/modes.hpp"
#include "cma/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <ostream>
#include <vector>

namespace cma {

/// Index of the basis function defined on edge (a, b).
inline Eigen::Index feed_index(const BasisSet& basis, const EdgeKey& edge) {
  const auto n = basis.find_edge(edge.first, edge.second);
  require(n.has_value(), errc::invalid_argument,
          "feed edge (" + std::to_string(edge.first) + ", " + std::to_string(edge.second) +
              ") is not an interior edge of the mesh");
  return static_cast<Eigen::Index>(*n);
}

/// Delta-gap voltage source of amplitude V0 across one RWG edge: V_p = V0 l_p.
inline Eigen::VectorXcd delta_gap(const BasisSet& basis, Eigen::Index feed, cdouble V0 = 1.0) {
  require(feed >= 0 && feed < static_cast<Eigen::Index>(basis.size()), errc::invalid_argument,
          "delta_gap: feed index out of range");
  Eigen::VectorXcd V = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.size()));
  V(feed) = V0 * basis.functions[static_cast<std::size_t>(feed)].length;
  return V;
}

inline Eigen::VectorXcd delta_gap(const BasisSet& basis, const EdgeKey& edge, cdouble V0 = 1.0) {
  return delta_gap(basis, feed_index(basis, edge), V0);
}

/// Several gaps driven with the same voltage.
inline Eigen::VectorXcd delta_gap(const BasisSet& basis, const std::vector<EdgeKey>& edges, cdouble V0 = 1.0) {
  require(!edges.empty(), errc::invalid_argument, "delta_gap: no feed edges given");
  Eigen::VectorXcd V = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (const auto& e : edges) V += delta_gap(basis, e, V0);
  return V;
}

/// Plane wave E = E0 e exp(-jk khat.r): V_m = int f_m . E dS.
inline Eigen::VectorXcd plane_wave(const BasisSet& basis, double k, const Vec3& khat, const Vec3& pol,
                                   cdouble E0 = 1.0, int points = 7) {
  require(khat.norm() > 0 && pol.norm() > 0, errc::invalid_argument, "plane_wave: zero direction or polarization");
  const Vec3 kh = khat.normalized(), e = pol.normalized();
  require(std::abs(kh.dot(e)) <= 1e-9, errc::invalid_argument,
          "plane_wave: polarization is not orthogonal to the propagation direction");
  const auto rule = triangle_rule(points);
  const auto geom = detail::triangle_geometry(basis.mesh);
  Eigen::VectorXcd V = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t t = 0; t < geom.size(); ++t) {
    const auto& supports = basis.by_triangle[t];
    if (supports.empty()) continue;
    const auto pts = detail::map_rule(geom[t], rule);
    for (const auto& sup : supports) {
      const auto& f = basis.functions[static_cast<std::size_t>(sup.basis)];
      const double a = sup.sign > 0 ? f.area_plus : f.area_minus;
      const double c = sup.sign * f.length / (2.0 * a);
      const Vec3 v = basis.vertex(sup.free_vertex);
      cdouble s = 0.0;
      for (std::size_t q = 0; q < rule.size(); ++q)
        s += rule.weights[q] * c * (pts[q] - v).dot(e) * std::exp(-j_unit * (k * kh.dot(pts[q])));
      V(sup.basis) += E0 * geom[t].area * s;
    }
  }
  return V;
}

struct ModalCoefficients {
  Eigen::VectorXcd alpha;       // modal weighting coefficients
  Eigen::VectorXcd excitation;  // I_n^T V
  Eigen::VectorXd significance; // |1 + j lambda_n|^-1
};

/// alpha_n = I_n^T V / (I_n^T Z I_n) = I_n^T V / (2 (P_n + j Q_n)); for
/// normalised modes the denominator is 2 (1 + j lambda_n). Modes that could
/// not be normalised still get the quotient with their own P and Q.
inline ModalCoefficients modal_coefficients(const ModeSet& ms, const Eigen::VectorXcd& V) {
  require(ms.normalized, errc::invalid_argument, "modal_coefficients: mode set is not normalized");
  require(V.size() == ms.unknowns(), errc::invalid_argument, "modal_coefficients: excitation length mismatch");
  ModalCoefficients c;
  c.alpha.resize(ms.size());
  c.excitation.resize(ms.size());
  c.significance.resize(ms.size());
  for (Eigen::Index n = 0; n < ms.size(); ++n) {
    const cdouble den = 2.0 * cdouble(ms.power(n), ms.reactive(n));
    c.excitation(n) = ms.currents.col(n).cast<cdouble>().dot(V);  // currents are real: no conjugation
    c.alpha(n) = den != 0.0 ? c.excitation(n) / den : 0.0;
    c.significance(n) = std::isfinite(ms.lambda(n)) ? modal_metrics(ms.lambda(n)).significance : 0.0;
  }
  return c;
}

/// Current from the first M modes (in ModeSet order).
inline Eigen::VectorXcd reconstruct(const ModeSet& ms, const Eigen::VectorXcd& alpha, Eigen::Index M) {
  require(alpha.size() == ms.size() && M >= 0 && M <= ms.size(), errc::invalid_argument,
          "reconstruct: bad coefficient vector or mode count");
  return ms.currents.leftCols(M).cast<cdouble>() * alpha.head(M);
}

struct ConvergencePoint {
  Eigen::Index M = 0;
  double eps_G = 0.0;  // relative conductance error
  double eps_B = 0.0;  // relative susceptance error
  cdouble Y = 0.0;     // modal input admittance
};

/// Input admittance Y = I_feed l_feed / V0 reconstructed from M = 0..M_max
/// modes, against the direct solution. Errors are relative to |Y_ref|, or
/// absolute when |Y_ref| < 1e-15.
inline std::vector<ConvergencePoint> admittance_convergence(const ModeSet& ms, const Eigen::VectorXcd& alpha,
                                                           const BasisSet& basis, Eigen::Index feed, cdouble V0,
                                                           cdouble Y_ref, Eigen::Index M_max = -1) {
  if (M_max < 0) M_max = ms.size();
  require(M_max <= ms.size(), errc::invalid_argument, "admittance_convergence: M_max exceeds the mode count");
  require(V0 != 0.0, errc::invalid_argument, "admittance_convergence: zero source voltage");
  const double l = basis.functions[static_cast<std::size_t>(feed)].length;
  const double scale_g = std::abs(Y_ref.real()) >= 1e-15 ? std::abs(Y_ref.real()) : 1.0;
  const double scale_b = std::abs(Y_ref.imag()) >= 1e-15 ? std::abs(Y_ref.imag()) : 1.0;
  std::vector<ConvergencePoint> out;
  cdouble If = 0.0;
  for (Eigen::Index m = 0; m <= M_max; ++m) {
    if (m > 0) If += alpha(m - 1) * ms.currents(feed, m - 1);
    ConvergencePoint p;
    p.M = m;
    p.Y = If * l / V0;
    p.eps_G = std::abs(p.Y.real() - Y_ref.real()) / scale_g;
    p.eps_B = std::abs(p.Y.imag() - Y_ref.imag()) / scale_b;
    out.push_back(p);
  }
  return out;
}

/// CSV `M, eps_G, eps_B, ReY, ImY`.
inline void write_convergence_csv(std::ostream& out, const std::vector<ConvergencePoint>& pts) {
  out << "M,eps_G,eps_B,ReY,ImY\n";
  out.precision(12);
  for (const auto& p : pts) out << p.M << ',' << p.eps_G << ',' << p.eps_B << ',' << p.Y.real() << ',' << p.Y.imag() << '\n';
}

}  // namespace cma
