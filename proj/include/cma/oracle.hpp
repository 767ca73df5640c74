#pragma once

#include "cma/core.hpp"
#include "cma/geometry.hpp"
#include "cma/efie.hpp"
#include "cma/modes.hpp"
#include "cma/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <array>
#include <complex>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace cma {

/// Characteristic eigenvalue of a PEC sphere for one multipole order.
struct SphereEigenvalue {
  int tau = 0;  // 1: TE (magnetic multipole), 2: TM (electric multipole)
  int l = 0;
  double ka = 0.0;
  double lambda = 0.0;
  int multiplicity = 0;  // 2l + 1
};

/// Closed-form PEC sphere eigenvalues from spherical Bessel functions:
///   TE: lambda = -y_l(ka) / j_l(ka)
///   TM: lambda = -[x y_l(x)]' / [x j_l(x)]' at x = ka
inline double sphere_lambda(int tau, int l, double ka) {
  require(tau == 1 || tau == 2, errc::invalid_argument, "sphere_lambda: tau must be 1 (TE) or 2 (TM)");
  require(l >= 1, errc::invalid_argument, "sphere_lambda: l must be >= 1");
  require(ka > 0 && std::isfinite(ka), errc::invalid_argument, "sphere_lambda: ka must be positive");
  const auto ul = static_cast<unsigned>(l);
  const double jl = std::sph_bessel(ul, ka), yl = std::sph_neumann(ul, ka);
  if (tau == 1) return -yl / jl;
  // [x z_l]' = x z_{l-1} - l z_l
  const double dj = ka * std::sph_bessel(ul - 1, ka) - l * jl;
  const double dy = ka * std::sph_neumann(ul - 1, ka) - l * yl;
  return -dy / dj;
}

/// All (tau, l) eigenvalues for l = 1..l_max, sorted by |lambda|.
inline std::vector<SphereEigenvalue> sphere_eigenvalues(double ka, int l_max) {
  require(l_max >= 1, errc::invalid_argument, "sphere_eigenvalues: l_max must be >= 1");
  std::vector<SphereEigenvalue> out;
  for (int l = 1; l <= l_max; ++l)
    for (int tau = 1; tau <= 2; ++tau) out.push_back({tau, l, ka, sphere_lambda(tau, l, ka), 2 * l + 1});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return std::abs(a.lambda) < std::abs(b.lambda); });
  return out;
}

/// Sphere eigenvalues expanded by multiplicity, i.e. the sequence a discrete
/// solver should reproduce mode by mode.
inline std::vector<double> sphere_spectrum(double ka, int l_max) {
  std::vector<double> v;
  for (const auto& e : sphere_eigenvalues(ka, l_max))
    for (int i = 0; i < e.multiplicity; ++i) v.push_back(e.lambda);
  return v;
}

/// Mie scattering coefficient of the PEC sphere, exp(+j w t) with outgoing
/// h_l = j_l - j y_l:
///   TE: t = -j_l / h_l,   TM: t = -[x j_l]' / [x h_l]'.
inline cdouble sphere_t(int tau, int l, double ka) {
  require(tau == 1 || tau == 2, errc::invalid_argument, "sphere_t: tau must be 1 (TE) or 2 (TM)");
  require(l >= 1 && ka > 0, errc::invalid_argument, "sphere_t: need l >= 1 and ka > 0");
  const auto ul = static_cast<unsigned>(l);
  const double jl = std::sph_bessel(ul, ka), yl = std::sph_neumann(ul, ka);
  if (tau == 1) return -jl / cdouble(jl, -yl);
  const double dj = ka * std::sph_bessel(ul - 1, ka) - l * jl;
  const double dy = ka * std::sph_neumann(ul - 1, ka) - l * yl;
  return -dj / cdouble(dj, -dy);
}

/// CSV `tau, l, ka, lambda` (tau as TE/TM).
inline void write_sphere_csv(std::ostream& out, const std::vector<SphereEigenvalue>& v) {
  out << "tau,l,ka,lambda\n";
  out.precision(15);
  for (const auto& e : v) out << (e.tau == 1 ? "TE" : "TM") << ',' << e.l << ',' << e.ka << ',' << e.lambda << '\n';
}

// ------------------------------------------------------------ small pencils

/// Eigenpairs of X I = lambda R I with finite lambda, sorted by |lambda|;
/// vectors scaled to (1/2) I^T R I = 1 where that is positive.
struct SmallGep {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd vectors;
  std::vector<double> poly;  // det(X - lambda R), ascending coefficients
};

namespace detail {

using Poly = std::vector<double>;

inline double poly_eval(const Poly& p, double x) {
  double s = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) s = s * x + p[i];
  return s;
}

inline Poly poly_derivative(const Poly& p) {
  Poly d;
  for (std::size_t i = 1; i < p.size(); ++i) d.push_back(static_cast<double>(i) * p[i]);
  return d;
}

// Laplace expansion along rows with memoisation on the column subset.
inline Poly pencil_determinant(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R) {
  const int n = static_cast<int>(X.rows());
  std::vector<Poly> memo(std::size_t{1} << n);
  std::vector<char> have(std::size_t{1} << n, 0);
  std::function<Poly(unsigned)> det = [&](unsigned mask) -> Poly {
    if (have[mask]) return memo[mask];
    const int row = n - __builtin_popcount(mask);
    Poly acc(static_cast<std::size_t>(n + 1), 0.0);
    if (mask == 0) {
      acc[0] = 1.0;
    } else {
      int sign = 1;
      for (int j = 0; j < n; ++j) {
        if (!(mask & (1u << j))) continue;
        const Poly sub = det(mask & ~(1u << j));
        const double a = X(row, j), b = -R(row, j);  // entry a + b lambda
        for (std::size_t i = 0; i + 1 < acc.size(); ++i) {
          acc[i] += sign * a * sub[i];
          acc[i + 1] += sign * b * sub[i];
        }
        sign = -sign;
      }
    }
    have[mask] = 1;
    return memo[mask] = acc;
  };
  return det((1u << n) - 1);
}

inline Poly trim(Poly p, double rel) {
  double mx = 0.0;
  for (double c : p) mx = std::max(mx, std::abs(c));
  while (p.size() > 1 && std::abs(p.back()) <= rel * mx) p.pop_back();
  return p;
}

inline double bisect(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (m == a || m == b) break;
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

// Real roots in [lo, hi]: the critical points of p split the interval into
// monotone pieces, each holding at most one simple root.
inline std::vector<double> real_roots(const Poly& p, double lo, double hi) {
  const std::size_t deg = p.size() - 1;
  std::vector<double> out;
  if (deg == 0) return out;
  if (deg == 1) {
    const double r = -p[0] / p[1];
    if (r >= lo && r <= hi) out.push_back(r);
    return out;
  }
  std::vector<double> knots{lo};
  for (double c : real_roots(poly_derivative(p), lo, hi)) knots.push_back(c);
  knots.push_back(hi);
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  const auto f = [&](double x) { return poly_eval(p, x); };
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i], b = knots[i + 1];
    const double fa = f(a), fb = f(b);
    if (fa == 0.0) {
      out.push_back(a);
    } else if ((fa < 0) != (fb < 0)) {
      out.push_back(bisect(f, a, b));
    }
  }
  // touching roots at critical points (no sign change)
  for (std::size_t i = 1; i + 1 < knots.size(); ++i) {
    const double c = knots[i];
    double mag = 0.0, x = 1.0;
    for (double co : p) {
      mag += std::abs(co) * x;
      x *= std::abs(c);
    }
    if (std::abs(f(c)) <= 1e-12 * mag &&
        std::none_of(out.begin(), out.end(), [&](double r) { return std::abs(r - c) <= 1e-9 * (1 + std::abs(c)); }))
      out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Reference solver for tiny pencils: eigenvalues as the real roots of the
/// expanded determinant det(X - lambda R), bracketed inside the Cauchy bound
/// and polished by bisection on the LU determinant; vectors from the SVD null
/// space of X - lambda R.
inline SmallGep brute_small_gep(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R) {
  const Eigen::Index N = X.rows();
  require(N >= 1 && N <= 8 && X.cols() == N && R.rows() == N && R.cols() == N, errc::invalid_argument,
          "brute_small_gep: need square X and R of size 1..8");
  require(R.cwiseAbs().maxCoeff() > 0, errc::invalid_argument, "brute_small_gep: R is identically zero");
  SmallGep out;
  out.poly = detail::pencil_determinant(X, R);
  const auto p = detail::trim(out.poly, 1e-12);
  const std::size_t deg = p.size() - 1;
  std::vector<double> roots;
  if (deg > 0) {
    double bound = 0.0;
    for (std::size_t i = 0; i < deg; ++i) bound = std::max(bound, std::abs(p[i] / p[deg]));
    bound += 1.0;
    roots = detail::real_roots(p, -bound, bound);
  }
  const auto lu_det = [&](double l) { return Eigen::MatrixXd(X - l * R).partialPivLu().determinant(); };
  for (double& r : roots) {
    const double d = 1e-7 * (1.0 + std::abs(r));
    if ((lu_det(r - d) < 0) != (lu_det(r + d) < 0)) r = detail::bisect(lu_det, r - d, r + d);
  }
  std::sort(roots.begin(), roots.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  out.lambda.resize(static_cast<Eigen::Index>(roots.size()));
  out.vectors.resize(N, static_cast<Eigen::Index>(roots.size()));
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out.lambda(c) = roots[i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X - roots[i] * R, Eigen::ComputeFullV);
    Eigen::VectorXd v = svd.matrixV().col(N - 1);
    const double pw = 0.5 * v.dot(R * v);
    if (pw > 0) v /= std::sqrt(pw);
    Eigen::Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0) v = -v;
    out.vectors.col(c) = v;
  }
  return out;
}

// ------------------------------------------------------- reference Z entries

struct ReferenceZOptions {
  double tol = 1e-6;    // relative change between successive refinement levels
  int max_level = 5;
  /// Polar integration about the projected test point on the source
  /// triangle, which removes the 1/R singularity. Off: plain product rule.
  bool polar = true;
};

namespace detail {

struct HalfRwg {
  int tri = -1;
  double c = 0.0;  // f = c (r - v)
  double d = 0.0;  // div f
  Vec3 v;
};

inline std::array<HalfRwg, 2> halves(const BasisSet& b, std::size_t n) {
  const auto& f = b.functions[n];
  return {HalfRwg{f.tri_plus, f.length / (2 * f.area_plus), f.length / f.area_plus, b.vertex(f.free_plus)},
          HalfRwg{f.tri_minus, -f.length / (2 * f.area_minus), -f.length / f.area_minus, b.vertex(f.free_minus)}};
}

// int G dS' and int G r' dS' over triangle (a, b, c) seen from r.
inline void source_integrals(const Vec3& r, const Vec3& a, const Vec3& b, const Vec3& c, double k, int order,
                             bool polar, cdouble& g0, CVec3& g1) {
  g0 = 0.0;
  g1 = CVec3::Zero();
  const auto gl = gauss_legendre(order);
  if (!polar) {
    const auto kern = [&](const Vec3& x, double w) {
      const double R = (r - x).norm();
      const cdouble g = std::exp(-j_unit * k * R) / (4.0 * pi * R) * w;
      g0 += g;
      g1 += g * x.cast<cdouble>();
    };
    const Vec3 nrm = (b - a).cross(c - a);
    const double area = 0.5 * nrm.norm();
    const auto rule = conical_product(order);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      kern(l[0] * a + l[1] * b + l[2] * c, rule.weights[q] * area);
    }
    return;
  }
  // Each edge with the projected point p spans a sub-triangle. Along the
  // edge, x = hgt sinh(s) flattens the angular near-singularity; radially,
  // R = h + (Rmax - h) v^2 makes rho dR / R smooth for any height h.
  const Vec3 nh = (b - a).cross(c - a).normalized();
  const double h = (r - a).dot(nh);
  const Vec3 p = r - h * nh;
  const double ah = std::abs(h);
  const Vec3 vs[3] = {a, b, c};
  const double lscale = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
  for (int e = 0; e < 3; ++e) {
    const Vec3& e0 = vs[e];
    const Vec3& e1 = vs[(e + 1) % 3];
    const Vec3 t = (e1 - e0).normalized();
    const Vec3 foot = e0 + (p - e0).dot(t) * t;
    const double hgt = (foot - p).norm();
    if (hgt <= 1e-14 * lscale) continue;
    const double sg = (e0 - p).cross(e1 - p).dot(nh) > 0 ? 1.0 : -1.0;
    const double s0 = std::asinh((e0 - foot).dot(t) / hgt), s1 = std::asinh((e1 - foot).dot(t) / hgt);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double sv = s0 + 0.5 * (gl.nodes[i] + 1.0) * (s1 - s0);
      const double ws = 0.5 * gl.weights[i] * (s1 - s0);
      const Vec3 q = foot + hgt * std::sinh(sv) * t;
      const double rho_max = (q - p).norm();
      const Vec3 w = (q - p) / rho_max;
      const double dtheta = ws / std::cosh(sv);
      const double Rmax = std::hypot(ah, rho_max);
      for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
        const double v = 0.5 * (gl.nodes[j] + 1.0), wv = 0.5 * gl.weights[j];
        const double R = ah + (Rmax - ah) * v * v;
        const double dR = 2.0 * (Rmax - ah) * v * wv;
        const double rho = std::sqrt(std::max(0.0, R * R - ah * ah));
        // rho drho dtheta G = exp(-jkR)/(4 pi) dR dtheta
        const cdouble g = std::exp(-j_unit * k * R) / (4.0 * pi) * (sg * dR * dtheta);
        g0 += g;
        g1 += g * (p + rho * w).cast<cdouble>();
      }
    }
  }
}

}  // namespace detail

/// Z_mn from the mixed-potential integrand by nested quadrature, both orders
/// doubling per level until successive levels agree to `tol`. Test-only reference.
inline cdouble reference_z_entry(const BasisSet& basis, std::size_t m, std::size_t n, const MediumParams& medium,
                                 const ReferenceZOptions& opt = {}) {
  require(m < basis.size() && n < basis.size(), errc::invalid_argument, "reference_z_entry: basis index out of range");
  const double k = medium.k;
  const cdouble jkz0 = j_unit * k * medium.impedance();
  const auto hm = detail::halves(basis, m), hn = detail::halves(basis, n);
  const auto tri = [&](int t, int i) { return basis.vertex(basis.mesh.triangles[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]); };

  // level L: collapsed Gauss product with 4 * 2^L points per direction on
  // the test triangle (nodes cluster at its edges, where the potential has
  // logarithmic derivatives), inner order 6 + 4 L
  const auto estimate = [&](int level) {
    const int order = 6 + 4 * level;
    const auto rule = conical_product(4 << level);
    cdouble total = 0.0;
    for (const auto& a : hm) {
      const Vec3 P0 = tri(a.tri, 0), P1 = tri(a.tri, 1), P2 = tri(a.tri, 2);
      const double area = 0.5 * (P1 - P0).cross(P2 - P0).norm();
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto& bc = rule.points[q];
        const Vec3 r = bc[0] * P0 + bc[1] * P1 + bc[2] * P2;
        const double w = rule.weights[q] * area;
        for (const auto& b : hn) {
          cdouble g0;
          CVec3 g1;
          detail::source_integrals(r, tri(b.tri, 0), tri(b.tri, 1), tri(b.tri, 2), k, order, opt.polar, g0, g1);
          const cdouble vec = a.c * b.c * (r - a.v).cast<cdouble>().dot(g1 - b.v.cast<cdouble>() * g0);
          total += w * jkz0 * (vec - a.d * b.d * g0 / (k * k));
        }
      }
    }
    return total;
  };
  cdouble prev = estimate(0);
  for (int level = 1; level <= opt.max_level; ++level) {
    const cdouble cur = estimate(level);
    if (std::abs(cur - prev) <= opt.tol * std::abs(cur)) return cur;
    prev = cur;
  }
  throw error(errc::convergence, "reference_z_entry: no convergence to " + std::to_string(opt.tol) +
                                     " within " + std::to_string(opt.max_level) +
                                     " refinement levels" + (opt.polar ? "" : "; singular pairs need the polar path"));
}

// ------------------------------------------------------- sphere comparison

struct SphereComparison {
  struct Row {
    Eigen::Index index = 0;  // position in the ModeSet
    double lambda = 0.0, reference = 0.0, rel_err = 0.0;
    int tau = 0, l = 0;
  };
  struct Group {
    int tau = 0, l = 0, multiplicity = 0, found = 0;
    double reference = 0.0, mean = 0.0, spread = 0.0, max_rel_err = 0.0;
    bool identified = false;  // all members present and spread within tolerance
  };
  std::vector<Row> rows;
  std::vector<Group> groups;  // groups with |reference| <= lambda_max
  double max_rel_err = 0.0;   // over rows with |reference| <= lambda_max
  bool complete = false;      // every reference eigenvalue up to lambda_max has a numeric partner

  [[nodiscard]] int within(double tol) const {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(), [&](const Row& r) { return r.rel_err < tol; }));
  }
};

/// Pairs the valid modes of a sphere ModeSet (sorted by |lambda|) with the
/// multiplicity-expanded closed-form spectrum in the same order.
inline SphereComparison compare_sphere(const ModeSet& ms, double ka, double lambda_max = 20.0, double spread_tol = 0.02) {
  require(ka > 0 && lambda_max > 0, errc::invalid_argument, "compare_sphere: ka and lambda_max must be positive");
  const auto valid = ms.valid_indices();
  int l_max = 1, total = 6;
  while (total < static_cast<int>(valid.size()) + 1 || std::abs(sphere_lambda(1, l_max, ka)) <= lambda_max ||
         std::abs(sphere_lambda(2, l_max, ka)) <= lambda_max) {
    ++l_max;
    total += 2 * (2 * l_max + 1);
  }
  std::vector<SphereEigenvalue> exp;
  for (const auto& e : sphere_eigenvalues(ka, l_max))
    for (int i = 0; i < e.multiplicity; ++i) exp.push_back(e);
  SphereComparison c;
  const std::size_t n = std::min(valid.size(), exp.size());
  for (std::size_t i = 0; i < n; ++i) {
    SphereComparison::Row r;
    r.index = valid[i];
    r.lambda = ms.lambda(valid[i]);
    r.reference = exp[i].lambda;
    r.tau = exp[i].tau;
    r.l = exp[i].l;
    r.rel_err = std::abs(r.lambda - r.reference) / std::abs(r.reference);
    c.rows.push_back(r);
  }
  std::size_t needed = 0;
  while (needed < exp.size() && std::abs(exp[needed].lambda) <= lambda_max) ++needed;
  c.complete = n >= needed;
  for (const auto& r : c.rows)
    if (std::abs(r.reference) <= lambda_max) c.max_rel_err = std::max(c.max_rel_err, r.rel_err);
  for (const auto& e : sphere_eigenvalues(ka, l_max)) {
    if (std::abs(e.lambda) > lambda_max) continue;
    SphereComparison::Group g;
    g.tau = e.tau;
    g.l = e.l;
    g.multiplicity = e.multiplicity;
    g.reference = e.lambda;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (const auto& r : c.rows)
      if (r.tau == e.tau && r.l == e.l) {
        ++g.found;
        sum += r.lambda;
        lo = std::min(lo, r.lambda);
        hi = std::max(hi, r.lambda);
        g.max_rel_err = std::max(g.max_rel_err, r.rel_err);
      }
    if (g.found > 0) {
      g.mean = sum / g.found;
      g.spread = (hi - lo) / std::abs(g.mean);
    }
    g.identified = g.found == g.multiplicity && g.spread <= spread_tol;
    c.groups.push_back(g);
  }
  return c;
}

/// CSV `index, lambda, reference, tau, l, rel_err`.
inline void write_sphere_comparison_csv(std::ostream& out, const SphereComparison& c) {
  out << "index,lambda,reference,tau,l,rel_err\n";
  out.precision(12);
  for (const auto& r : c.rows)
    out << r.index << ',' << r.lambda << ',' << r.reference << ',' << (r.tau == 1 ? "TE" : "TM") << ',' << r.l << ','
        << r.rel_err << '\n';
}

}  // namespace cma
