#pragma once

#include "cma/core.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace cma {

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one; multiply by the physical area.
struct TriangleRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int degree = 0;

  [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussLegendre gauss_legendre(int n) {
  require(n >= 1, errc::invalid_argument, "gauss_legendre: n must be >= 1");
  GaussLegendre g;
  g.nodes.assign(static_cast<std::size_t>(n), 0.0);
  g.weights.assign(static_cast<std::size_t>(n), 0.0);
  // P_n and P_n' by the three-term recurrence
  const auto legendre = [n](double x, double& dp) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double dx = legendre(x, dp) / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    legendre(x, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    g.nodes[static_cast<std::size_t>(i)] = -x;
    g.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    g.weights[static_cast<std::size_t>(i)] = w;
    g.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) g.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return g;
}

namespace detail {

inline void add_orbit3(TriangleRule& r, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  r.points.push_back({b, a, a});
  r.points.push_back({a, b, a});
  r.points.push_back({a, a, b});
  for (int i = 0; i < 3; ++i) r.weights.push_back(w);
}

inline void add_orbit6(TriangleRule& r, double a, double b, double w) {
  const double c = 1.0 - a - b;
  const std::array<std::array<double, 3>, 6> perms{{{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}}};
  for (const auto& p : perms) {
    r.points.push_back(p);
    r.weights.push_back(w);
  }
}

}  // namespace detail

/// Symmetric Dunavant rules with 1, 3, 6, 7 or 12 points.
inline TriangleRule dunavant(int npoints) {
  TriangleRule r;
  switch (npoints) {
    case 1:
      r.points.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weights.push_back(1.0);
      r.degree = 1;
      break;
    case 3:
      detail::add_orbit3(r, 1.0 / 6.0, 1.0 / 3.0);
      r.degree = 2;
      break;
    case 6:
      detail::add_orbit3(r, 0.445948490915965, 0.223381589678011);
      detail::add_orbit3(r, 0.091576213509771, 0.109951743655322);
      r.degree = 4;
      break;
    case 7:
      r.points.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weights.push_back(0.225);
      detail::add_orbit3(r, 0.470142064105115, 0.132394152788506);
      detail::add_orbit3(r, 0.101286507323456, 0.125939180544827);
      r.degree = 5;
      break;
    case 12:
      detail::add_orbit3(r, 0.249286745170910, 0.116786275726379);
      detail::add_orbit3(r, 0.063089014491502, 0.050844906370207);
      detail::add_orbit6(r, 0.053145049844817, 0.310352451033784, 0.082851075618374);
      r.degree = 6;
      break;
    default:
      throw error(errc::invalid_argument,
                  "dunavant: supported point counts are 1, 3, 6, 7, 12 (got " + std::to_string(npoints) + ")");
  }
  return r;
}

/// Collapsed (Duffy) Gauss product rule with n*n points. The (1-u) Jacobian
/// costs one degree: exact to 2n-2.
inline TriangleRule conical_product(int n) {
  const auto g = gauss_legendre(n);
  TriangleRule r;
  r.degree = 2 * n - 2;
  for (int i = 0; i < n; ++i) {
    const double u = 0.5 * (g.nodes[static_cast<std::size_t>(i)] + 1.0);
    const double wu = 0.5 * g.weights[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      const double v = 0.5 * (g.nodes[static_cast<std::size_t>(k)] + 1.0);
      const double wv = 0.5 * g.weights[static_cast<std::size_t>(k)];
      const double x = u;
      const double y = v * (1.0 - u);
      // Jacobian (1-u), the reference triangle has area 1/2
      r.points.push_back({1.0 - x - y, x, y});
      r.weights.push_back(2.0 * wu * wv * (1.0 - u));
    }
  }
  return r;
}

/// Dunavant rule when available, otherwise a collapsed product rule with at
/// least the requested number of points.
inline TriangleRule triangle_rule(int npoints) {
  switch (npoints) {
    case 1:
    case 3:
    case 6:
    case 7:
    case 12:
      return dunavant(npoints);
    default: {
      require(npoints >= 1, errc::invalid_argument, "triangle_rule: npoints must be >= 1");
      int n = 1;
      while (n * n < npoints) ++n;
      return conical_product(n);
    }
  }
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta), uniform in
/// phi. Weights sum to 4*pi.
struct SphereRule {
  std::vector<double> theta;
  std::vector<double> phi;
  std::vector<double> weights;
  int degree = 0;

  [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }
  [[nodiscard]] Vec3 direction(std::size_t i) const {
    const double st = std::sin(theta[i]);
    return {st * std::cos(phi[i]), st * std::sin(phi[i]), std::cos(theta[i])};
  }
};

inline SphereRule sphere_rule(int n_theta, int n_phi) {
  require(n_theta >= 1 && n_phi >= 1, errc::invalid_argument, "sphere_rule: orders must be >= 1");
  const auto g = gauss_legendre(n_theta);
  SphereRule s;
  s.degree = std::min(2 * n_theta - 1, n_phi - 1);
  const double dphi = 2.0 * pi / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    const double th = std::acos(g.nodes[static_cast<std::size_t>(i)]);
    for (int p = 0; p < n_phi; ++p) {
      s.theta.push_back(th);
      s.phi.push_back(p * dphi);
      s.weights.push_back(g.weights[static_cast<std::size_t>(i)] * dphi);
    }
  }
  return s;
}

/// Smallest product rule integrating spherical polynomials up to `degree` exactly.
inline SphereRule sphere_rule_for_degree(int degree) {
  require(degree >= 0, errc::invalid_argument, "sphere_rule_for_degree: degree must be >= 0");
  return sphere_rule(degree / 2 + 1, degree + 1);
}

}  // namespace cma
