#pragma once

#include "cma/core.hpp"

#include <cmath>

namespace cma {

/// Closed-form integrals of 1/R and (r' - r)/R over a flat triangle for an
/// arbitrary observation point r (Wilton-Graglia edge formulas).
struct StaticPotentials {
  double scalar = 0.0;     // integral of 1/|r - r'| dS'
  Vec3 vector = Vec3::Zero();  // integral of (r' - r)/|r - r'| dS'
};

inline StaticPotentials static_potentials(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& r) {
  const Vec3 nrm = (p2 - p1).cross(p3 - p1).normalized();
  const double d = nrm.dot(r - p1);
  const Vec3 rho = r - d * nrm;  // projection into the triangle plane
  const double ad = std::abs(d);
  const Vec3 verts[3] = {p1, p2, p3};

  StaticPotentials out;
  Vec3 inplane = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = verts[i];
    const Vec3& b = verts[(i + 1) % 3];
    const double len = (b - a).norm();
    const Vec3 lhat = (b - a) / len;
    const Vec3 uhat = lhat.cross(nrm);  // outward in-plane edge normal
    const double p0 = (a - rho).dot(uhat);
    const double lp = (b - rho).dot(lhat);
    const double lm = (a - rho).dot(lhat);
    const double rp = (r - b).norm();
    const double rm = (r - a).norm();
    const double r0sq = p0 * p0 + d * d;
    const double scale = len * len;
    if (r0sq > 1e-24 * scale) {
      const double num = rp + lp;
      const double den = rm + lm;
      // for points aligned with the edge one of num/den is a difference of
      // nearly equal magnitudes; rewrite through r0^2
      const double lognum = (lp >= 0.0) ? std::log(num) : std::log(r0sq / std::max(rp - lp, 1e-300));
      const double logden = (lm >= 0.0) ? std::log(den) : std::log(r0sq / std::max(rm - lm, 1e-300));
      const double logterm = lognum - logden;
      out.scalar += p0 * logterm;
      if (ad > 0.0)
        out.scalar -= ad * (std::atan2(p0 * lp, r0sq + ad * rp) - std::atan2(p0 * lm, r0sq + ad * rm));
      inplane += 0.5 * uhat * (r0sq * logterm + lp * rp - lm * rm);
    } else {
      inplane += 0.5 * uhat * (lp * rp - lm * rm);
    }
  }
  out.vector = inplane - d * nrm * out.scalar;
  return out;
}

}  // namespace cma
