#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"
#include "cma/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

namespace cma {

/// Z split into antenna (a) and scatterer (b) index sets.
struct PartitionedSystem {
  std::vector<Eigen::Index> antenna, scatterer;
  Eigen::MatrixXcd Zaa, Zab, Zba, Zbb;
  MediumParams medium;

  [[nodiscard]] Eigen::Index size() const {
    return static_cast<Eigen::Index>(antenna.size() + scatterer.size());
  }
  /// Blocks put back in the original ordering.
  [[nodiscard]] Eigen::MatrixXcd reassemble() const {
    Eigen::MatrixXcd Z(size(), size());
    const auto put = [&](const std::vector<Eigen::Index>& r, const std::vector<Eigen::Index>& c,
                         const Eigen::MatrixXcd& B) {
      for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j)
          Z(r[i], c[j]) = B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    };
    put(antenna, antenna, Zaa);
    put(antenna, scatterer, Zab);
    put(scatterer, antenna, Zba);
    put(scatterer, scatterer, Zbb);
    return Z;
  }
};

inline PartitionedSystem partition(const Eigen::MatrixXcd& Z, std::vector<Eigen::Index> antenna) {
  const Eigen::Index N = Z.rows();
  require(Z.cols() == N, errc::invalid_argument, "partition: Z must be square");
  std::sort(antenna.begin(), antenna.end());
  require(std::adjacent_find(antenna.begin(), antenna.end()) == antenna.end(), errc::invalid_argument,
          "partition: duplicate antenna index");
  require(!antenna.empty() && static_cast<Eigen::Index>(antenna.size()) < N, errc::invalid_argument,
          "partition: antenna set must be nonempty and a proper subset");
  require(antenna.front() >= 0 && antenna.back() < N, errc::invalid_argument, "partition: antenna index out of range");
  PartitionedSystem p;
  p.antenna = antenna;
  for (Eigen::Index i = 0, a = 0; i < N; ++i) {
    if (a < static_cast<Eigen::Index>(antenna.size()) && antenna[static_cast<std::size_t>(a)] == i) {
      ++a;
      continue;
    }
    p.scatterer.push_back(i);
  }
  p.Zaa = Z(p.antenna, p.antenna);
  p.Zab = Z(p.antenna, p.scatterer);
  p.Zba = Z(p.scatterer, p.antenna);
  p.Zbb = Z(p.scatterer, p.scatterer);
  return p;
}

inline PartitionedSystem partition(const ImpedanceMatrix& Z, std::vector<Eigen::Index> antenna) {
  auto p = partition(Z.Z, std::move(antenna));
  p.medium = Z.medium;
  return p;
}

/// Basis functions whose edge midpoints lie in the closed box [lo, hi].
inline std::vector<Eigen::Index> select_box(const BasisSet& basis, const Vec3& lo, const Vec3& hi) {
  std::vector<Eigen::Index> v;
  for (std::size_t n = 0; n < basis.size(); ++n) {
    const Vec3 m = basis.edge_midpoint(n);
    if ((m.array() >= lo.array()).all() && (m.array() <= hi.array()).all()) v.push_back(static_cast<Eigen::Index>(n));
  }
  return v;
}

namespace detail {

inline Eigen::PartialPivLU<Eigen::MatrixXcd> factor_bb(const PartitionedSystem& p, double min_rcond) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(p.Zbb);
  const double rc = lu.rcond();
  require(rc > min_rcond, errc::numerical,
          "substructure: scatterer block is singular (reciprocal condition " + std::to_string(rc) +
              "); the frequency may be an internal resonance of the scatterer");
  return lu;
}

}  // namespace detail

/// Z_c = Z_aa - Z_ab Z_bb^-1 Z_ba.
inline Eigen::MatrixXcd compress(const PartitionedSystem& p, double min_rcond = 1e-14) {
  const auto lu = detail::factor_bb(p, min_rcond);
  Eigen::MatrixXcd Zc = p.Zaa - p.Zab * lu.solve(p.Zba);
  return Zc;
}

/// Full current from antenna-region currents: I_b = -Z_bb^-1 Z_ba I_a,
/// returned in the original basis ordering. Works column-wise on matrices.
inline Eigen::MatrixXcd lift(const Eigen::MatrixXcd& Ia, const PartitionedSystem& p, double min_rcond = 1e-14) {
  require(Ia.rows() == static_cast<Eigen::Index>(p.antenna.size()), errc::invalid_argument,
          "lift: antenna current has the wrong length");
  const auto lu = detail::factor_bb(p, min_rcond);
  const Eigen::MatrixXcd Ib = -lu.solve(p.Zba * Ia);
  Eigen::MatrixXcd I(p.size(), Ia.cols());
  for (std::size_t i = 0; i < p.antenna.size(); ++i) I.row(p.antenna[i]) = Ia.row(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < p.scatterer.size(); ++i) I.row(p.scatterer[i]) = Ib.row(static_cast<Eigen::Index>(i));
  return I;
}

/// Restriction of a full-length vector to the antenna index set.
inline Eigen::VectorXcd restrict_antenna(const Eigen::VectorXcd& V, const PartitionedSystem& p) {
  require(V.size() == p.size(), errc::invalid_argument, "restrict_antenna: length mismatch");
  return V(p.antenna);
}

}  // namespace cma
