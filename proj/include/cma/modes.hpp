#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cma {

struct ModeOptions {
  double lambda_cap = 1e12;
  /// Modes whose radiated-power fraction (I^T R I) / (||R||_2 ||I||^2) falls
  /// below null_tol are treated as null-space residents. Below ~1e-6 the unit
  /// normalisation can no longer be resolved to 1e-8 in double precision.
  double null_tol = 1e-6;
  double imag_tol = 1e-6;        // residual imaginary part after phase rotation
  double lambda_imag_tol = 1e-10;
  bool rayleigh_ritz = true;     // joint re-orthonormalisation of the valid modes
  /// With all N modes present, replace the invalid vectors by an X-diagonal
  /// basis of the R-orthogonal complement of the valid ones, so the full set
  /// stays a complete, Z-orthogonal expansion basis.
  bool complete_invalid = true;
  /// Valid modes must satisfy ||X I - lambda R I|| <= residual_tol ||X||_F ||I||.
  double residual_tol = 1e-8;
  double symmetry_tol = 1e-8;
  double psd_tol = 1e-10;
  std::size_t max_unknowns = 5000;
};

/// Characteristic modes at one frequency, sorted by |lambda| ascending.
struct ModeSet {
  double k = 0.0;
  Eigen::VectorXd lambda;
  Eigen::VectorXd lambda_imag;  // imaginary part reported by the solver
  Eigen::MatrixXd currents;     // one column per mode
  Eigen::VectorXd power;        // (1/2) I^T R I
  Eigen::VectorXd reactive;     // (1/2) I^T X I
  std::vector<bool> valid;
  std::string solver;
  Eigen::Index rank = -1;  // retained R rank (reduced route) or wave count (T route)
  double lambda_cap = 0.0;
  bool normalized = false;

  [[nodiscard]] Eigen::Index size() const { return lambda.size(); }
  [[nodiscard]] Eigen::Index unknowns() const { return currents.rows(); }
  [[nodiscard]] Eigen::Index num_valid() const {
    return static_cast<Eigen::Index>(std::count(valid.begin(), valid.end(), true));
  }
  [[nodiscard]] std::vector<Eigen::Index> valid_indices() const {
    std::vector<Eigen::Index> v;
    for (Eigen::Index i = 0; i < size(); ++i)
      if (valid[static_cast<std::size_t>(i)]) v.push_back(i);
    return v;
  }
};

struct ModalMetrics {
  double significance = 0.0;  // |1 + j lambda|^-1
  double angle = 0.0;         // pi - atan(lambda), radians
};

inline ModalMetrics modal_metrics(double lambda) {
  if (std::isinf(lambda)) return {0.0, lambda > 0 ? pi / 2 : 3 * pi / 2};
  require(std::isfinite(lambda), errc::invalid_argument, "modal_metrics: lambda must be finite");
  return {1.0 / std::hypot(1.0, lambda), pi - std::atan(lambda)};
}

/// Flags |lambda| > cap (and non-finite eigenvalues) invalid. Returns the number of valid modes.
inline Eigen::Index filter_dynamic_range(ModeSet& modes, double cap) {
  require(cap > 0, errc::invalid_argument, "filter_dynamic_range: cap must be positive");
  modes.lambda_cap = cap;
  for (Eigen::Index i = 0; i < modes.size(); ++i) {
    const double l = modes.lambda(i);
    if (!std::isfinite(l) || std::abs(l) > cap) modes.valid[static_cast<std::size_t>(i)] = false;
  }
  return modes.num_valid();
}

namespace detail {

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index p = 0;
  v.cwiseAbs().maxCoeff(&p);
  if (v(p) < 0) v = -v;
}

// ||R||_2 of a symmetric PSD matrix by power iteration
inline double spectral_scale(const Eigen::MatrixXd& R) {
  if (R.rows() == 0) return 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(R.rows()) / std::sqrt(static_cast<double>(R.rows()));
  double est = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = R * v;
    const double n = w.norm();
    if (n == 0.0) return R.cwiseAbs().maxCoeff();
    const double prev = est;
    est = v.dot(w);
    v = w / n;
    if (it > 5 && std::abs(est - prev) <= 1e-6 * std::abs(est)) break;
  }
  return std::max(std::abs(est), R.diagonal().cwiseAbs().maxCoeff());
}

// Rayleigh-Ritz of the pencil on the span of the valid modes: the returned
// currents are R-orthonormal and X-diagonal to round-off, which also fixes the
// basis inside degenerate groups.
inline void rayleigh_ritz(ModeSet& ms, const Eigen::MatrixXd& R, const Eigen::MatrixXd& X) {
  const auto idx = ms.valid_indices();
  if (idx.empty()) return;
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd V(ms.currents.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) V.col(c) = ms.currents.col(idx[static_cast<std::size_t>(c)]);
  const Eigen::MatrixXd RV = R * V, XV = X * V;
  Eigen::MatrixXd B = 0.5 * V.transpose() * RV, A = 0.5 * V.transpose() * XV;
  B = 0.5 * (B + B.transpose()).eval();
  A = 0.5 * (A + A.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B);
  if (es.info() != Eigen::Success) return;
  const Eigen::MatrixXd W = V * es.eigenvectors();
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto s = idx[static_cast<std::size_t>(c)];
    ms.currents.col(s) = W.col(c);
    ms.lambda(s) = es.eigenvalues()(c);
  }
}

inline void complete_invalid(ModeSet& ms, const Eigen::MatrixXd& R, const Eigen::MatrixXd& X) {
  const Eigen::Index N = ms.unknowns();
  const auto idx = ms.valid_indices();
  const auto nv = static_cast<Eigen::Index>(idx.size());
  if (nv == N || ms.size() != N) return;
  Eigen::MatrixXd V(N, nv);
  for (Eigen::Index c = 0; c < nv; ++c) V.col(c) = ms.currents.col(idx[static_cast<std::size_t>(c)]);
  Eigen::MatrixXd Q2;
  if (nv == 0) {
    Q2 = Eigen::MatrixXd::Identity(N, N);
  } else {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(R * V);
    Q2 = (qr.householderQ() * Eigen::MatrixXd::Identity(N, N)).rightCols(N - nv);
  }
  const Eigen::Index n2 = N - nv;
  Eigen::MatrixXd R2 = Q2.transpose() * R * Q2, X2 = Q2.transpose() * X * Q2;
  R2 = 0.5 * (R2 + R2.transpose()).eval();
  X2 = 0.5 * (X2 + X2.transpose()).eval();

  // The complement still carries weakly radiating modes that failed the gates.
  // Split it on the eigenvalues of R2: the radiating part is a
  // Schur-reduced definite pencil, the rest is diagonalized in X alone. Both
  // blocks are then Z-orthogonal to each other and to the valid span.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(R2);
  const double floor = 1e-12 * spectral_scale(R);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n2; ++i) r += er.eigenvalues()(i) > floor;
  const Eigen::Index n0 = n2 - r;
  Eigen::MatrixXd W;
  if (r > 0 && n0 > 0) {
    const Eigen::MatrixXd U = er.eigenvectors().rightCols(r), U0 = er.eigenvectors().leftCols(n0);
    const Eigen::MatrixXd X00 = 0.5 * (U0.transpose() * X2 * U0 + (U0.transpose() * X2 * U0).transpose());
    const Eigen::MatrixXd X0r = U0.transpose() * X2 * U;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(X00);
    if (lu.rcond() > 1e-12) {
      const Eigen::MatrixXd E = lu.solve(X0r);
      const Eigen::VectorXd is = er.eigenvalues().tail(r).cwiseSqrt().cwiseInverse();
      Eigen::MatrixXd C = is.asDiagonal() * (U.transpose() * X2 * U - X0r.transpose() * E) * is.asDiagonal();
      C = 0.5 * (C + C.transpose()).eval();
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(C);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e0(X00);
      W.resize(N, n2);
      W.leftCols(r) = Q2 * (U - U0 * E) * is.asDiagonal() * ec.eigenvectors();
      W.rightCols(n0) = Q2 * U0 * e0.eigenvectors();
    }
  }
  if (W.cols() == 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X2);
    W = Q2 * es.eigenvectors();
  }
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < ms.size(); ++i) {
    if (ms.valid[static_cast<std::size_t>(i)]) continue;
    const Eigen::VectorXd u = W.col(c++).normalized();
    const double p = u.dot(R * u), q = u.dot(X * u);
    ms.currents.col(i) = u;
    ms.lambda(i) = p > 0 ? q / p : std::copysign(std::numeric_limits<double>::infinity(), q);
    ms.lambda_imag(i) = 0.0;
  }
}

inline void sort_by_magnitude(ModeSet& ms) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ms.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    const double la = std::isnan(ms.lambda(a)) ? std::numeric_limits<double>::infinity() : std::abs(ms.lambda(a));
    const double lb = std::isnan(ms.lambda(b)) ? std::numeric_limits<double>::infinity() : std::abs(ms.lambda(b));
    return la < lb;
  });
  ModeSet out = ms;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto s = order[i];
    const auto d = static_cast<Eigen::Index>(i);
    out.lambda(d) = ms.lambda(s);
    out.lambda_imag(d) = ms.lambda_imag(s);
    out.currents.col(d) = ms.currents.col(s);
    out.power(d) = ms.power(s);
    out.reactive(d) = ms.reactive(s);
    out.valid[i] = ms.valid[static_cast<std::size_t>(s)];
  }
  ms = std::move(out);
}

}  // namespace detail

/// Turns raw (possibly complex, arbitrarily scaled) eigenvectors into a ModeSet:
/// phase rotation to real, (1/2) I^T R I = 1 scaling, null-space and
/// dynamic-range flags, joint orthonormalisation of the valid modes and
/// ordering by |lambda|. Modes that cannot be normalised are kept with unit
/// Euclidean norm and flagged invalid.
inline ModeSet normalize(const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& vectors, const Eigen::MatrixXd& R,
                         const Eigen::MatrixXd& X, const ModeOptions& opt = {}) {
  const Eigen::Index N = vectors.rows(), M = vectors.cols();
  require(lambda.size() == M && R.rows() == N && R.cols() == N && X.rows() == N && X.cols() == N,
          errc::invalid_argument, "normalize: dimension mismatch");
  ModeSet ms;
  ms.lambda.resize(M);
  ms.lambda_imag.resize(M);
  ms.currents.resize(N, M);
  ms.power.resize(M);
  ms.reactive.resize(M);
  ms.valid.assign(static_cast<std::size_t>(M), true);
  ms.lambda_cap = opt.lambda_cap;
  const double rs = detail::spectral_scale(R);

  for (Eigen::Index c = 0; c < M; ++c) {
    auto flag = ms.valid.begin() + c;
    const cdouble l = lambda(c);
    ms.lambda(c) = l.real();
    ms.lambda_imag(c) = l.imag();
    if (!std::isfinite(l.real()) || std::abs(l.imag()) > opt.lambda_imag_tol * (1.0 + std::abs(l.real())) ||
        std::isnan(l.imag()))
      *flag = false;

    Eigen::VectorXcd v = vectors.col(c);
    const double vn = v.norm();
    if (!(vn > 0.0) || !std::isfinite(vn)) {
      ms.currents.col(c).setZero();
      ms.power(c) = ms.reactive(c) = 0.0;
      *flag = false;
      continue;
    }
    v /= vn;
    Eigen::Index p = 0;
    v.cwiseAbs().maxCoeff(&p);
    v *= std::conj(v(p)) / std::abs(v(p));
    if (v.imag().norm() > opt.imag_tol) *flag = false;
    Eigen::VectorXd u = v.real();
    u /= u.norm();
    const double pw = 0.5 * u.dot(R * u);
    if (pw > 0.5 * opt.null_tol * rs) {
      u /= std::sqrt(pw);
    } else {
      *flag = false;
    }
    detail::fix_sign(u);
    ms.currents.col(c) = u;
  }
  filter_dynamic_range(ms, opt.lambda_cap);
  if (opt.rayleigh_ritz) {
    detail::rayleigh_ritz(ms, R, X);
    filter_dynamic_range(ms, opt.lambda_cap);
  }
  if (opt.complete_invalid) detail::complete_invalid(ms, R, X);
  const double xn = X.norm();
  for (Eigen::Index c = 0; c < M; ++c) {
    auto u = ms.currents.col(c);
    detail::fix_sign(u);
    const Eigen::VectorXd ru = R * u, xu = X * u;
    ms.power(c) = 0.5 * u.dot(ru);
    ms.reactive(c) = 0.5 * u.dot(xu);
    if (ms.valid[static_cast<std::size_t>(c)] &&
        (xu - ms.lambda(c) * ru).norm() > opt.residual_tol * xn * u.norm())
      ms.valid[static_cast<std::size_t>(c)] = false;
  }
  detail::sort_by_magnitude(ms);
  ms.normalized = true;
  return ms;
}

namespace detail {

inline void check_pencil(const Eigen::MatrixXcd& Z, const ModeOptions& opt, const char* who) {
  require(Z.rows() == Z.cols() && Z.rows() > 0, errc::invalid_argument, std::string(who) + ": Z must be square");
  require(static_cast<std::size_t>(Z.rows()) <= opt.max_unknowns, errc::numerical,
          std::string(who) + ": " + std::to_string(Z.rows()) + " unknowns exceed the dense cap");
  const double d = symmetry_defect(Z);
  require(d <= opt.symmetry_tol, errc::numerical,
          std::string(who) + ": Z is not symmetric (defect " + std::to_string(d) + "); symmetrize it first");
}

inline void check_psd(const Eigen::VectorXd& eig, const ModeOptions& opt, const char* who) {
  const double mx = eig.maxCoeff();
  require(mx > 0, errc::numerical, std::string(who) + ": R has no positive eigenvalue");
  require(eig.minCoeff() >= -opt.psd_tol * mx, errc::numerical,
          std::string(who) + ": R is indefinite beyond tolerance (min/max eigenvalue " +
              std::to_string(eig.minCoeff() / mx) + ")");
}

}  // namespace detail

/// All N characteristic modes from the QZ (generalized Schur) decomposition of (X, R).
inline ModeSet decompose_full(const Eigen::MatrixXcd& Z, double k, const ModeOptions& opt = {}) {
  detail::check_pencil(Z, opt, "decompose_full");
  const Eigen::MatrixXd R = Z.real(), X = Z.imag();
  detail::check_psd(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(R, Eigen::EigenvaluesOnly).eigenvalues(), opt,
                    "decompose_full");
  const auto n = static_cast<lapack_int>(R.rows());
  Eigen::MatrixXd A = X, B = R, VR(n, n);
  Eigen::VectorXd ar(n), ai(n), be(n);
  double vl_dummy = 0.0;
  const lapack_int info = LAPACKE_dggev(LAPACK_COL_MAJOR, 'N', 'V', n, A.data(), n, B.data(), n, ar.data(), ai.data(),
                                        be.data(), &vl_dummy, 1, VR.data(), n);
  require(info == 0, errc::numerical, "decompose_full: QZ iteration failed (info " + std::to_string(info) + ")");

  Eigen::VectorXcd lam(n);
  Eigen::MatrixXcd vec(n, n);
  for (lapack_int j = 0; j < n; ++j) {
    if (ai(j) != 0.0 && j + 1 < n) {
      // complex conjugate pair stored as (re, im) columns
      for (int s = 0; s < 2; ++s) {
        const double sg = s == 0 ? 1.0 : -1.0;
        lam(j + s) = be(j + s) != 0.0 ? cdouble(ar(j + s), ai(j + s)) / be(j + s)
                                      : cdouble(std::numeric_limits<double>::infinity(), 0.0);
        vec.col(j + s) = VR.col(j).cast<cdouble>() + sg * j_unit * VR.col(j + 1).cast<cdouble>();
      }
      ++j;
      continue;
    }
    lam(j) = be(j) != 0.0 ? cdouble(ar(j) / be(j), 0.0)
                          : cdouble(std::copysign(std::numeric_limits<double>::infinity(), ar(j)), 0.0);
    vec.col(j) = VR.col(j).cast<cdouble>();
  }
  ModeSet ms = normalize(lam, vec, R, X, opt);
  ms.k = k;
  ms.solver = "full";
  ms.rank = n;
  return ms;
}

inline ModeSet decompose_full(const ImpedanceMatrix& Z, const ModeOptions& opt = {}) {
  return decompose_full(Z.Z, Z.medium.k, opt);
}

struct IterativeOptions {
  double tol = 1e-11;  // ||X x - lambda R x|| <= tol ||X|| ||x||
  int max_restarts = 300;
  int block = 0;       // 0: min(M, 8), at least 2 where possible
  unsigned seed = 12345;
};

/// The M smallest-|lambda| modes by a thick-restarted block Krylov method on
/// X^-1 R with Rayleigh-Ritz extraction in the R-inner product.
inline ModeSet decompose_iterative(const Eigen::MatrixXcd& Z, double k, Eigen::Index M, const ModeOptions& opt = {},
                                   const IterativeOptions& it = {}) {
  detail::check_pencil(Z, opt, "decompose_iterative");
  const Eigen::Index N = Z.rows();
  require(M >= 1 && M <= N, errc::invalid_argument, "decompose_iterative: need 1 <= M <= N");
  const Eigen::MatrixXd R = Z.real(), X = Z.imag();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(X);
  const double xn = X.norm(), rn = R.norm();
  require(rn > 0, errc::numerical, "decompose_iterative: R is zero");
  require(lu.rcond() > 1e-15, errc::numerical, "decompose_iterative: X is singular (resonant mode at lambda = 0)");

  const Eigen::Index b = std::min<Eigen::Index>(N, it.block > 0 ? it.block : std::clamp<Eigen::Index>(M, 2, 8));
  const Eigen::Index keep = std::min<Eigen::Index>(N, M + b);
  const Eigen::Index cap = std::min<Eigen::Index>(N, std::max<Eigen::Index>(keep + 4 * b, 2 * M + 2 * b));

  // R-orthogonalise new columns against S (two passes), drop R-negligible ones
  Eigen::MatrixXd S(N, 0), RS(N, 0);
  const auto append = [&](const Eigen::MatrixXd& W) {
    for (Eigen::Index c = 0; c < W.cols() && S.cols() < N; ++c) {
      Eigen::VectorXd w = W.col(c);
      Eigen::VectorXd rw = R * w;
      const double n0 = std::sqrt(std::max(w.dot(rw), 0.0));
      if (!(n0 > 0)) continue;
      for (int pass = 0; pass < 2; ++pass) {
        if (S.cols() > 0) {
          w -= S * (RS.transpose() * w);
        }
        rw = R * w;
      }
      const double n1 = std::sqrt(std::max(w.dot(rw), 0.0));
      if (n1 <= 1e-10 * n0 || n1 <= 1e-14 * std::sqrt(rn) * w.norm()) continue;
      S.conservativeResize(N, S.cols() + 1);
      RS.conservativeResize(N, RS.cols() + 1);
      S.col(S.cols() - 1) = w / n1;
      RS.col(RS.cols() - 1) = rw / n1;
    }
  };

  std::mt19937_64 rng(it.seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd block(N, b);
  for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = nd(rng);
  append(lu.solve(R * block));

  double worst = 0.0;
  for (int restart = 0; restart <= it.max_restarts; ++restart) {
    // grow the Krylov space
    Eigen::MatrixXd last = S.rightCols(std::min<Eigen::Index>(b, S.cols()));
    while (S.cols() < cap) {
      const Eigen::Index before = S.cols();
      append(lu.solve(R * last));
      if (S.cols() == before) break;
      last = S.rightCols(S.cols() - before);
    }
    require(S.cols() >= M, errc::invalid_argument,
            "decompose_iterative: M = " + std::to_string(M) + " exceeds the numerical rank of R (" +
                std::to_string(S.cols()) + ")");
    const Eigen::MatrixXd A = S.transpose() * X * S;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(S.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](auto a, auto c) { return std::abs(es.eigenvalues()(a)) < std::abs(es.eigenvalues()(c)); });
    const Eigen::Index nk = std::min<Eigen::Index>(keep, S.cols());
    Eigen::MatrixXd Y(N, nk);
    Eigen::VectorXd th(nk);
    for (Eigen::Index c = 0; c < nk; ++c) {
      Y.col(c) = S * es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
      th(c) = es.eigenvalues()(order[static_cast<std::size_t>(c)]);
    }
    worst = 0.0;
    std::vector<Eigen::Index> unconverged;
    for (Eigen::Index c = 0; c < M; ++c) {
      const double res = (X * Y.col(c) - th(c) * (R * Y.col(c))).norm() / (xn * Y.col(c).norm());
      worst = std::max(worst, res);
      if (res > it.tol) unconverged.push_back(c);
    }
    if (unconverged.empty() || S.cols() == N) {
      Eigen::VectorXcd lam = th.head(M).cast<cdouble>();
      Eigen::MatrixXcd vec = Y.leftCols(M).cast<cdouble>();
      ModeSet ms = normalize(lam, vec, R, X, opt);
      ms.k = k;
      ms.solver = "iterative";
      ms.rank = S.cols();
      return ms;
    }
    // thick restart: Ritz vectors plus the expansion of the unconverged ones
    Eigen::MatrixXd grow(N, std::min<Eigen::Index>(b, static_cast<Eigen::Index>(unconverged.size())));
    for (Eigen::Index c = 0; c < grow.cols(); ++c)
      grow.col(c) = lu.solve(R * Y.col(unconverged[static_cast<std::size_t>(c)]));
    S.resize(N, 0);
    RS.resize(N, 0);
    append(Y);
    append(grow);
  }
  throw error(errc::convergence, "decompose_iterative: no convergence after " + std::to_string(it.max_restarts) +
                                     " restarts (worst relative residual " + std::to_string(worst) + ")");
}

inline ModeSet decompose_iterative(const ImpedanceMatrix& Z, Eigen::Index M, const ModeOptions& opt = {},
                                   const IterativeOptions& it = {}) {
  return decompose_iterative(Z.Z, Z.medium.k, M, opt, it);
}

/// Pencil restricted to the radiating subspace of R. The non-radiating block
/// is eliminated exactly (Schur complement of the reactance), so lifted
/// vectors solve the full pencil with R replaced by its rank-r truncation.
struct ReducedPencil {
  Eigen::MatrixXd U;      // N x r, retained eigenvectors of R
  Eigen::VectorXd sigma;  // r retained eigenvalues
  Eigen::MatrixXd X;      // r x r reduced reactance
  Eigen::MatrixXd lift;   // N x r, I = lift * a
  double eps = 0.0;

  [[nodiscard]] Eigen::Index rank() const { return sigma.size(); }
};

inline ReducedPencil reduce_nullspace(const Eigen::MatrixXd& R, const Eigen::MatrixXd& X, double eps_R,
                                      const ModeOptions& opt = {}) {
  require(eps_R > 0 && eps_R < 1, errc::invalid_argument, "reduce_nullspace: eps_R must lie in (0, 1)");
  require(R.rows() == R.cols() && X.rows() == R.rows() && X.cols() == R.cols(), errc::invalid_argument,
          "reduce_nullspace: dimension mismatch");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (R + R.transpose()));
  require(es.info() == Eigen::Success, errc::numerical, "reduce_nullspace: eigendecomposition of R failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  detail::check_psd(ev, opt, "reduce_nullspace");
  const double smax = ev.maxCoeff();
  const Eigen::Index N = R.rows();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < N; ++i) r += ev(i) > eps_R * smax;
  require(r > 0, errc::numerical, "reduce_nullspace: no radiating subspace");
  // eigenvalues ascend: the last r columns are retained
  ReducedPencil p;
  p.eps = eps_R;
  p.U = es.eigenvectors().rightCols(r);
  p.sigma = ev.tail(r);
  const Eigen::Index n0 = N - r;
  const Eigen::MatrixXd Xrr = p.U.transpose() * X * p.U;
  if (n0 == 0) {
    p.X = 0.5 * (Xrr + Xrr.transpose());
    p.lift = p.U;
    return p;
  }
  const Eigen::MatrixXd U0 = es.eigenvectors().leftCols(n0);
  const Eigen::MatrixXd X0r = U0.transpose() * X * p.U;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(U0.transpose() * X * U0);
  require(lu.rcond() > 1e-15, errc::numerical, "reduce_nullspace: reactance is singular on the null space of R");
  const Eigen::MatrixXd E = lu.solve(X0r);  // null-block coefficients b = -E a
  const Eigen::MatrixXd Xt = Xrr - X0r.transpose() * E;
  p.X = 0.5 * (Xt + Xt.transpose());
  p.lift = p.U - U0 * E;
  return p;
}

inline ModeSet decompose_reduced(const Eigen::MatrixXcd& Z, double k, double eps_R = 1e-10,
                                 const ModeOptions& opt = {}) {
  detail::check_pencil(Z, opt, "decompose_reduced");
  const Eigen::MatrixXd R = Z.real(), X = Z.imag();
  const auto p = reduce_nullspace(R, X, eps_R, opt);
  const Eigen::VectorXd is = p.sigma.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd C = is.asDiagonal() * p.X * is.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (C + C.transpose()));
  require(es.info() == Eigen::Success, errc::numerical, "decompose_reduced: reduced eigenproblem failed");
  const Eigen::MatrixXd a = is.asDiagonal() * es.eigenvectors();
  ModeSet ms = normalize(es.eigenvalues().cast<cdouble>(), (p.lift * a).cast<cdouble>(), R, X, opt);
  ms.k = k;
  ms.solver = "reduced";
  ms.rank = p.rank();
  return ms;
}

inline ModeSet decompose_reduced(const ImpedanceMatrix& Z, double eps_R = 1e-10, const ModeOptions& opt = {}) {
  return decompose_reduced(Z.Z, Z.medium.k, eps_R, opt);
}

/// t = -1/(1 + j lambda) and back.
inline cdouble lambda_to_t(double lambda) { return -1.0 / (1.0 + j_unit * lambda); }
inline cdouble t_to_lambda(cdouble t) { return j_unit * (1.0 + 1.0 / t); }

struct TMatrixOptions {
  double gram_tol = 1e-2;        // ||S^H S - R|| / ||R||
  double lambda_imag_tol = 1e-3; // relative, the T operator is only approximately normal
};

/// Modes from the eigenvalues of T = -S Z^-1 S^H, where S projects basis
/// functions on power-normalised spherical waves (S^H S = R).
inline ModeSet decompose_tmatrix(const Eigen::MatrixXcd& S, const Eigen::MatrixXcd& Z, double k,
                                 const ModeOptions& opt = {}, const TMatrixOptions& topt = {}) {
  detail::check_pencil(Z, opt, "decompose_tmatrix");
  require(S.cols() == Z.rows(), errc::invalid_argument, "decompose_tmatrix: S and Z dimensions differ");
  const Eigen::MatrixXd R = Z.real(), X = Z.imag();
  const double gram = (S.adjoint() * S - R.cast<cdouble>()).norm() / R.norm();
  require(gram <= topt.gram_tol, errc::config,
          "decompose_tmatrix: spherical-wave expansion does not reproduce R (relative error " + std::to_string(gram) +
              "); increase L_max");
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Z);
  require(lu.rcond() > 1e-15, errc::numerical, "decompose_tmatrix: Z is singular");
  const Eigen::MatrixXcd W = lu.solve(S.adjoint());  // N x waves
  const Eigen::MatrixXcd T = -S * W;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(T);
  require(es.info() == Eigen::Success, errc::numerical, "decompose_tmatrix: eigen decomposition of T failed");
  const Eigen::Index nw = T.rows();
  Eigen::VectorXcd lam(nw);
  Eigen::MatrixXcd vec = W * es.eigenvectors();
  for (Eigen::Index i = 0; i < nw; ++i) {
    const cdouble t = es.eigenvalues()(i);
    lam(i) = std::abs(t) > 0 ? t_to_lambda(t) : cdouble(std::numeric_limits<double>::infinity(), 0.0);
  }
  ModeOptions o = opt;
  o.lambda_imag_tol = topt.lambda_imag_tol;
  o.imag_tol = std::max(opt.imag_tol, 1e-3);
  ModeSet ms = normalize(lam, vec, R, X, o);
  ms.k = k;
  ms.solver = "tmatrix";
  ms.rank = nw;
  return ms;
}

/// Largest pencil residual ||X I - lambda R I|| / (||X|| ||I||) over valid modes.
inline double max_pencil_residual(const ModeSet& ms, const Eigen::MatrixXd& R, const Eigen::MatrixXd& X) {
  const double xn = X.norm();
  double worst = 0.0;
  for (auto i : ms.valid_indices()) {
    const auto v = ms.currents.col(i);
    worst = std::max(worst, (X * v - ms.lambda(i) * (R * v)).norm() / (xn * v.norm()));
  }
  return worst;
}

/// Largest deviations of (1/2) I^T R I from identity and of (1/2) I^T X I from
/// diag(lambda) (scaled by max(1, |lambda|)) over valid modes.
struct OrthogonalityReport {
  double r_error = 0.0;
  double x_error = 0.0;
};

inline OrthogonalityReport orthogonality(const ModeSet& ms, const Eigen::MatrixXd& R, const Eigen::MatrixXd& X) {
  const auto idx = ms.valid_indices();
  Eigen::MatrixXd V(ms.unknowns(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) V.col(static_cast<Eigen::Index>(c)) = ms.currents.col(idx[c]);
  const Eigen::MatrixXd GR = 0.5 * V.transpose() * R * V;
  const Eigen::MatrixXd GX = 0.5 * V.transpose() * X * V;
  OrthogonalityReport rep;
  for (Eigen::Index a = 0; a < V.cols(); ++a)
    for (Eigen::Index b = 0; b < V.cols(); ++b) {
      const double la = ms.lambda(idx[static_cast<std::size_t>(a)]);
      const double lb = ms.lambda(idx[static_cast<std::size_t>(b)]);
      rep.r_error = std::max(rep.r_error, std::abs(GR(a, b) - (a == b ? 1.0 : 0.0)));
      const double sc = std::max({1.0, std::abs(la), std::abs(lb)});
      rep.x_error = std::max(rep.x_error, std::abs(GX(a, b) - (a == b ? la : 0.0)) / sc);
    }
  return rep;
}

}  // namespace cma
