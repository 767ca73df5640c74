#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"
#include "cma/farfield.hpp"
#include "cma/geometry.hpp"
#include "cma/modes.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cma {

enum class SolverRoute { full, reduced, iterative, tmatrix };

inline SolverRoute parse_route(const std::string& s) {
  if (s == "full") return SolverRoute::full;
  if (s == "reduced") return SolverRoute::reduced;
  if (s == "iterative") return SolverRoute::iterative;
  if (s == "tmatrix") return SolverRoute::tmatrix;
  throw error(errc::config, "unknown solver route '" + s + "' (full, reduced, iterative, tmatrix)");
}

inline const char* route_name(SolverRoute r) {
  switch (r) {
    case SolverRoute::full: return "full";
    case SolverRoute::reduced: return "reduced";
    case SolverRoute::iterative: return "iterative";
    case SolverRoute::tmatrix: return "tmatrix";
  }
  return "?";
}

struct SolverConfig {
  SolverRoute route = SolverRoute::full;
  ModeOptions modes;
  QuadratureConfig quad;
  double eps_R = 1e-10;         // reduced route
  Eigen::Index num_modes = 20;  // iterative route
  IterativeOptions iterative;
  int lmax = 0;                 // T route, 0: default truncation
  TMatrixOptions tmatrix;
};

/// Modes of one frequency point along the configured route.
inline ModeSet solve_modes(const BasisSet& basis, const ImpedanceMatrix& Z, const SolverConfig& cfg) {
  switch (cfg.route) {
    case SolverRoute::full: return decompose_full(Z, cfg.modes);
    case SolverRoute::reduced: return decompose_reduced(Z, cfg.eps_R, cfg.modes);
    case SolverRoute::iterative: return decompose_iterative(Z, cfg.num_modes, cfg.modes, cfg.iterative);
    case SolverRoute::tmatrix: {
      const auto swe = swe_matrix(basis, Z.medium, cfg.lmax);
      return decompose_tmatrix(swe.S, Z.Z, Z.medium.k, cfg.modes, cfg.tmatrix);
    }
  }
  throw error(errc::config, "solve_modes: bad route");
}

struct SweepPoint {
  double k = 0.0;
  std::optional<ModeSet> modes;
  Eigen::MatrixXd R;  // radiation matrix at k, kept for tracking
  std::string error;  // non-empty if the solve failed
};

/// One ModeSet per wavenumber. Points are independent and run on `jobs`
/// workers; a failing point records its message and the sweep continues.
inline std::vector<SweepPoint> sweep(const BasisSet& basis, const std::vector<double>& k_grid,
                                     const SolverConfig& cfg, unsigned jobs = 1) {
  require(!k_grid.empty(), errc::invalid_argument, "sweep: empty frequency grid");
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    require(k_grid[i] > 0 && std::isfinite(k_grid[i]), errc::invalid_argument, "sweep: wavenumbers must be positive");
    require(i == 0 || k_grid[i] > k_grid[i - 1], errc::invalid_argument, "sweep: grid must be strictly increasing");
  }
  std::vector<SweepPoint> out(k_grid.size());
  SolverConfig local = cfg;
  if (jobs > 1) local.quad.threads = 1;
  const auto one = [&](std::size_t i) {
    SweepPoint& p = out[i];
    p.k = k_grid[i];
    try {
      const auto Z = assemble_impedance(basis, MediumParams::free_space(p.k), local.quad);
      p.modes = solve_modes(basis, Z, local);
      p.R = Z.R();
    } catch (const std::exception& e) {
      p.modes.reset();
      p.error = e.what();
    }
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < k_grid.size(); ++i) one(i);
  } else {
    detail::parallel_for(k_grid.size(), jobs, one);
  }
  return out;
}

// ---------------------------------------------------------------- assignment

/// Square assignment maximising sum score(i, p[i]) (Hungarian method, O(n^3)).
/// Rectangular inputs are padded with zero scores; rows matched to padding
/// columns get -1.
inline std::vector<Eigen::Index> assign_max(const Eigen::MatrixXd& score) {
  const Eigen::Index rows = score.rows(), cols = score.cols();
  const Eigen::Index n = std::max(rows, cols);
  std::vector<Eigen::Index> result(static_cast<std::size_t>(rows), -1);
  if (n == 0) return result;
  const double big = score.size() ? score.maxCoeff() : 0.0;
  // cost = big - score, minimised; padding costs big
  const auto cost = [&](Eigen::Index i, Eigen::Index j) {
    return (i < rows && j < cols) ? big - score(i, j) : big;
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(p[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  for (Eigen::Index j = 1; j <= n; ++j) {
    const Eigen::Index i = p[static_cast<std::size_t>(j)] - 1;
    if (i < rows && j - 1 < cols) result[static_cast<std::size_t>(i)] = j - 1;
  }
  return result;
}

// ------------------------------------------------------------------ tracking

/// Similarity between the valid modes of two adjacent points: entry (a, b)
/// compares mode ia[a] of the first with mode ib[b] of the second.
using SimilarityFn = std::function<Eigen::MatrixXd(const ModeSet&, const Eigen::MatrixXd& R0, const ModeSet&,
                                                   const std::vector<Eigen::Index>&,
                                                   const std::vector<Eigen::Index>&)>;

/// rho_mn = |I_m(k_i)^T R(k_i) I_n(k_i+1)| / 2.
inline Eigen::MatrixXd correlation_similarity(const ModeSet& a, const Eigen::MatrixXd& R0, const ModeSet& b,
                                              const std::vector<Eigen::Index>& ia,
                                              const std::vector<Eigen::Index>& ib) {
  Eigen::MatrixXd A(a.unknowns(), static_cast<Eigen::Index>(ia.size()));
  Eigen::MatrixXd B(b.unknowns(), static_cast<Eigen::Index>(ib.size()));
  for (std::size_t c = 0; c < ia.size(); ++c) A.col(static_cast<Eigen::Index>(c)) = a.currents.col(ia[c]);
  for (std::size_t c = 0; c < ib.size(); ++c) B.col(static_cast<Eigen::Index>(c)) = b.currents.col(ib[c]);
  return (0.5 * A.transpose() * R0 * B).cwiseAbs();
}

/// Normalised far-field overlap |<F_m, F_n>| / (|F_m| |F_n|) on a fixed sphere rule.
inline SimilarityFn farfield_similarity(const BasisSet& basis, int degree = 12) {
  const auto rule = sphere_rule_for_degree(degree);
  const auto center = bounding_sphere(basis.mesh).center;
  return [&basis, rule, center](const ModeSet& a, const Eigen::MatrixXd&, const ModeSet& b,
                                const std::vector<Eigen::Index>& ia, const std::vector<Eigen::Index>& ib) {
    const auto fields = [&](const ModeSet& ms, const std::vector<Eigen::Index>& idx) {
      const auto A = radiation_matrix(basis, ms.k, MediumParams::free_space(ms.k).impedance(), rule.theta, rule.phi,
                                      center);
      Eigen::MatrixXcd I(ms.unknowns(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) I.col(static_cast<Eigen::Index>(c)) = ms.currents.col(idx[c]).cast<cdouble>();
      Eigen::MatrixXcd F = A * I;
      const auto nd = static_cast<Eigen::Index>(rule.size());
      for (Eigen::Index d = 0; d < nd; ++d) {
        const double w = std::sqrt(rule.weights[static_cast<std::size_t>(d)]);
        F.row(d) *= w;
        F.row(nd + d) *= w;
      }
      for (Eigen::Index c = 0; c < F.cols(); ++c) {
        const double n = F.col(c).norm();
        if (n > 0) F.col(c) /= n;
      }
      return F;
    };
    return Eigen::MatrixXd((fields(a, ia).adjoint() * fields(b, ib)).cwiseAbs());
  };
}

struct TrackOptions {
  double rho_min = 0.7;
  bool valid_only = true;
  SimilarityFn similarity;  // empty: correlation_similarity
};

struct Trace {
  int id = 0;
  std::vector<Eigen::Index> index;  // per frequency: mode index, or -1 where the trace is absent
  std::vector<double> score;        // similarity of the step into each frequency (0 at the trace start)
  [[nodiscard]] std::size_t first() const {
    for (std::size_t i = 0; i < index.size(); ++i)
      if (index[i] >= 0) return i;
    return index.size();
  }
  [[nodiscard]] std::size_t last() const {
    for (std::size_t i = index.size(); i-- > 0;)
      if (index[i] >= 0) return i;
    return index.size();
  }
};

enum class EventType { degeneracy, avoidance, trace_start, trace_end };

inline const char* event_name(EventType t) {
  switch (t) {
    case EventType::degeneracy: return "degeneracy";
    case EventType::avoidance: return "avoidance";
    case EventType::trace_start: return "trace_start";
    case EventType::trace_end: return "trace_end";
  }
  return "?";
}

struct Event {
  EventType type = EventType::degeneracy;
  std::size_t point = 0;  // frequency index
  double k = 0.0;
  double gap = 0.0;       // eigenvalue gap, or the failing similarity for trace events
  int trace_a = -1, trace_b = -1;
};

struct TrackedSpectrum {
  std::vector<double> k;
  std::vector<Trace> traces;
  std::vector<double> min_gap;                   // per frequency, over valid modes
  std::vector<std::vector<Eigen::Index>> unassigned;  // valid modes that start a new trace at each point
  std::vector<Event> events;                     // trace start/end from tracking
};

inline std::vector<Eigen::Index> tracked_indices(const ModeSet& ms, bool valid_only) {
  if (valid_only) return ms.valid_indices();
  std::vector<Eigen::Index> v(static_cast<std::size_t>(ms.size()));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

namespace detail {

inline double min_gap(const ModeSet& ms, const std::vector<Eigen::Index>& idx) {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) g = std::min(g, std::abs(ms.lambda(idx[a]) - ms.lambda(idx[b])));
  return g;
}

}  // namespace detail

/// Links modes across adjacent points by optimal one-to-one assignment of the
/// similarity matrix. Pairs scoring below rho_min end the earlier trace and
/// start a new one.
inline TrackedSpectrum track(const std::vector<ModeSet>& sets, const std::vector<Eigen::MatrixXd>& R,
                             const TrackOptions& opt = {}) {
  require(sets.size() >= 2, errc::invalid_argument, "track: need at least two frequency points");
  require(R.size() == sets.size(), errc::invalid_argument, "track: one R matrix per frequency is required");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    require(sets[i].normalized, errc::invalid_argument, "track: mode sets must be normalized");
    require(sets[i].unknowns() == sets[0].unknowns() && R[i].rows() == sets[0].unknowns(), errc::invalid_argument,
            "track: unknown count differs between frequency points");
    require(i == 0 || sets[i].k > sets[i - 1].k, errc::invalid_argument, "track: frequencies must increase");
  }
  const SimilarityFn sim = opt.similarity ? opt.similarity : SimilarityFn(correlation_similarity);
  const std::size_t F = sets.size();
  TrackedSpectrum ts;
  ts.unassigned.resize(F);
  for (const auto& s : sets) ts.k.push_back(s.k);

  std::vector<int> owner;  // trace id per tracked position at the current point
  const auto start_trace = [&](std::size_t f, Eigen::Index mode) {
    Trace t;
    t.id = static_cast<int>(ts.traces.size());
    t.index.assign(F, -1);
    t.score.assign(F, 0.0);
    t.index[f] = mode;
    ts.traces.push_back(std::move(t));
    if (f > 0) {
      ts.events.push_back({EventType::trace_start, f, sets[f].k, 0.0, ts.traces.back().id, -1});
      ts.unassigned[f].push_back(mode);
    }
    return ts.traces.back().id;
  };

  auto idx = tracked_indices(sets[0], opt.valid_only);
  for (auto m : idx) owner.push_back(start_trace(0, m));
  for (std::size_t f = 0; f + 1 < F; ++f) {
    const auto next = tracked_indices(sets[f + 1], opt.valid_only);
    std::vector<int> next_owner(next.size(), -1);
    if (!idx.empty() && !next.empty()) {
      const Eigen::MatrixXd S = sim(sets[f], R[f], sets[f + 1], idx, next);
      const auto p = assign_max(S);
      for (std::size_t a = 0; a < idx.size(); ++a) {
        const auto b = p[a];
        auto& tr = ts.traces[static_cast<std::size_t>(owner[a])];
        const double rho = b >= 0 ? S(static_cast<Eigen::Index>(a), b) : 0.0;
        if (b >= 0 && rho >= opt.rho_min) {
          tr.index[f + 1] = next[static_cast<std::size_t>(b)];
          tr.score[f + 1] = rho;
          next_owner[static_cast<std::size_t>(b)] = owner[a];
        } else {
          ts.events.push_back({EventType::trace_end, f, sets[f].k, rho, tr.id, -1});
        }
      }
    } else {
      for (auto o : owner) ts.events.push_back({EventType::trace_end, f, sets[f].k, 0.0, o, -1});
    }
    for (std::size_t b = 0; b < next.size(); ++b)
      if (next_owner[b] < 0) next_owner[b] = start_trace(f + 1, next[b]);
    idx = next;
    owner = std::move(next_owner);
  }
  for (std::size_t f = 0; f < F; ++f) ts.min_gap.push_back(detail::min_gap(sets[f], tracked_indices(sets[f], opt.valid_only)));
  return ts;
}

struct DiagnosticsOptions {
  /// |lambda_m - lambda_n| <= degeneracy_tol * max(1, |lambda_m|, |lambda_n|) counts as a coincidence.
  double degeneracy_tol = 1e-9;
};

/// Degeneracies at every point, and crossing-avoidance candidates: interior
/// local minima of the gap between two traces that are eigenvalue neighbours
/// there. Trace start/end events from tracking are included.
inline std::vector<Event> crossing_diagnostics(const TrackedSpectrum& ts, const std::vector<ModeSet>& sets,
                                               const DiagnosticsOptions& opt = {}) {
  require(sets.size() == ts.k.size(), errc::invalid_argument, "crossing_diagnostics: spectrum and sets differ in length");
  std::vector<Event> ev;
  const std::size_t F = sets.size();
  // trace id per (point, mode)
  std::vector<std::vector<int>> who(F);
  for (std::size_t f = 0; f < F; ++f) who[f].assign(static_cast<std::size_t>(sets[f].size()), -1);
  for (const auto& t : ts.traces)
    for (std::size_t f = 0; f < F; ++f)
      if (t.index[f] >= 0) who[f][static_cast<std::size_t>(t.index[f])] = t.id;

  const auto lam = [&](const Trace& t, std::size_t f) { return sets[f].lambda(t.index[f]); };
  for (std::size_t f = 0; f < F; ++f) {
    // traces present at f ordered by lambda
    std::vector<const Trace*> live;
    for (const auto& t : ts.traces)
      if (t.index[f] >= 0) live.push_back(&t);
    std::sort(live.begin(), live.end(), [&](auto a, auto b) { return lam(*a, f) < lam(*b, f); });
    for (std::size_t i = 0; i + 1 < live.size(); ++i) {
      const Trace& a = *live[i];
      const Trace& b = *live[i + 1];
      const double la = lam(a, f), lb = lam(b, f);
      const double g = std::abs(la - lb);
      if (g <= opt.degeneracy_tol * std::max({1.0, std::abs(la), std::abs(lb)})) {
        ev.push_back({EventType::degeneracy, f, ts.k[f], g, a.id, b.id});
        continue;
      }
      if (f == 0 || f + 1 == F) continue;
      if (a.index[f - 1] < 0 || a.index[f + 1] < 0 || b.index[f - 1] < 0 || b.index[f + 1] < 0) continue;
      const double gp = std::abs(lam(a, f - 1) - lam(b, f - 1));
      const double gn = std::abs(lam(a, f + 1) - lam(b, f + 1));
      if (g < gp && g < gn) ev.push_back({EventType::avoidance, f, ts.k[f], g, a.id, b.id});
    }
  }
  for (const auto& e : ts.events) ev.push_back(e);
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.point < b.point; });
  return ev;
}

// ------------------------------------------------------------------ counting

struct CountFit {
  std::vector<double> ka;
  std::vector<int> counts;
  bool available = false;  // false: fewer than 3 points, or all counts zero
  std::string note;
  double c2 = 0.0, c1 = 0.0, r2 = 0.0;
};

/// Valid modes with MS >= t at each point, and the least-squares fit
/// N(ka) = c2 (ka)^2 + c1 ka through the origin. R^2 is taken about the mean.
inline CountFit count_significant(const std::vector<ModeSet>& sets, double radius, double t) {
  require(t > 0 && t < 1, errc::invalid_argument, "count_significant: threshold must lie in (0, 1)");
  require(radius > 0, errc::invalid_argument, "count_significant: radius must be positive");
  CountFit out;
  for (const auto& ms : sets) {
    int c = 0;
    for (auto i : ms.valid_indices())
      if (modal_metrics(ms.lambda(i)).significance >= t) ++c;
    out.ka.push_back(ms.k * radius);
    out.counts.push_back(c);
  }
  const auto n = static_cast<Eigen::Index>(sets.size());
  if (n < 3) {
    out.note = "fit unavailable: fewer than 3 sweep points";
    return out;
  }
  if (std::all_of(out.counts.begin(), out.counts.end(), [](int c) { return c == 0; })) {
    out.note = "degenerate fit: all counts are zero";
    return out;
  }
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = out.ka[static_cast<std::size_t>(i)];
    A(i, 0) = x * x;
    A(i, 1) = x;
    y(i) = out.counts[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(y);
  out.c2 = c(0);
  out.c1 = c(1);
  const double ss_res = (A * c - y).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  out.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  out.available = true;
  return out;
}

struct ThresholdSearch {
  double threshold = 0.0;
  CountFit fit;
  double distance = 0.0;  // max relative deviation from the target coefficients
};

/// Scans t over (lo, hi) for the fit closest to target coefficients (c2, c1).
inline ThresholdSearch search_threshold(const std::vector<ModeSet>& sets, double radius, double target_c2,
                                        double target_c1, double lo = 0.05, double hi = 0.95, int steps = 181) {
  require(lo > 0 && hi < 1 && lo < hi && steps >= 2, errc::invalid_argument, "search_threshold: bad scan range");
  ThresholdSearch best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int s = 0; s < steps; ++s) {
    const double t = lo + (hi - lo) * s / (steps - 1);
    auto fit = count_significant(sets, radius, t);
    if (!fit.available) continue;
    const double d = std::max(std::abs(fit.c2 - target_c2) / std::abs(target_c2),
                              std::abs(fit.c1 - target_c1) / std::abs(target_c1));
    if (d < best.distance) best = {t, fit, d};
  }
  return best;
}

// ----------------------------------------------------------------- export

/// CSV `ka, trace_id, lambda, MS, alpha_rad`.
inline void write_tracks_csv(std::ostream& out, const TrackedSpectrum& ts, const std::vector<ModeSet>& sets,
                             double radius) {
  out << "ka,trace_id,lambda,MS,alpha_rad\n";
  out.precision(12);
  for (std::size_t f = 0; f < ts.k.size(); ++f)
    for (const auto& t : ts.traces) {
      if (t.index[f] < 0) continue;
      const double l = sets[f].lambda(t.index[f]);
      const auto m = modal_metrics(l);
      out << ts.k[f] * radius << ',' << t.id << ',' << l << ',' << m.significance << ',' << m.angle << '\n';
    }
}

/// CSV `ka, type, gap`.
inline void write_events_csv(std::ostream& out, const std::vector<Event>& events, double radius) {
  out << "ka,type,gap\n";
  out.precision(12);
  for (const auto& e : events) out << e.k * radius << ',' << event_name(e.type) << ',' << e.gap << '\n';
}

}  // namespace cma
