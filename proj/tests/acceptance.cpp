// Acceptance criteria; one PASS/FAIL line each. Exit status is nonzero if any fails.
#include "cma/efie.hpp"
#include "cma/excitation.hpp"
#include "cma/farfield.hpp"
#include "cma/geometry.hpp"
#include "cma/modes.hpp"
#include "cma/oracle.hpp"
#include "cma/substructure.hpp"
#include "cma/sweeptrack.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace cma;

namespace {

int failures = 0;

void report(const std::string& name, const std::function<bool(std::ostream&)>& check) {
  std::ostringstream detail;
  detail.precision(4);
  bool ok = false;
  try {
    ok = check(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail.str() << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXcd pencil(const Eigen::MatrixXd& R, const Eigen::MatrixXd& X) {
  Eigen::MatrixXcd Z(R.rows(), R.cols());
  Z.real() = R;
  Z.imag() = X;
  return Z;
}

struct SphereCase {
  BasisSet basis = build_rwg(generate_sphere(1.0, 2));
  ImpedanceMatrix Z;
  double assemble_seconds = 0.0;
  SphereCase() {
    const auto t0 = std::chrono::steady_clock::now();
    Z = assemble_impedance(basis, MediumParams::free_space(1.0));
    assemble_seconds = seconds_since(t0);
  }
};

// Rung (cross-strip) edge currents ordered along the strip.
Eigen::VectorXd strip_profile(const BasisSet& b, const Eigen::VectorXd& I) {
  std::vector<std::pair<double, double>> v;
  for (std::size_t n = 0; n < b.size(); ++n) {
    const Vec3 d = b.vertex(b.functions[n].edge.second) - b.vertex(b.functions[n].edge.first);
    if (std::abs(d.x()) > std::abs(d.z())) v.emplace_back(b.edge_midpoint(n).z(), I(static_cast<Eigen::Index>(n)) * b.functions[n].length);
  }
  std::sort(v.begin(), v.end());
  Eigen::VectorXd p(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p(static_cast<Eigen::Index>(i)) = v[i].second;
  return p;
}

double second_difference(const Eigen::VectorXd& u) {
  double s = 0.0;
  for (Eigen::Index i = 1; i + 1 < u.size(); ++i) s += std::pow(u(i - 1) - 2 * u(i) + u(i + 1), 2);
  return std::sqrt(s) / u.norm();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);
  SphereCase sphere;

  report("sphere eigenvalues vs closed form (480 RWG, ka=1, reduced)", [&](std::ostream& d) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ms = decompose_reduced(sphere.Z);
    const double secs = sphere.assemble_seconds + seconds_since(t0);
    const auto cmp = compare_sphere(ms, 1.0);
    bool groups = !cmp.groups.empty();
    double worst_spread = 0.0;
    for (const auto& g : cmp.groups) {
      groups = groups && g.identified;
      worst_spread = std::max(worst_spread, g.spread);
    }
    d << "N=" << sphere.basis.size() << " max rel err (|lambda|<=20) " << cmp.max_rel_err << " (tol 0.05), "
      << cmp.groups.size() << " groups, worst spread " << worst_spread << " (tol 0.02), complete " << cmp.complete
      << ", " << secs << " s (limit 60)";
    return sphere.basis.size() == 480 && cmp.complete && cmp.max_rel_err <= 0.05 && groups && secs < 60.0;
  });

  report("T-route has more modes within 1% than the Z-route", [&](std::ostream& d) {
    const auto full = decompose_full(sphere.Z);
    const auto swe = swe_matrix(sphere.basis, sphere.Z.medium);
    const auto tm = decompose_tmatrix(swe.S, sphere.Z.Z, sphere.Z.medium.k);
    const int nz = compare_sphere(full, 1.0).within(0.01);
    const int nt = compare_sphere(tm, 1.0).within(0.01);
    const auto cz = compare_sphere(full, 1.0), ct = compare_sphere(tm, 1.0);
    d << "within 1%: T " << nt << ", Z " << nz << "; first-row errors T " << ct.rows.front().rel_err << ", Z "
      << cz.rows.front().rel_err;
    return nt > nz;
  });

  report("basis counts", [&](std::ostream& d) {
    bool ok = true;
    for (int s = 0; s <= 3; ++s) {
      const auto m = generate_sphere(1.0, s);
      ok = ok && 2 * build_rwg(m).size() == 3 * m.num_triangles();
    }
    for (int nx = 1; nx <= 12; ++nx)
      for (int ny = 1; ny <= 12; ++ny)
        ok = ok && build_rwg(generate_plate(1.0, 1.0, nx, ny)).size() ==
                       static_cast<std::size_t>(3 * nx * ny - nx - ny);
    d << "icospheres s=0..3 give 3T/2, plates 1..12 x 1..12 give 3 nx ny - nx - ny; s=2 has "
      << sphere.basis.size() << " functions";
    return ok && sphere.basis.size() == 480;
  });

  report("orthogonality on plate, dipole and sphere at ka=1", [&](std::ostream& d) {
    bool ok = true;
    const auto check = [&](const char* name, const BasisSet& b) {
      const double k = 1.0 / bounding_sphere(b.mesh).radius;
      const auto Z = assemble_impedance(b, MediumParams::free_space(k));
      const auto ms = decompose_full(Z);
      const auto o = orthogonality(ms, Z.R(), Z.X());
      d << name << " (" << ms.num_valid() << " valid) R " << o.r_error << " X " << o.x_error << "; ";
      ok = ok && o.r_error <= 1e-8 && o.x_error <= 1e-6;
    };
    check("plate", build_rwg(generate_plate(1.0, 0.5, 8, 4)));
    check("dipole", build_rwg(generate_strip_dipole(1.0, 0.01, 50)));
    check("sphere", sphere.basis);
    d << "tol R 1e-8, X 1e-6 (1+|lambda|)";
    return ok;
  });

  report("far-field Gram on sphere modes and Poynting consistency", [&](std::ostream& d) {
    const auto ms = decompose_full(sphere.Z);
    const auto idx = ms.valid_indices();
    Eigen::MatrixXcd V(ms.unknowns(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) V.col(static_cast<Eigen::Index>(c)) = ms.currents.col(idx[c]).cast<cdouble>();
    const auto rule = sphere_rule_for_degree(40);
    const auto G = farfield_gram(V, sphere.basis, sphere.Z.medium, rule);
    const double gram = (G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
    // driven dipole: input power against the radiated power
    const auto dm = generate_strip_dipole(1.0, 0.01, 50);
    const auto db = build_rwg(dm);
    const auto DZ = assemble_impedance(db, MediumParams::free_space(pi));
    const auto Vg = delta_gap(db, dm.feed_candidates.front());
    const auto sol = solve_driven(DZ, Vg);
    const double p_in = 0.5 * std::real(Vg.dot(sol.current));
    const double p_ff = radiated_power(radiation_vector(sol.current, db, DZ.medium, rule), DZ.medium.impedance());
    const double poynting = std::abs(p_ff - p_in) / p_in;
    d << idx.size() << " valid sphere modes, max |G - I| " << gram << " (tol 1e-2); dipole P_ff/P_in - 1 = "
      << poynting << " (tol 1e-2)";
    return gram <= 1e-2 && poynting <= 1e-2;
  });

  report("dipole dynamic-range saturation", [&](std::ostream& d) {
    const auto b = build_rwg(generate_strip_dipole(1.0, 0.01, 50));
    const auto Z = assemble_impedance(b, MediumParams::free_space(pi));
    // raw QZ spectrum: completion would replace the saturated block
    ModeOptions opt;
    opt.complete_invalid = false;
    const auto ms = decompose_full(Z, opt);
    std::vector<double> sv, sp, lv;
    Eigen::Index pos = 0, neg = 0;
    bool flags = true;
    for (Eigen::Index i = 0; i < ms.size(); ++i) {
      const bool v = ms.valid[static_cast<std::size_t>(i)];
      const double s = second_difference(strip_profile(b, ms.currents.col(i)));
      const double l = std::abs(ms.lambda(i));
      if (v) {
        sv.push_back(s);
        lv.push_back(l);
      }
      if (!(l <= ms.lambda_cap)) {
        flags = flags && !v;
        sp.push_back(s);
        (ms.lambda(i) > 0 ? pos : neg) += 1;
      }
    }
    const auto log_range = [](const std::vector<double>& x) {
      const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
      return std::log10(*hi / *lo);
    };
    // noise plateau: most of the spectrum sits above the cap with random signs
    const bool plateau = 2 * static_cast<Eigen::Index>(sp.size()) >= ms.size() && pos > 0 && neg > 0;
    const double ratio = median(sp) / median(sv);
    const double mean_ratio =
        std::accumulate(sp.begin(), sp.end(), 0.0) / sp.size() / (std::accumulate(sv.begin(), sv.end(), 0.0) / sv.size());
    d << lv.size() << " valid (|lambda| spans " << log_range(lv) << " decades), " << sp.size() << " above the cap ("
      << pos << " positive, " << neg << " negative), " << ms.size() - lv.size() - sp.size()
      << " below the cap failing the residual gate; all above-cap modes invalid " << flags
      << "; median second-difference ratio " << ratio << " (tol 10), mean ratio " << mean_ratio;
    return plateau && flags && ratio >= 10.0;
  });

  report("superposition completeness and admittance convergence", [&](std::ostream& d) {
    const auto dm = generate_strip_dipole(1.0, 0.01, 50);
    const auto db = build_rwg(dm);
    const auto Z = assemble_impedance(db, MediumParams::free_space(pi));
    const auto ms = decompose_full(Z);
    const auto feed = feed_index(db, dm.feed_candidates.front());
    const auto V = delta_gap(db, feed);
    const auto direct = solve_driven(Z, V);
    const auto c = modal_coefficients(ms, V);
    const double dip = (reconstruct(ms, c.alpha, ms.size()) - direct.current).norm() / direct.current.norm();
    const auto pm = generate_plate(1.0, 0.5, 12, 6);
    const auto pb = build_rwg(pm);
    const auto PZ = assemble_impedance(pb, MediumParams::free_space(1.0 / bounding_sphere(pm).radius));
    const auto pms = decompose_full(PZ);
    std::mt19937 rng(7);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd PV(pms.unknowns());
    for (Eigen::Index i = 0; i < PV.size(); ++i) PV(i) = cdouble(nd(rng), nd(rng));
    const auto pd = solve_driven(PZ, PV);
    const double plate =
        (reconstruct(pms, modal_coefficients(pms, PV).alpha, pms.size()) - pd.current).norm() / pd.current.norm();
    const cdouble Y = direct.current(feed) * db.functions[static_cast<std::size_t>(feed)].length;
    const auto conv = admittance_convergence(ms, c.alpha, db, feed, 1.0, Y);
    Eigen::Index bad = 0, m_last = ms.num_valid();
    for (Eigen::Index m = 1; m <= m_last; ++m)
      if (!(conv[static_cast<std::size_t>(m)].eps_B > conv[static_cast<std::size_t>(m)].eps_G)) ++bad;
    d << "all-mode reconstruction error: dipole (N=" << ms.size() << ") " << dip << ", plate (N=" << pms.size()
      << ") " << plate << " (tol 1e-8); eps_B > eps_G fails at " << bad << " of M = 1.." << m_last;
    return dip <= 1e-8 && plate <= 1e-8 && bad == 0;
  });

  report("significant-mode count on a plate, ka 1..10", [&](std::ostream& d) {
    const auto m = generate_plate(1.0, 0.5, 16, 8);
    const auto b = build_rwg(m);
    const double a = bounding_sphere(m).radius;
    std::vector<double> ks;
    for (int i = 1; i <= 10; ++i) ks.push_back(i / a);
    std::vector<ModeSet> sets;
    for (auto& p : sweep(b, ks, {})) {
      if (!p.modes) throw error(errc::numerical, p.error);
      sets.push_back(*p.modes);
    }
    const auto fit = count_significant(sets, a, 1.0 / std::sqrt(2.0));
    const bool monotone = std::is_sorted(fit.counts.begin(), fit.counts.end());
    const auto best = search_threshold(sets, a, 0.26, 1.7);
    d << "counts";
    for (auto c : fit.counts) d << ' ' << c;
    d << "; c2 " << fit.c2 << " c1 " << fit.c1 << " R2 " << fit.r2 << "; nearest to (0.26, 1.7) at t=" << best.threshold
      << ": c2 " << best.fit.c2 << " c1 " << best.fit.c1;
    return fit.available && monotone && fit.r2 >= 0.98 && fit.c2 >= 0.1 && fit.c2 <= 0.5;
  });

  report("tracking property suite", [&](std::ostream& d) {
    std::mt19937 rng(99);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0, 1);
    int perm_ok = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const int n = 2 + static_cast<int>(rng() % 49);
      Eigen::MatrixXd A(n, n);
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
      const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
      std::vector<int> p(static_cast<std::size_t>(n));
      std::iota(p.begin(), p.end(), 0);
      std::shuffle(p.begin(), p.end(), rng);
      ModeSet a;
      a.k = 1.0;
      a.lambda = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index) { return nd(rng); });
      a.currents = std::sqrt(2.0) * Q;
      a.valid.assign(static_cast<std::size_t>(n), true);
      a.normalized = true;
      ModeSet b = a;
      b.k = 2.0;
      for (int j = 0; j < n; ++j) {
        b.currents.col(j) = a.currents.col(p[static_cast<std::size_t>(j)]);
        b.lambda(j) = a.lambda(p[static_cast<std::size_t>(j)]);
      }
      const auto ts = track({a, b}, std::vector<Eigen::MatrixXd>(2, Eigen::MatrixXd::Identity(n, n)));
      bool ok = static_cast<int>(ts.traces.size()) == n;
      for (const auto& t : ts.traces) ok = ok && p[static_cast<std::size_t>(t.index[1])] == t.index[0];
      perm_ok += ok;
    }
    int opt_ok = 0, opt_total = 0;
    for (int n = 1; n <= 8; ++n)
      for (int rep = 0; rep < 5; ++rep, ++opt_total) {
        Eigen::MatrixXd S(n, n);
        for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = u(rng);
        const auto a = assign_max(S);
        double got = 0;
        for (int i = 0; i < n; ++i) got += S(i, a[static_cast<std::size_t>(i)]);
        std::vector<int> q(static_cast<std::size_t>(n));
        std::iota(q.begin(), q.end(), 0);
        double best = -1;
        do {
          double s = 0;
          for (int i = 0; i < n; ++i) s += S(i, q[static_cast<std::size_t>(i)]);
          best = std::max(best, s);
        } while (std::next_permutation(q.begin(), q.end()));
        opt_ok += std::abs(got - best) <= 1e-12;
      }
    // 2x2 avoided crossing, X = [[k - 2, 0.05], [0.05, 2 - k]], R = 2 I
    std::vector<ModeSet> sets;
    for (int i = 0; i <= 40; ++i) {
      const double k = 1.0 + 0.05 * i;
      Eigen::MatrixXd R = 2.0 * Eigen::MatrixXd::Identity(2, 2), X(2, 2);
      X << k - 2.0, 0.05, 0.05, 2.0 - k;
      sets.push_back(decompose_full(pencil(R, X), k));
    }
    const auto ts = track(sets, std::vector<Eigen::MatrixXd>(sets.size(), 2.0 * Eigen::MatrixXd::Identity(2, 2)));
    const auto ev = crossing_diagnostics(ts, sets);
    bool continuous = ts.traces.size() == 2;
    for (const auto& t : ts.traces) continuous = continuous && t.first() == 0 && t.last() == sets.size() - 1;
    const bool one_event = ev.size() == 1 && ev[0].type == EventType::avoidance && ev[0].point == 20;
    d << "permutations " << perm_ok << "/100, assignment optimal " << opt_ok << "/" << opt_total << ", avoided crossing "
      << ev.size() << " event(s)" << (one_event ? " at the coupling point" : "") << ", traces "
      << (continuous ? "continuous" : "broken");
    return perm_ok == 100 && opt_ok == opt_total && one_event && continuous;
  });

  report("substructure Schur identity on a dipole near a plate", [&](std::ostream& d) {
    const double L = 0.5, w = 0.02, gap = 0.1, e = 1e-9;
    const auto dm = translate(generate_strip_dipole(L, w, 10), Vec3(0, 0, gap + 0.5 * L));
    const auto mesh = merge(dm, generate_plate(1.0, 0.5, 6, 3));
    const auto b = build_rwg(mesh);
    const auto Z = assemble_impedance(b, MediumParams::free_space(2.0 * pi / 1.2));
    const auto p = partition(Z, select_box(b, Vec3(-w, -e, gap - e), Vec3(w, e, gap + L + e)));
    const auto V = delta_gap(b, mesh.feed_candidates.front());
    const Eigen::VectorXcd Ia = compress(p).partialPivLu().solve(restrict_antenna(V, p));
    const Eigen::VectorXcd I = lift(Ia, p);
    const auto full = solve_driven(Z, V);
    const double err = (I - full.current).norm() / full.current.norm();
    const double res = (Z.Z * I - V).norm() / V.norm();
    d << "antenna " << p.antenna.size() << " of " << p.size() << " unknowns; lifted vs full " << err << ", residual "
      << res << " (tol 1e-10)";
    return err <= 1e-10 && res <= 1e-10;
  });

  report("small pencils against the determinant oracle", [&](std::ostream& d) {
    std::mt19937 rng(50);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    int count_mismatch = 0;
    for (int t = 0; t < 50; ++t) {
      const int n = 1 + t % 6;
      Eigen::MatrixXd A(n, n), B(n, n);
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
      for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
      const Eigen::MatrixXd R = B * B.transpose(), X = A + A.transpose();
      const auto ms = decompose_full(pencil(R, X), 1.0);
      const auto ref = brute_small_gep(X, R);
      if (ref.lambda.size() != ms.num_valid()) {
        ++count_mismatch;
        continue;
      }
      for (Eigen::Index i = 0; i < ref.lambda.size(); ++i)
        worst = std::max(worst, std::abs(ms.lambda(i) - ref.lambda(i)) / (1 + std::abs(ref.lambda(i))));
    }
    d << "50 pencils N=1..6, max |dlambda|/(1+|lambda|) " << worst << " (tol 1e-8), count mismatches " << count_mismatch;
    return worst <= 1e-8 && count_mismatch == 0;
  });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
