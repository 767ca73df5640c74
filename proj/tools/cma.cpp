// cma: command-line front end for the characteristic-mode pipeline.
#include "cma/efie.hpp"
#include "cma/excitation.hpp"
#include "cma/farfield.hpp"
#include "cma/geometry.hpp"
#include "cma/io.hpp"
#include "cma/modes.hpp"
#include "cma/oracle.hpp"
#include "cma/substructure.hpp"
#include "cma/sweeptrack.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cma;

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

json default_config() {
  return {
      {"geometry", {{"shape", "plate"}}},
      {"ka", 1.0},
      {"solver", {{"route", "full"}, {"eps_R", 1e-10}, {"lambda_cap", 1e12}, {"num_modes", 20}, {"lmax", 0},
                  {"complete_invalid", true}}},
      {"threshold_ms", 1.0 / std::sqrt(2.0)},
      {"rho_min", 0.7},
      {"quadrature", quadrature_json(QuadratureConfig{})},
      {"excitation", {{"type", "delta_gap"}, {"V0", 1.0}}},
      {"cuts", 3},
      {"out", "cma_out"},
  };
}

json geometry_defaults(const std::string& shape) {
  if (shape == "plate") return {{"Lx", 1.0}, {"Ly", 0.5}, {"nx", 8}, {"ny", 4}};
  if (shape == "sphere") return {{"radius", 1.0}, {"subdiv", 2}};
  if (shape == "dipole") return {{"L", 1.0}, {"w", 0.01}, {"n", 50}};
  if (shape == "dipole_plate")
    return {{"L", 0.5}, {"w", 0.02}, {"n", 10}, {"Lx", 1.0}, {"Ly", 0.5}, {"nx", 6}, {"ny", 3}, {"gap", 0.1}};
  if (shape == "mesh") return {{"path", ""}};
  throw error(errc::config, "geometry.shape must be one of plate, sphere, dipole, dipole_plate, mesh (got '" + shape + "')");
}

/// Recursive object merge; `b` wins.
void merge_into(json& a, const json& b) {
  for (auto it = b.begin(); it != b.end(); ++it) {
    if (it->is_object() && a.contains(it.key()) && a[it.key()].is_object())
      merge_into(a[it.key()], *it);
    else
      a[it.key()] = *it;
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw error(errc::config, where + "." + key + " is missing or has the wrong type");
  }
}

/// "a:b[:n]" or a single value.
json parse_grid(const std::string& s) {
  std::vector<double> parts;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ':');) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw error(errc::config, "--ka expects a:b[:n] or a single value, got '" + s + "'");
    }
  }
  if (parts.size() == 1) return parts[0];
  if (parts.size() == 2 || parts.size() == 3) return s;
  throw error(errc::config, "--ka expects a:b[:n] or a single value, got '" + s + "'");
}

std::vector<double> grid_values(const json& g, const char* name) {
  std::vector<double> v;
  if (g.is_number()) {
    v.push_back(g.get<double>());
  } else if (g.is_array()) {
    for (const auto& x : g) {
      require(x.is_number(), errc::config, std::string(name) + ": array entries must be numbers");
      v.push_back(x.get<double>());
    }
  } else if (g.is_string()) {
    std::vector<double> p;
    std::stringstream ss(g.get<std::string>());
    for (std::string tok; std::getline(ss, tok, ':');) {
      try {
        p.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw error(errc::config, std::string(name) + ": cannot parse '" + tok + "' as a number");
      }
    }
    require(p.size() == 2 || p.size() == 3, errc::config, std::string(name) + ": range must be a:b[:n]");
    // default: unit steps, at least two points
    const int n = p.size() == 3 ? static_cast<int>(p[2]) : std::max(2, static_cast<int>(std::lround(p[1] - p[0])) + 1);
    require(n >= 1 && p[1] >= p[0], errc::config, std::string(name) + ": need b >= a and n >= 1");
    require(n > 1 || p[0] == p[1], errc::config, std::string(name) + ": a range with a != b needs n >= 2");
    for (int i = 0; i < n; ++i) v.push_back(n == 1 ? p[0] : p[0] + (p[1] - p[0]) * i / (n - 1));
  } else {
    throw error(errc::config, std::string(name) + " must be a number, an array or an \"a:b[:n]\" string");
  }
  require(!v.empty(), errc::config, std::string(name) + ": frequency grid is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(v[i] > 0 && std::isfinite(v[i]), errc::config, std::string(name) + ": values must be positive");
    require(i == 0 || v[i] > v[i - 1], errc::config, std::string(name) + ": values must be strictly increasing");
  }
  return v;
}

struct Geometry {
  TriMesh mesh;
  BasisSet basis;
  BoundingSphere sphere;
  std::optional<std::pair<Vec3, Vec3>> antenna_box;  // dipole_plate: box around the dipole
};

Geometry build_geometry(const json& g) {
  const auto shape = get<std::string>(g, "shape", "geometry");
  Geometry out;
  if (shape == "plate") {
    out.mesh = generate_plate(get<double>(g, "Lx", "geometry"), get<double>(g, "Ly", "geometry"),
                              get<int>(g, "nx", "geometry"), get<int>(g, "ny", "geometry"));
  } else if (shape == "sphere") {
    out.mesh = generate_sphere(get<double>(g, "radius", "geometry"), get<int>(g, "subdiv", "geometry"));
  } else if (shape == "dipole") {
    out.mesh = generate_strip_dipole(get<double>(g, "L", "geometry"), get<double>(g, "w", "geometry"),
                                     get<int>(g, "n", "geometry"));
  } else if (shape == "dipole_plate") {
    const double L = get<double>(g, "L", "geometry"), w = get<double>(g, "w", "geometry");
    const double gap = get<double>(g, "gap", "geometry");
    require(gap > 0, errc::config, "geometry.gap must be positive");
    // dipole along z standing above the plate, lower end `gap` above it
    const auto dip = translate(generate_strip_dipole(L, w, get<int>(g, "n", "geometry")), Vec3(0, 0, gap + 0.5 * L));
    const auto plate = generate_plate(get<double>(g, "Lx", "geometry"), get<double>(g, "Ly", "geometry"),
                                      get<int>(g, "nx", "geometry"), get<int>(g, "ny", "geometry"));
    out.mesh = merge(dip, plate);
    const double e = 1e-9;
    out.antenna_box = std::make_pair(Vec3(-w, -e, gap - e), Vec3(w, e, gap + L + e));
  } else if (shape == "mesh") {
    const auto path = get<std::string>(g, "path", "geometry");
    require(!path.empty(), errc::config, "geometry.path is required for shape 'mesh'");
    std::ifstream in(path);
    require(static_cast<bool>(in), errc::config, "cannot open mesh file '" + path + "'");
    out.mesh = load_mesh(in);
  } else {
    geometry_defaults(shape);  // throws the config error
  }
  out.basis = build_rwg(out.mesh);
  out.sphere = bounding_sphere(out.mesh);
  return out;
}

struct Settings {
  json cfg;
  std::string subcommand;
  fs::path out;
  unsigned jobs = 1;
  SolverConfig solver;
  double threshold_ms = 0.0;
  double rho_min = 0.0;
  int cuts = 0;
};

Settings validate(const json& cfg, const std::string& sub, unsigned jobs) {
  Settings s;
  s.cfg = cfg;
  s.subcommand = sub;
  s.jobs = std::max(1u, jobs);
  s.out = get<std::string>(cfg, "out", "config");
  require(!s.out.empty(), errc::config, "out: output directory must not be empty");
  const auto& sv = cfg.at("solver");
  s.solver.route = parse_route(get<std::string>(sv, "route", "solver"));
  s.solver.eps_R = get<double>(sv, "eps_R", "solver");
  require(s.solver.eps_R > 0 && s.solver.eps_R < 1, errc::config, "solver.eps_R must lie in (0, 1)");
  s.solver.modes.lambda_cap = get<double>(sv, "lambda_cap", "solver");
  require(s.solver.modes.lambda_cap > 1, errc::config, "solver.lambda_cap (--lambda-cap) must exceed 1");
  // false keeps the raw QZ vectors and eigenvalues of the invalid block (saturation plots)
  s.solver.modes.complete_invalid = get<bool>(sv, "complete_invalid", "solver");
  s.solver.num_modes = get<Eigen::Index>(sv, "num_modes", "solver");
  require(s.solver.num_modes >= 1, errc::config, "solver.num_modes must be >= 1");
  s.solver.lmax = get<int>(sv, "lmax", "solver");
  require(s.solver.lmax >= 0, errc::config, "solver.lmax must be >= 0 (0 selects the default truncation)");
  s.threshold_ms = get<double>(cfg, "threshold_ms", "config");
  require(s.threshold_ms > 0 && s.threshold_ms < 1, errc::config, "threshold_ms (--threshold-ms) must lie in (0, 1)");
  s.rho_min = get<double>(cfg, "rho_min", "config");
  require(s.rho_min > 0 && s.rho_min <= 1, errc::config, "rho_min must lie in (0, 1]");
  s.cuts = get<int>(cfg, "cuts", "config");
  require(s.cuts >= 0, errc::config, "cuts must be >= 0");
  const auto& q = cfg.at("quadrature");
  s.solver.quad.outer = get<int>(q, "outer", "quadrature");
  s.solver.quad.inner = get<int>(q, "inner", "quadrature");
  s.solver.quad.singular_outer = get<int>(q, "singular_outer", "quadrature");
  s.solver.quad.near_factor = get<double>(q, "near_factor", "quadrature");
  s.solver.quad.radiation = get<int>(q, "radiation", "quadrature");
  s.solver.quad.max_unknowns = get<std::size_t>(q, "max_unknowns", "quadrature");
  require(s.solver.quad.outer >= 1 && s.solver.quad.inner >= 1 && s.solver.quad.singular_outer >= 1 &&
              s.solver.quad.radiation >= 0,
          errc::config, "quadrature orders must be positive (radiation may be 0)");
  require(s.solver.quad.near_factor >= 0, errc::config, "quadrature.near_factor must be >= 0");
  s.solver.modes.max_unknowns = s.solver.quad.max_unknowns;
  if (cfg.contains("ka") && cfg.contains("k"))
    throw error(errc::config, "give either ka or k, not both");
  return s;
}

std::vector<double> wavenumbers(const Settings& s, const Geometry& g) {
  if (s.cfg.contains("k")) return grid_values(s.cfg["k"], "k");
  auto ka = grid_values(s.cfg.at("ka"), "ka");
  for (auto& v : ka) v /= g.sphere.radius;
  return ka;
}

class Manifest {
 public:
  explicit Manifest(const Settings& s) : s_(s), hash_(config_hash(s.cfg)) {}

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream buf;
    body(buf);
    const auto text = buf.str();
    write_atomic(s_.out / name, text);
    fnv1a h;
    h.update(text);
    artifacts_.push_back({{"file", name}, {"config_hash", hash_}, {"content_hash", hex64(h.digest())}});
  }
  /// Lists a file that was written by other means.
  void record(const std::string& name) {
    std::ifstream in(s_.out / name, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    fnv1a h;
    h.update(buf.str());
    artifacts_.push_back({{"file", name}, {"config_hash", hash_}, {"content_hash", hex64(h.digest())}});
  }
  void write_json(const std::string& name, const json& j) {
    write(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  }
  void set(const std::string& key, json v) { extra_[key] = std::move(v); }

  void finish(const Geometry* g) {
    json m;
    m["tool"] = "cma";
    m["version"] = version;
    m["subcommand"] = s_.subcommand;
    m["config"] = s_.cfg;
    m["config_hash"] = hash_;
    if (g) {
      m["mesh_hash"] = hex64(g->mesh.hash());
      m["unknowns"] = g->basis.size();
      m["triangles"] = g->mesh.num_triangles();
      m["reference_radius"] = g->sphere.radius;
    }
    m["jobs"] = s_.jobs;
    m["artifacts"] = artifacts_;
    for (auto it = extra_.begin(); it != extra_.end(); ++it) m[it.key()] = *it;
    write_atomic(s_.out / "manifest.json", m.dump(2) + "\n");
  }

 private:
  const Settings& s_;
  std::string hash_;
  json artifacts_ = json::array();
  json extra_ = json::object();
};

std::string point_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext);
  return buf;
}

ImpedanceMatrix assemble(const Geometry& g, double k, const Settings& s) {
  auto q = s.solver.quad;
  q.threads = s.jobs;
  return assemble_impedance(g.basis, MediumParams::free_space(k), q);
}

Eigen::VectorXcd excitation_vector(const Settings& s, const Geometry& g, double k, Eigen::Index* feed) {
  const auto& e = s.cfg.at("excitation");
  const auto type = get<std::string>(e, "type", "excitation");
  const cdouble V0 = get<double>(e, "V0", "excitation");
  if (type == "delta_gap") {
    Eigen::Index f = -1;
    if (e.contains("index")) {
      f = e["index"].get<Eigen::Index>();
    } else if (e.contains("edge")) {
      const auto v = e["edge"].get<std::vector<int>>();
      require(v.size() == 2, errc::config, "excitation.edge must be a vertex pair [a, b]");
      f = feed_index(g.basis, edge_key(v[0], v[1]));
    } else {
      require(!g.mesh.feed_candidates.empty(), errc::config,
              "excitation: this geometry has no default feed; set excitation.edge or excitation.index");
      f = feed_index(g.basis, g.mesh.feed_candidates.front());
    }
    require(f >= 0 && f < static_cast<Eigen::Index>(g.basis.size()), errc::config, "excitation.index out of range");
    if (feed) *feed = f;
    return delta_gap(g.basis, f, V0);
  }
  if (type == "plane_wave") {
    const auto kh = e.value("khat", std::vector<double>{0, 0, -1});
    const auto pol = e.value("pol", std::vector<double>{1, 0, 0});
    require(kh.size() == 3 && pol.size() == 3, errc::config, "excitation.khat and excitation.pol need 3 components");
    if (feed) *feed = -1;
    return plane_wave(g.basis, k, Vec3(kh[0], kh[1], kh[2]), Vec3(pol[0], pol[1], pol[2]), V0);
  }
  throw error(errc::config, "excitation.type must be delta_gap or plane_wave");
}

void write_cuts(Manifest& man, const std::string& stem, const ModeSet& ms, const Geometry& g, int count) {
  const auto medium = MediumParams::free_space(ms.k);
  const auto valid = ms.valid_indices();
  for (int c = 0; c < count && c < static_cast<int>(valid.size()); ++c) {
    const Eigen::VectorXcd I = ms.currents.col(valid[static_cast<std::size_t>(c)]).cast<cdouble>();
    for (int phi_deg : {0, 90}) {
      const auto ff = pattern_cut(I, g.basis, medium, true, phi_deg * pi / 180.0, 181, g.sphere.center);
      const auto name = stem + "_mode" + std::to_string(c) + "_phi" + std::to_string(phi_deg);
      man.write(name + ".csv", [&](std::ostream& o) { write_farfield_csv(o, ff, false); });
      man.write(name + "_norm.csv", [&](std::ostream& o) { write_farfield_csv(o, ff, true); });
    }
  }
}

std::vector<ModeSet> run_sweep(const Settings& s, const Geometry& g, Manifest& man, std::vector<Eigen::MatrixXd>* R) {
  const auto ks = wavenumbers(s, g);
  auto pts = sweep(g.basis, ks, s.solver, s.jobs);
  std::vector<ModeSet> sets;
  json failures = json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].modes) {
      failures.push_back({{"k", pts[i].k}, {"ka", pts[i].k * g.sphere.radius}, {"error", pts[i].error}});
      continue;
    }
    man.write(point_name("modes", i, "csv"), [&](std::ostream& o) { write_modes_csv(o, *pts[i].modes); });
    sets.push_back(*pts[i].modes);
    if (R) R->push_back(pts[i].R);
  }
  man.write("sweep.csv", [&](std::ostream& o) {
    o << "ka,k,index,lambda,MS,alpha_rad,valid\n";
    o.precision(15);
    for (const auto& ms : sets)
      for (Eigen::Index i = 0; i < ms.size(); ++i) {
        const double l = ms.lambda(i);
        const auto m = std::isnan(l) ? ModalMetrics{0.0, pi} : modal_metrics(l);
        o << ms.k * g.sphere.radius << ',' << ms.k << ',' << i << ',' << l << ',' << m.significance << ',' << m.angle
          << ',' << (ms.valid[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
      }
  });
  man.set("failed_points", failures);
  if (!failures.empty())
    throw error(errc::numerical, std::to_string(failures.size()) + " sweep point(s) failed; first: " +
                                     failures[0]["error"].get<std::string>());
  return sets;
}

// ---------------------------------------------------------------- commands

void cmd_assemble(const Settings& s, const Geometry& g, Manifest& man) {
  const auto ks = wavenumbers(s, g);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto Z = assemble(g, ks[i], s);
    const auto name = ks.size() == 1 ? std::string("impedance.cmaz") : point_name("impedance", i, "cmaz");
    const auto tmp = (s.out / (name + ".tmp")).string();
    fs::create_directories(s.out);
    write_impedance(tmp, Z);
    fs::rename(tmp, s.out / name);
    man.record(name);
    man.write(name.substr(0, name.size() - 5) + ".json", [&](std::ostream& o) {
      auto side = impedance_sidecar(Z, s.solver.quad);
      side["ka"] = ks[i] * g.sphere.radius;
      o << side.dump(2) << '\n';
    });
  }
}

void cmd_modes(const Settings& s, const Geometry& g, Manifest& man) {
  const auto ks = wavenumbers(s, g);
  require(ks.size() == 1, errc::config, "modes takes a single frequency; use sweep for a grid");
  const auto Z = assemble(g, ks[0], s);
  const auto ms = solve_modes(g.basis, Z, s.solver);
  man.write("modes.csv", [&](std::ostream& o) { write_modes_csv(o, ms); });
  auto j = modes_json(ms, s.solver.modes);
  j["ka"] = ks[0] * g.sphere.radius;
  man.write_json("modes.json", j);
  write_cuts(man, "farfield", ms, g, s.cuts);
}

void cmd_sweep(const Settings& s, const Geometry& g, Manifest& man) { run_sweep(s, g, man, nullptr); }

void cmd_track(const Settings& s, const Geometry& g, Manifest& man) {
  std::vector<Eigen::MatrixXd> R;
  const auto sets = run_sweep(s, g, man, &R);
  TrackOptions opt;
  opt.rho_min = s.rho_min;
  const auto ts = track(sets, R, opt);
  const auto ev = crossing_diagnostics(ts, sets);
  man.write("tracks.csv", [&](std::ostream& o) { write_tracks_csv(o, ts, sets, g.sphere.radius); });
  man.write("events.csv", [&](std::ostream& o) { write_events_csv(o, ev, g.sphere.radius); });
  man.set("traces", ts.traces.size());
}

void cmd_excite(const Settings& s, const Geometry& g, Manifest& man) {
  const auto ks = wavenumbers(s, g);
  require(ks.size() == 1, errc::config, "excite takes a single frequency");
  const auto Z = assemble(g, ks[0], s);
  const auto ms = solve_modes(g.basis, Z, s.solver);
  Eigen::Index feed = -1;
  const auto V = excitation_vector(s, g, ks[0], &feed);
  const auto c = modal_coefficients(ms, V);
  const auto direct = solve_driven(Z, V);
  man.write("coefficients.csv", [&](std::ostream& o) {
    o << "index,lambda,MS,valid,Re_alpha,Im_alpha,abs_alpha,Re_IV,Im_IV\n";
    o.precision(12);
    for (Eigen::Index i = 0; i < ms.size(); ++i)
      o << i << ',' << ms.lambda(i) << ',' << c.significance(i) << ',' << (ms.valid[static_cast<std::size_t>(i)] ? 1 : 0)
        << ',' << c.alpha(i).real() << ',' << c.alpha(i).imag() << ',' << std::abs(c.alpha(i)) << ','
        << c.excitation(i).real() << ',' << c.excitation(i).imag() << '\n';
  });
  const Eigen::VectorXcd I = reconstruct(ms, c.alpha, ms.size());
  json summary = {{"reconstruction_error", (I - direct.current).norm() / direct.current.norm()},
                  {"direct_residual", direct.residual},
                  {"modes", ms.size()},
                  {"valid", ms.num_valid()}};
  if (feed >= 0) {
    const cdouble V0 = s.cfg["excitation"]["V0"].get<double>();
    const double l = g.basis.functions[static_cast<std::size_t>(feed)].length;
    const cdouble Yref = direct.current(feed) * l / V0;
    const auto conv = admittance_convergence(ms, c.alpha, g.basis, feed, V0, Yref);
    man.write("convergence.csv", [&](std::ostream& o) { write_convergence_csv(o, conv); });
    summary["feed_index"] = feed;
    summary["Y_direct"] = {Yref.real(), Yref.imag()};
    summary["Z_in"] = {(1.0 / Yref).real(), (1.0 / Yref).imag()};
  }
  man.write_json("excitation.json", summary);
  const auto ff = pattern_cut(direct.current, g.basis, MediumParams::free_space(ks[0]), true, 0.0, 181, g.sphere.center);
  man.write("farfield_driven_phi0.csv", [&](std::ostream& o) { write_farfield_csv(o, ff, false); });
}

json fit_json(const CountFit& f) {
  return {{"available", f.available}, {"c2", f.c2}, {"c1", f.c1}, {"r2", f.r2}, {"note", f.note}};
}

void cmd_count(const Settings& s, const Geometry& g, Manifest& man) {
  const auto sets = run_sweep(s, g, man, nullptr);
  const auto fit = count_significant(sets, g.sphere.radius, s.threshold_ms);
  man.write("counts.csv", [&](std::ostream& o) {
    o << "ka,count\n";
    o.precision(12);
    for (std::size_t i = 0; i < fit.ka.size(); ++i) o << fit.ka[i] << ',' << fit.counts[i] << '\n';
  });
  bool monotone = true;
  for (std::size_t i = 1; i < fit.counts.size(); ++i) monotone = monotone && fit.counts[i] >= fit.counts[i - 1];
  json j = fit_json(fit);
  j["threshold"] = s.threshold_ms;
  j["monotone"] = monotone;
  j["reference_radius"] = g.sphere.radius;
  const auto search = search_threshold(sets, g.sphere.radius, 0.26, 1.7);
  j["threshold_search"] = {{"target", {0.26, 1.7}},
                           {"threshold", search.threshold},
                           {"max_relative_deviation", search.distance},
                           {"fit", fit_json(search.fit)}};
  man.write_json("fit.json", j);
}

void cmd_validate_sphere(const Settings& s, const Geometry& g, Manifest& man) {
  require(s.cfg["geometry"]["shape"] == "sphere", errc::config, "validate-sphere needs geometry.shape = sphere");
  const auto ks = wavenumbers(s, g);
  require(ks.size() == 1, errc::config, "validate-sphere takes a single frequency");
  const double a = s.cfg["geometry"]["radius"].get<double>();
  const double ka = ks[0] * a;
  const auto t0 = std::chrono::steady_clock::now();
  const auto Z = assemble(g, ks[0], s);
  const auto ms = solve_modes(g.basis, Z, s.solver);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto cmp = compare_sphere(ms, ka);
  man.write("sphere_report.csv", [&](std::ostream& o) { write_sphere_comparison_csv(o, cmp); });
  int l_max = 1;
  for (const auto& r : cmp.rows) l_max = std::max(l_max, r.l);
  man.write("sphere_oracle.csv", [&](std::ostream& o) { write_sphere_csv(o, sphere_eigenvalues(ka, l_max)); });
  man.write("modes.csv", [&](std::ostream& o) { write_modes_csv(o, ms); });
  json groups = json::array();
  bool all_groups = true;
  for (const auto& gr : cmp.groups) {
    groups.push_back({{"tau", gr.tau == 1 ? "TE" : "TM"},
                      {"l", gr.l},
                      {"multiplicity", gr.multiplicity},
                      {"found", gr.found},
                      {"reference", gr.reference},
                      {"mean", gr.mean},
                      {"spread", gr.spread},
                      {"max_rel_err", gr.max_rel_err},
                      {"identified", gr.identified}});
    all_groups = all_groups && gr.identified;
  }
  man.write_json("sphere_summary.json", {{"ka", ka},
                                         {"unknowns", g.basis.size()},
                                         {"solver", ms.solver},
                                         {"valid", ms.num_valid()},
                                         {"max_rel_err_lambda_le_20", cmp.max_rel_err},
                                         {"complete", cmp.complete},
                                         {"within_1pct", cmp.within(0.01)},
                                         {"within_5pct", cmp.within(0.05)},
                                         {"groups_identified", all_groups},
                                         {"groups", groups},
                                         {"seconds", secs}});
}

void cmd_substructure(const Settings& s, const Geometry& g, Manifest& man) {
  const auto ks = wavenumbers(s, g);
  require(ks.size() == 1, errc::config, "substructure takes a single frequency");
  std::vector<Eigen::Index> antenna;
  const json sub = s.cfg.value("substructure", json::object());
  if (sub.contains("antenna")) {
    antenna = sub["antenna"].get<std::vector<Eigen::Index>>();
  } else if (sub.contains("antenna_box")) {
    const auto lo = sub["antenna_box"].at("lo").get<std::vector<double>>();
    const auto hi = sub["antenna_box"].at("hi").get<std::vector<double>>();
    require(lo.size() == 3 && hi.size() == 3, errc::config, "substructure.antenna_box needs 3-vectors lo and hi");
    antenna = select_box(g.basis, Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2]));
  } else {
    require(g.antenna_box.has_value(), errc::config,
            "substructure needs substructure.antenna or substructure.antenna_box for this geometry");
    antenna = select_box(g.basis, g.antenna_box->first, g.antenna_box->second);
  }
  require(!antenna.empty(), errc::config, "substructure: the antenna selection is empty");
  const auto Z = assemble(g, ks[0], s);
  const auto p = partition(Z, antenna);
  const Eigen::MatrixXcd Zc = compress(p);
  const auto ms = decompose_full(Zc, ks[0], s.solver.modes);
  man.write("modes.csv", [&](std::ostream& o) { write_modes_csv(o, ms); });
  auto mj = modes_json(ms, s.solver.modes);
  mj["antenna"] = p.antenna;
  man.write_json("modes.json", mj);
  json summary = {{"antenna_unknowns", p.antenna.size()}, {"scatterer_unknowns", p.scatterer.size()}};
  // driven check when the feed lies in the antenna region
  if (!g.mesh.feed_candidates.empty()) {
    const auto f = feed_index(g.basis, g.mesh.feed_candidates.front());
    if (std::find(p.antenna.begin(), p.antenna.end(), f) != p.antenna.end()) {
      const auto V = delta_gap(g.basis, f);
      const auto full = solve_driven(Z, V);
      const Eigen::VectorXcd Ia = Zc.partialPivLu().solve(restrict_antenna(V, p));
      const Eigen::VectorXcd I = lift(Ia, p);
      summary["lifted_vs_full"] = (I - full.current).norm() / full.current.norm();
      summary["feed_index"] = f;
    }
  }
  man.write_json("substructure.json", summary);
}

int run(const std::string& sub, const json& cfg, unsigned jobs) {
  const auto s = validate(cfg, sub, jobs);
  std::optional<Geometry> g;
  Manifest man(s);
  try {
    g = build_geometry(cfg.at("geometry"));
    if (sub == "assemble") cmd_assemble(s, *g, man);
    else if (sub == "modes") cmd_modes(s, *g, man);
    else if (sub == "sweep") cmd_sweep(s, *g, man);
    else if (sub == "track") cmd_track(s, *g, man);
    else if (sub == "excite") cmd_excite(s, *g, man);
    else if (sub == "count") cmd_count(s, *g, man);
    else if (sub == "validate-sphere") cmd_validate_sphere(s, *g, man);
    else if (sub == "substructure") cmd_substructure(s, *g, man);
  } catch (const error& e) {
    man.set("status", "failed");
    man.set("error", e.what());
    try {
      man.finish(g ? &*g : nullptr);
    } catch (...) {
    }
    throw;
  }
  man.set("status", "ok");
  man.finish(&*g);
  std::cout << "wrote " << (s.out / "manifest.json").string() << '\n';
  return 0;
}

int exit_code(errc c) {
  switch (c) {
    case errc::numerical:
    case errc::convergence: return exit_numerical;
    default: return exit_config;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Characteristic-mode analysis of PEC surfaces"};
  app.require_subcommand(1, 1);
  std::string config_path, out, solver, ka, shape, feed_edge;
  unsigned jobs = 1;
  double threshold = -1, lambda_cap = -1;
  int subdiv = -1;

  const std::vector<std::pair<std::string, std::string>> subs = {
      {"assemble", "Assemble and export Z"},
      {"modes", "Characteristic modes at one frequency"},
      {"sweep", "Modes over a frequency grid"},
      {"track", "Sweep and track modes across frequency"},
      {"excite", "Modal coefficients and admittance convergence"},
      {"count", "Significant-mode counts with quadratic fit"},
      {"validate-sphere", "Compare sphere eigenvalues against the closed form"},
      {"substructure", "Modes of an antenna region in the presence of a scatterer"}};
  for (const auto& [name, help] : subs) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sc->add_option("--out", out, "Output directory");
    sc->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sc->add_option("--solver", solver, "full | reduced | iterative | tmatrix");
    sc->add_option("--ka", ka, "ka grid a:b[:n] or a single value (reference: circumscribing sphere)");
    sc->add_option("--threshold-ms", threshold, "Modal-significance threshold");
    sc->add_option("--lambda-cap", lambda_cap, "Eigenvalue magnitude cap");
    sc->add_option("--shape", shape, "plate | sphere | dipole | dipole_plate | mesh");
    sc->add_option("--subdiv", subdiv, "Sphere subdivisions");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_config;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    json cfg = default_config();
    json user = json::object();
    if (!config_path.empty()) {
      user = read_json_file(config_path);
      require(user.is_object(), errc::config, "config file must hold a JSON object");
    }
    // overrides
    if (!shape.empty()) user["geometry"]["shape"] = shape;
    if (subdiv >= 0) user["geometry"]["subdiv"] = subdiv;
    if (sub == "validate-sphere" && !(user.contains("geometry") && user["geometry"].contains("shape")))
      user["geometry"]["shape"] = "sphere";
    if (sub == "validate-sphere" && !user["solver"].contains("route") && solver.empty()) user["solver"]["route"] = "reduced";
    if (!solver.empty()) user["solver"]["route"] = solver;
    if (lambda_cap > 0) user["solver"]["lambda_cap"] = lambda_cap;
    if (threshold > 0) user["threshold_ms"] = threshold;
    if (!ka.empty()) {
      user.erase("k");
      user["ka"] = parse_grid(ka);
    }
    if (user.contains("k")) cfg.erase("ka");
    if (!out.empty()) user["out"] = out;
    if (user.contains("solver") && user["solver"].is_null()) user.erase("solver");

    const std::string sh = user.contains("geometry") && user["geometry"].contains("shape")
                               ? user["geometry"]["shape"].get<std::string>()
                               : cfg["geometry"]["shape"].get<std::string>();
    cfg["geometry"] = geometry_defaults(sh);
    cfg["geometry"]["shape"] = sh;
    merge_into(cfg, user);
    return run(sub, cfg, jobs);
  } catch (const error& e) {
    std::cerr << "cma " << sub << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "cma " << sub << ": config: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "cma " << sub << ": " << e.what() << '\n';
    return exit_numerical;
  }
}
