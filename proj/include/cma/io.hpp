#pragma once

#include "cma/core.hpp"
#include "cma/efie.hpp"
#include "cma/modes.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace cma {

using json = nlohmann::json;

/// Hash of the canonical (sorted-key, compact) serialisation.
inline std::string config_hash(const json& j) {
  fnv1a h;
  h.update(j.dump());
  return hex64(h.digest());
}

/// Writes via a temporary file in the same directory and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), errc::io, "cannot open " + tmp + " for writing");
    body(out);
    out.flush();
    require(static_cast<bool>(out), errc::io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, errc::io, "cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& o) { o << text; });
}

// ------------------------------------------------------------------- modes

/// CSV `index, lambda, MS, alpha_rad, valid`.
inline void write_modes_csv(std::ostream& out, const ModeSet& ms) {
  out << "index,lambda,MS,alpha_rad,valid\n";
  out.precision(15);
  for (Eigen::Index i = 0; i < ms.size(); ++i) {
    const double l = ms.lambda(i);
    const auto m = std::isnan(l) ? ModalMetrics{0.0, pi} : modal_metrics(l);
    out << i << ',' << l << ',' << m.significance << ',' << m.angle << ',' << (ms.valid[static_cast<std::size_t>(i)] ? 1 : 0)
        << '\n';
  }
}

inline json thresholds_json(const ModeOptions& o) {
  return {{"lambda_cap", o.lambda_cap},           {"null_tol", o.null_tol},
          {"residual_tol", o.residual_tol},       {"imag_tol", o.imag_tol},
          {"lambda_imag_tol", o.lambda_imag_tol}, {"complete_invalid", o.complete_invalid}};
}

namespace detail {

inline json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline double parse_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  const auto s = v.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// JSON header (k, N, M, M_valid, solver, thresholds), eigenvalues, flags and
/// the current matrix (one array per mode).
inline json modes_json(const ModeSet& ms, const ModeOptions& opt = {}, bool with_currents = true) {
  json j;
  j["k"] = ms.k;
  j["N"] = ms.unknowns();
  j["M"] = ms.size();
  j["M_valid"] = ms.num_valid();
  j["solver"] = ms.solver;
  j["rank"] = ms.rank;
  j["thresholds"] = thresholds_json(opt);
  j["thresholds"]["lambda_cap"] = ms.lambda_cap;
  json lam = json::array(), lim = json::array(), val = json::array(), pw = json::array(), rx = json::array();
  for (Eigen::Index i = 0; i < ms.size(); ++i) {
    lam.push_back(detail::finite_or_string(ms.lambda(i)));
    lim.push_back(detail::finite_or_string(ms.lambda_imag(i)));
    val.push_back(static_cast<bool>(ms.valid[static_cast<std::size_t>(i)]));
    pw.push_back(ms.power(i));
    rx.push_back(ms.reactive(i));
  }
  j["lambda"] = lam;
  j["lambda_imag"] = lim;
  j["valid"] = val;
  j["power"] = pw;
  j["reactive"] = rx;
  if (with_currents) {
    json cur = json::array();
    for (Eigen::Index c = 0; c < ms.size(); ++c) {
      json col = json::array();
      for (Eigen::Index r = 0; r < ms.unknowns(); ++r) col.push_back(ms.currents(r, c));
      cur.push_back(col);
    }
    j["currents"] = cur;
  }
  return j;
}

inline ModeSet modes_from_json(const json& j) {
  try {
    ModeSet ms;
    ms.k = j.at("k").get<double>();
    ms.solver = j.at("solver").get<std::string>();
    ms.rank = j.at("rank").get<Eigen::Index>();
    ms.lambda_cap = detail::parse_number(j.at("thresholds").at("lambda_cap"));
    const auto M = j.at("M").get<Eigen::Index>(), N = j.at("N").get<Eigen::Index>();
    ms.lambda.resize(M);
    ms.lambda_imag.resize(M);
    ms.power.resize(M);
    ms.reactive.resize(M);
    ms.valid.resize(static_cast<std::size_t>(M));
    ms.currents = Eigen::MatrixXd::Zero(N, M);
    for (Eigen::Index i = 0; i < M; ++i) {
      const auto si = static_cast<std::size_t>(i);
      ms.lambda(i) = detail::parse_number(j.at("lambda").at(si));
      ms.lambda_imag(i) = detail::parse_number(j.at("lambda_imag").at(si));
      ms.valid[si] = j.at("valid").at(si).get<bool>();
      ms.power(i) = j.at("power").at(si).get<double>();
      ms.reactive(i) = j.at("reactive").at(si).get<double>();
      if (j.contains("currents"))
        for (Eigen::Index r = 0; r < N; ++r) ms.currents(r, i) = j["currents"][si][static_cast<std::size_t>(r)].get<double>();
    }
    ms.normalized = true;
    return ms;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse, std::string("mode set JSON: ") + e.what());
  }
}

// ------------------------------------------------------- impedance sidecar

inline json quadrature_json(const QuadratureConfig& q) {
  return {{"outer", q.outer},         {"inner", q.inner},           {"singular_outer", q.singular_outer},
          {"near_factor", q.near_factor}, {"radiation", q.radiation}, {"max_unknowns", q.max_unknowns}};
}

/// Provenance next to a binary impedance container.
inline json impedance_sidecar(const ImpedanceMatrix& Z, const QuadratureConfig& q) {
  return {{"format", "CMAZ"},
          {"format_version", impedance_format_version},
          {"N", Z.size()},
          {"k", Z.medium.k},
          {"omega", Z.medium.omega},
          {"Z0", Z.medium.impedance()},
          {"mesh_hash", hex64(Z.basis_hash)},
          {"quadrature", quadrature_json(q)},
          {"symmetry_defect", symmetry_defect(Z)}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw error(errc::parse, path.string() + ": " + e.what());
  }
}

}  // namespace cma
