// Writes tests/frozen/plate2x2_zref.hpp: reference impedance entries of the
// 2x2 unit plate at ka = 1 from the nested-quadrature oracle. Run once; the
// output is committed and not edited by hand.
#include "cma/oracle.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace cma;

int main(int argc, char** argv) {
  const char* path = argc > 1 ? argv[1] : "plate2x2_zref.hpp";
  const auto mesh = generate_plate(1.0, 1.0, 2, 2);
  const auto basis = build_rwg(mesh);
  const double k = 1.0 / bounding_sphere(mesh).radius;
  const auto medium = MediumParams::free_space(k);
  ReferenceZOptions opt;
  opt.tol = 1e-6;
  std::ofstream out(path);
  out << "#pragma once\n// Generated by tools/gen_oracles.cpp; do not edit.\n\n";
  out << "namespace frozen::plate2x2 {\n\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "inline constexpr double k = %.17g;\n", k);
  out << buf;
  out << "inline constexpr int N = " << basis.size() << ";\n";
  out << "inline constexpr double tol = " << opt.tol << ";\n\n";
  out << "struct Entry {\n  int m, n;\n  double re, im;\n};\n\n";
  out << "inline constexpr Entry Z[] = {\n";
  for (std::size_t m = 0; m < basis.size(); ++m)
    for (std::size_t n = m; n < basis.size(); ++n) {
      const cdouble z = reference_z_entry(basis, m, n, medium, opt);
      std::snprintf(buf, sizeof buf, "    {%zu, %zu, %.17g, %.17g},\n", m, n, z.real(), z.imag());
      out << buf;
      std::cerr << m << ' ' << n << '\n';
    }
  out << "};\n\n}  // namespace frozen::plate2x2\n";
}
