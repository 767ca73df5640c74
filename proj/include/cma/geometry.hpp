#pragma once

#include "cma/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <utility>
#include <vector>

namespace cma {

using Triangle = std::array<int, 3>;
using EdgeKey = std::pair<int, int>;

inline EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

/// Triangulated conducting surface. Coordinates in meters.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  /// Edges (vertex pairs) a generator marks as natural feed locations.
  std::vector<EdgeKey> feed_candidates;

  [[nodiscard]] std::size_t num_triangles() const noexcept { return triangles.size(); }

  [[nodiscard]] double area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Vec3& a = vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& b = vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& c = vertices[static_cast<std::size_t>(tri[2])];
    return 0.5 * (b - a).cross(c - a).norm();
  }

  [[nodiscard]] double total_area() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) s += area(t);
    return s;
  }

  [[nodiscard]] std::uint64_t hash() const {
    fnv1a h;
    for (const auto& v : vertices) h.update(v.data(), 3 * sizeof(double));
    for (const auto& t : triangles) h.update(t.data(), 3 * sizeof(int));
    return h.digest();
  }
};

/// Center and radius of the sphere centred on the bounding-box midpoint that
/// encloses all vertices. Used as the reference for ka and wave expansions.
struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline BoundingSphere bounding_sphere(const TriMesh& mesh) {
  require(!mesh.vertices.empty(), errc::invalid_argument, "bounding_sphere: empty mesh");
  Vec3 lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  BoundingSphere s;
  s.center = 0.5 * (lo + hi);
  for (const auto& v : mesh.vertices) s.radius = std::max(s.radius, (v - s.center).norm());
  return s;
}

namespace detail {

struct EdgeUse {
  int triangle;
  int from;  // directed traversal from -> to inside the triangle
  int to;
};

inline std::map<EdgeKey, std::vector<EdgeUse>> edge_uses(const TriMesh& mesh) {
  std::map<EdgeKey, std::vector<EdgeUse>> uses;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[static_cast<std::size_t>(e)];
      const int b = tri[static_cast<std::size_t>((e + 1) % 3)];
      uses[edge_key(a, b)].push_back({static_cast<int>(t), a, b});
    }
  }
  return uses;
}

}  // namespace detail

/// Checks index ranges, degeneracy and manifoldness; repairs orientation by
/// breadth-first flood fill from the lowest-index triangle of each connected
/// component. Throws on non-manifold or non-orientable input.
inline TriMesh validate_and_orient(TriMesh mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int v : tri)
      require(v >= 0 && v < nv, errc::parse,
              "triangle " + std::to_string(t) + " references vertex " + std::to_string(v) + " out of range [0," +
                  std::to_string(nv) + ")");
    require(tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2], errc::invalid_argument,
            "triangle " + std::to_string(t) + " repeats a vertex");
    const double scale = std::max({(mesh.vertices[static_cast<std::size_t>(tri[1])] - mesh.vertices[static_cast<std::size_t>(tri[0])]).squaredNorm(),
                                   (mesh.vertices[static_cast<std::size_t>(tri[2])] - mesh.vertices[static_cast<std::size_t>(tri[0])]).squaredNorm(), 1e-300});
    require(mesh.area(t) > 1e-12 * scale, errc::invalid_argument, "triangle " + std::to_string(t) + " is degenerate");
  }

  const auto uses = detail::edge_uses(mesh);
  std::vector<std::vector<std::pair<int, EdgeKey>>> nbrs(mesh.triangles.size());
  for (const auto& [key, u] : uses) {
    require(u.size() <= 2, errc::non_manifold,
            "edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ") is shared by " +
                std::to_string(u.size()) + " triangles");
    if (u.size() == 2) {
      nbrs[static_cast<std::size_t>(u[0].triangle)].emplace_back(u[1].triangle, key);
      nbrs[static_cast<std::size_t>(u[1].triangle)].emplace_back(u[0].triangle, key);
    }
  }

  const auto traverses = [&](int t, const EdgeKey& key) {
    // +1 when triangle t walks the edge first->second
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[static_cast<std::size_t>(e)];
      const int b = tri[static_cast<std::size_t>((e + 1) % 3)];
      if (a == key.first && b == key.second) return 1;
      if (a == key.second && b == key.first) return -1;
    }
    return 0;
  };

  std::vector<int> state(mesh.triangles.size(), 0);  // 0 unvisited, 1 visited
  for (std::size_t seed = 0; seed < mesh.triangles.size(); ++seed) {
    if (state[seed]) continue;
    std::queue<int> q;
    q.push(static_cast<int>(seed));
    state[seed] = 1;
    while (!q.empty()) {
      const int t = q.front();
      q.pop();
      for (const auto& [nb, key] : nbrs[static_cast<std::size_t>(t)]) {
        const bool consistent = traverses(t, key) == -traverses(nb, key);
        if (state[static_cast<std::size_t>(nb)]) {
          require(consistent, errc::orientation,
                  "mesh is not orientable near triangles " + std::to_string(t) + " and " + std::to_string(nb));
          continue;
        }
        if (!consistent) std::swap(mesh.triangles[static_cast<std::size_t>(nb)][1], mesh.triangles[static_cast<std::size_t>(nb)][2]);
        state[static_cast<std::size_t>(nb)] = 1;
        q.push(nb);
      }
    }
  }
  return mesh;
}

/// Rectangular plate in the z = 0 plane centred on the origin, nx x ny cells,
/// each split into two triangles with alternating diagonals (mirror symmetric
/// for even nx, ny).
inline TriMesh generate_plate(double Lx, double Ly, int nx, int ny) {
  require(Lx > 0 && Ly > 0, errc::invalid_argument, "generate_plate: dimensions must be positive");
  require(nx >= 1 && ny >= 1, errc::invalid_argument, "generate_plate: cell counts must be >= 1");
  TriMesh m;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.emplace_back(-0.5 * Lx + Lx * i / nx, -0.5 * Ly + Ly * j / ny, 0.0);
  const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        m.triangles.push_back({a, b, c});
        m.triangles.push_back({a, c, d});
      } else {
        m.triangles.push_back({a, b, d});
        m.triangles.push_back({b, c, d});
      }
    }
  return m;
}

/// Drops unreferenced vertices and renumbers.
inline TriMesh compact(TriMesh m) {
  std::vector<int> remap(m.vertices.size(), -1);
  std::vector<Vec3> verts;
  for (auto& t : m.triangles)
    for (int& v : t) {
      auto& r = remap[static_cast<std::size_t>(v)];
      if (r < 0) {
        r = static_cast<int>(verts.size());
        verts.push_back(m.vertices[static_cast<std::size_t>(v)]);
      }
      v = r;
    }
  std::vector<EdgeKey> feeds;
  for (const auto& [a, b] : m.feed_candidates) {
    const int ra = remap[static_cast<std::size_t>(a)], rb = remap[static_cast<std::size_t>(b)];
    if (ra >= 0 && rb >= 0) feeds.push_back(edge_key(ra, rb));
  }
  m.vertices = std::move(verts);
  m.feed_candidates = std::move(feeds);
  return m;
}

/// Plate with the cells in [i0, i1) x [j0, j1) removed. An off-centre notch
/// removes every point-group symmetry of the plate.
inline TriMesh generate_notched_plate(double Lx, double Ly, int nx, int ny, int i0, int i1, int j0, int j1) {
  auto m = generate_plate(Lx, Ly, nx, ny);
  require(0 <= i0 && i0 < i1 && i1 <= nx && 0 <= j0 && j0 < j1 && j1 <= ny, errc::invalid_argument,
          "generate_notched_plate: notch outside the grid");
  std::vector<Triangle> kept;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const bool cut = i >= i0 && i < i1 && j >= j0 && j < j1;
      const auto cell = static_cast<std::size_t>(2 * (j * nx + i));
      if (!cut) {
        kept.push_back(m.triangles[cell]);
        kept.push_back(m.triangles[cell + 1]);
      }
    }
  m.triangles = std::move(kept);
  return validate_and_orient(compact(std::move(m)));
}

/// Icosahedron subdivided `subdivisions` times with vertices projected onto the
/// sphere of radius a; 20 * 4^s outward-oriented triangles.
inline TriMesh generate_sphere(double a, int subdivisions) {
  require(a > 0, errc::invalid_argument, "generate_sphere: radius must be positive");
  require(subdivisions >= 0, errc::invalid_argument, "generate_sphere: subdivisions must be >= 0");
  const double t = 0.5 * (1.0 + std::sqrt(5.0));
  TriMesh m;
  for (const auto& v : std::vector<Vec3>{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}})
    m.vertices.push_back(v.normalized());
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<EdgeKey, int> mid;
    const auto midpoint = [&](int i, int k) {
      const auto key = edge_key(i, k);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      const Vec3 p = (m.vertices[static_cast<std::size_t>(i)] + m.vertices[static_cast<std::size_t>(k)]).normalized();
      m.vertices.push_back(p);
      const int id = static_cast<int>(m.vertices.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(4 * m.triangles.size());
    for (const auto& tri : m.triangles) {
      const int ab = midpoint(tri[0], tri[1]), bc = midpoint(tri[1], tri[2]), ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v *= a;
  return m;
}

/// Flat strip of length L (along z) and width w (along x) with n cells along
/// its length. The transverse edge at z = 0 is the feed candidate.
inline TriMesh generate_strip_dipole(double L, double w, int n) {
  require(w > 0 && L > w, errc::invalid_argument, "generate_strip_dipole: need L > w > 0");
  require(n >= 2, errc::invalid_argument, "generate_strip_dipole: need n >= 2 segments");
  require(n % 2 == 0, errc::invalid_argument, "generate_strip_dipole: n must be even so a centre edge exists");
  TriMesh m;
  for (int i = 0; i <= n; ++i) {
    const double z = -0.5 * L + L * i / n;
    m.vertices.emplace_back(-0.5 * w, 0.0, z);
    m.vertices.emplace_back(0.5 * w, 0.0, z);
  }
  for (int i = 0; i < n; ++i) {
    const int a = 2 * i, b = 2 * i + 1, c = 2 * i + 3, d = 2 * i + 2;
    if (i % 2 == 0) {
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    } else {
      m.triangles.push_back({a, b, d});
      m.triangles.push_back({b, c, d});
    }
  }
  m.feed_candidates.push_back(edge_key(n, n + 1));
  return m;
}

inline TriMesh translate(TriMesh m, const Vec3& offset) {
  for (auto& v : m.vertices) v += offset;
  return m;
}

/// Disjoint union; triangles of `b` follow those of `a`.
inline TriMesh merge(const TriMesh& a, const TriMesh& b) {
  TriMesh m = a;
  const int off = static_cast<int>(a.vertices.size());
  m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (auto t : b.triangles) {
    for (int& v : t) v += off;
    m.triangles.push_back(t);
  }
  for (const auto& [p, q] : b.feed_candidates) m.feed_candidates.push_back(edge_key(p + off, q + off));
  return m;
}

/// Parses the ASCII mesh format: `NV NT`, NV lines `x y z`, NT lines `i j k`
/// (0-based). Lines starting with '#' are comments.
inline TriMesh load_mesh(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line);
  }
  require(!lines.empty(), errc::parse, "mesh: missing header line `NV NT`");
  std::size_t cursor = 0;
  long nv = -1, nt = -1;
  {
    std::istringstream hs(lines[cursor++]);
    require(static_cast<bool>(hs >> nv >> nt) && nv >= 3 && nt >= 1, errc::parse, "mesh: header must be `NV NT` with NV>=3, NT>=1");
  }
  require(lines.size() >= 1 + static_cast<std::size_t>(nv + nt), errc::parse,
          "mesh: expected " + std::to_string(nv) + " vertex and " + std::to_string(nt) + " triangle lines");
  TriMesh m;
  for (long i = 0; i < nv; ++i) {
    std::istringstream ls(lines[cursor++]);
    double x, y, z;
    require(static_cast<bool>(ls >> x >> y >> z), errc::parse, "mesh: bad vertex line " + std::to_string(i));
    m.vertices.emplace_back(x, y, z);
  }
  for (long i = 0; i < nt; ++i) {
    std::istringstream ls(lines[cursor++]);
    long a, b, c;
    require(static_cast<bool>(ls >> a >> b >> c), errc::parse, "mesh: bad triangle line " + std::to_string(i));
    for (long v : {a, b, c})
      require(v >= 0 && v < nv, errc::parse,
              "mesh: triangle " + std::to_string(i) + " references vertex " + std::to_string(v) + " out of range");
    m.triangles.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
  }
  return validate_and_orient(std::move(m));
}

inline TriMesh load_mesh_string(const std::string& text) {
  std::istringstream in(text);
  return load_mesh(in);
}

inline void write_mesh(std::ostream& out, const TriMesh& m) {
  out.precision(17);
  out << m.vertices.size() << ' ' << m.triangles.size() << '\n';
  for (const auto& v : m.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : m.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

/// One RWG function on an interior edge. The plus triangle walks the edge
/// from `edge.first` to `edge.second`.
struct RwgFunction {
  int tri_plus = -1;
  int tri_minus = -1;
  EdgeKey edge;
  int free_plus = -1;   // vertex of T+ opposite the edge
  int free_minus = -1;  // vertex of T- opposite the edge
  double length = 0.0;
  double area_plus = 0.0;
  double area_minus = 0.0;
};

/// Support of a basis function on one triangle: f = sign * l/(2A) * (r - free).
struct TriangleSupport {
  int basis;
  int sign;
  int free_vertex;
};

struct BasisSet {
  TriMesh mesh;
  std::vector<RwgFunction> functions;
  std::vector<std::vector<TriangleSupport>> by_triangle;

  [[nodiscard]] std::size_t size() const noexcept { return functions.size(); }

  [[nodiscard]] Vec3 vertex(int i) const { return mesh.vertices[static_cast<std::size_t>(i)]; }

  [[nodiscard]] Vec3 edge_midpoint(std::size_t n) const {
    return 0.5 * (vertex(functions[n].edge.first) + vertex(functions[n].edge.second));
  }

  /// f_n evaluated at r, assuming r lies in triangle `t`.
  [[nodiscard]] Vec3 evaluate(std::size_t n, int t, const Vec3& r) const {
    const auto& f = functions[n];
    if (t == f.tri_plus) return f.length / (2.0 * f.area_plus) * (r - vertex(f.free_plus));
    if (t == f.tri_minus) return f.length / (2.0 * f.area_minus) * (vertex(f.free_minus) - r);
    return Vec3::Zero();
  }

  [[nodiscard]] double divergence(std::size_t n, int t) const {
    const auto& f = functions[n];
    if (t == f.tri_plus) return f.length / f.area_plus;
    if (t == f.tri_minus) return -f.length / f.area_minus;
    return 0.0;
  }

  /// Basis index of the interior edge (a, b), if any.
  [[nodiscard]] std::optional<std::size_t> find_edge(int a, int b) const {
    const auto key = edge_key(a, b);
    for (std::size_t n = 0; n < functions.size(); ++n)
      if (functions[n].edge == key) return n;
    return std::nullopt;
  }

  [[nodiscard]] std::uint64_t hash() const { return mesh.hash(); }
};

inline BasisSet build_rwg(const TriMesh& mesh) {
  BasisSet b;
  b.mesh = mesh;
  b.by_triangle.resize(mesh.triangles.size());
  const auto uses = detail::edge_uses(mesh);
  const auto opposite = [&](int t, const EdgeKey& e) {
    for (int v : mesh.triangles[static_cast<std::size_t>(t)])
      if (v != e.first && v != e.second) return v;
    return -1;
  };
  for (const auto& [key, u] : uses) {
    require(u.size() <= 2, errc::non_manifold, "build_rwg: non-manifold edge");
    if (u.size() != 2) continue;
    RwgFunction f;
    f.edge = key;
    const bool first_plus = u[0].from == key.first;
    f.tri_plus = first_plus ? u[0].triangle : u[1].triangle;
    f.tri_minus = first_plus ? u[1].triangle : u[0].triangle;
    f.free_plus = opposite(f.tri_plus, key);
    f.free_minus = opposite(f.tri_minus, key);
    f.length = (mesh.vertices[static_cast<std::size_t>(key.first)] - mesh.vertices[static_cast<std::size_t>(key.second)]).norm();
    f.area_plus = mesh.area(static_cast<std::size_t>(f.tri_plus));
    f.area_minus = mesh.area(static_cast<std::size_t>(f.tri_minus));
    const int n = static_cast<int>(b.functions.size());
    b.by_triangle[static_cast<std::size_t>(f.tri_plus)].push_back({n, +1, f.free_plus});
    b.by_triangle[static_cast<std::size_t>(f.tri_minus)].push_back({n, -1, f.free_minus});
    b.functions.push_back(f);
  }
  require(!b.functions.empty(), errc::empty_basis, "build_rwg: mesh has no interior edges");
  return b;
}

}  // namespace cma
