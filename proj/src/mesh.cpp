#include "skelrig/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "skelrig/error.hpp"

namespace skelrig {

void validate_mesh(const Mesh& mesh) {
  const int n = mesh.vertex_count();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto tri = mesh.faces.row(f);
    for (int c = 0; c < 3; ++c) {
      if (tri[c] < 0 || tri[c] >= n) fail(ErrorCode::TopologyMismatch, fmt::format("face {} index out of range", f));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      fail(ErrorCode::TopologyMismatch, fmt::format("face {} repeats a vertex", f));
    }
  }
}

bool is_closed_manifold(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (int f = 0; f < mesh.face_count(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh.faces(f, c), b = mesh.faces(f, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  if (edges.empty()) return false;
  for (const auto& [e, count] : edges) {
    if (count != 2) return false;
  }
  return true;
}

double enclosed_volume(const Mesh& mesh) {
  validate_mesh(mesh);
  if (!is_closed_manifold(mesh)) fail(ErrorCode::OpenMesh, "volume needs a closed edge-manifold surface");
  double six_v = 0;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    six_v += a.dot(b.cross(c));
  }
  return six_v / 6.0;
}

void write_obj(std::ostream& os, const Mesh& mesh) {
  char buf[128];
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2));
    os << buf;
  }
  for (int f = 0; f < mesh.face_count(); ++f) {
    os << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
  }
}

void write_obj(const std::string& path, const Mesh& mesh) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::IoError, "cannot write " + path);
  write_obj(os, mesh);
  if (!os) fail(ErrorCode::IoError, "write failed for " + path);
}

Mesh read_obj(std::istream& is) {
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p[0] >> p[1] >> p[2])) fail(ErrorCode::FormatError, fmt::format("bad vertex on line {}", lineno));
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // accept "i", "i/t", "i/t/n", "i//n"
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? v - 1 : static_cast<int>(verts.size()) + v);
      }
      if (idx.size() < 3) fail(ErrorCode::FormatError, fmt::format("bad face on line {}", lineno));
      for (size_t k = 1; k + 1 < idx.size(); ++k) faces.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  Mesh m;
  m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i) m.faces.row(static_cast<Eigen::Index>(i)) = faces[i].transpose();
  validate_mesh(m);
  return m;
}

Mesh read_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoError, "cannot read " + path);
  return read_obj(is);
}

}  // namespace skelrig
