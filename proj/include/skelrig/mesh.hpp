#pragma once

#include <iosfwd>
#include <string>

#include "skelrig/rigmath.hpp"

namespace skelrig {

using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Mesh {
  Points vertices;
  Faces faces;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
};

/// Throws TopologyMismatch for out-of-range indices or degenerate faces.
void validate_mesh(const Mesh& mesh);

/// True when every undirected edge is shared by exactly two faces.
bool is_closed_manifold(const Mesh& mesh);

/// Signed volume from tetrahedra against the origin. Throws OpenMesh when the
/// surface is not closed.
double enclosed_volume(const Mesh& mesh);

void write_obj(std::ostream& os, const Mesh& mesh);
void write_obj(const std::string& path, const Mesh& mesh);
Mesh read_obj(std::istream& is);
Mesh read_obj(const std::string& path);

}  // namespace skelrig
