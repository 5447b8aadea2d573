#pragma once

#include "finsler/common.hpp"

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace finsler {

enum class DomainKind { polygon, disc };

/// Bounded convex planar region.
class ConvexDomain {
 public:
  /// Vertices counter-clockwise; clockwise input is reversed. Collinear
  /// vertices are dropped.
  static ConvexDomain polygon(std::vector<Vec2> vertices);
  static ConvexDomain disc(Vec2 center, double radius);

  DomainKind kind() const { return kind_; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const Vec2& center() const { return center_; }
  double radius() const { return radius_; }

  /// Positive inside, negative outside, exact for both kinds.
  double signed_distance(const Vec2& x) const;
  bool contains(const Vec2& x, double tol = 0.0) const { return signed_distance(x) >= -tol; }
  /// Closest boundary point and the inward unit normal there.
  Vec2 project_to_boundary(const Vec2& x) const;
  Vec2 inward_normal(const Vec2& boundary_point) const;
  /// Distance from x to the nearest polygon vertex (inf for discs).
  double distance_to_vertex(const Vec2& x) const;

  double area() const;
  double perimeter() const;
  double diameter() const;
  double inradius() const;
  std::array<Vec2, 2> bbox() const;  // lower-left, upper-right
  /// n points on the boundary, equally spaced in arclength.
  std::vector<Vec2> boundary_samples(int n) const;
  std::string describe() const;

 private:
  ConvexDomain() = default;

  DomainKind kind_ = DomainKind::disc;
  std::vector<Vec2> vertices_;
  std::vector<Vec2> normals_;  // outward unit normals
  std::vector<double> offsets_;  // n_i . x <= offsets_i inside
  Vec2 center_ = Vec2::Zero();
  double radius_ = 1.0;
};

/// {x in Omega : dist(x, boundary) > delta}; throws empty_domain when delta
/// reaches the inradius.
ConvexDomain inner_domain(const ConvexDomain& omega, double delta);

using Tri = std::array<int, 3>;

struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<Tri> tris;
  std::vector<char> boundary;
  double h = 0;  // longest edge

  std::size_t n_nodes() const { return nodes.size(); }
  std::size_t n_tris() const { return tris.size(); }
  double tri_area(std::size_t t) const;
  double total_area() const;
  double max_edge() const;
  double min_angle_deg() const;
  /// Gradients of the three hat functions on triangle t (constant).
  std::array<Vec2, 3> hat_gradients(std::size_t t) const;
  /// Node-to-node adjacency (sorted, no self).
  std::vector<std::vector<int>> node_neighbours() const;
};

/// Quasi-uniform triangulation with longest edge <= h and minimum angle >=
/// 20 degrees. Deterministic.
Mesh triangulate(const ConvexDomain& omega, double h);

/// Lawson flips to a Delaunay triangulation; returns the number of flips.
int delaunay_flip(Mesh& mesh);

void write_mesh_csv(const Mesh& mesh, std::ostream& nodes_out, std::ostream& tris_out);
/// Rows node-id,x,y,value.
void write_field_csv(const Mesh& mesh, const std::vector<double>& values, std::ostream& out);

struct Location {
  int tri = -1;
  std::array<double, 3> bary{};
};

/// Uniform bucket grid over the triangles for point location and P1
/// interpolation.
class Locator {
 public:
  explicit Locator(const Mesh& mesh);
  std::optional<Location> locate(const Vec2& x) const;
  /// Throws domain error outside the mesh.
  double interpolate(const std::vector<double>& values, const Vec2& x) const;

 private:
  const Mesh* mesh_;
  Vec2 lo_;
  double cell_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace finsler
