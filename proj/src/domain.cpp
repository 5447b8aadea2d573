#include "finsler/domain.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

namespace finsler {

// ------------------------------------------------------------- ConvexDomain

ConvexDomain ConvexDomain::polygon(std::vector<Vec2> v) {
  if (v.size() < 3) throw Error(ErrorKind::configuration, "polygon needs at least 3 vertices");
  double a2 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) a2 += cross(v[i], v[(i + 1) % v.size()]);
  if (a2 < 0) std::reverse(v.begin(), v.end());
  if (std::abs(a2) < 1e-14) throw Error(ErrorKind::configuration, "polygon has zero area");
  // Drop collinear vertices, then insist on strict left turns.
  std::vector<Vec2> w;
  const double scale = std::sqrt(std::abs(a2));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[(i + v.size() - 1) % v.size()];
    const Vec2& b = v[i];
    const Vec2& c = v[(i + 1) % v.size()];
    const double t = cross(b - a, c - b);
    if (t < -1e-12 * scale * scale) throw Error(ErrorKind::configuration, "polygon is not convex");
    if (t > 1e-12 * scale * scale) w.push_back(b);
  }
  if (w.size() < 3) throw Error(ErrorKind::configuration, "polygon is degenerate");
  ConvexDomain d;
  d.kind_ = DomainKind::polygon;
  d.vertices_ = std::move(w);
  const std::size_t n = d.vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = d.vertices_[(i + 1) % n] - d.vertices_[i];
    const Vec2 nrm = Vec2(e.y(), -e.x()).normalized();
    d.normals_.push_back(nrm);
    d.offsets_.push_back(nrm.dot(d.vertices_[i]));
  }
  Vec2 c = Vec2::Zero();
  for (const Vec2& x : d.vertices_) c += x;
  d.center_ = c / static_cast<double>(n);
  return d;
}

ConvexDomain ConvexDomain::disc(Vec2 center, double radius) {
  if (!(radius > 0)) throw Error(ErrorKind::configuration, "disc radius must be positive");
  ConvexDomain d;
  d.kind_ = DomainKind::disc;
  d.center_ = center;
  d.radius_ = radius;
  return d;
}

double ConvexDomain::signed_distance(const Vec2& x) const {
  if (kind_ == DomainKind::disc) return radius_ - (x - center_).norm();
  double inside = kInf;
  bool outside = false;
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    const double s = offsets_[i] - normals_[i].dot(x);
    inside = std::min(inside, s);
    if (s < 0) outside = true;
  }
  if (!outside) return inside;
  double best = kInf;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices_[i];
    const Vec2 e = vertices_[(i + 1) % n] - a;
    const double t = std::clamp((x - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (x - a - t * e).norm());
  }
  return -best;
}

Vec2 ConvexDomain::project_to_boundary(const Vec2& x) const {
  if (kind_ == DomainKind::disc) {
    const Vec2 d = x - center_;
    const double r = d.norm();
    return center_ + radius_ * (r > 0 ? Vec2(d / r) : Vec2(1, 0));
  }
  Vec2 best = vertices_[0];
  double bd = kInf;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices_[i];
    const Vec2 e = vertices_[(i + 1) % n] - a;
    const double t = std::clamp((x - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    const Vec2 q = a + t * e;
    if ((x - q).norm() < bd) bd = (x - q).norm(), best = q;
  }
  return best;
}

Vec2 ConvexDomain::inward_normal(const Vec2& b) const {
  if (kind_ == DomainKind::disc) return (center_ - b).normalized();
  std::size_t best = 0;
  double bd = kInf;
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    const double s = std::abs(offsets_[i] - normals_[i].dot(b));
    if (s < bd) bd = s, best = i;
  }
  return -normals_[best];
}

double ConvexDomain::distance_to_vertex(const Vec2& x) const {
  double d = kInf;
  for (const Vec2& v : vertices_) d = std::min(d, (x - v).norm());
  return d;
}

double ConvexDomain::area() const {
  if (kind_ == DomainKind::disc) return kPi * radius_ * radius_;
  double a2 = 0;
  for (std::size_t i = 0; i < vertices_.size(); ++i)
    a2 += cross(vertices_[i], vertices_[(i + 1) % vertices_.size()]);
  return 0.5 * a2;
}

double ConvexDomain::perimeter() const {
  if (kind_ == DomainKind::disc) return 2 * kPi * radius_;
  double p = 0;
  for (std::size_t i = 0; i < vertices_.size(); ++i)
    p += (vertices_[(i + 1) % vertices_.size()] - vertices_[i]).norm();
  return p;
}

double ConvexDomain::diameter() const {
  if (kind_ == DomainKind::disc) return 2 * radius_;
  double d = 0;
  for (const Vec2& a : vertices_)
    for (const Vec2& b : vertices_) d = std::max(d, (a - b).norm());
  return d;
}

namespace {

// Sutherland-Hodgman clip of a convex polygon by n . x <= b.
std::vector<Vec2> clip(const std::vector<Vec2>& poly, const Vec2& n, double b) {
  std::vector<Vec2> out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % m];
    const double sp = b - n.dot(p), sq = b - n.dot(q);
    if (sp >= 0) out.push_back(p);
    if ((sp >= 0) != (sq >= 0)) out.push_back(p + sp / (sp - sq) * (q - p));
  }
  return out;
}

std::vector<Vec2> offset_polygon(const std::vector<Vec2>& v, const std::vector<Vec2>& normals,
                                 const std::vector<double>& offsets, double delta) {
  std::vector<Vec2> poly = v;
  for (std::size_t i = 0; i < normals.size() && !poly.empty(); ++i)
    poly = clip(poly, normals[i], offsets[i] - delta);
  return poly;
}

double poly_area(const std::vector<Vec2>& v) {
  double a2 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) a2 += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * a2;
}

}  // namespace

double ConvexDomain::inradius() const {
  if (kind_ == DomainKind::disc) return radius_;
  // max t subject to n_i . x + t <= b_i; the optimum has three active edges.
  const std::size_t n = normals_.size();
  double best = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        Eigen::Matrix3d A;
        A << normals_[i].x(), normals_[i].y(), 1, normals_[j].x(), normals_[j].y(), 1,
            normals_[k].x(), normals_[k].y(), 1;
        if (std::abs(A.determinant()) < 1e-14) continue;
        const Eigen::Vector3d s = A.partialPivLu().solve(Eigen::Vector3d(offsets_[i], offsets_[j], offsets_[k]));
        bool feasible = true;
        for (std::size_t l = 0; l < n && feasible; ++l)
          feasible = normals_[l].x() * s[0] + normals_[l].y() * s[1] + s[2] <= offsets_[l] + 1e-12;
        if (feasible) best = std::max(best, s[2]);
      }
  return best;
}

std::array<Vec2, 2> ConvexDomain::bbox() const {
  if (kind_ == DomainKind::disc)
    return {center_ - Vec2(radius_, radius_), center_ + Vec2(radius_, radius_)};
  Vec2 lo = vertices_[0], hi = vertices_[0];
  for (const Vec2& x : vertices_) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  return {lo, hi};
}

std::vector<Vec2> ConvexDomain::boundary_samples(int n) const {
  std::vector<Vec2> out;
  if (kind_ == DomainKind::disc) {
    for (int k = 0; k < n; ++k) out.push_back(center_ + radius_ * unit(2 * kPi * k / n));
    return out;
  }
  const double L = perimeter();
  std::size_t e = 0;
  double start = 0;  // arclength at vertices_[e]
  for (int k = 0; k < n; ++k) {
    const double s = L * k / n;
    double len = (vertices_[(e + 1) % vertices_.size()] - vertices_[e]).norm();
    while (s > start + len) {
      start += len;
      ++e;
      len = (vertices_[(e + 1) % vertices_.size()] - vertices_[e]).norm();
    }
    const Vec2 a = vertices_[e], b = vertices_[(e + 1) % vertices_.size()];
    out.push_back(a + (s - start) / len * (b - a));
  }
  return out;
}

std::string ConvexDomain::describe() const {
  std::ostringstream os;
  if (kind_ == DomainKind::disc)
    os << "disc(center=(" << center_.x() << "," << center_.y() << "), radius=" << radius_ << ")";
  else
    os << "polygon(" << vertices_.size() << " vertices, area=" << area() << ")";
  return os.str();
}

ConvexDomain inner_domain(const ConvexDomain& omega, double delta) {
  if (delta < 0) throw Error(ErrorKind::domain, "inner domain needs delta >= 0");
  if (delta == 0) return omega;
  if (delta >= omega.inradius())
    throw Error(ErrorKind::empty_domain, "delta reaches the inradius");
  if (omega.kind() == DomainKind::disc) return ConvexDomain::disc(omega.center(), omega.radius() - delta);
  // Recover the half-planes from the vertices; collapsed edges drop out of
  // the clipped polygon on their own.
  const auto& v = omega.vertices();
  std::vector<Vec2> normals;
  std::vector<double> offsets;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e = v[(i + 1) % v.size()] - v[i];
    const Vec2 n = Vec2(e.y(), -e.x()).normalized();
    normals.push_back(n);
    offsets.push_back(n.dot(v[i]));
  }
  const auto poly = offset_polygon(v, normals, offsets, delta);
  if (poly.size() < 3 || !(poly_area(poly) > 1e-14))
    throw Error(ErrorKind::empty_domain, "inner domain is empty");
  // Clipping can leave near-duplicate vertices where an edge collapses.
  std::vector<Vec2> clean;
  for (const Vec2& x : poly)
    if (clean.empty() || (x - clean.back()).norm() > 1e-12) clean.push_back(x);
  if ((clean.front() - clean.back()).norm() <= 1e-12) clean.pop_back();
  return ConvexDomain::polygon(clean);
}

// --------------------------------------------------------------------- Mesh

double Mesh::tri_area(std::size_t t) const {
  const auto& T = tris[t];
  return 0.5 * cross(nodes[T[1]] - nodes[T[0]], nodes[T[2]] - nodes[T[0]]);
}

double Mesh::total_area() const {
  double a = 0;
  for (std::size_t t = 0; t < tris.size(); ++t) a += tri_area(t);
  return a;
}

double Mesh::max_edge() const {
  double m = 0;
  for (const auto& T : tris)
    for (int k = 0; k < 3; ++k) m = std::max(m, (nodes[T[k]] - nodes[T[(k + 1) % 3]]).norm());
  return m;
}

double Mesh::min_angle_deg() const {
  double m = 180;
  for (const auto& T : tris)
    for (int k = 0; k < 3; ++k) {
      const Vec2 a = nodes[T[(k + 1) % 3]] - nodes[T[k]];
      const Vec2 b = nodes[T[(k + 2) % 3]] - nodes[T[k]];
      m = std::min(m, std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0)) * 180 / kPi);
    }
  return m;
}

std::array<Vec2, 3> Mesh::hat_gradients(std::size_t t) const {
  const auto& T = tris[t];
  const Vec2 &a = nodes[T[0]], &b = nodes[T[1]], &c = nodes[T[2]];
  const double twice = cross(b - a, c - a);
  // grad lambda_i = perp(opposite edge) / (2 |T|), rotated inward.
  return {Vec2(b.y() - c.y(), c.x() - b.x()) / twice, Vec2(c.y() - a.y(), a.x() - c.x()) / twice,
          Vec2(a.y() - b.y(), b.x() - a.x()) / twice};
}

std::vector<std::vector<int>> Mesh::node_neighbours() const {
  std::vector<std::vector<int>> nb(nodes.size());
  for (const auto& T : tris)
    for (int k = 0; k < 3; ++k) {
      nb[T[k]].push_back(T[(k + 1) % 3]);
      nb[T[k]].push_back(T[(k + 2) % 3]);
    }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

// > 0 when d lies strictly inside the circumcircle of the CCW triangle abc.
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const Vec2 ad = a - d, bd = b - d, cd = c - d;
  return ad.squaredNorm() * cross(bd, cd) - bd.squaredNorm() * cross(ad, cd) +
         cd.squaredNorm() * cross(ad, bd);
}

}  // namespace

int delaunay_flip(Mesh& mesh) {
  int flips = 0;
  const double scale = mesh.max_edge();
  const double tol = 1e-10 * std::pow(scale, 4);
  for (int pass = 0; pass < 100; ++pass) {
    std::unordered_map<std::uint64_t, std::array<int, 2>> owner;
    owner.reserve(mesh.tris.size() * 2);
    for (std::size_t t = 0; t < mesh.tris.size(); ++t)
      for (int k = 0; k < 3; ++k) {
        auto [it, fresh] = owner.try_emplace(edge_key(mesh.tris[t][k], mesh.tris[t][(k + 1) % 3]),
                                             std::array<int, 2>{static_cast<int>(t), -1});
        if (!fresh) it->second[1] = static_cast<int>(t);
      }
    std::vector<char> touched(mesh.tris.size(), 0);
    int pass_flips = 0;
    // Deterministic order: sort edge keys.
    std::vector<std::uint64_t> keys;
    keys.reserve(owner.size());
    for (const auto& [k, v] : owner)
      if (v[1] >= 0) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t key : keys) {
      const auto [t1, t2] = owner[key];
      if (touched[t1] || touched[t2]) continue;
      const int a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xffffffffu);
      auto opposite = [&](int t) {
        for (int k = 0; k < 3; ++k)
          if (mesh.tris[t][k] != a && mesh.tris[t][k] != b) return mesh.tris[t][k];
        return -1;
      };
      const int c = opposite(t1), d = opposite(t2);
      // Orient (a, b, c) counter-clockwise.
      int p = a, q = b;
      if (cross(mesh.nodes[q] - mesh.nodes[p], mesh.nodes[c] - mesh.nodes[p]) < 0) std::swap(p, q);
      if (incircle(mesh.nodes[p], mesh.nodes[q], mesh.nodes[c], mesh.nodes[d]) <= tol) continue;
      // New triangles (c, p, d) and (c, d, q); both must stay positive.
      const Tri n1{c, p, d}, n2{c, d, q};
      auto area2 = [&](const Tri& T) {
        return cross(mesh.nodes[T[1]] - mesh.nodes[T[0]], mesh.nodes[T[2]] - mesh.nodes[T[0]]);
      };
      if (area2(n1) <= 0 || area2(n2) <= 0) continue;
      mesh.tris[t1] = n1;
      mesh.tris[t2] = n2;
      touched[t1] = touched[t2] = 1;
      ++pass_flips;
    }
    flips += pass_flips;
    if (pass_flips == 0) break;
  }
  return flips;
}

namespace {

void finish_mesh(Mesh& m, const ConvexDomain& omega) {
  delaunay_flip(m);
  const double tol = 1e-9 * omega.diameter();
  m.boundary.assign(m.nodes.size(), 0);
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
    m.boundary[i] = std::abs(omega.signed_distance(m.nodes[i])) <= tol;
  m.h = m.max_edge();
  for (std::size_t t = 0; t < m.tris.size(); ++t)
    if (!(m.tri_area(t) >= 1e-14))
      throw Error(ErrorKind::meshing, "degenerate triangle " + std::to_string(t));
  const double angle = m.min_angle_deg();
  if (angle < 20.0) {
    std::ostringstream os;
    os << "minimum angle " << angle << " deg below 20 for " << omega.describe();
    throw Error(ErrorKind::meshing, os.str());
  }
}

Mesh disc_mesh(const ConvexDomain& omega, double h) {
  const double R = omega.radius();
  const Vec2 c = omega.center();
  int n = std::max(1, static_cast<int>(std::ceil(1.2 * R / h)));
  for (;; ++n) {
    Mesh m;
    m.nodes.push_back(c);
    std::vector<int> prev{0};
    std::vector<double> prev_ang{0.0};
    for (int k = 1; k <= n; ++k) {
      const int cnt = 6 * k;
      std::vector<int> ring;
      std::vector<double> ang;
      for (int j = 0; j < cnt; ++j) {
        const double th = 2 * kPi * j / cnt;
        ring.push_back(static_cast<int>(m.nodes.size()));
        ang.push_back(th);
        // The outer ring sits exactly on the circle.
        m.nodes.push_back(c + (k == n ? R : R * k / n) * unit(th));
      }
      // Zip the two rings by increasing angle.
      const std::size_t mi = prev.size(), mo = ring.size();
      std::size_t i = 0, j = 0;
      auto next_in = [&](std::size_t i) { return i + 1 < mi ? prev_ang[i + 1] : 2 * kPi; };
      auto next_out = [&](std::size_t j) { return j + 1 < mo ? ang[j + 1] : 2 * kPi; };
      while (i < mi || j < mo) {
        if (k == 1 && j == mo) break;  // the centre is a single node
        const bool adv_in = j >= mo || (i < mi && (k > 1) && next_in(i) < next_out(j));
        if (adv_in) {
          m.tris.push_back({prev[i], ring[j % mo], prev[(i + 1) % mi]});
          ++i;
        } else {
          m.tris.push_back({prev[i % mi], ring[j], ring[(j + 1) % mo]});
          ++j;
        }
      }
      prev = std::move(ring);
      prev_ang = std::move(ang);
    }
    for (auto& T : m.tris)
      if (cross(m.nodes[T[1]] - m.nodes[T[0]], m.nodes[T[2]] - m.nodes[T[0]]) < 0) std::swap(T[1], T[2]);
    delaunay_flip(m);
    if (m.max_edge() <= h) {
      finish_mesh(m, omega);
      return m;
    }
  }
}

Mesh centroid_fan(const ConvexDomain& omega) {
  Mesh m;
  const auto& v = omega.vertices();
  const int n = static_cast<int>(v.size());
  m.nodes = v;
  m.nodes.push_back(omega.center());
  for (int i = 0; i < n; ++i) m.tris.push_back({n, i, (i + 1) % n});
  delaunay_flip(m);
  return m;
}

// Index of the triangle containing x (closed), or -1.
int find_triangle(const Mesh& m, const Vec2& x) {
  for (std::size_t t = 0; t < m.tris.size(); ++t) {
    const auto& T = m.tris[t];
    bool in = true;
    for (int k = 0; k < 3 && in; ++k)
      in = cross(m.nodes[T[(k + 1) % 3]] - m.nodes[T[k]], x - m.nodes[T[k]]) >= -1e-14;
    if (in) return static_cast<int>(t);
  }
  return -1;
}

// Boundary points at spacing ~s and a hexagonal lattice inside, inserted
// into a vertex fan and then flipped to Delaunay.
Mesh lattice_coarse(const ConvexDomain& omega, double s) {
  const auto& v = omega.vertices();
  const int n = static_cast<int>(v.size());
  Mesh m;
  m.nodes = v;
  for (int i = 1; i + 1 < n; ++i) m.tris.push_back({0, i, i + 1});
  auto insert_on_edge = [&](int a, int b, const Vec2& x) {
    // Split the unique triangle holding boundary edge (a, b).
    for (auto& T : m.tris)
      for (int k = 0; k < 3; ++k)
        if (T[k] == a && T[(k + 1) % 3] == b) {
          const int c = T[(k + 2) % 3];
          const int id = static_cast<int>(m.nodes.size());
          m.nodes.push_back(x);
          T = {a, id, c};
          m.tris.push_back({id, b, c});
          return id;
        }
    throw Error(ErrorKind::meshing, "boundary edge not found");
  };
  for (int i = 0; i < n; ++i) {
    const Vec2 A = v[i], B = v[(i + 1) % n];
    const int k = std::max(1, static_cast<int>(std::ceil((B - A).norm() / s)));
    int prev = i;
    for (int j = 1; j < k; ++j) prev = insert_on_edge(prev, (i + 1) % n, A + (static_cast<double>(j) / k) * (B - A));
  }
  const auto [lo, hi] = omega.bbox();
  const double dy = s * std::sqrt(3.0) / 2;
  for (int r = 0; lo.y() + r * dy <= hi.y(); ++r)
    for (int c = 0; lo.x() + (c + 0.5 * (r % 2)) * s <= hi.x(); ++c) {
      const Vec2 x(lo.x() + (c + 0.5 * (r % 2)) * s, lo.y() + r * dy);
      if (omega.signed_distance(x) < 0.45 * s) continue;
      const int t = find_triangle(m, x);
      if (t < 0) continue;
      const Tri T = m.tris[t];
      const int id = static_cast<int>(m.nodes.size());
      m.nodes.push_back(x);
      m.tris[t] = {T[0], T[1], id};
      m.tris.push_back({T[1], T[2], id});
      m.tris.push_back({T[2], T[0], id});
    }
  delaunay_flip(m);
  return m;
}

// Uniform subdivision of every triangle into m^2 similar copies. Nodes on
// shared edges are indexed through the edge, so the result is conforming.
Mesh subdivide(const Mesh& coarse, int m) {
  Mesh out;
  out.nodes = coarse.nodes;
  std::unordered_map<std::uint64_t, int> edge_base;
  auto edge_node = [&](int u, int w, int k) {  // k/m of the way from u to w
    if (u > w) std::swap(u, w), k = m - k;
    auto [it, fresh] = edge_base.try_emplace(edge_key(u, w), static_cast<int>(out.nodes.size()));
    if (fresh)
      for (int j = 1; j < m; ++j)
        out.nodes.push_back(coarse.nodes[u] + (static_cast<double>(j) / m) * (coarse.nodes[w] - coarse.nodes[u]));
    return it->second + k - 1;
  };
  for (const Tri& T : coarse.tris) {
    const Vec2 A = coarse.nodes[T[0]], B = coarse.nodes[T[1]], C = coarse.nodes[T[2]];
    std::map<std::pair<int, int>, int> local;
    auto P = [&](int a, int b) {  // weights a/m on B, b/m on C
      const int c = m - a - b;
      if (a == 0 && b == 0) return T[0];
      if (a == m) return T[1];
      if (b == m) return T[2];
      if (b == 0) return edge_node(T[0], T[1], a);
      if (a == 0) return edge_node(T[0], T[2], b);
      if (c == 0) return edge_node(T[1], T[2], b);
      auto [it, fresh] = local.try_emplace({a, b}, static_cast<int>(out.nodes.size()));
      if (fresh) out.nodes.push_back(A + (static_cast<double>(a) / m) * (B - A) + (static_cast<double>(b) / m) * (C - A));
      return it->second;
    };
    for (int a = 0; a < m; ++a)
      for (int b = 0; a + b < m; ++b) {
        out.tris.push_back({P(a, b), P(a + 1, b), P(a, b + 1)});
        if (a + b + 1 < m) out.tris.push_back({P(a + 1, b), P(a + 1, b + 1), P(a, b + 1)});
      }
  }
  return out;
}

Mesh polygon_mesh(const ConvexDomain& omega, double h) {
  // The coarse mesh does not depend on h, so halving h exactly quadruples
  // the triangle count.
  Mesh coarse = centroid_fan(omega);
  if (coarse.min_angle_deg() < 25.0) {
    double s = omega.inradius();
    for (int attempt = 0; attempt < 3; ++attempt, s *= 0.5) {
      Mesh trial = lattice_coarse(omega, s);
      if (trial.min_angle_deg() > coarse.min_angle_deg()) coarse = std::move(trial);
      if (coarse.min_angle_deg() >= 25.0) break;
    }
  }
  const double L = coarse.max_edge();
  int m = 1;
  while (L / m > h) m *= 2;
  Mesh mesh = subdivide(coarse, m);
  finish_mesh(mesh, omega);
  return mesh;
}

}  // namespace

Mesh triangulate(const ConvexDomain& omega, double h) {
  if (!(h > 0) || !(h < omega.diameter()))
    throw Error(ErrorKind::meshing, "mesh size must lie in (0, diam)");
  return omega.kind() == DomainKind::disc ? disc_mesh(omega, h) : polygon_mesh(omega, h);
}

void write_mesh_csv(const Mesh& mesh, std::ostream& nodes_out, std::ostream& tris_out) {
  nodes_out << "node,x,y,boundary\n" << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    nodes_out << i << ',' << mesh.nodes[i].x() << ',' << mesh.nodes[i].y() << ','
              << static_cast<int>(mesh.boundary[i]) << '\n';
  tris_out << "tri,a,b,c\n";
  for (std::size_t t = 0; t < mesh.tris.size(); ++t)
    tris_out << t << ',' << mesh.tris[t][0] << ',' << mesh.tris[t][1] << ',' << mesh.tris[t][2] << '\n';
}

void write_field_csv(const Mesh& mesh, const std::vector<double>& values, std::ostream& out) {
  out << "node,x,y,value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    out << i << ',' << mesh.nodes[i].x() << ',' << mesh.nodes[i].y() << ',' << values[i] << '\n';
}

// ------------------------------------------------------------------ Locator

Locator::Locator(const Mesh& mesh) : mesh_(&mesh) {
  Vec2 lo = mesh.nodes[0], hi = mesh.nodes[0];
  for (const Vec2& x : mesh.nodes) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  const double w = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.tris.size()) / 2)));
  cell_ = w / side * (1 + 1e-12);
  lo_ = lo;
  nx_ = static_cast<int>((hi.x() - lo.x()) / cell_) + 1;
  ny_ = static_cast<int>((hi.y() - lo.y()) / cell_) + 1;
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
    Vec2 a = mesh.nodes[mesh.tris[t][0]], b = a;
    for (int k = 1; k < 3; ++k) a = a.cwiseMin(mesh.nodes[mesh.tris[t][k]]), b = b.cwiseMax(mesh.nodes[mesh.tris[t][k]]);
    const int i0 = static_cast<int>((a.x() - lo_.x()) / cell_), i1 = static_cast<int>((b.x() - lo_.x()) / cell_);
    const int j0 = static_cast<int>((a.y() - lo_.y()) / cell_), j1 = static_cast<int>((b.y() - lo_.y()) / cell_);
    for (int i = i0; i <= std::min(i1, nx_ - 1); ++i)
      for (int j = j0; j <= std::min(j1, ny_ - 1); ++j) buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<int>(t));
  }
}

std::optional<Location> Locator::locate(const Vec2& x) const {
  const int i = static_cast<int>(std::floor((x.x() - lo_.x()) / cell_));
  const int j = static_cast<int>(std::floor((x.y() - lo_.y()) / cell_));
  if (i < 0 || j < 0 || i >= nx_ || j >= ny_) return std::nullopt;
  const double tol = -1e-12;
  for (int t : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto& T = mesh_->tris[t];
    const Vec2 &a = mesh_->nodes[T[0]], &b = mesh_->nodes[T[1]], &c = mesh_->nodes[T[2]];
    const double d = cross(b - a, c - a);
    const double l1 = cross(c - b, x - b) / d, l2 = cross(a - c, x - c) / d;
    const double l0 = 1 - l1 - l2;
    if (l0 >= tol && l1 >= tol && l2 >= tol) {
      // Barycentric order follows the triangle's vertex order.
      return Location{t, {cross(b - x, c - x) / d, cross(c - x, a - x) / d, cross(a - x, b - x) / d}};
    }
  }
  return std::nullopt;
}

double Locator::interpolate(const std::vector<double>& values, const Vec2& x) const {
  const auto loc = locate(x);
  if (!loc) throw Error(ErrorKind::domain, "point outside the mesh");
  const auto& T = mesh_->tris[loc->tri];
  return loc->bary[0] * values[T[0]] + loc->bary[1] * values[T[1]] + loc->bary[2] * values[T[2]];
}

}  // namespace finsler
