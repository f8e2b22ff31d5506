// Parametric meshes for demos and synthetic datasets: a colored box, a UV
// sphere, a rotationally symmetric cone, an asymmetric "house", a spiky
// "star" whose silhouette pins all six pose degrees of freedom, and a bumpy
// "blob" with curvature everywhere for depth-based alignment.
#pragma once

#include "pose6d/geometry.hpp"

namespace pose6d {

namespace detail {

// Appends an axis-aligned box; each face gets its own vertices and color.
inline void append_box(std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces,
                       std::vector<Vec3>& colors, const Vec3& center, const Vec3& size,
                       const std::array<Vec3, 6>& face_colors) {
  const double hx = size.x() / 2, hy = size.y() / 2, hz = size.z() / 2;
  const Vec3 corner[8] = {
      {-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz}, {-hx, hy, -hz},
      {-hx, -hy, hz}, {hx, -hy, hz}, {hx, hy, hz}, {-hx, hy, hz}};
  const int quad[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                          {2, 3, 7, 6}, {0, 4, 7, 3}, {1, 2, 6, 5}};
  for (int f = 0; f < 6; ++f) {
    int base = int(verts.size());
    for (int k = 0; k < 4; ++k) {
      verts.push_back(center + corner[quad[f][k]]);
      colors.push_back(face_colors[f]);
    }
    faces.push_back({base, base + 1, base + 2});
    faces.push_back({base, base + 2, base + 3});
  }
}

}  // namespace detail

inline TriMesh make_box_mesh(double sx, double sy, double sz) {
  std::vector<Vec3> verts, colors;
  std::vector<std::array<int, 3>> faces;
  const std::array<Vec3, 6> palette = {Vec3(0.9, 0.2, 0.2), Vec3(0.2, 0.9, 0.2),
                                       Vec3(0.2, 0.2, 0.9), Vec3(0.9, 0.9, 0.2),
                                       Vec3(0.9, 0.2, 0.9), Vec3(0.2, 0.9, 0.9)};
  detail::append_box(verts, faces, colors, Vec3::Zero(), Vec3(sx, sy, sz), palette);
  return make_mesh(std::move(verts), std::move(faces), std::move(colors));
}

// Sphere centered at the origin; colors shade from bottom to top.
inline TriMesh make_uv_sphere(double radius, int rings = 24, int sectors = 48) {
  if (rings < 3 || sectors < 3) throw ConfigError("sphere needs rings, sectors >= 3");
  std::vector<Vec3> verts, colors;
  std::vector<std::array<int, 3>> faces;
  for (int r = 0; r <= rings; ++r) {
    double phi = M_PI * double(r) / rings;  // 0 at +z pole
    for (int s = 0; s < sectors; ++s) {
      double th = 2.0 * M_PI * double(s) / sectors;
      Vec3 p(std::sin(phi) * std::cos(th), std::sin(phi) * std::sin(th), std::cos(phi));
      verts.push_back(radius * p);
      double tshade = 0.5 + 0.5 * p.z();
      colors.push_back(Vec3(0.3 + 0.5 * tshade, 0.4, 0.9 - 0.5 * tshade));
    }
  }
  auto vid = [&](int r, int s) { return r * sectors + (s % sectors); };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < sectors; ++s) {
      int a = vid(r, s), b = vid(r, s + 1), c = vid(r + 1, s + 1), d = vid(r + 1, s);
      if (r > 0) faces.push_back({a, b, c});
      if (r + 1 < rings) faces.push_back({a, c, d});
    }
  }
  return make_mesh(std::move(verts), std::move(faces), std::move(colors));
}

// Cone with apex on +z and a disk base, rotationally symmetric about z in
// both shape and color (shades by height only).
inline TriMesh make_cone(double radius, double height, int segments = 64) {
  if (segments < 3) throw ConfigError("cone needs >= 3 segments");
  std::vector<Vec3> verts, colors;
  std::vector<std::array<int, 3>> faces;
  const Vec3 apex(0, 0, height / 2), base_center(0, 0, -height / 2);
  const Vec3 apex_color(0.9, 0.7, 0.2), base_color(0.3, 0.3, 0.8);
  verts.push_back(apex);
  colors.push_back(apex_color);
  verts.push_back(base_center);
  colors.push_back(base_color);
  for (int s = 0; s < segments; ++s) {
    double th = 2.0 * M_PI * double(s) / segments;
    verts.push_back(Vec3(radius * std::cos(th), radius * std::sin(th), -height / 2));
    colors.push_back(base_color);
  }
  for (int s = 0; s < segments; ++s) {
    int a = 2 + s, b = 2 + (s + 1) % segments;
    faces.push_back({0, a, b});
    faces.push_back({1, b, a});
  }
  return make_mesh(std::move(verts), std::move(faces), std::move(colors));
}

// Asymmetric object: box body, prism roof along x, chimney off one corner.
// No mirror plane and no rotational symmetry; distinct face colors.
inline TriMesh make_house_mesh(double scale = 1.0) {
  std::vector<Vec3> verts, colors;
  std::vector<std::array<int, 3>> faces;
  detail::append_box(verts, faces, colors, Vec3(0, 0, -0.015), Vec3(0.10, 0.08, 0.05),
                     {Vec3(0.85, 0.3, 0.2), Vec3(0.9, 0.6, 0.3), Vec3(0.3, 0.6, 0.85),
                      Vec3(0.3, 0.85, 0.4), Vec3(0.8, 0.8, 0.25), Vec3(0.6, 0.3, 0.8)});
  // roof prism: ridge along x at z = 0.04
  {
    int b = int(verts.size());
    const Vec3 roof_color(0.55, 0.2, 0.15), cap_color(0.95, 0.9, 0.8);
    const double x0 = -0.05, x1 = 0.05, y0 = -0.04, y1 = 0.04, zb = 0.01, zt = 0.04;
    verts.insert(verts.end(), {Vec3(x0, y0, zb), Vec3(x0, y1, zb), Vec3(x0, 0, zt),
                               Vec3(x1, y0, zb), Vec3(x1, y1, zb), Vec3(x1, 0, zt)});
    colors.insert(colors.end(), {cap_color, cap_color, cap_color, roof_color, roof_color, roof_color});
    faces.insert(faces.end(), {{b, b + 1, b + 2},
                               {b + 3, b + 5, b + 4},
                               {b, b + 2, b + 5}, {b, b + 5, b + 3},
                               {b + 1, b + 4, b + 5}, {b + 1, b + 5, b + 2},
                               {b, b + 3, b + 4}, {b, b + 4, b + 1}});
  }
  detail::append_box(verts, faces, colors, Vec3(0.03, 0.022, 0.045), Vec3(0.016, 0.016, 0.035),
                     {Vec3(0.2, 0.2, 0.2), Vec3(0.35, 0.35, 0.35), Vec3(0.25, 0.25, 0.3),
                      Vec3(0.3, 0.25, 0.25), Vec3(0.25, 0.3, 0.25), Vec3(0.3, 0.3, 0.2)});
  if (scale != 1.0)
    for (auto& v : verts) v *= scale;
  return make_mesh(std::move(verts), std::move(faces), std::move(colors));
}

// Icosahedron of circumradius r0 with a pyramid spike raised over every
// face (apex at spike * r0). The jagged outline gives strong contour
// constraints on rotation from any viewpoint.
inline TriMesh make_star(double r0, double spike = 1.6) {
  if (!(r0 > 0) || !(spike > 1.0)) throw ConfigError("star needs r0 > 0 and spike > 1");
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  const std::array<Vec3, 12> base = {
      Vec3(-1, p, 0), Vec3(1, p, 0), Vec3(-1, -p, 0), Vec3(1, -p, 0),
      Vec3(0, -1, p), Vec3(0, 1, p), Vec3(0, -1, -p), Vec3(0, 1, -p),
      Vec3(p, 0, -1), Vec3(p, 0, 1), Vec3(-p, 0, -1), Vec3(-p, 0, 1)};
  const std::array<std::array<int, 3>, 20> ico = {{{0, 11, 5}, {0, 5, 1}, {0, 1, 7},
                                                   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
                                                   {5, 11, 4}, {11, 10, 2}, {10, 7, 6},
                                                   {7, 1, 8}, {3, 9, 4}, {3, 4, 2},
                                                   {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
                                                   {4, 9, 5}, {2, 4, 11}, {6, 2, 10},
                                                   {8, 6, 7}, {9, 8, 1}}};
  std::vector<Vec3> verts, colors;
  std::vector<std::array<int, 3>> faces;
  for (const Vec3& v : base) {
    verts.push_back(v.normalized() * r0);
    colors.push_back(Vec3(0.85, 0.3, 0.25));
  }
  int fi = 0;
  for (const auto& f : ico) {
    Vec3 c = (verts[f[0]] + verts[f[1]] + verts[f[2]]) / 3.0;
    int apex = int(verts.size());
    verts.push_back(c.normalized() * (r0 * spike));
    colors.push_back((fi % 2) ? Vec3(0.2, 0.5, 0.85) : Vec3(0.9, 0.8, 0.2));
    faces.push_back({f[0], f[1], apex});
    faces.push_back({f[1], f[2], apex});
    faces.push_back({f[2], f[0], apex});
    ++fi;
  }
  return make_mesh(std::move(verts), std::move(faces), std::move(colors));
}

// Sphere of base radius r0 warped by fixed Gaussian bumps. Curved and
// asymmetric everywhere, so depth alignment is well-conditioned in all six
// degrees of freedom (flat or symmetric shapes leave sliding directions).
inline TriMesh make_blob(double r0) {
  TriMesh sph = make_uv_sphere(1.0, 32, 64);
  struct Bump {
    Vec3 dir;
    double amp, sigma;
  };
  const std::array<Bump, 6> bumps = {{{Vec3(1, 0.2, 0.1).normalized(), 0.35, 0.45},
                                      {Vec3(-0.5, 0.8, 0.3).normalized(), -0.25, 0.55},
                                      {Vec3(0.1, -0.9, 0.4).normalized(), 0.30, 0.40},
                                      {Vec3(-0.6, -0.3, -0.7).normalized(), 0.28, 0.50},
                                      {Vec3(0.3, 0.4, -0.85).normalized(), -0.22, 0.60},
                                      {Vec3(0.7, -0.5, 0.5).normalized(), 0.20, 0.35}}};
  std::vector<Vec3> verts = sph.vertices;
  for (auto& v : verts) {
    Vec3 d = v.normalized();
    double r = 1.0;
    for (const auto& b : bumps) {
      double ang = std::acos(std::clamp(d.dot(b.dir), -1.0, 1.0));
      r += b.amp * std::exp(-0.5 * ang * ang / (b.sigma * b.sigma));
    }
    v = d * (r * r0);
  }
  return make_mesh(std::move(verts), std::move(sph.faces), std::move(sph.colors));
}

}  // namespace pose6d
