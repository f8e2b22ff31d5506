// Deterministic software rasterizer: z-buffered flat-shaded triangle
// rendering, silhouette contour extraction, depth-to-normals, and the
// canonical per-cell render table used for projective lifting.
//
// Rasterization samples pixel centers (i + 0.5, j + 0.5) with the top-left
// fill rule, so shared triangle edges are written exactly once. Depth is
// interpolated perspective-correct via 1/z. No backface culling: faces are
// oriented towards the camera before shading, so closed and open meshes both
// render.
#pragma once

#include "pose6d/image_io.hpp"
#include "pose6d/viewspace.hpp"

namespace pose6d {

struct RenderBuffers {
  ColorImage color;
  Image<double> depth;              // camera z in meters, 0 = background
  Image<uint8_t> mask;              // 1 where the mesh covers the pixel
  Image<Eigen::Vector3f> normals;   // camera-frame face normal per mask pixel
  bool visible = false;             // any pixel written
};

namespace detail {

constexpr double kZNear = 1e-4;

struct ClipVert {
  Vec3 p;  // camera frame
};

// Accept zero edge values only on top (horizontal, interior below) and left
// (descending in image y) edges of a positively oriented triangle.
inline bool edge_accepts_zero(double dx, double dy) {
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

inline void rasterize_triangle(RenderBuffers& rb, const Vec2& p0, const Vec2& p1, const Vec2& p2,
                               double z0, double z1, double z2,
                               const std::array<float, 3>& rgb, const Eigen::Vector3f& normal) {
  Vec2 a = p0, b = p1, c = p2;
  double za = z0, zb = z1, zc = z2;
  double area2 = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  if (area2 == 0.0) return;
  if (area2 < 0.0) {
    std::swap(b, c);
    std::swap(zb, zc);
    area2 = -area2;
  }
  double min_x = std::min({a.x(), b.x(), c.x()}), max_x = std::max({a.x(), b.x(), c.x()});
  double min_y = std::min({a.y(), b.y(), c.y()}), max_y = std::max({a.y(), b.y(), c.y()});
  int x_lo = std::max(0, int(std::floor(min_x - 0.5)));
  int x_hi = std::min(rb.depth.width - 1, int(std::ceil(max_x - 0.5)));
  int y_lo = std::max(0, int(std::floor(min_y - 0.5)));
  int y_hi = std::min(rb.depth.height - 1, int(std::ceil(max_y - 0.5)));
  if (x_lo > x_hi || y_lo > y_hi) return;

  const Vec2 v[3] = {a, b, c};
  double inv_z[3] = {1.0 / za, 1.0 / zb, 1.0 / zc};
  double dx[3], dy[3];
  bool zero_ok[3];
  for (int e = 0; e < 3; ++e) {
    const Vec2& s = v[e];
    const Vec2& t = v[(e + 1) % 3];
    dx[e] = t.x() - s.x();
    dy[e] = t.y() - s.y();
    zero_ok[e] = edge_accepts_zero(dx[e], dy[e]);
  }
  for (int py = y_lo; py <= y_hi; ++py) {
    double cy = py + 0.5;
    for (int px = x_lo; px <= x_hi; ++px) {
      double cx = px + 0.5;
      double e01 = dx[0] * (cy - v[0].y()) - dy[0] * (cx - v[0].x());
      double e12 = dx[1] * (cy - v[1].y()) - dy[1] * (cx - v[1].x());
      double e20 = dx[2] * (cy - v[2].y()) - dy[2] * (cx - v[2].x());
      bool in = (e01 > 0.0 || (e01 == 0.0 && zero_ok[0])) &&
                (e12 > 0.0 || (e12 == 0.0 && zero_ok[1])) &&
                (e20 > 0.0 || (e20 == 0.0 && zero_ok[2]));
      if (!in) continue;
      double w0 = e12 / area2, w1 = e20 / area2, w2 = e01 / area2;
      double izp = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
      if (!(izp > 0.0)) continue;
      double z = 1.0 / izp;
      double& d = rb.depth.at(px, py);
      if (d == 0.0 || z < d) {
        d = z;
        rb.color.at(px, py) = rgb;
        rb.mask.at(px, py) = 1;
        rb.normals.at(px, py) = normal;
        rb.visible = true;
      }
    }
  }
}

}  // namespace detail

inline RenderBuffers render(const TriMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
  validate(cam);
  RenderBuffers rb;
  rb.color = ColorImage(cam.width, cam.height, {0, 0, 0});
  rb.depth = Image<double>(cam.width, cam.height, 0.0);
  rb.mask = Image<uint8_t>(cam.width, cam.height, 0);
  rb.normals = Image<Eigen::Vector3f>(cam.width, cam.height, Eigen::Vector3f::Zero());

  std::vector<Vec3> pc(mesh.vertices.size());
  Mat3 r = pose.rotation();
  bool any_front = false;
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    pc[i] = r * mesh.vertices[i] + pose.t;
    any_front = any_front || pc[i].z() > detail::kZNear;
  }
  if (!any_front) return rb;  // fully behind the camera, flagged via visible=false

  for (const auto& f : mesh.faces) {
    const Vec3& a = pc[f[0]];
    const Vec3& b = pc[f[1]];
    const Vec3& c = pc[f[2]];
    if (a.z() <= detail::kZNear && b.z() <= detail::kZNear && c.z() <= detail::kZNear) continue;

    Vec3 n = (b - a).cross(c - a);
    double nn = n.norm();
    if (nn < 1e-18) continue;
    n /= nn;
    Vec3 centroid = (a + b + c) / 3.0;
    if (n.dot(centroid) > 0.0) n = -n;  // orient towards the camera

    Vec3 base(0.8, 0.8, 0.8);
    if (!mesh.colors.empty())
      base = (mesh.colors[f[0]] + mesh.colors[f[1]] + mesh.colors[f[2]]) / 3.0;
    double intensity = 0.3 + 0.7 * std::abs(n.z());
    std::array<float, 3> rgb;
    for (int k = 0; k < 3; ++k)
      rgb[k] = float(std::clamp(base[k] * intensity, 0.0, 1.0));
    Eigen::Vector3f nf = n.cast<float>();

    // Clip against z = kZNear (Sutherland-Hodgman), then fan-triangulate.
    Vec3 poly[4];
    int np = 0;
    const Vec3* tri[3] = {&a, &b, &c};
    for (int e = 0; e < 3; ++e) {
      const Vec3& p = *tri[e];
      const Vec3& q = *tri[(e + 1) % 3];
      bool pin = p.z() > detail::kZNear, qin = q.z() > detail::kZNear;
      if (pin) poly[np++] = p;
      if (pin != qin) {
        double s = (detail::kZNear - p.z()) / (q.z() - p.z());
        poly[np++] = p + s * (q - p);
      }
    }
    for (int k = 2; k < np; ++k) {
      Vec2 q0 = project(poly[0], cam);
      Vec2 q1 = project(poly[k - 1], cam);
      Vec2 q2 = project(poly[k], cam);
      detail::rasterize_triangle(rb, q0, q1, q2, poly[0].z(), poly[k - 1].z(), poly[k].z(), rgb, nf);
    }
  }
  return rb;
}

// Tight pixel-coverage bounding box of a mask, in continuous pixel
// coordinates (x1/y1 exclusive). Empty mask -> nullopt.
inline std::optional<Box> tight_mask_box(const Image<uint8_t>& mask) {
  int min_x = mask.width, min_y = mask.height, max_x = -1, max_y = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        min_x = std::min(min_x, x);
        min_y = std::min(min_y, y);
        max_x = std::max(max_x, x);
        max_y = std::max(max_y, y);
      }
  if (max_x < 0) return std::nullopt;
  return Box{double(min_x), double(min_y), double(max_x + 1), double(max_y + 1)};
}

struct ContourPoint {
  int x = 0, y = 0;       // pixel
  Vec2 pixel;             // pixel center
  Vec3 model_point;       // back-projected surface point in the model frame
  Vec2 normal;            // outward 2D contour normal (unit)
};

// Silhouette boundary of a rendered mask: mask pixels with a background
// 4-neighbor (image border counts as background). Outward normals come from
// the negated Sobel gradient of the mask; surface points from the depth
// buffer mapped back through the render pose. Row-major order.
inline std::vector<ContourPoint> extract_contour(const RenderBuffers& rb, const Pose& pose,
                                                 const CameraIntrinsics& cam) {
  const Image<uint8_t>& mask = rb.mask;
  std::vector<ContourPoint> out;
  Pose inv = pose.inverse();

  double cx_sum = 0, cy_sum = 0;
  size_t count = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        cx_sum += x + 0.5;
        cy_sum += y + 0.5;
        ++count;
      }
  if (count == 0) return out;
  Vec2 centroid(cx_sum / double(count), cy_sum / double(count));

  auto m = [&](int x, int y) -> double {
    return mask.in_bounds(x, y) ? double(mask.at(x, y)) : 0.0;
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      bool boundary = m(x - 1, y) == 0 || m(x + 1, y) == 0 || m(x, y - 1) == 0 || m(x, y + 1) == 0;
      if (!boundary) continue;
      double gx = (m(x + 1, y - 1) + 2 * m(x + 1, y) + m(x + 1, y + 1)) -
                  (m(x - 1, y - 1) + 2 * m(x - 1, y) + m(x - 1, y + 1));
      double gy = (m(x - 1, y + 1) + 2 * m(x, y + 1) + m(x + 1, y + 1)) -
                  (m(x - 1, y - 1) + 2 * m(x, y - 1) + m(x + 1, y - 1));
      Vec2 n(-gx, -gy);
      if (n.norm() < 1e-12) n = Vec2(x + 0.5, y + 0.5) - centroid;
      if (n.norm() < 1e-12) n = Vec2(1, 0);
      ContourPoint cp;
      cp.x = x;
      cp.y = y;
      cp.pixel = Vec2(x + 0.5, y + 0.5);
      cp.model_point = inv(backproject(cp.pixel, rb.depth.at(x, y), cam));
      cp.normal = n.normalized();
      out.push_back(cp);
    }
  }
  return out;
}

// Per-pixel camera-frame normals from central differences of back-projected
// depth. Pixels lacking valid 4-neighborhood depth get a zero normal.
// Normals are oriented towards the camera (n . p < 0), so a fronto-parallel
// plane yields (0, 0, -1).
inline Image<Eigen::Vector3f> depth_to_normals(const Image<double>& depth,
                                               const CameraIntrinsics& cam) {
  Image<Eigen::Vector3f> out(depth.width, depth.height, Eigen::Vector3f::Zero());
  auto point = [&](int x, int y) {
    return backproject(Vec2(x + 0.5, y + 0.5), depth.at(x, y), cam);
  };
  for (int y = 1; y + 1 < depth.height; ++y) {
    for (int x = 1; x + 1 < depth.width; ++x) {
      if (depth.at(x, y) <= 0 || depth.at(x - 1, y) <= 0 || depth.at(x + 1, y) <= 0 ||
          depth.at(x, y - 1) <= 0 || depth.at(x, y + 1) <= 0)
        continue;
      Vec3 dx = point(x + 1, y) - point(x - 1, y);
      Vec3 dy = point(x, y + 1) - point(x, y - 1);
      Vec3 n = dx.cross(dy);
      double nn = n.norm();
      if (nn < 1e-15) continue;
      n /= nn;
      if (n.dot(point(x, y)) > 0.0) n = -n;
      out.at(x, y) = n.cast<float>();
    }
  }
  return out;
}

// One canonical-render measurement per (view, in-plane) cell: the tight box,
// its diagonal, and the offset from box center to the projected model origin.
struct CanonicalEntry {
  Box box;
  double diag = 0.0;
  Vec2 offset = Vec2::Zero();
};

struct CanonicalTable {
  double canonical_z = 0.5;  // render distance in meters
  CameraIntrinsics cam;
  int n_views = 0;
  int n_inplane = 0;
  std::vector<CanonicalEntry> entries;  // view-major

  const CanonicalEntry& entry(int view_id, int inplane_id) const {
    if (view_id < 0 || view_id >= n_views || inplane_id < 0 || inplane_id >= n_inplane)
      throw std::out_of_range("canonical table cell out of range");
    return entries[size_t(view_id) * n_inplane + inplane_id];
  }
};

// Renders the mesh at every cell of the view space at the canonical distance
// and records box statistics. The mesh must fit well inside the canonical
// sphere (diameter < canonical_z) and must be visible from every cell.
inline CanonicalTable precompute_canonical(const TriMesh& mesh, const ViewSpace& vs,
                                           const CameraIntrinsics& cam, double canonical_z = 0.5,
                                           int threads = 1) {
  validate(cam);
  if (!(canonical_z > 0)) throw ConfigError("canonical distance must be positive");
  if (mesh.diameter >= canonical_z)
    throw ConfigError("mesh diameter too large for the canonical distance");
  CanonicalTable table;
  table.canonical_z = canonical_z;
  table.cam = cam;
  table.n_views = int(vs.views.size());
  table.n_inplane = int(vs.inplane_bins.size());
  table.entries.resize(size_t(table.n_views) * table.n_inplane);

  std::vector<std::string> failures(table.entries.size());
  parallel_for(table.entries.size(), threads, [&](size_t idx) {
    int view_id = int(idx) / table.n_inplane;
    int inplane_id = int(idx) % table.n_inplane;
    Pose pose(view_rotation(vs.views[view_id], vs.inplane_bins[inplane_id]),
              Vec3(0, 0, canonical_z));
    RenderBuffers rb = render(mesh, pose, cam);
    auto box = tight_mask_box(rb.mask);
    if (!box) {
      failures[idx] = "canonical render empty at view " + std::to_string(view_id) +
                      " inplane " + std::to_string(inplane_id);
      return;
    }
    CanonicalEntry e;
    e.box = *box;
    e.diag = box->diagonal();
    Vec2 origin_px = project(pose.t, cam);
    e.offset = origin_px - Vec2(box->center_x(), box->center_y());
    table.entries[idx] = e;
  });
  for (const auto& f : failures)
    if (!f.empty()) throw ConfigError(f);
  return table;
}

inline void to_json(json& j, const CanonicalEntry& e) {
  j = json{{"box", {e.box.x0, e.box.y0, e.box.x1, e.box.y1}},
           {"diag", e.diag},
           {"offset", {e.offset.x(), e.offset.y()}}};
}

inline void from_json(const json& j, CanonicalEntry& e) {
  auto b = j.at("box");
  if (b.size() != 4) throw DataError("canonical entry box must have 4 values");
  e.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  e.diag = j.at("diag").get<double>();
  auto o = j.at("offset");
  if (o.size() != 2) throw DataError("canonical entry offset must have 2 values");
  e.offset = Vec2(o[0].get<double>(), o[1].get<double>());
}

inline void to_json(json& j, const CanonicalTable& t) {
  j = json{{"canonical_z", t.canonical_z},
           {"camera", t.cam},
           {"n_views", t.n_views},
           {"n_inplane", t.n_inplane},
           {"entries", t.entries}};
}

inline void from_json(const json& j, CanonicalTable& t) {
  t.canonical_z = j.at("canonical_z").get<double>();
  t.cam = j.at("camera").get<CameraIntrinsics>();
  t.n_views = j.at("n_views").get<int>();
  t.n_inplane = j.at("n_inplane").get<int>();
  t.entries = j.at("entries").get<std::vector<CanonicalEntry>>();
  if (int(t.entries.size()) != t.n_views * t.n_inplane)
    throw DataError("canonical table entry count mismatch");
}

}  // namespace pose6d
