// Rigid-body poses, pinhole camera model, triangle meshes and their I/O.
//
// Camera frame: +z forward (points with z > 0 are in front), +x right,
// +y down, matching the image convention in common.hpp. Translations are in
// meters.
#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "pose6d/common.hpp"

namespace pose6d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

using json = nlohmann::json;

// Unit quaternion with w >= 0; when w == 0 the first nonzero imaginary
// component is made positive. Gives every rotation a unique representation.
inline Quat canonical_quat(const Quat& q) {
  Quat r = q.normalized();
  bool flip = r.w() < 0.0;
  if (r.w() == 0.0) {
    if (r.x() != 0.0)
      flip = r.x() < 0.0;
    else if (r.y() != 0.0)
      flip = r.y() < 0.0;
    else
      flip = r.z() < 0.0;
  }
  if (flip) r.coeffs() = -r.coeffs();
  return r;
}

struct Pose {
  Quat q = Quat::Identity();
  Vec3 t = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q_in, const Vec3& t_in) : q(canonical_quat(q_in)), t(t_in) {}

  static Pose identity() { return Pose(); }

  static Pose from_rotation(const Mat3& r, const Vec3& t_in) {
    return Pose(Quat(r), t_in);
  }

  Mat3 rotation() const { return q.toRotationMatrix(); }

  Vec3 operator()(const Vec3& p) const { return q * p + t; }

  Pose operator*(const Pose& other) const {
    return Pose(q * other.q, q * other.t + t);
  }

  Pose inverse() const {
    Quat qi = q.conjugate();
    return Pose(qi, -(qi * t));
  }
};

inline Vec3 transform(const Pose& pose, const Vec3& p) { return pose(p); }

// Geodesic rotation distance in radians.
inline double rotation_angle(const Quat& a, const Quat& b) {
  double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

// Rotation magnitude in radians.
inline double rotation_angle(const Quat& q) { return rotation_angle(q, Quat::Identity()); }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Rodrigues' formula.
inline Mat3 so3_exp(const Vec3& w) {
  double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

inline void validate(const CameraIntrinsics& cam) {
  if (!(cam.fx > 0) || !(cam.fy > 0)) throw ConfigError("camera focal lengths must be positive");
  if (cam.width <= 0 || cam.height <= 0) throw ConfigError("camera image size must be positive");
}

// Pinhole projection of a camera-frame point; requires z > 0.
inline Vec2 project(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z() > 0.0)) throw std::domain_error("project: point not in front of camera");
  return Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
}

// Inverse of project at the given depth (camera z, meters); requires depth > 0.
inline Vec3 backproject(const Vec2& px, double depth, const CameraIntrinsics& cam) {
  if (!(depth > 0.0)) throw std::domain_error("backproject: depth must be positive");
  return Vec3((px.x() - cam.cx) * depth / cam.fx, (px.y() - cam.cy) * depth / cam.fy, depth);
}

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> colors;  // per vertex, RGB in [0,1]; empty = untextured
  double diameter = 0.0;     // max pairwise vertex distance
};

inline double mesh_diameter(const std::vector<Vec3>& vertices) {
  double best = 0.0;
  for (size_t i = 0; i < vertices.size(); ++i)
    for (size_t j = i + 1; j < vertices.size(); ++j)
      best = std::max(best, (vertices[i] - vertices[j]).squaredNorm());
  return std::sqrt(best);
}

inline TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces,
                         std::vector<Vec3> colors = {}) {
  if (vertices.size() < 3 || faces.empty()) throw DataError("mesh needs >= 3 vertices and >= 1 face");
  if (!colors.empty() && colors.size() != vertices.size())
    throw DataError("mesh colors must be per-vertex");
  int n = int(vertices.size());
  for (const auto& f : faces)
    for (int idx : f)
      if (idx < 0 || idx >= n) throw DataError("mesh face index out of range");
  TriMesh m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  m.colors = std::move(colors);
  m.diameter = mesh_diameter(m.vertices);
  return m;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// ASCII PLY with float/double x,y,z vertex properties, optional uchar
// red/green/blue, and triangular (or fan-triangulated) faces.
inline TriMesh load_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open PLY file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw DataError("not a PLY file: " + path);

  struct Prop {
    std::string name;
    bool is_list = false;
  };
  size_t n_vertices = 0, n_faces = 0;
  std::vector<Prop> vertex_props;
  bool ascii = false;
  std::string current_element;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string f;
      ls >> f;
      ascii = (f == "ascii");
    } else if (tok == "element") {
      std::string name;
      size_t count;
      ls >> name >> count;
      current_element = name;
      if (name == "vertex") n_vertices = count;
      if (name == "face") n_faces = count;
    } else if (tok == "property") {
      if (current_element == "vertex") {
        std::string type, name;
        ls >> type;
        Prop p;
        p.is_list = (type == "list");
        if (p.is_list) {
          std::string t2, t3;
          ls >> t2 >> t3;
        }
        ls >> name;
        p.name = name;
        vertex_props.push_back(p);
      }
    } else if (tok == "end_header") {
      break;
    } else if (tok == "comment" || tok == "obj_info" || tok.empty()) {
      continue;
    }
  }
  if (!ascii) throw DataError("only ASCII PLY is supported: " + path);
  if (n_vertices == 0 || n_faces == 0) throw DataError("PLY missing vertex or face elements: " + path);

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (size_t i = 0; i < vertex_props.size(); ++i) {
    const std::string& n = vertex_props[i].name;
    if (n == "x") ix = int(i);
    if (n == "y") iy = int(i);
    if (n == "z") iz = int(i);
    if (n == "red") ir = int(i);
    if (n == "green") ig = int(i);
    if (n == "blue") ib = int(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw DataError("PLY vertex element lacks x/y/z: " + path);
  bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

  std::vector<Vec3> vertices(n_vertices);
  std::vector<Vec3> colors;
  if (has_color) colors.resize(n_vertices);
  std::vector<double> vals(vertex_props.size());
  for (size_t v = 0; v < n_vertices; ++v) {
    for (size_t p = 0; p < vertex_props.size(); ++p)
      if (!(in >> vals[p])) throw DataError("PLY truncated in vertex data: " + path);
    vertices[v] = Vec3(vals[ix], vals[iy], vals[iz]);
    if (has_color) colors[v] = Vec3(vals[ir] / 255.0, vals[ig] / 255.0, vals[ib] / 255.0);
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(n_faces);
  for (size_t f = 0; f < n_faces; ++f) {
    int count;
    if (!(in >> count)) throw DataError("PLY truncated in face data: " + path);
    if (count < 3) throw DataError("PLY face with fewer than 3 indices: " + path);
    std::vector<int> idx(count);
    for (int k = 0; k < count; ++k)
      if (!(in >> idx[k])) throw DataError("PLY truncated in face data: " + path);
    for (int k = 2; k < count; ++k) faces.push_back({idx[0], idx[k - 1], idx[k]});
  }
  return make_mesh(std::move(vertices), std::move(faces), std::move(colors));
}

inline void save_ply(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write PLY file: " + path);
  bool has_color = !mesh.colors.empty();
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (has_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    out << detail::fmt_double(v.x()) << ' ' << detail::fmt_double(v.y()) << ' '
        << detail::fmt_double(v.z());
    if (has_color) {
      const Vec3& c = mesh.colors[i];
      for (int k = 0; k < 3; ++k)
        out << ' ' << std::clamp(int(std::lround(c[k] * 255.0)), 0, 255);
    }
    out << '\n';
  }
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw DataError("failed writing PLY file: " + path);
}

inline void to_json(json& j, const Pose& p) {
  j = json{{"q", {p.q.w(), p.q.x(), p.q.y(), p.q.z()}}, {"t", {p.t.x(), p.t.y(), p.t.z()}}};
}

inline void from_json(const json& j, Pose& p) {
  auto q = j.at("q");
  auto t = j.at("t");
  if (q.size() != 4 || t.size() != 3) throw DataError("pose JSON needs q[4] and t[3]");
  p = Pose(Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()),
           Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
}

inline void to_json(json& j, const CameraIntrinsics& c) {
  j = json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
           {"width", c.width}, {"height", c.height}};
}

inline void from_json(const json& j, CameraIntrinsics& c) {
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  validate(c);
}

inline void to_json(json& j, const Box& b) {
  j = json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

inline void from_json(const json& j, Box& b) {
  b.x0 = j.at("x0").get<double>();
  b.y0 = j.at("y0").get<double>();
  b.x1 = j.at("x1").get<double>();
  b.y1 = j.at("y1").get<double>();
}

}  // namespace pose6d
