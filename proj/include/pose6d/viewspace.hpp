// Discretized rotation space: icosphere viewpoints crossed with in-plane
// rotation bins, with symmetry-aware filtering and nearest-cell assignment.
#pragma once

#include <map>
#include <utility>

#include "pose6d/geometry.hpp"

namespace pose6d {

enum class SymmetryClass { None, SemiSymmetric, Symmetric };

inline std::string to_string(SymmetryClass s) {
  switch (s) {
    case SymmetryClass::None: return "none";
    case SymmetryClass::SemiSymmetric: return "semi";
    case SymmetryClass::Symmetric: return "symmetric";
  }
  return "none";
}

inline SymmetryClass symmetry_from_string(const std::string& s) {
  if (s == "none") return SymmetryClass::None;
  if (s == "semi") return SymmetryClass::SemiSymmetric;
  if (s == "symmetric") return SymmetryClass::Symmetric;
  throw ConfigError("unknown symmetry class: " + s);
}

struct InplaneRange {
  double min_deg = -45.0;
  double max_deg = 45.0;
  double step_deg = 5.0;
};

struct ViewSpace {
  std::vector<Vec3> views;          // unit vectors, model-frame directions
  std::vector<double> inplane_bins; // degrees, ascending
  SymmetryClass symmetry = SymmetryClass::None;
  int level = 0;
  bool hemisphere = false;
};

// Icosphere by repeated midpoint subdivision of a golden-rectangle
// icosahedron. Midpoints are shared through an edge cache, so vertices are
// unique by construction; vertex order is deterministic (12 base vertices,
// then midpoints in face-traversal order per level).
inline std::vector<Vec3> build_icosphere(int level) {
  if (level < 0 || level > 5) throw ConfigError("icosphere subdivision level must be in [0, 5]");
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
      {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
      {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      int idx = int(verts.size());
      verts.push_back((verts[a] + verts[b]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return verts;
}

// Indices of `views` kept under the symmetry filter. SemiSymmetric keeps the
// y >= 0 half (mirror plane y = 0); Symmetric keeps the quarter meridian arc
// {x = 0, y >= 0, z >= 0} (rotation axis z). Tolerance 1e-6 keeps boundary
// views, so Symmetric is a subset of SemiSymmetric.
inline std::vector<int> symmetry_valid_ids(const std::vector<Vec3>& views, SymmetryClass sym) {
  constexpr double eps = 1e-6;
  std::vector<int> ids;
  ids.reserve(views.size());
  for (int i = 0; i < int(views.size()); ++i) {
    const Vec3& v = views[i];
    bool keep = true;
    if (sym == SymmetryClass::SemiSymmetric) {
      keep = v.y() >= -eps;
    } else if (sym == SymmetryClass::Symmetric) {
      keep = std::abs(v.x()) <= eps && v.y() >= -eps && v.z() >= -eps;
    }
    if (keep) ids.push_back(i);
  }
  return ids;
}

inline std::vector<double> build_inplane_bins(const InplaneRange& range) {
  if (!(range.step_deg > 0)) throw ConfigError("in-plane step must be positive");
  if (!(range.max_deg >= range.min_deg)) throw ConfigError("in-plane range is empty");
  double span = range.max_deg - range.min_deg;
  int n = int(std::lround(span / range.step_deg));
  if (std::abs(range.min_deg + n * range.step_deg - range.max_deg) > 1e-9)
    throw ConfigError("in-plane step must divide the range");
  std::vector<double> bins(n + 1);
  for (int k = 0; k <= n; ++k) bins[k] = range.min_deg + k * range.step_deg;
  return bins;
}

inline ViewSpace build_viewspace(int level, bool hemisphere_only, SymmetryClass symmetry,
                                 const InplaneRange& range) {
  ViewSpace vs;
  vs.level = level;
  vs.hemisphere = hemisphere_only;
  vs.symmetry = symmetry;
  vs.inplane_bins = build_inplane_bins(range);
  std::vector<Vec3> all = build_icosphere(level);
  std::vector<Vec3> kept;
  for (const Vec3& v : all)
    if (!hemisphere_only || v.z() >= -1e-6) kept.push_back(v);
  for (int id : symmetry_valid_ids(kept, symmetry)) vs.views.push_back(kept[id]);
  if (vs.views.empty()) throw ConfigError("view space is empty after filtering");
  return vs;
}

// Rotation taking model frame to camera frame for a viewpoint and in-plane
// angle: the camera looks along `view`, its y-axis is the projection of the
// model +z axis onto the view plane (+y fallback at poles, so view (0,0,1)
// with angle 0 is the identity), then rolls by `inplane_deg` about the
// optical axis.
inline Quat view_rotation(const Vec3& view, double inplane_deg) {
  double n = view.norm();
  if (n < 1e-9) throw std::domain_error("view_rotation: zero view vector");
  Vec3 zc = view / n;
  Vec3 u = Vec3::UnitZ() - zc.z() * zc;
  Vec3 yc = u.norm() < 1e-9 ? Vec3::UnitY() : Vec3(u.normalized());
  Vec3 xc = yc.cross(zc);
  Mat3 r0;
  r0.row(0) = xc;
  r0.row(1) = yc;
  r0.row(2) = zc;
  double th = inplane_deg * M_PI / 180.0;
  Mat3 rz;
  rz << std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1;
  return canonical_quat(Quat(Mat3(rz * r0)));
}

struct ViewInplaneId {
  int view_id = -1;
  int inplane_id = -1;
};

namespace detail {

inline double wrap_deg(double a) {
  a = std::fmod(a, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

// Nearest cell among `views` (subset given by candidate ids mapping to
// positions in `views`). Distance is the angle between viewing directions;
// Symmetric quotients out azimuth, SemiSymmetric maps y < 0 rotations to the
// mirrored equivalent first. Ties resolve to the lowest candidate index.
inline ViewInplaneId assign_cell(const Quat& q, const std::vector<Vec3>& views,
                                 const std::vector<int>& candidates,
                                 const std::vector<double>& bins, SymmetryClass sym) {
  if (candidates.empty() || bins.empty()) throw std::domain_error("assign: empty view space");
  Mat3 r = q.toRotationMatrix();
  if (sym == SymmetryClass::SemiSymmetric) {
    Vec3 v = r.transpose() * Vec3::UnitZ();
    if (v.y() < 0.0) {
      Mat3 sigma = Vec3(1, -1, 1).asDiagonal();
      r = sigma * r * sigma;
    }
  }
  Vec3 v = r.transpose() * Vec3::UnitZ();

  int best = -1;
  double best_angle = std::numeric_limits<double>::infinity();
  for (int k = 0; k < int(candidates.size()); ++k) {
    const Vec3& w = views[candidates[k]];
    double c;
    if (sym == SymmetryClass::Symmetric)
      c = w.z() * v.z() + std::hypot(w.x(), w.y()) * std::hypot(v.x(), v.y());
    else
      c = w.dot(v);
    double angle = std::acos(std::clamp(c, -1.0, 1.0));
    if (angle < best_angle) {
      best_angle = angle;
      best = k;
    }
  }
  const Vec3& w = views[candidates[best]];

  Mat3 r_eq = r;
  if (sym == SymmetryClass::Symmetric) {
    // Align the query's azimuth with the cell view's before measuring roll,
    // so the roll is invariant to spin about the symmetry axis. A pole cell
    // view has azimuth atan2(0, 0) == 0. A query exactly at the pole has no
    // azimuth; its roll is appearance-ambiguous and measured directly.
    if (std::hypot(v.x(), v.y()) > 1e-9) {
      double delta = std::atan2(v.y(), v.x()) - std::atan2(w.y(), w.x());
      Mat3 rz;
      rz << std::cos(delta), -std::sin(delta), 0, std::sin(delta), std::cos(delta), 0, 0, 0, 1;
      r_eq = r * rz;
    }
  }
  Mat3 m = r_eq * view_rotation(w, 0.0).toRotationMatrix().transpose();
  double roll = std::atan2(m(1, 0) - m(0, 1), m(0, 0) + m(1, 1)) * 180.0 / M_PI;

  int best_bin = 0;
  double best_diff = std::numeric_limits<double>::infinity();
  for (int b = 0; b < int(bins.size()); ++b) {
    double d = std::abs(wrap_deg(roll - bins[b]));
    if (d < best_diff) {
      best_diff = d;
      best_bin = b;
    }
  }
  return {best, best_bin};
}

}  // namespace detail

// Nearest (view, in-plane) cell of `vs` for a rotation, honoring the space's
// symmetry class. Returned ids index vs.views / vs.inplane_bins.
inline ViewInplaneId assign_view_inplane(const Quat& q, const ViewSpace& vs) {
  std::vector<int> all(vs.views.size());
  for (int i = 0; i < int(all.size()); ++i) all[i] = i;
  return detail::assign_cell(q, vs.views, all, vs.inplane_bins, vs.symmetry);
}

// Same, but restricted to a subset of a base space's views (ids into
// base.views); returns base-space ids. Used when several objects with
// different symmetries share one score layout.
inline ViewInplaneId assign_view_inplane_subset(const Quat& q, const ViewSpace& base,
                                                const std::vector<int>& valid_ids,
                                                SymmetryClass sym) {
  ViewInplaneId local = detail::assign_cell(q, base.views, valid_ids, base.inplane_bins, sym);
  return {valid_ids[local.view_id], local.inplane_id};
}

inline void to_json(json& j, const ViewSpace& vs) {
  json views = json::array();
  for (const Vec3& v : vs.views) views.push_back({v.x(), v.y(), v.z()});
  j = json{{"level", vs.level},
           {"hemisphere", vs.hemisphere},
           {"symmetry", to_string(vs.symmetry)},
           {"views", std::move(views)},
           {"inplane_bins", vs.inplane_bins}};
}

inline void from_json(const json& j, ViewSpace& vs) {
  vs.level = j.at("level").get<int>();
  vs.hemisphere = j.at("hemisphere").get<bool>();
  vs.symmetry = symmetry_from_string(j.at("symmetry").get<std::string>());
  vs.views.clear();
  for (const auto& e : j.at("views")) {
    if (e.size() != 3) throw DataError("view space JSON: views must be 3-vectors");
    vs.views.emplace_back(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
  }
  vs.inplane_bins = j.at("inplane_bins").get<std::vector<double>>();
  if (vs.views.empty() || vs.inplane_bins.empty())
    throw DataError("view space JSON: empty views or bins");
}

}  // namespace pose6d
