// Pose refinement and verification. 2D: iteratively reweighted least squares
// aligning the rendered silhouette to scene edges under a Geman-McLure
// robust cost. 3D: occlusion-aware projective point-to-plane ICP against a
// scene depth map. Verification scores are mean absolute normal agreements.
#pragma once

#include "pose6d/raster.hpp"

namespace pose6d {

struct RefineConfig {
  int rounds = 5;                 // outer rounds (re-render + re-associate)
  int max_inner_iters = 10;       // IRLS Gauss-Newton steps per round
  double search_radius_px = 20;   // edge correspondence search along the normal
  double search_step_px = 1;
  double gm_scale_px = 5;         // Geman-McLure scale
  double depth_gate_m = 0.02;     // ICP: reject pairs with larger depth gap
  double normal_gate_deg = 45;    // ICP: reject pairs with larger normal angle
  int min_correspondences = 6;
};

struct RefineResult {
  Pose pose;
  bool applied = false;       // at least one accepted update
  int correspondences = 0;    // in the final round
  double residual = 0;        // mean |residual| over the final correspondences
  std::vector<double> trace;  // objective/residual after each accepted step
};

struct EdgeMap {
  int width = 0, height = 0;
  std::vector<uint8_t> is_edge;
  std::vector<Eigen::Vector2f> orientation;  // unit gradient direction at edges
  std::vector<float> magnitude;

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool edge_at(int x, int y) const { return is_edge[size_t(y) * width + x] != 0; }
  const Eigen::Vector2f& orient_at(int x, int y) const {
    return orientation[size_t(y) * width + x];
  }
};

// Sobel edges of the mean-channel image. A pixel is an edge when its
// gradient magnitude exceeds the mean plus one standard deviation of all
// nonzero magnitudes. A constant image has no edges.
inline EdgeMap scene_edges(const ColorImage& img) {
  EdgeMap em;
  em.width = img.width;
  em.height = img.height;
  size_t n = size_t(img.width) * img.height;
  em.is_edge.assign(n, 0);
  em.orientation.assign(n, Eigen::Vector2f::Zero());
  em.magnitude.assign(n, 0.0f);
  if (img.width < 3 || img.height < 3) return em;

  std::vector<float> gray(n);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto& c = img.at(x, y);
      gray[size_t(y) * img.width + x] = (c[0] + c[1] + c[2]) / 3.0f;
    }
  auto g = [&](int x, int y) { return gray[size_t(y) * img.width + x]; };
  double sum = 0.0, sum2 = 0.0;
  size_t nonzero = 0;
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      float gx = (g(x + 1, y - 1) + 2 * g(x + 1, y) + g(x + 1, y + 1)) -
                 (g(x - 1, y - 1) + 2 * g(x - 1, y) + g(x - 1, y + 1));
      float gy = (g(x - 1, y + 1) + 2 * g(x, y + 1) + g(x + 1, y + 1)) -
                 (g(x - 1, y - 1) + 2 * g(x, y - 1) + g(x + 1, y - 1));
      float mag = std::hypot(gx, gy);
      size_t idx = size_t(y) * img.width + x;
      em.magnitude[idx] = mag;
      if (mag > 0) {
        em.orientation[idx] = Eigen::Vector2f(gx / mag, gy / mag);
        sum += mag;
        sum2 += double(mag) * mag;
        ++nonzero;
      }
    }
  }
  if (nonzero == 0) return em;
  double mean = sum / double(nonzero);
  double sigma = std::sqrt(std::max(0.0, sum2 / double(nonzero) - mean * mean));
  // >= so an ideal step edge (all nonzero magnitudes equal, sigma = 0) still
  // yields its edge column instead of an empty mask.
  float thresh = float(mean + sigma);
  for (size_t i = 0; i < n; ++i)
    em.is_edge[i] = (em.magnitude[i] > 0 && em.magnitude[i] >= thresh) ? 1 : 0;
  return em;
}

namespace detail {

// d(projection)/d(camera point) at p.
inline Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p, const CameraIntrinsics& cam) {
  Eigen::Matrix<double, 2, 3> j;
  double iz = 1.0 / p.z();
  j << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

// Left-multiplicative camera-frame twist update [v; w]:
// R <- exp(w) R, t <- exp(w) t + v.
inline Pose apply_twist(const Pose& pose, const Eigen::Matrix<double, 6, 1>& xi) {
  Mat3 rw = so3_exp(xi.tail<3>());
  return Pose(Quat(rw * pose.rotation()), rw * pose.t + xi.head<3>());
}

inline double geman_mcclure(double r, double gm) {
  double r2 = r * r, g2 = gm * gm;
  return g2 * r2 / (g2 + r2);
}

}  // namespace detail

// Aligns the rendered silhouette with scene edges. Each round re-renders and
// searches for the nearest edge pixel along the contour normal, then runs
// IRLS Gauss-Newton on the reprojection residuals with Geman-McLure weights.
// Steps that would increase the robust objective are halved (3 times) and
// the round stops if none is accepted. `trace` holds the objective after
// every accepted step; it never increases within a round.
inline RefineResult refine_edges(const Pose& init, const TriMesh& mesh, const EdgeMap& edges,
                                 const CameraIntrinsics& cam, const RefineConfig& cfg = {}) {
  validate(cam);
  if (cfg.rounds < 1 || cfg.max_inner_iters < 1 || !(cfg.search_radius_px > 0) ||
      !(cfg.search_step_px > 0) || !(cfg.gm_scale_px > 0))
    throw ConfigError("refine_edges: bad configuration");
  if (edges.width != cam.width || edges.height != cam.height)
    throw std::invalid_argument("refine_edges: edge map size does not match the camera");

  RefineResult res;
  res.pose = init;
  const double gm = cfg.gm_scale_px;

  for (int round = 0; round < cfg.rounds; ++round) {
    RenderBuffers rb = render(mesh, res.pose, cam);
    if (!rb.visible) break;
    std::vector<ContourPoint> contour = extract_contour(rb, res.pose, cam);

    // model point -> matched edge pixel center
    std::vector<Vec3> pts;
    std::vector<Vec2> targets;
    for (const ContourPoint& cp : contour) {
      bool found = false;
      Vec2 hit;
      int steps = int(cfg.search_radius_px / cfg.search_step_px);
      for (int s = 0; s <= steps && !found; ++s) {
        for (int sign = 0; sign < (s == 0 ? 1 : 2) && !found; ++sign) {
          Vec2 q = cp.pixel + (sign == 0 ? 1.0 : -1.0) * s * cfg.search_step_px * cp.normal;
          int qx = int(std::floor(q.x())), qy = int(std::floor(q.y()));
          if (edges.in_bounds(qx, qy) && edges.edge_at(qx, qy)) {
            hit = Vec2(qx + 0.5, qy + 0.5);
            found = true;
          }
        }
      }
      if (found) {
        pts.push_back(cp.model_point);
        targets.push_back(hit);
      }
    }
    res.correspondences = int(pts.size());
    if (int(pts.size()) < cfg.min_correspondences) break;

    auto objective = [&](const Pose& pose, double& mean_abs) {
      double phi = 0.0, asum = 0.0;
      Mat3 r = pose.rotation();
      for (size_t i = 0; i < pts.size(); ++i) {
        Vec3 p = r * pts[i] + pose.t;
        double rn = p.z() > detail::kZNear ? (project(p, cam) - targets[i]).norm()
                                           : cfg.search_radius_px;  // behind camera: saturate
        phi += detail::geman_mcclure(rn, gm);
        asum += rn;
      }
      mean_abs = asum / double(pts.size());
      return phi;
    };

    double mean_abs = 0.0;
    double phi = objective(res.pose, mean_abs);
    bool stalled = false;
    for (int it = 0; it < cfg.max_inner_iters && !stalled; ++it) {
      Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      Mat3 r = res.pose.rotation();
      for (size_t i = 0; i < pts.size(); ++i) {
        Vec3 p = r * pts[i] + res.pose.t;
        if (p.z() <= detail::kZNear) continue;
        Vec2 resid = project(p, cam) - targets[i];
        double rn = resid.norm();
        double w = std::pow(gm * gm / (gm * gm + rn * rn), 2.0);
        Eigen::Matrix<double, 2, 6> j;
        j.block<2, 3>(0, 0) = detail::projection_jacobian(p, cam);
        j.block<2, 3>(0, 3) = -detail::projection_jacobian(p, cam) * skew(p);
        h += w * j.transpose() * j;
        g += w * j.transpose() * resid;
      }
      h += 1e-12 * h.trace() * Eigen::Matrix<double, 6, 6>::Identity();
      Eigen::Matrix<double, 6, 1> xi = h.ldlt().solve(-g);
      if (!xi.allFinite()) break;

      double lambda = 1.0;
      bool accepted = false;
      for (int half = 0; half <= 3; ++half) {
        Pose cand = detail::apply_twist(res.pose, lambda * xi);
        double cand_mean = 0.0;
        double cand_phi = objective(cand, cand_mean);
        if (cand_phi <= phi) {
          res.pose = cand;
          phi = cand_phi;
          mean_abs = cand_mean;
          res.trace.push_back(phi);
          res.applied = true;
          accepted = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!accepted) stalled = true;
      if ((lambda * xi).norm() < 1e-10) break;
    }
    res.residual = mean_abs;
  }
  return res;
}

// Projective point-to-plane ICP against a scene depth map. Per round the
// current pose is rendered and pixels are associated by location; pairs
// failing the depth or normal gate (occluders, other objects) are dropped.
// The 6x6 normal equations are solved in closed form; an update that would
// increase the residual on the current correspondence set is halved up to 3
// times. `trace` records the pre-update residual of each round.
inline RefineResult refine_icp(const Pose& init, const TriMesh& mesh,
                               const Image<double>& scene_depth,
                               const Image<Eigen::Vector3f>& scene_normals,
                               const CameraIntrinsics& cam, const RefineConfig& cfg = {}) {
  validate(cam);
  if (cfg.rounds < 1 || !(cfg.depth_gate_m > 0) || !(cfg.normal_gate_deg > 0))
    throw ConfigError("refine_icp: bad configuration");
  if (scene_depth.width != cam.width || scene_depth.height != cam.height ||
      scene_normals.width != cam.width || scene_normals.height != cam.height)
    throw std::invalid_argument("refine_icp: scene buffers do not match the camera");

  RefineResult res;
  res.pose = init;
  const double cos_gate = std::cos(cfg.normal_gate_deg * M_PI / 180.0);

  for (int round = 0; round < cfg.rounds; ++round) {
    RenderBuffers rb = render(mesh, res.pose, cam);
    if (!rb.visible) break;

    std::vector<Vec3> qs, ns;
    std::vector<double> es;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        if (!rb.mask.at(x, y)) continue;
        double sd = scene_depth.at(x, y);
        if (sd <= 0) continue;
        Eigen::Vector3f nf = scene_normals.at(x, y);
        if (nf.squaredNorm() < 0.25f) continue;  // invalid normal
        double rd = rb.depth.at(x, y);
        if (std::abs(rd - sd) > cfg.depth_gate_m) continue;
        Eigen::Vector3f rn = rb.normals.at(x, y);
        if (double(rn.dot(nf)) < cos_gate) continue;
        Vec2 px(x + 0.5, y + 0.5);
        Vec3 q = backproject(px, rd, cam);
        Vec3 s = backproject(px, sd, cam);
        Vec3 n = nf.cast<double>();
        qs.push_back(q);
        ns.push_back(n);
        es.push_back(n.dot(q - s));
      }
    }
    res.correspondences = int(qs.size());
    if (int(qs.size()) < cfg.min_correspondences) break;

    double resid = 0.0;
    for (double e : es) resid += std::abs(e);
    resid /= double(es.size());
    res.trace.push_back(resid);
    res.residual = resid;
    if (resid < 1e-9) break;

    Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (size_t i = 0; i < qs.size(); ++i) {
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = ns[i];
      j.tail<3>() = qs[i].cross(ns[i]);
      a += j * j.transpose();
      b -= j * es[i];
    }
    a += 1e-12 * a.trace() * Eigen::Matrix<double, 6, 6>::Identity();
    Eigen::Matrix<double, 6, 1> xi = a.ldlt().solve(b);
    if (!xi.allFinite()) break;

    double lambda = 1.0;
    bool accepted = false;
    for (int half = 0; half <= 3; ++half) {
      Eigen::Matrix<double, 6, 1> step = lambda * xi;
      Mat3 rw = so3_exp(step.tail<3>());
      double after = 0.0;
      for (size_t i = 0; i < qs.size(); ++i) {
        Vec3 q2 = rw * qs[i] + step.head<3>();
        after += std::abs(ns[i].dot(q2 - (qs[i] - ns[i] * es[i])));
      }
      after /= double(qs.size());
      if (after <= resid) {
        res.pose = detail::apply_twist(res.pose, step);
        res.residual = after;
        res.applied = true;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
  }
  return res;
}

inline RefineResult refine_icp(const Pose& init, const TriMesh& mesh,
                               const Image<double>& scene_depth, const CameraIntrinsics& cam,
                               const RefineConfig& cfg = {}) {
  return refine_icp(init, mesh, scene_depth, depth_to_normals(scene_depth, cam), cam, cfg);
}

// Contour verification: mean over rendered silhouette pixels of the best
// absolute dot product between the contour normal and the scene edge
// orientation within a 1-pixel neighborhood (0 when no edge is nearby).
inline double verify_contour(const Pose& pose, const TriMesh& mesh, const EdgeMap& edges,
                             const CameraIntrinsics& cam) {
  validate(cam);
  if (edges.width != cam.width || edges.height != cam.height)
    throw std::invalid_argument("verify_contour: edge map size does not match the camera");
  RenderBuffers rb = render(mesh, pose, cam);
  if (!rb.visible) return 0.0;
  std::vector<ContourPoint> contour = extract_contour(rb, pose, cam);
  if (contour.empty()) return 0.0;
  double sum = 0.0;
  for (const ContourPoint& cp : contour) {
    // Agreement with any scene gradient within 1 px; flat neighborhoods
    // (no gradient) contribute zero.
    double best = 0.0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int x = cp.x + dx, y = cp.y + dy;
        if (!edges.in_bounds(x, y)) continue;
        if (edges.magnitude[size_t(y) * edges.width + x] <= 0) continue;
        const Eigen::Vector2f& o = edges.orient_at(x, y);
        best = std::max(best, std::abs(cp.normal.x() * o.x() + cp.normal.y() * o.y()));
      }
    sum += best;
  }
  return sum / double(contour.size());
}

// Depth verification: mean absolute dot product between rendered and scene
// normals over the rendered mask where the scene has valid normals.
inline double verify_normals(const Pose& pose, const TriMesh& mesh,
                             const Image<double>& scene_depth,
                             const Image<Eigen::Vector3f>& scene_normals,
                             const CameraIntrinsics& cam) {
  validate(cam);
  if (scene_depth.width != cam.width || scene_depth.height != cam.height ||
      scene_normals.width != cam.width || scene_normals.height != cam.height)
    throw std::invalid_argument("verify_normals: scene buffers do not match the camera");
  RenderBuffers rb = render(mesh, pose, cam);
  if (!rb.visible) return 0.0;
  double sum = 0.0;
  size_t count = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (!rb.mask.at(x, y) || scene_depth.at(x, y) <= 0) continue;
      Eigen::Vector3f sn = scene_normals.at(x, y);
      if (sn.squaredNorm() < 0.25f) continue;
      sum += std::abs(double(rb.normals.at(x, y).dot(sn)));
      ++count;
    }
  return count > 0 ? sum / double(count) : 0.0;
}

inline double verify_normals(const Pose& pose, const TriMesh& mesh,
                             const Image<double>& scene_depth, const CameraIntrinsics& cam) {
  return verify_normals(pose, mesh, scene_depth, depth_to_normals(scene_depth, cam), cam);
}

// Index of the highest verification score; ties go to the earliest entry.
inline int select_best(const std::vector<double>& verify_scores) {
  if (verify_scores.empty()) throw std::invalid_argument("select_best: empty scores");
  int best = 0;
  for (int i = 1; i < int(verify_scores.size()); ++i)
    if (verify_scores[i] > verify_scores[best]) best = i;
  return best;
}

}  // namespace pose6d
