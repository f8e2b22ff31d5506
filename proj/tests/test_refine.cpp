#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "pose6d/primitives.hpp"
#include "pose6d/refine.hpp"

using namespace pose6d;
using Catch::Approx;

namespace {

// Mean image-space distance between the two poses' vertex projections.
double mean_reprojection_px(const TriMesh& mesh, const Pose& a, const Pose& b,
                            const CameraIntrinsics& cam) {
  double sum = 0;
  for (const Vec3& v : mesh.vertices) sum += (project(a(v), cam) - project(b(v), cam)).norm();
  return sum / double(mesh.vertices.size());
}

// Mean 3D vertex distance between poses (model-point alignment error).
double add_error(const TriMesh& mesh, const Pose& a, const Pose& b) {
  double sum = 0;
  for (const Vec3& v : mesh.vertices) sum += (a(v) - b(v)).norm();
  return sum / double(mesh.vertices.size());
}

Pose perturb(const Pose& p, double deg, double shift_m, Rng& rng) {
  Pose out = p;
  out.q = canonical_quat(testutil::random_rotation_of(deg, rng) * p.q);
  out.t += testutil::random_unit(rng) * shift_m;
  return out;
}

// Rotation plus a lateral (image-plane) translation of `px` pixels at the
// pose's depth, the regime edge alignment is meant to correct.
Pose perturb_lateral(const Pose& p, double deg, double px, const CameraIntrinsics& cam,
                     Rng& rng) {
  Pose out = p;
  out.q = canonical_quat(testutil::random_rotation_of(deg, rng) * p.q);
  double ang = rng.uniform(0.0, 2.0 * M_PI);
  out.t += Vec3(std::cos(ang), std::sin(ang), 0.0) * (px * p.t.z() / cam.fx);
  return out;
}

// Many short correspondence rounds track contours more reliably than a few
// fully converged ones; used by the convergence tests.
RefineConfig tracking_config() {
  RefineConfig cfg;
  cfg.rounds = 30;
  cfg.max_inner_iters = 1;
  return cfg;
}

}  // namespace

TEST_CASE("sobel edge map finds a step edge", "[refine]") {
  ColorImage img(32, 24, {0.1f, 0.1f, 0.1f});
  for (int y = 0; y < 24; ++y)
    for (int x = 16; x < 32; ++x) img.at(x, y) = {0.9f, 0.9f, 0.9f};

  EdgeMap em = scene_edges(img);
  // Edges hug the step at x = 16; orientation is horizontal (+-1, 0).
  for (int y = 2; y < 22; ++y) {
    bool found = false;
    for (int x = 14; x <= 17; ++x) found = found || em.edge_at(x, y);
    REQUIRE(found);
    REQUIRE_FALSE(em.edge_at(5, y));
    REQUIRE_FALSE(em.edge_at(28, y));
  }
  for (int y = 2; y < 22; ++y)
    for (int x = 14; x <= 17; ++x)
      if (em.edge_at(x, y)) {
        REQUIRE(std::abs(em.orient_at(x, y).x()) == Approx(1.0).margin(1e-5));
        REQUIRE(em.orient_at(x, y).y() == Approx(0.0).margin(1e-5));
      }

  // Constant image: no edges anywhere.
  ColorImage flat(32, 24, {0.5f, 0.5f, 0.5f});
  EdgeMap fem = scene_edges(flat);
  for (uint8_t e : fem.is_edge) REQUIRE(e == 0);
}

TEST_CASE("edge refinement is a fixed point at the true pose", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose gt(view_rotation(Vec3(0.3, 0.2, 0.9).normalized(), 10.0), Vec3(0.02, -0.01, 0.6));

  RenderBuffers scene = render(mesh, gt, cam);
  EdgeMap edges = scene_edges(scene.color);

  RefineResult r = refine_edges(gt, mesh, edges, cam);
  REQUIRE(r.correspondences > 50);
  REQUIRE(mean_reprojection_px(mesh, gt, r.pose, cam) < 0.5);
  REQUIRE(r.residual < 1.0);
}

TEST_CASE("edge refinement recovers small perturbations", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_star(0.05);
  Pose gt(view_rotation(Vec3(-0.2, 0.3, 0.9).normalized(), -15.0), Vec3(-0.01, 0.015, 0.55));
  RenderBuffers scene = render(mesh, gt, cam);
  EdgeMap edges = scene_edges(scene.color);

  Rng rng(161);
  for (int trial = 0; trial < 4; ++trial) {
    Pose init = perturb_lateral(gt, 3.0, 10.0, cam, rng);
    double before = mean_reprojection_px(mesh, gt, init, cam);
    REQUIRE(before > 2.0);

    RefineResult r = refine_edges(init, mesh, edges, cam, tracking_config());
    double after = mean_reprojection_px(mesh, gt, r.pose, cam);
    REQUIRE(r.applied);
    REQUIRE(after < before);
    REQUIRE(after < 1.5);
  }
}

TEST_CASE("edge refinement objective never increases within a round", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose gt(view_rotation(Vec3(0.1, -0.25, 0.95).normalized(), 20.0), Vec3(0, 0.01, 0.58));
  RenderBuffers scene = render(mesh, gt, cam);
  EdgeMap edges = scene_edges(scene.color);

  Rng rng(171);
  Pose init = perturb(gt, 3.0, 0.01, rng);
  RefineConfig cfg;
  cfg.rounds = 1;  // one round = one correspondence set = one monotone descent
  RefineResult r = refine_edges(init, mesh, edges, cfg.rounds ? cam : cam, cfg);
  REQUIRE(r.trace.size() >= 2);
  for (size_t i = 1; i < r.trace.size(); ++i) REQUIRE(r.trace[i] <= r.trace[i - 1] + 1e-12);
}

TEST_CASE("edge refinement tolerates corrupted edge maps", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_star(0.05);
  Pose gt(view_rotation(Vec3(0.2, 0.1, 0.95).normalized(), 0.0), Vec3(0.01, 0.0, 0.6));
  RenderBuffers scene = render(mesh, gt, cam);
  EdgeMap edges = scene_edges(scene.color);

  // Replace 30% of the edge pixels with random clutter elsewhere.
  Rng rng(181);
  std::vector<size_t> edge_idx;
  for (size_t i = 0; i < edges.is_edge.size(); ++i)
    if (edges.is_edge[i]) edge_idx.push_back(i);
  size_t n_replace = edge_idx.size() * 3 / 10;
  for (size_t k = 0; k < n_replace; ++k) {
    size_t pick = k + rng.uniform_int(int(edge_idx.size() - k));
    std::swap(edge_idx[k], edge_idx[pick]);
    edges.is_edge[edge_idx[k]] = 0;
  }
  for (size_t k = 0; k < n_replace; ++k) {
    size_t i = size_t(rng.uniform_int(cam.height)) * cam.width + rng.uniform_int(cam.width);
    edges.is_edge[i] = 1;
    double a = rng.uniform(0.0, 2.0 * M_PI);
    edges.orientation[i] = Eigen::Vector2f(float(std::cos(a)), float(std::sin(a)));
    edges.magnitude[i] = 1.0f;
  }

  Pose init = perturb_lateral(gt, 3.0, 10.0, cam, rng);
  RefineResult r = refine_edges(init, mesh, edges, cam, tracking_config());
  REQUIRE(mean_reprojection_px(mesh, gt, r.pose, cam) < 3.0);
}

TEST_CASE("edge refinement degrades gracefully without correspondences", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose init(Quat::Identity(), Vec3(0, 0, 0.6));

  // Edge-free scene: nothing to align with.
  EdgeMap empty = scene_edges(ColorImage(cam.width, cam.height, {0.5f, 0.5f, 0.5f}));
  RefineResult r = refine_edges(init, mesh, empty, cam);
  REQUIRE_FALSE(r.applied);
  REQUIRE(r.correspondences == 0);
  REQUIRE(rotation_angle(r.pose.q, init.q) < 1e-15);
  REQUIRE((r.pose.t - init.t).norm() < 1e-15);

  // Pose behind the camera: no render, no update.
  Pose behind(Quat::Identity(), Vec3(0, 0, -0.5));
  RefineResult rb = refine_edges(behind, mesh, empty, cam);
  REQUIRE_FALSE(rb.applied);

  RefineConfig bad;
  bad.rounds = 0;
  REQUIRE_THROWS_AS(refine_edges(init, mesh, empty, cam, bad), ConfigError);
  EdgeMap wrong;
  wrong.width = 10;
  wrong.height = 10;
  REQUIRE_THROWS_AS(refine_edges(init, mesh, wrong, cam), std::invalid_argument);
}

TEST_CASE("icp is a fixed point on the true depth", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose gt(view_rotation(Vec3(0.25, -0.15, 0.9).normalized(), 5.0), Vec3(0.01, 0.02, 0.62));
  RenderBuffers scene = render(mesh, gt, cam);

  RefineResult r = refine_icp(gt, mesh, scene.depth, cam);
  REQUIRE(r.correspondences > 1000);
  REQUIRE(r.residual < 1e-6);
  REQUIRE(add_error(mesh, gt, r.pose) < 1e-6);
}

TEST_CASE("icp recovers perturbed poses on clean depth", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_blob(0.055);
  Pose gt(view_rotation(Vec3(-0.2, 0.25, 0.95).normalized(), -10.0), Vec3(-0.02, 0.01, 0.6));
  RenderBuffers scene = render(mesh, gt, cam);

  RefineConfig cfg;
  cfg.rounds = 20;
  cfg.depth_gate_m = 0.05;

  Rng rng(191);
  for (int trial = 0; trial < 4; ++trial) {
    Pose init = perturb(gt, 5.0, 0.02, rng);
    REQUIRE(add_error(mesh, gt, init) > 0.01);

    RefineResult r = refine_icp(init, mesh, scene.depth, cam, cfg);
    REQUIRE(r.applied);
    REQUIRE(add_error(mesh, gt, r.pose) < mesh.diameter / 50.0);
  }
}

TEST_CASE("icp gates out a foreground occluder", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_blob(0.055);
  Pose gt(view_rotation(Vec3(0.15, 0.2, 0.95).normalized(), 15.0), Vec3(0.0, 0.0, 0.6));
  RenderBuffers scene = render(mesh, gt, cam);

  // Occluding slab 15 cm in front, covering the left part of the object.
  auto tb = tight_mask_box(scene.mask);
  REQUIRE(tb.has_value());
  Image<double> depth = scene.depth;
  int x_cut = int(tb->x0 + 0.35 * tb->width());
  int full = 0, occluded_px = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (scene.mask.at(x, y)) ++full;
      if (x <= x_cut && y >= int(tb->y0) - 10 && y <= int(tb->y1) + 10) {
        if (scene.mask.at(x, y)) ++occluded_px;
        depth.at(x, y) = gt.t.z() - 0.15;
      }
    }
  double occlusion = double(occluded_px) / full;
  REQUIRE(occlusion > 0.2);
  REQUIRE(occlusion < 0.5);

  RefineConfig cfg;
  cfg.rounds = 20;
  cfg.depth_gate_m = 0.05;

  Rng rng(201);
  Pose init = perturb(gt, 5.0, 0.015, rng);
  RefineResult r = refine_icp(init, mesh, depth, cam, cfg);
  REQUIRE(r.applied);
  // The occluder is 15 cm away, far beyond the 5 cm gate, so the fit uses
  // only the visible part and still lands close.
  REQUIRE(add_error(mesh, gt, r.pose) < mesh.diameter / 10.0);

  // Gating visibly reduced the correspondence count.
  RefineResult clean = refine_icp(gt, mesh, scene.depth, cam, cfg);
  REQUIRE(r.correspondences < clean.correspondences);
}

TEST_CASE("icp reports failure without valid depth", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose init(Quat::Identity(), Vec3(0, 0, 0.6));

  Image<double> nothing(cam.width, cam.height, 0.0);
  RefineResult r = refine_icp(init, mesh, nothing, cam);
  REQUIRE_FALSE(r.applied);
  REQUIRE(r.correspondences == 0);
  REQUIRE(rotation_angle(r.pose.q, init.q) < 1e-15);

  RefineConfig bad;
  bad.depth_gate_m = 0.0;
  REQUIRE_THROWS_AS(refine_icp(init, mesh, nothing, cam, bad), ConfigError);
  Image<double> wrong(8, 8, 0.0);
  REQUIRE_THROWS_AS(refine_icp(init, mesh, wrong, cam), std::invalid_argument);
}

TEST_CASE("verification scores rank the true pose above wrong ones", "[refine]") {
  auto cam = testutil::test_cam();
  TriMesh mesh = make_house_mesh();
  Pose gt(view_rotation(Vec3(0.2, -0.2, 0.95).normalized(), 10.0), Vec3(0.01, -0.01, 0.6));
  RenderBuffers scene = render(mesh, gt, cam);
  EdgeMap edges = scene_edges(scene.color);

  // Contour agreement at the true pose is high.
  double c_true = verify_contour(gt, mesh, edges, cam);
  REQUIRE(c_true > 0.9);

  // A clearly wrong pose scores lower.
  Rng rng(211);
  Pose wrong = perturb(gt, 30.0, 0.05, rng);
  double c_wrong = verify_contour(wrong, mesh, edges, cam);
  REQUIRE(c_wrong < c_true);

  // Depth-normal agreement behaves the same way.
  double n_true = verify_normals(gt, mesh, scene.depth, cam);
  REQUIRE(n_true > 0.9);
  double n_wrong = verify_normals(wrong, mesh, scene.depth, cam);
  REQUIRE(n_wrong < n_true);

  // Off-scene poses and empty scenes give zero.
  Pose offscreen(Quat::Identity(), Vec3(5.0, 0, 0.6));
  REQUIRE(verify_contour(offscreen, mesh, edges, cam) == 0.0);
  EdgeMap empty = scene_edges(ColorImage(cam.width, cam.height, {0.2f, 0.2f, 0.2f}));
  REQUIRE(verify_contour(gt, mesh, empty, cam) == 0.0);

  REQUIRE(select_best({0.2, 0.9, 0.9, 0.1}) == 1);
  REQUIRE_THROWS_AS(select_best({}), std::invalid_argument);
}
