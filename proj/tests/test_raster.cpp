#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "pose6d/primitives.hpp"
#include "pose6d/raster.hpp"

using namespace pose6d;
using Catch::Approx;

namespace {

// Pixels i with a <= i + 0.5 < b (center sampling of the interval [a, b)).
int covered_pixels(double a, double b) {
  int lo = int(std::ceil(a - 0.5));
  int hi = int(std::ceil(b - 0.5)) - 1;
  return std::max(0, hi - lo + 1);
}

int count_mask(const Image<uint8_t>& m) {
  int n = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) n += m.at(x, y) != 0;
  return n;
}

}  // namespace

TEST_CASE("fronto-parallel box renders its analytic rectangle", "[raster]") {
  auto cam = testutil::test_cam();
  TriMesh cube = make_box_mesh(0.1, 0.08, 0.06);
  double z = 0.7231;  // avoids boundaries through pixel centers
  Pose pose(Quat::Identity(), Vec3(0.013, -0.007, z));
  RenderBuffers rb = render(cube, pose, cam);
  REQUIRE(rb.visible);

  // Only the front face (z = t_z - sz/2) is visible head-on; its projection
  // is an axis-aligned rectangle.
  double zf = z - 0.03;
  double x0 = cam.fx * (0.013 - 0.05) / zf + cam.cx;
  double x1 = cam.fx * (0.013 + 0.05) / zf + cam.cx;
  double y0 = cam.fy * (-0.007 - 0.04) / zf + cam.cy;
  double y1 = cam.fy * (-0.007 + 0.04) / zf + cam.cy;

  int expected = covered_pixels(x0, x1) * covered_pixels(y0, y1);
  REQUIRE(count_mask(rb.mask) == expected);

  auto tb = tight_mask_box(rb.mask);
  REQUIRE(tb.has_value());
  REQUIRE(tb->x0 == Approx(std::ceil(x0 - 0.5)));
  REQUIRE(tb->x1 == Approx(std::ceil(x1 - 0.5)));
  REQUIRE(tb->y0 == Approx(std::ceil(y0 - 0.5)));
  REQUIRE(tb->y1 == Approx(std::ceil(y1 - 0.5)));

  // Constant depth and camera-facing normal across the face.
  for (int y = int(tb->y0); y < int(tb->y1); ++y) {
    for (int x = int(tb->x0); x < int(tb->x1); ++x) {
      REQUIRE(rb.mask.at(x, y) == 1);
      REQUIRE(rb.depth.at(x, y) == Approx(zf).margin(1e-9));
      Eigen::Vector3f n = rb.normals.at(x, y);
      REQUIRE(n.z() == Approx(-1.0f).margin(1e-6));
    }
  }

  // Empty mask for a pose fully behind the camera.
  Pose behind(Quat::Identity(), Vec3(0, 0, -1.0));
  RenderBuffers rb2 = render(cube, behind, cam);
  REQUIRE_FALSE(rb2.visible);
  REQUIRE(count_mask(rb2.mask) == 0);
  REQUIRE_FALSE(tight_mask_box(rb2.mask).has_value());
}

TEST_CASE("depth buffer is perspective correct on a tilted plane", "[raster]") {
  auto cam = testutil::test_cam();
  // Two triangles spanning a tilted quad; plane known analytically.
  std::vector<Vec3> verts = {{-0.2, -0.15, 0.0}, {0.2, -0.15, 0.1}, {0.2, 0.15, 0.1},
                             {-0.2, 0.15, 0.0}};
  TriMesh plane = make_mesh(verts, {{0, 1, 2}, {0, 2, 3}});
  Pose pose(Quat::Identity(), Vec3(0, 0, 0.8));

  Vec3 a = verts[0] + pose.t, b = verts[1] + pose.t, c = verts[2] + pose.t;
  Vec3 n = (b - a).cross(c - a).normalized();
  double d = n.dot(a);

  RenderBuffers rb = render(plane, pose, cam);
  REQUIRE(rb.visible);
  int checked = 0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (!rb.mask.at(x, y)) continue;
      Vec3 dir((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
      double z_ray = d / n.dot(dir);  // ray-plane intersection depth
      REQUIRE(rb.depth.at(x, y) == Approx(z_ray).epsilon(1e-9));
      ++checked;
    }
  }
  REQUIRE(checked > 10000);
}

TEST_CASE("shared triangle edges rasterize exactly once", "[raster]") {
  // The two triangles of the quad share a diagonal; with the top-left fill
  // rule the mask count must match the analytic quad coverage (no double
  // writes shows up as no depth fighting; no gaps shows up in the count).
  auto cam = testutil::test_cam();
  std::vector<Vec3> verts = {{-0.1, -0.1, 0}, {0.1, -0.1, 0}, {0.1, 0.1, 0}, {-0.1, 0.1, 0}};
  TriMesh quad = make_mesh(verts, {{0, 1, 2}, {0, 2, 3}});
  double z = 0.6117;
  RenderBuffers rb = render(quad, Pose(Quat::Identity(), Vec3(0.0042, 0.0031, z)), cam);

  double x0 = cam.fx * (0.0042 - 0.1) / z + cam.cx;
  double x1 = cam.fx * (0.0042 + 0.1) / z + cam.cx;
  double y0 = cam.fy * (0.0031 - 0.1) / z + cam.cy;
  double y1 = cam.fy * (0.0031 + 0.1) / z + cam.cy;
  REQUIRE(count_mask(rb.mask) == covered_pixels(x0, x1) * covered_pixels(y0, y1));
}

TEST_CASE("contour of a rectangle is its one-pixel boundary ring", "[raster]") {
  auto cam = testutil::test_cam();
  TriMesh cube = make_box_mesh(0.1, 0.08, 0.06);
  Pose pose(Quat::Identity(), Vec3(0, 0, 0.75));
  RenderBuffers rb = render(cube, pose, cam);

  auto tb = tight_mask_box(rb.mask);
  REQUIRE(tb.has_value());
  int w = int(tb->x1 - tb->x0), h = int(tb->y1 - tb->y0);

  auto contour = extract_contour(rb, pose, cam);
  REQUIRE(int(contour.size()) == 2 * w + 2 * h - 4);

  for (const auto& cp : contour) {
    // Outward normals: straight edges point along the axes.
    bool left = cp.x == int(tb->x0), right = cp.x == int(tb->x1) - 1;
    bool top = cp.y == int(tb->y0), bottom = cp.y == int(tb->y1) - 1;
    if (left && !top && !bottom) {
      REQUIRE(cp.normal.x() == Approx(-1.0));
      REQUIRE(cp.normal.y() == Approx(0.0).margin(1e-12));
    }
    if (right && !top && !bottom) REQUIRE(cp.normal.x() == Approx(1.0));
    if (top && !left && !right) REQUIRE(cp.normal.y() == Approx(-1.0));
    if (bottom && !left && !right) REQUIRE(cp.normal.y() == Approx(1.0));

    // Surface points reproject onto their pixel centers.
    Vec2 back = project(pose(cp.model_point), cam);
    REQUIRE((back - cp.pixel).norm() < 1e-9);
  }

  // A single-pixel mask is all contour.
  Image<uint8_t> tiny(5, 5, 0);
  tiny.at(2, 2) = 1;
  RenderBuffers fake;
  fake.mask = tiny;
  fake.depth = Image<double>(5, 5, 0.5);
  auto single = extract_contour(fake, Pose::identity(), testutil::test_cam(5, 5, 10.0));
  REQUIRE(single.size() == 1);

  // Empty mask gives an empty contour.
  fake.mask = Image<uint8_t>(5, 5, 0);
  REQUIRE(extract_contour(fake, Pose::identity(), testutil::test_cam(5, 5, 10.0)).empty());
}

TEST_CASE("depth occlusion keeps the nearer surface", "[raster]") {
  auto cam = testutil::test_cam();
  // One mesh containing two stacked quads; the nearer one must win the
  // z-buffer everywhere they overlap.
  std::vector<Vec3> verts = {
      {-0.05, -0.05, 0.0}, {0.05, -0.05, 0.0}, {0.05, 0.05, 0.0}, {-0.05, 0.05, 0.0},  // near
      {-0.12, -0.12, 0.2}, {0.12, -0.12, 0.2}, {0.12, 0.12, 0.2}, {-0.12, 0.12, 0.2}}; // far
  TriMesh two = make_mesh(verts, {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}, {4, 6, 7}});
  Pose pose(Quat::Identity(), Vec3(0, 0, 0.6));
  RenderBuffers rb = render(two, pose, cam);

  REQUIRE(rb.depth.at(cam.width / 2, cam.height / 2) == Approx(0.6));
  // A pixel inside the far quad but outside the near one.
  double far_x = cam.fx * 0.10 / 0.8 + cam.cx;
  REQUIRE(rb.depth.at(int(far_x), cam.height / 2) == Approx(0.8));
}

TEST_CASE("winding direction does not affect the render", "[raster]") {
  auto cam = testutil::test_cam();
  TriMesh box = make_box_mesh(0.09, 0.07, 0.05);
  TriMesh flipped = box;
  for (auto& f : flipped.faces) std::swap(f[1], f[2]);  // reverse every winding

  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Pose pose(testutil::random_quat(rng), Vec3(0.02, -0.01, 0.7));
    RenderBuffers a = render(box, pose, cam);
    RenderBuffers b = render(flipped, pose, cam);
    REQUIRE(count_mask(a.mask) == count_mask(b.mask));
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        REQUIRE(a.mask.at(x, y) == b.mask.at(x, y));
        REQUIRE(a.depth.at(x, y) == Approx(b.depth.at(x, y)).margin(1e-12));
      }
  }
}

TEST_CASE("triangles crossing the camera plane are clipped", "[raster]") {
  auto cam = testutil::test_cam();
  // Apex far behind the camera; the visible part must still satisfy the
  // triangle's plane equation at every drawn pixel.
  std::vector<Vec3> verts = {{-0.1, -0.05, 0.5}, {0.1, -0.05, 0.5}, {0.0, 0.08, -0.5}};
  TriMesh tri = make_mesh(verts, {{0, 1, 2}});
  Pose pose = Pose::identity();

  Vec3 a = verts[0], b = verts[1], c = verts[2];
  Vec3 n = (b - a).cross(c - a).normalized();
  double d = n.dot(a);
  REQUIRE(std::abs(d) > 1e-4);  // plane must not pass through the camera

  RenderBuffers rb = render(tri, pose, cam);
  REQUIRE(rb.visible);
  int drawn = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      if (!rb.mask.at(x, y)) continue;
      ++drawn;
      Vec3 dir((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
      double z_ray = d / n.dot(dir);
      REQUIRE(rb.depth.at(x, y) == Approx(z_ray).epsilon(1e-6));
      REQUIRE(rb.depth.at(x, y) > 0.0);
    }
  REQUIRE(drawn > 100);
}

TEST_CASE("depth to normals recovers plane orientation", "[raster]") {
  auto cam = testutil::test_cam(64, 48, 60.0);
  // Synthesize depth for the plane n . p = d directly.
  Vec3 n = Vec3(0.3, -0.2, -1.0).normalized();
  double d = n.dot(Vec3(0, 0, 0.8));
  Image<double> depth(cam.width, cam.height, 0.0);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Vec3 dir((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
      depth.at(x, y) = d / n.dot(dir);
    }
  auto normals = depth_to_normals(depth, cam);
  for (int y = 1; y + 1 < cam.height; ++y)
    for (int x = 1; x + 1 < cam.width; ++x) {
      Eigen::Vector3f got = normals.at(x, y);
      REQUIRE(got.norm() == Approx(1.0).margin(1e-5));
      REQUIRE(double(got.cast<float>().dot(n.cast<float>())) == Approx(1.0).margin(1e-4));
    }

  // Fronto-parallel plane -> (0, 0, -1); border and invalid pixels -> zero.
  Image<double> flat(cam.width, cam.height, 0.75);
  flat.at(10, 10) = 0.0;
  auto fn = depth_to_normals(flat, cam);
  REQUIRE(fn.at(5, 5).z() == Approx(-1.0f).margin(1e-6));
  REQUIRE(fn.at(10, 10).norm() == 0.0f);
  REQUIRE(fn.at(11, 10).norm() == 0.0f);  // neighbor of the hole
  REQUIRE(fn.at(0, 5).norm() == 0.0f);    // border
}

TEST_CASE("sphere silhouette matches the analytic tangent cone", "[raster]") {
  auto cam = testutil::test_cam();
  double r = 0.06, z = 0.5;
  TriMesh sphere = make_uv_sphere(r);
  RenderBuffers rb = render(sphere, Pose(Quat::Identity(), Vec3(0, 0, z)), cam);
  auto tb = tight_mask_box(rb.mask);
  REQUIRE(tb.has_value());

  double radius_px = cam.fx * r / std::sqrt(z * z - r * r);
  REQUIRE(tb->width() == Approx(2 * radius_px).margin(2.0));
  REQUIRE(tb->height() == Approx(2 * radius_px).margin(2.0));
  // A sphere's silhouette is round: width equals height.
  REQUIRE(std::abs(tb->width() - tb->height()) <= 1.0);
}

TEST_CASE("canonical table entries are cell-renders at the canonical distance", "[raster]") {
  auto cam = testutil::test_cam();
  auto vs = build_viewspace(0, true, SymmetryClass::None, {-45.0, 45.0, 15.0});
  TriMesh sphere = make_uv_sphere(0.05);
  CanonicalTable table = precompute_canonical(sphere, vs, cam, 0.5, 2);
  REQUIRE(table.n_views == int(vs.views.size()));
  REQUIRE(table.n_inplane == int(vs.inplane_bins.size()));
  REQUIRE(table.entries.size() == vs.views.size() * vs.inplane_bins.size());

  // A sphere looks identical from every cell: all diagonals agree and the
  // projected-origin offset is central.
  double radius_px = cam.fx * 0.05 / std::sqrt(0.25 - 0.0025);
  for (const auto& e : table.entries) {
    REQUIRE(e.diag == Approx(2 * radius_px * std::sqrt(2.0)).margin(4.0));
    REQUIRE(e.offset.norm() < 1.0);
    REQUIRE(e.box.valid());
  }

  // Entries reproduce an independent render of the same cell.
  Quat q = view_rotation(vs.views[3], vs.inplane_bins[2]);
  RenderBuffers rb = render(sphere, Pose(q, Vec3(0, 0, 0.5)), cam);
  auto tb = tight_mask_box(rb.mask);
  const auto& e32 = table.entry(3, 2);
  REQUIRE(e32.box.x0 == tb->x0);
  REQUIRE(e32.box.y1 == tb->y1);

  REQUIRE_THROWS_AS(table.entry(-1, 0), std::out_of_range);
  REQUIRE_THROWS_AS(table.entry(0, 99), std::out_of_range);

  // Oversized mesh is rejected.
  TriMesh big = make_uv_sphere(0.3);
  REQUIRE_THROWS_AS(precompute_canonical(big, vs, cam, 0.5), ConfigError);

  // JSON roundtrip.
  nlohmann::json j = table;
  CanonicalTable back = j.get<CanonicalTable>();
  REQUIRE(back.n_views == table.n_views);
  REQUIRE(back.canonical_z == table.canonical_z);
  REQUIRE(back.entries.size() == table.entries.size());
  REQUIRE(back.entry(3, 2).diag == Approx(table.entry(3, 2).diag));
  REQUIRE(back.entry(3, 2).offset.x() == Approx(table.entry(3, 2).offset.x()));
}

TEST_CASE("image files roundtrip", "[raster]") {
  testutil::TempDir tmp;
  Rng rng(23);

  ColorImage img(37, 21, {0, 0, 0});
  for (auto& px : img.px)
    px = {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
  write_ppm(img, tmp.str("img.ppm"));
  ColorImage cback = read_ppm(tmp.str("img.ppm"));
  REQUIRE(cback.width == img.width);
  REQUIRE(cback.height == img.height);
  for (size_t i = 0; i < img.px.size(); ++i)
    for (int k = 0; k < 3; ++k)
      REQUIRE(cback.px[i][k] == Approx(img.px[i][k]).margin(1.0 / 255.0));

  Image<uint8_t> mask(16, 9, 0);
  for (auto& v : mask.px) v = rng.uniform() < 0.4 ? 1 : 0;
  write_mask_pgm(mask, tmp.str("m.pgm"));
  Image<uint8_t> mback = read_mask_pgm(tmp.str("m.pgm"));
  REQUIRE(mback.px == mask.px);

  Image<double> depth(16, 9, 0.0);
  for (auto& v : depth.px) v = rng.uniform() < 0.2 ? 0.0 : 0.3 + rng.uniform();
  write_depth_pgm(depth, tmp.str("d.pgm"));
  Image<double> dback = read_depth_pgm(tmp.str("d.pgm"));
  for (size_t i = 0; i < depth.px.size(); ++i) {
    if (depth.px[i] == 0.0)
      REQUIRE(dback.px[i] == 0.0);
    else
      REQUIRE(dback.px[i] == Approx(depth.px[i]).margin(0.0001));  // 0.1 mm units
  }

  REQUIRE_THROWS_AS(read_ppm(tmp.str("nope.ppm")), DataError);
  REQUIRE_THROWS_AS(read_mask_pgm(tmp.str("nope.pgm")), DataError);
}
