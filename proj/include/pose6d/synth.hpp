// Synthetic RGB-D scene generation with exact annotations, a noise-model
// oracle detector standing in for a trained network, and dataset I/O.
#pragma once

#include <filesystem>
#include <iomanip>

#include "pose6d/lifting.hpp"
#include "pose6d/metrics.hpp"

namespace pose6d {

struct SceneModel {
  std::string name;
  SymmetryClass symmetry = SymmetryClass::None;
  TriMesh mesh;
};

struct SceneSpec {
  int min_instances = 1;
  int max_instances = 1;
  double z_min = 0.5;
  double z_max = 1.0;
  double center_margin = 0.15;   // fraction of each image dimension kept clear
  bool random_azimuth_spin = false;  // Symmetric models only: random model-z spin
  double brightness_jitter = 0.0;
  double contrast_jitter = 0.0;
  int background_rects = 6;
  std::string background_dir;    // pick PPM files instead of procedural noise
};

struct Annotation {
  int cls = 1;        // 1-based model index
  Pose pose;
  Box box;            // tight box of the instance's own (unoccluded) render
  int view_id = -1;   // base view-space ids
  int inplane_id = -1;
  double occlusion = 0.0;  // fraction of the instance's pixels hidden
};

struct SynthFrame {
  ColorImage image;
  Image<double> depth;  // composited instance depth; background = 0
  std::vector<Annotation> annotations;
};

namespace detail {

inline ColorImage procedural_background(int w, int h, int rects, Rng& rng) {
  // Bilinearly upsampled random lattice, then a few flat rectangles for
  // stronger edges.
  const int gw = 16, gh = 12;
  std::vector<std::array<float, 3>> lattice(size_t(gw) * gh);
  for (auto& c : lattice)
    for (int k = 0; k < 3; ++k) c[k] = float(rng.uniform(0.15, 0.85));
  ColorImage img(w, h);
  for (int y = 0; y < h; ++y) {
    double gy = double(y) / h * (gh - 1);
    int y0 = int(gy);
    int y1 = std::min(gh - 1, y0 + 1);
    double fy = gy - y0;
    for (int x = 0; x < w; ++x) {
      double gx = double(x) / w * (gw - 1);
      int x0 = int(gx);
      int x1 = std::min(gw - 1, x0 + 1);
      double fx = gx - x0;
      for (int k = 0; k < 3; ++k) {
        double v00 = lattice[size_t(y0) * gw + x0][k], v10 = lattice[size_t(y0) * gw + x1][k];
        double v01 = lattice[size_t(y1) * gw + x0][k], v11 = lattice[size_t(y1) * gw + x1][k];
        img.at(x, y)[k] = float((1 - fy) * ((1 - fx) * v00 + fx * v10) +
                                fy * ((1 - fx) * v01 + fx * v11));
      }
    }
  }
  for (int r = 0; r < rects; ++r) {
    int rw = 20 + rng.uniform_int(std::max(1, w / 4));
    int rh = 20 + rng.uniform_int(std::max(1, h / 4));
    int rx = rng.uniform_int(std::max(1, w - rw));
    int ry = rng.uniform_int(std::max(1, h - rh));
    std::array<float, 3> c;
    for (int k = 0; k < 3; ++k) c[k] = float(rng.uniform(0.1, 0.9));
    for (int y = ry; y < std::min(h, ry + rh); ++y)
      for (int x = rx; x < std::min(w, rx + rw); ++x) img.at(x, y) = c;
  }
  return img;
}

inline ColorImage background_from_dir(const std::string& dir, int w, int h, Rng& rng) {
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".ppm") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .ppm backgrounds in " + dir);
  ColorImage src = read_ppm(files[rng.uniform_int(int(files.size()))]);
  ColorImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = src.at(std::min(src.width - 1, x * src.width / w),
                            std::min(src.height - 1, y * src.height / h));
  return img;
}

inline Mat3 rot_z(double rad) {
  Mat3 m;
  m << std::cos(rad), -std::sin(rad), 0, std::sin(rad), std::cos(rad), 0, 0, 0, 1;
  return m;
}

}  // namespace detail

// Generates one frame. Sampling order per instance (fixed for determinism):
// model, view cell, continuous in-plane angle, optional azimuth spin, depth,
// centroid pixel. Instances are rendered separately and composited by
// nearest depth; annotation boxes are the instances' own tight boxes, so
// they describe the full object even under occlusion.
inline SynthFrame generate_scene(const SceneSpec& spec, const std::vector<SceneModel>& models,
                                 const ViewSpace& base_vs, const CameraIntrinsics& cam,
                                 uint64_t seed) {
  validate(cam);
  if (models.empty()) throw ConfigError("generate_scene: no models");
  if (spec.min_instances < 0 || spec.max_instances < spec.min_instances)
    throw ConfigError("generate_scene: bad instance range");
  if (!(spec.z_min > 0) || spec.z_max < spec.z_min)
    throw ConfigError("generate_scene: bad depth range");
  Rng rng(seed);

  struct Placed {
    int model = 0;
    Pose pose;
    RenderBuffers rb;
    size_t full_px = 0;
  };
  int n = spec.min_instances + rng.uniform_int(spec.max_instances - spec.min_instances + 1);
  std::vector<Placed> placed;
  for (int i = 0; i < n; ++i) {
    Placed pl;
    pl.model = rng.uniform_int(int(models.size()));
    const SceneModel& m = models[pl.model];
    std::vector<int> valid = symmetry_valid_ids(base_vs.views, m.symmetry);
    int view = valid[rng.uniform_int(int(valid.size()))];
    double roll = rng.uniform(base_vs.inplane_bins.front(), base_vs.inplane_bins.back());
    Mat3 r = view_rotation(base_vs.views[view], roll).toRotationMatrix();
    if (spec.random_azimuth_spin && m.symmetry == SymmetryClass::Symmetric)
      r = r * detail::rot_z(rng.uniform(0.0, 2.0 * M_PI));
    double z = rng.uniform(spec.z_min, spec.z_max);
    Vec2 cpx(rng.uniform(spec.center_margin * cam.width, (1 - spec.center_margin) * cam.width),
             rng.uniform(spec.center_margin * cam.height, (1 - spec.center_margin) * cam.height));
    pl.pose = Pose::from_rotation(r, backproject(cpx, z, cam));
    pl.rb = render(m.mesh, pl.pose, cam);
    for (uint8_t v : pl.rb.mask.px) pl.full_px += v;
    placed.push_back(std::move(pl));
  }

  SynthFrame frame;
  frame.depth = Image<double>(cam.width, cam.height, 0.0);
  if (!spec.background_dir.empty())
    frame.image = detail::background_from_dir(spec.background_dir, cam.width, cam.height, rng);
  else
    frame.image = detail::procedural_background(cam.width, cam.height, spec.background_rects, rng);

  std::vector<size_t> visible(placed.size(), 0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      int winner = -1;
      double best_z = 0.0;
      for (size_t i = 0; i < placed.size(); ++i) {
        if (!placed[i].rb.mask.at(x, y)) continue;
        double z = placed[i].rb.depth.at(x, y);
        if (winner < 0 || z < best_z) {
          winner = int(i);
          best_z = z;
        }
      }
      if (winner >= 0) {
        frame.image.at(x, y) = placed[winner].rb.color.at(x, y);
        frame.depth.at(x, y) = best_z;
        ++visible[winner];
      }
    }
  }

  double brightness = spec.brightness_jitter > 0
                          ? rng.uniform(-spec.brightness_jitter, spec.brightness_jitter)
                          : 0.0;
  double contrast =
      spec.contrast_jitter > 0 ? 1.0 + rng.uniform(-spec.contrast_jitter, spec.contrast_jitter)
                               : 1.0;
  if (brightness != 0.0 || contrast != 1.0)
    for (auto& c : frame.image.px)
      for (int k = 0; k < 3; ++k)
        c[k] = float(std::clamp((c[k] - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0));

  for (size_t i = 0; i < placed.size(); ++i) {
    const SceneModel& m = models[placed[i].model];
    Annotation a;
    a.cls = placed[i].model + 1;
    a.pose = placed[i].pose;
    auto box = tight_mask_box(placed[i].rb.mask);
    a.box = box ? *box : Box{};
    a.occlusion =
        placed[i].full_px > 0 ? 1.0 - double(visible[i]) / double(placed[i].full_px) : 1.0;
    std::vector<int> valid = symmetry_valid_ids(base_vs.views, m.symmetry);
    ViewInplaneId id = assign_view_inplane_subset(placed[i].pose.q, base_vs, valid, m.symmetry);
    a.view_id = id.view_id;
    a.inplane_id = id.inplane_id;
    frame.annotations.push_back(a);
  }
  return frame;
}

struct OracleConfig {
  double corner_sigma_px = 0.0;   // N(0, sigma) on each box corner coordinate
  double view_confusion = 0.0;    // P(swap top view score with a near neighbor)
  double inplane_confusion = 0.0;
  double fp_rate = 0.0;           // P(one spurious detection per frame)
  double max_occlusion = 0.9;     // instances hidden beyond this are not emitted
  int num_classes = 1;
};

namespace detail {

// Peaked score vector: 1.0 at the target, 0.5 / 0.33 at its two nearest
// in-set neighbors, small noise elsewhere; normalized to sum 1. Confusion
// swaps the peak with one of the two neighbors, which keeps the target
// inside the top 3.
inline std::vector<double> oracle_scores(int size, int target,
                                         const std::vector<int>& neighbor_pool,
                                         double confusion, Rng& rng) {
  std::vector<double> s(size);
  for (auto& v : s) v = 0.02 * rng.uniform();
  s[target] = 1.0;
  std::vector<int> nn;
  for (int cand : neighbor_pool)
    if (cand != target) nn.push_back(cand);
  // neighbor_pool is pre-sorted by distance to target
  if (nn.size() > 0) s[nn[0]] = std::max(s[nn[0]], 0.5);
  if (nn.size() > 1) s[nn[1]] = std::max(s[nn[1]], 0.33);
  if (confusion > 0 && !nn.empty() && rng.uniform() < confusion) {
    int pick = nn[nn.size() > 1 ? rng.uniform_int(2) : 0];
    std::swap(s[target], s[pick]);
  }
  double sum = 0;
  for (double v : s) sum += v;
  for (auto& v : s) v /= sum;
  return s;
}

inline std::vector<int> nearest_views(const std::vector<Vec3>& views,
                                      const std::vector<int>& valid, int target, int count) {
  std::vector<std::pair<double, int>> d;
  for (int id : valid)
    if (id != target) d.emplace_back((views[id] - views[target]).squaredNorm(), id);
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int k = 0; k < int(d.size()) && k < count; ++k) out.push_back(d[k].second);
  return out;
}

}  // namespace detail

// Stands in for the trained detector: emits one detection per sufficiently
// visible instance with configurable box jitter and view / in-plane score
// confusion, plus optional spurious detections. Scores for views outside a
// class's valid subset stay at noise level.
inline std::vector<Detection> oracle_detector(const std::vector<Annotation>& annotations,
                                              const std::vector<std::vector<int>>& valid_ids_per_class,
                                              const ViewSpace& base_vs,
                                              const CameraIntrinsics& cam,
                                              const OracleConfig& cfg, uint64_t seed) {
  if (cfg.num_classes < 1) throw ConfigError("oracle_detector: need at least one class");
  if (int(valid_ids_per_class.size()) != cfg.num_classes)
    throw ConfigError("oracle_detector: valid-id lists must match num_classes");
  Rng rng(seed);
  std::vector<Detection> out;
  int v = int(base_vs.views.size());
  int r = int(base_vs.inplane_bins.size());

  for (const Annotation& a : annotations) {
    if (a.occlusion >= cfg.max_occlusion) continue;
    if (a.cls < 1 || a.cls > cfg.num_classes) throw DataError("oracle_detector: annotation class out of range");
    Detection d;
    d.cls = a.cls;
    Box b = a.box;
    if (cfg.corner_sigma_px > 0) {
      b.x0 += rng.normal(0, cfg.corner_sigma_px);
      b.y0 += rng.normal(0, cfg.corner_sigma_px);
      b.x1 += rng.normal(0, cfg.corner_sigma_px);
      b.y1 += rng.normal(0, cfg.corner_sigma_px);
    }
    b = clamp_box(b, cam.width, cam.height);
    if (b.x1 - b.x0 < 2.0) b.x1 = b.x0 + 2.0;
    if (b.y1 - b.y0 < 2.0) b.y1 = b.y0 + 2.0;
    d.box = b;
    d.score = 0.8 + 0.15 * rng.uniform();

    const std::vector<int>& valid = valid_ids_per_class[a.cls - 1];
    std::vector<int> vn = detail::nearest_views(base_vs.views, valid, a.view_id, 2);
    d.view_scores = detail::oracle_scores(v, a.view_id, vn, cfg.view_confusion, rng);
    std::vector<int> bn;
    if (a.inplane_id + 1 < r) bn.push_back(a.inplane_id + 1);
    if (a.inplane_id - 1 >= 0) bn.push_back(a.inplane_id - 1);
    d.inplane_scores = detail::oracle_scores(r, a.inplane_id, bn, cfg.inplane_confusion, rng);
    out.push_back(std::move(d));
  }

  if (cfg.fp_rate > 0 && rng.uniform() < cfg.fp_rate) {
    Detection d;
    d.cls = 1 + rng.uniform_int(cfg.num_classes);
    double w = rng.uniform(40, 120), h = rng.uniform(40, 120);
    double cx = rng.uniform(w / 2, cam.width - w / 2), cy = rng.uniform(h / 2, cam.height - h / 2);
    d.box = Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    d.score = rng.uniform(0.3, 0.7);
    const std::vector<int>& valid = valid_ids_per_class[d.cls - 1];
    int view = valid[rng.uniform_int(int(valid.size()))];
    int bin = rng.uniform_int(r);
    std::vector<int> vn = detail::nearest_views(base_vs.views, valid, view, 2);
    d.view_scores = detail::oracle_scores(v, view, vn, 0.0, rng);
    std::vector<int> bn;
    if (bin + 1 < r) bn.push_back(bin + 1);
    if (bin - 1 >= 0) bn.push_back(bin - 1);
    d.inplane_scores = detail::oracle_scores(r, bin, bn, 0.0, rng);
    out.push_back(std::move(d));
  }
  return out;
}

// Annotations -> matched training targets against a prior set.
inline TrainingTargets make_training_targets(const std::vector<Annotation>& annotations,
                                             const std::vector<Box>& priors) {
  std::vector<GtBox> gts;
  for (const Annotation& a : annotations) {
    if (!a.box.valid()) continue;
    gts.push_back(GtBox{a.box, a.cls, a.view_id, a.inplane_id});
  }
  return match_priors(priors, gts);
}

inline void to_json(json& j, const Annotation& a) {
  j = json{{"cls", a.cls},       {"pose", a.pose},         {"box", a.box},
           {"view_id", a.view_id}, {"inplane_id", a.inplane_id}, {"occlusion", a.occlusion}};
}

inline void from_json(const json& j, Annotation& a) {
  a.cls = j.at("cls").get<int>();
  a.pose = j.at("pose").get<Pose>();
  a.box = j.at("box").get<Box>();
  a.view_id = j.at("view_id").get<int>();
  a.inplane_id = j.at("inplane_id").get<int>();
  a.occlusion = j.at("occlusion").get<double>();
}

namespace detail {

inline std::string frame_stem(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", idx);
  return buf;
}

}  // namespace detail

struct DatasetManifest {
  CameraIntrinsics cam;
  int num_frames = 0;
  std::vector<std::string> class_names;
};

inline void to_json(json& j, const DatasetManifest& m) {
  j = json{{"camera", m.cam}, {"num_frames", m.num_frames}, {"classes", m.class_names}};
}

inline void from_json(const json& j, DatasetManifest& m) {
  m.cam = j.at("camera").get<CameraIntrinsics>();
  m.num_frames = j.at("num_frames").get<int>();
  m.class_names = j.at("classes").get<std::vector<std::string>>();
  if (m.num_frames < 0) throw DataError("dataset manifest: negative frame count");
}

inline void save_manifest(const DatasetManifest& m, const std::string& dir) {
  std::filesystem::create_directories(std::filesystem::path(dir) / "frames");
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.json");
  if (!in) throw DataError("cannot open manifest in " + dir);
  return json::parse(in, nullptr, true, true).get<DatasetManifest>();
}

inline void save_frame(const SynthFrame& frame, const std::string& dir, int idx) {
  auto base = std::filesystem::path(dir) / "frames" / detail::frame_stem(idx);
  write_ppm(frame.image, base.string() + ".ppm");
  write_depth_pgm(frame.depth, base.string() + "_depth.pgm");
  std::ofstream out(base.string() + ".json");
  if (!out) throw DataError("cannot write annotations for frame " + std::to_string(idx));
  out << json{{"annotations", frame.annotations}}.dump(2) << '\n';
}

inline SynthFrame load_frame(const std::string& dir, int idx) {
  auto base = std::filesystem::path(dir) / "frames" / detail::frame_stem(idx);
  SynthFrame frame;
  frame.image = read_ppm(base.string() + ".ppm");
  frame.depth = read_depth_pgm(base.string() + "_depth.pgm");
  std::ifstream in(base.string() + ".json");
  if (!in) throw DataError("cannot open annotations for frame " + std::to_string(idx));
  frame.annotations =
      json::parse(in, nullptr, true, true).at("annotations").get<std::vector<Annotation>>();
  return frame;
}

}  // namespace pose6d
