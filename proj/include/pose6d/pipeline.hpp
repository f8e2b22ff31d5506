// End-to-end orchestration: configuration, canonical table precomputation,
// dataset generation, the detect -> lift -> refine -> verify pipeline, and
// evaluation. All stages are deterministic for a fixed config and seed:
// per-frame work is parallelized with indexed result slots, RNG streams are
// derived per frame, and outputs contain no timing or machine information.
#pragma once

#include <chrono>

#include "pose6d/refine.hpp"
#include "pose6d/synth.hpp"

namespace pose6d {

enum class RefineMode { None, Edges, Icp, Both };
enum class DetectorMode { Oracle, External };

inline std::string to_string(RefineMode m) {
  switch (m) {
    case RefineMode::None: return "none";
    case RefineMode::Edges: return "edges";
    case RefineMode::Icp: return "icp";
    case RefineMode::Both: return "both";
  }
  return "none";
}

inline RefineMode refine_mode_from_string(const std::string& s) {
  if (s == "none") return RefineMode::None;
  if (s == "edges") return RefineMode::Edges;
  if (s == "icp") return RefineMode::Icp;
  if (s == "both") return RefineMode::Both;
  throw ConfigError("unknown refine mode: " + s);
}

struct ModelConfig {
  std::string name;
  std::string mesh_path;
  SymmetryClass symmetry = SymmetryClass::None;
};

struct ViewSpaceConfig {
  int level = 2;
  bool hemisphere = true;
  InplaneRange inplane;
};

struct PipelineConfig {
  CameraIntrinsics cam;
  std::vector<ModelConfig> models;
  ViewSpaceConfig viewspace;
  double canonical_z = 0.5;

  std::string tables_dir;
  std::string dataset_dir;
  std::string results_path;
  std::string metrics_dir;

  std::optional<PriorConfig> priors;  // nullopt = default for the camera size

  int v_parse = 3, r_parse = 3;
  double detection_threshold = 0.5;
  double nms_iou = 0.45;

  RefineMode refine_mode = RefineMode::Icp;
  RefineConfig refine;

  DetectorMode detector = DetectorMode::Oracle;
  OracleConfig oracle;
  std::string scores_dir;  // external detector tensors, frames/NNNNNN.{bin,json}

  SceneSpec scene;
  int frames = 10;
  double eval_max_occlusion = 0.9;  // annotations hidden beyond this do not count as gt
  uint64_t seed = 1;
  int threads = 1;
};

inline void to_json(json& j, const RefineConfig& c) {
  j = json{{"rounds", c.rounds},
           {"max_inner_iters", c.max_inner_iters},
           {"search_radius_px", c.search_radius_px},
           {"search_step_px", c.search_step_px},
           {"gm_scale_px", c.gm_scale_px},
           {"depth_gate_m", c.depth_gate_m},
           {"normal_gate_deg", c.normal_gate_deg},
           {"min_correspondences", c.min_correspondences}};
}

inline void from_json(const json& j, RefineConfig& c) {
  c.rounds = j.value("rounds", c.rounds);
  c.max_inner_iters = j.value("max_inner_iters", c.max_inner_iters);
  c.search_radius_px = j.value("search_radius_px", c.search_radius_px);
  c.search_step_px = j.value("search_step_px", c.search_step_px);
  c.gm_scale_px = j.value("gm_scale_px", c.gm_scale_px);
  c.depth_gate_m = j.value("depth_gate_m", c.depth_gate_m);
  c.normal_gate_deg = j.value("normal_gate_deg", c.normal_gate_deg);
  c.min_correspondences = j.value("min_correspondences", c.min_correspondences);
}

inline void to_json(json& j, const OracleConfig& c) {
  j = json{{"corner_sigma_px", c.corner_sigma_px},
           {"view_confusion", c.view_confusion},
           {"inplane_confusion", c.inplane_confusion},
           {"fp_rate", c.fp_rate},
           {"max_occlusion", c.max_occlusion},
           {"num_classes", c.num_classes}};
}

inline void from_json(const json& j, OracleConfig& c) {
  c.corner_sigma_px = j.value("corner_sigma_px", c.corner_sigma_px);
  c.view_confusion = j.value("view_confusion", c.view_confusion);
  c.inplane_confusion = j.value("inplane_confusion", c.inplane_confusion);
  c.fp_rate = j.value("fp_rate", c.fp_rate);
  c.max_occlusion = j.value("max_occlusion", c.max_occlusion);
  c.num_classes = j.value("num_classes", c.num_classes);
}

inline void to_json(json& j, const SceneSpec& s) {
  j = json{{"min_instances", s.min_instances},
           {"max_instances", s.max_instances},
           {"z_min", s.z_min},
           {"z_max", s.z_max},
           {"center_margin", s.center_margin},
           {"random_azimuth_spin", s.random_azimuth_spin},
           {"brightness_jitter", s.brightness_jitter},
           {"contrast_jitter", s.contrast_jitter},
           {"background_rects", s.background_rects},
           {"background_dir", s.background_dir}};
}

inline void from_json(const json& j, SceneSpec& s) {
  s.min_instances = j.value("min_instances", s.min_instances);
  s.max_instances = j.value("max_instances", s.max_instances);
  s.z_min = j.value("z_min", s.z_min);
  s.z_max = j.value("z_max", s.z_max);
  s.center_margin = j.value("center_margin", s.center_margin);
  s.random_azimuth_spin = j.value("random_azimuth_spin", s.random_azimuth_spin);
  s.brightness_jitter = j.value("brightness_jitter", s.brightness_jitter);
  s.contrast_jitter = j.value("contrast_jitter", s.contrast_jitter);
  s.background_rects = j.value("background_rects", s.background_rects);
  s.background_dir = j.value("background_dir", s.background_dir);
}

inline void to_json(json& j, const ModelConfig& m) {
  j = json{{"name", m.name}, {"mesh", m.mesh_path}, {"symmetry", to_string(m.symmetry)}};
}

inline void from_json(const json& j, ModelConfig& m) {
  m.name = j.at("name").get<std::string>();
  m.mesh_path = j.at("mesh").get<std::string>();
  m.symmetry = symmetry_from_string(j.value("symmetry", std::string("none")));
}

inline void to_json(json& j, const ViewSpaceConfig& v) {
  j = json{{"level", v.level},
           {"hemisphere", v.hemisphere},
           {"inplane", {{"min", v.inplane.min_deg}, {"max", v.inplane.max_deg},
                        {"step", v.inplane.step_deg}}}};
}

inline void from_json(const json& j, ViewSpaceConfig& v) {
  v.level = j.value("level", v.level);
  v.hemisphere = j.value("hemisphere", v.hemisphere);
  if (j.contains("inplane")) {
    const json& r = j.at("inplane");
    v.inplane.min_deg = r.value("min", v.inplane.min_deg);
    v.inplane.max_deg = r.value("max", v.inplane.max_deg);
    v.inplane.step_deg = r.value("step", v.inplane.step_deg);
  }
}

inline void to_json(json& j, const PipelineConfig& c) {
  j = json{{"camera", c.cam},
           {"models", c.models},
           {"viewspace", c.viewspace},
           {"canonical_z", c.canonical_z},
           {"tables_dir", c.tables_dir},
           {"dataset_dir", c.dataset_dir},
           {"results_path", c.results_path},
           {"metrics_dir", c.metrics_dir},
           {"v_parse", c.v_parse},
           {"r_parse", c.r_parse},
           {"detection_threshold", c.detection_threshold},
           {"nms_iou", c.nms_iou},
           {"refine_mode", to_string(c.refine_mode)},
           {"refine", c.refine},
           {"detector", c.detector == DetectorMode::Oracle ? "oracle" : "external"},
           {"oracle", c.oracle},
           {"scores_dir", c.scores_dir},
           {"scene", c.scene},
           {"frames", c.frames},
           {"eval_max_occlusion", c.eval_max_occlusion},
           {"seed", c.seed},
           {"threads", c.threads}};
  if (c.priors) j["priors"] = *c.priors;
}

inline void from_json(const json& j, PipelineConfig& c) {
  c.cam = j.at("camera").get<CameraIntrinsics>();
  c.models = j.at("models").get<std::vector<ModelConfig>>();
  if (c.models.empty()) throw ConfigError("pipeline config: no models");
  if (j.contains("viewspace")) c.viewspace = j.at("viewspace").get<ViewSpaceConfig>();
  c.canonical_z = j.value("canonical_z", c.canonical_z);
  c.tables_dir = j.value("tables_dir", c.tables_dir);
  c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
  c.results_path = j.value("results_path", c.results_path);
  c.metrics_dir = j.value("metrics_dir", c.metrics_dir);
  if (j.contains("priors") && !j.at("priors").is_string())
    c.priors = j.at("priors").get<PriorConfig>();
  c.v_parse = j.value("v_parse", c.v_parse);
  c.r_parse = j.value("r_parse", c.r_parse);
  c.detection_threshold = j.value("detection_threshold", c.detection_threshold);
  c.nms_iou = j.value("nms_iou", c.nms_iou);
  c.refine_mode = refine_mode_from_string(j.value("refine_mode", std::string("icp")));
  if (j.contains("refine")) c.refine = j.at("refine").get<RefineConfig>();
  std::string det = j.value("detector", std::string("oracle"));
  if (det == "oracle")
    c.detector = DetectorMode::Oracle;
  else if (det == "external")
    c.detector = DetectorMode::External;
  else
    throw ConfigError("unknown detector mode: " + det);
  if (j.contains("oracle")) c.oracle = j.at("oracle").get<OracleConfig>();
  c.scores_dir = j.value("scores_dir", c.scores_dir);
  if (j.contains("scene")) c.scene = j.at("scene").get<SceneSpec>();
  c.frames = j.value("frames", c.frames);
  c.eval_max_occlusion = j.value("eval_max_occlusion", c.eval_max_occlusion);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (c.frames < 0 || c.threads < 1 || c.v_parse < 1 || c.r_parse < 1)
    throw ConfigError("pipeline config: bad counts");
  c.oracle.num_classes = int(c.models.size());
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  try {
    return j.get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config field error in " + path + ": " + e.what());
  }
}

// Independent deterministic seed for (stream, index) derived from a base
// seed; streams keep dataset generation and detector noise decoupled.
inline uint64_t derive_seed(uint64_t base, uint64_t stream, uint64_t index) {
  uint64_t z = base ^ (stream * 0xd1342543de82ef95ULL) ^ (index * 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline ViewSpace build_base_viewspace(const PipelineConfig& cfg) {
  return build_viewspace(cfg.viewspace.level, cfg.viewspace.hemisphere, SymmetryClass::None,
                         cfg.viewspace.inplane);
}

// Everything loaded/derived from the config that the stages share.
struct PipelineContext {
  PipelineConfig cfg;
  ViewSpace base_vs;
  std::vector<SceneModel> models;
  std::vector<std::vector<int>> valid_ids;  // per class
  std::vector<CanonicalTable> tables;       // per class, over the base space
};

namespace detail {

inline std::string table_path(const PipelineConfig& cfg, const std::string& model_name) {
  return (std::filesystem::path(cfg.tables_dir) / (model_name + "_table.json")).string();
}

inline void check_same_camera(const CameraIntrinsics& a, const CameraIntrinsics& b,
                              const std::string& what) {
  if (a.fx != b.fx || a.fy != b.fy || a.cx != b.cx || a.cy != b.cy || a.width != b.width ||
      a.height != b.height)
    throw ConfigError(what + " was built for a different camera; rerun the canonical stage");
}

}  // namespace detail

inline PipelineContext load_context(const PipelineConfig& cfg, bool need_tables) {
  validate(cfg.cam);
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.base_vs = build_base_viewspace(cfg);
  for (const ModelConfig& mc : cfg.models) {
    SceneModel m;
    m.name = mc.name;
    m.symmetry = mc.symmetry;
    m.mesh = load_ply(mc.mesh_path);
    ctx.models.push_back(std::move(m));
    ctx.valid_ids.push_back(symmetry_valid_ids(ctx.base_vs.views, mc.symmetry));
  }
  if (need_tables) {
    for (const ModelConfig& mc : cfg.models) {
      std::string path = detail::table_path(cfg, mc.name);
      std::ifstream in(path);
      if (!in)
        throw ConfigError("missing canonical table " + path +
                          "; run the 'canonical' stage for this config first");
      CanonicalTable t;
      try {
        t = json::parse(in, nullptr, true, true).get<CanonicalTable>();
      } catch (const json::exception& e) {
        throw DataError("bad canonical table " + path + ": " + e.what());
      }
      detail::check_same_camera(t.cam, cfg.cam, "canonical table " + path);
      if (t.n_views != int(ctx.base_vs.views.size()) ||
          t.n_inplane != int(ctx.base_vs.inplane_bins.size()))
        throw ConfigError("canonical table " + path + " does not match the view space size");
      ctx.tables.push_back(std::move(t));
    }
  }
  return ctx;
}

// Stage: canonical render tables, one per model over the base view space.
inline void precompute_tables(const PipelineConfig& cfg) {
  PipelineContext ctx = load_context(cfg, false);
  std::filesystem::create_directories(cfg.tables_dir);
  for (size_t m = 0; m < ctx.models.size(); ++m) {
    CanonicalTable t = precompute_canonical(ctx.models[m].mesh, ctx.base_vs, cfg.cam,
                                            cfg.canonical_z, cfg.threads);
    std::ofstream out(detail::table_path(cfg, ctx.models[m].name));
    if (!out) throw DataError("cannot write canonical table for " + ctx.models[m].name);
    out << json(t).dump() << '\n';
  }
}

// Stage: synthetic dataset.
inline void generate_dataset(const PipelineConfig& cfg) {
  PipelineContext ctx = load_context(cfg, false);
  if (cfg.dataset_dir.empty()) throw ConfigError("dataset_dir is not set");
  DatasetManifest manifest;
  manifest.cam = cfg.cam;
  manifest.num_frames = cfg.frames;
  for (const auto& m : cfg.models) manifest.class_names.push_back(m.name);
  save_manifest(manifest, cfg.dataset_dir);
  parallel_for(size_t(cfg.frames), cfg.threads, [&](size_t f) {
    SynthFrame frame = generate_scene(cfg.scene, ctx.models, ctx.base_vs, cfg.cam,
                                      derive_seed(cfg.seed, 1, f));
    save_frame(frame, cfg.dataset_dir, int(f));
  });
}

struct DetectionResult {
  int cls = 1;
  double score = 0;
  Box box;
  Pose pose;
  double verify = 0;
  int view_id = -1;
  int inplane_id = -1;
  bool refined = false;
  double residual = 0;
};

struct FrameResult {
  std::vector<DetectionResult> detections;
};

struct RunResults {
  std::vector<std::string> class_names;
  std::string refine_mode;
  std::vector<FrameResult> frames;
};

inline void to_json(json& j, const DetectionResult& d) {
  j = json{{"cls", d.cls},           {"score", d.score},   {"box", d.box},
           {"pose", d.pose},         {"verify", d.verify}, {"view_id", d.view_id},
           {"inplane_id", d.inplane_id}, {"refined", d.refined}, {"residual", d.residual}};
}

inline void from_json(const json& j, DetectionResult& d) {
  d.cls = j.at("cls").get<int>();
  d.score = j.at("score").get<double>();
  d.box = j.at("box").get<Box>();
  d.pose = j.at("pose").get<Pose>();
  d.verify = j.at("verify").get<double>();
  d.view_id = j.at("view_id").get<int>();
  d.inplane_id = j.at("inplane_id").get<int>();
  d.refined = j.at("refined").get<bool>();
  d.residual = j.at("residual").get<double>();
}

inline void to_json(json& j, const FrameResult& f) { j = json{{"detections", f.detections}}; }

inline void from_json(const json& j, FrameResult& f) {
  f.detections = j.at("detections").get<std::vector<DetectionResult>>();
}

inline void to_json(json& j, const RunResults& r) {
  j = json{{"classes", r.class_names}, {"refine_mode", r.refine_mode}, {"frames", r.frames}};
}

inline void from_json(const json& j, RunResults& r) {
  r.class_names = j.at("classes").get<std::vector<std::string>>();
  r.refine_mode = j.at("refine_mode").get<std::string>();
  r.frames = j.at("frames").get<std::vector<FrameResult>>();
}

// Stage: detect, lift, refine, verify each frame of the dataset. Results are
// fully deterministic for a fixed config; wall-clock timing goes to stderr
// only so reruns are byte-identical.
inline RunResults run_pipeline(const PipelineConfig& cfg) {
  PipelineContext ctx = load_context(cfg, true);
  if (cfg.dataset_dir.empty()) throw ConfigError("dataset_dir is not set");
  DatasetManifest manifest = load_manifest(cfg.dataset_dir);
  detail::check_same_camera(manifest.cam, cfg.cam, "dataset " + cfg.dataset_dir);

  std::vector<Box> priors;
  PriorConfig prior_cfg;
  if (cfg.detector == DetectorMode::External) {
    prior_cfg = cfg.priors ? *cfg.priors : default_prior_config(cfg.cam.width, cfg.cam.height);
    priors = generate_priors(prior_cfg);
    if (cfg.scores_dir.empty()) throw ConfigError("external detector needs scores_dir");
  }

  RunResults results;
  results.class_names = manifest.class_names;
  results.refine_mode = to_string(cfg.refine_mode);
  results.frames.resize(manifest.num_frames);

  auto t0 = std::chrono::steady_clock::now();
  parallel_for(size_t(manifest.num_frames), cfg.threads, [&](size_t f) {
    SynthFrame frame = load_frame(cfg.dataset_dir, int(f));

    std::vector<Detection> dets;
    if (cfg.detector == DetectorMode::Oracle) {
      dets = oracle_detector(frame.annotations, ctx.valid_ids, ctx.base_vs, cfg.cam, cfg.oracle,
                             derive_seed(cfg.seed, 2, f));
    } else {
      ScoreTensor t = load_scores(
          (std::filesystem::path(cfg.scores_dir) / detail::frame_stem(int(f))).string());
      dets = parse_detections(t, priors, cfg.detection_threshold, cfg.cam.width, cfg.cam.height);
    }
    std::vector<Detection> kept;
    for (Detection& d : dets)
      if (d.score >= cfg.detection_threshold && d.box.diagonal() >= 2.0 && d.cls >= 1 &&
          d.cls <= int(ctx.models.size()))
        kept.push_back(std::move(d));
    kept = nms(std::move(kept), cfg.nms_iou);

    bool need_edges =
        cfg.refine_mode == RefineMode::None || cfg.refine_mode == RefineMode::Edges ||
        cfg.refine_mode == RefineMode::Both;
    bool need_depth = cfg.refine_mode == RefineMode::Icp || cfg.refine_mode == RefineMode::Both;
    EdgeMap edges;
    if (need_edges) edges = scene_edges(frame.image);
    Image<Eigen::Vector3f> scene_normals;
    if (need_depth) scene_normals = depth_to_normals(frame.depth, cfg.cam);

    FrameResult& fr = results.frames[f];
    for (const Detection& det : kept) {
      int cls_idx = det.cls - 1;
      const TriMesh& mesh = ctx.models[cls_idx].mesh;
      HypothesisPool pool = build_pool(det, ctx.base_vs, ctx.tables[cls_idx], cfg.cam,
                                       cfg.v_parse, cfg.r_parse, &ctx.valid_ids[cls_idx]);

      std::vector<Pose> refined(pool.hypotheses.size());
      std::vector<bool> applied(pool.hypotheses.size(), false);
      std::vector<double> residual(pool.hypotheses.size(), 0.0);
      std::vector<double> scores(pool.hypotheses.size(), 0.0);
      for (size_t h = 0; h < pool.hypotheses.size(); ++h) {
        Pose pose = pool.hypotheses[h].pose;
        if (cfg.refine_mode == RefineMode::Edges || cfg.refine_mode == RefineMode::Both) {
          RefineResult r = refine_edges(pose, mesh, edges, cfg.cam, cfg.refine);
          pose = r.pose;
          applied[h] = applied[h] || r.applied;
          residual[h] = r.residual;
        }
        if (cfg.refine_mode == RefineMode::Icp || cfg.refine_mode == RefineMode::Both) {
          RefineResult r =
              refine_icp(pose, mesh, frame.depth, scene_normals, cfg.cam, cfg.refine);
          pose = r.pose;
          applied[h] = applied[h] || r.applied;
          residual[h] = r.residual;
        }
        refined[h] = pose;
        scores[h] = need_depth
                        ? verify_normals(pose, mesh, frame.depth, scene_normals, cfg.cam)
                        : verify_contour(pose, mesh, edges, cfg.cam);
      }
      int best = select_best(scores);
      DetectionResult dr;
      dr.cls = det.cls;
      dr.score = det.score;
      dr.box = det.box;
      dr.pose = refined[best];
      dr.verify = scores[best];
      dr.view_id = pool.hypotheses[best].view_id;
      dr.inplane_id = pool.hypotheses[best].inplane_id;
      dr.refined = applied[best];
      dr.residual = residual[best];
      fr.detections.push_back(dr);
    }
  });
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[run] %d frames in %.2fs (%s refine)\n", manifest.num_frames, elapsed,
               results.refine_mode.c_str());

  if (!cfg.results_path.empty()) {
    std::filesystem::path p(cfg.results_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(cfg.results_path);
    if (!out) throw DataError("cannot write results to " + cfg.results_path);
    out << json(results).dump(2) << '\n';
  }
  return results;
}

struct ClassSummary {
  std::string name;
  int gt_count = 0;
  int matched = 0;
  double mean_vss = 0;
  double mean_iou2d = 0;
  double iou2d_correct_rate = 0;
  double mean_add = 0;
  double add_correct_rate = 0;
};

struct EvalSummary {
  DetectionPoint at_threshold;
  double ap = 0;
  std::vector<ClassSummary> per_class;
};

inline void to_json(json& j, const ClassSummary& c) {
  j = json{{"name", c.name},
           {"gt_count", c.gt_count},
           {"matched", c.matched},
           {"mean_vss", c.mean_vss},
           {"mean_iou2d", c.mean_iou2d},
           {"iou2d_correct_rate", c.iou2d_correct_rate},
           {"mean_add", c.mean_add},
           {"add_correct_rate", c.add_correct_rate}};
}

// Stage: score a results file against dataset ground truth. Detection
// precision/recall/F1 at the configured threshold plus AP, and pose metrics
// (VSS, 2D projection IoU, ADD) over greedily matched detections.
inline EvalSummary evaluate(const PipelineConfig& cfg) {
  PipelineContext ctx = load_context(cfg, false);
  DatasetManifest manifest = load_manifest(cfg.dataset_dir);
  detail::check_same_camera(manifest.cam, cfg.cam, "dataset " + cfg.dataset_dir);
  std::ifstream in(cfg.results_path);
  if (!in) throw DataError("cannot open results: " + cfg.results_path);
  RunResults results;
  try {
    results = json::parse(in, nullptr, true, true).get<RunResults>();
  } catch (const json::exception& e) {
    throw DataError("bad results file " + cfg.results_path + ": " + e.what());
  }
  if (int(results.frames.size()) != manifest.num_frames)
    throw DataError("results frame count does not match the dataset");

  std::vector<EvalRecord> records(manifest.num_frames);
  for (int f = 0; f < manifest.num_frames; ++f) {
    SynthFrame frame = load_frame(cfg.dataset_dir, f);
    for (const Annotation& a : frame.annotations) {
      if (a.occlusion >= cfg.eval_max_occlusion) continue;
      records[f].gt.push_back(GtInstance{a.cls, a.box, a.pose});
    }
    for (const DetectionResult& d : results.frames[f].detections)
      records[f].pred.push_back(PredInstance{d.cls, d.score, d.box, d.pose});
  }

  EvalSummary summary;
  summary.at_threshold = detection_point(records, cfg.detection_threshold);
  summary.ap = average_precision(records);

  struct Acc {
    int gt = 0, matched = 0;
    double vss_sum = 0, iou_sum = 0, add_sum = 0;
    int iou_ok = 0, add_ok = 0;
  };
  std::vector<Acc> acc(ctx.models.size());
  struct Row {
    int frame, cls;
    double score, vss_v, iou_v, add_v;
    bool add_ok, iou_ok;
  };
  std::vector<std::vector<Row>> rows(manifest.num_frames);

  parallel_for(size_t(manifest.num_frames), cfg.threads, [&](size_t f) {
    EvalRecord kept;
    kept.gt = records[f].gt;
    for (const PredInstance& p : records[f].pred)
      if (p.score >= cfg.detection_threshold) kept.pred.push_back(p);
    std::vector<int> match = greedy_match(kept);
    for (size_t i = 0; i < kept.pred.size(); ++i) {
      if (match[i] < 0) continue;
      const PredInstance& p = kept.pred[i];
      const GtInstance& g = kept.gt[match[i]];
      const TriMesh& mesh = ctx.models[p.cls - 1].mesh;
      double v = vss(g.pose, p.pose, mesh, cfg.cam);
      PoseScore iou = pose_iou2d(g.pose, p.pose, mesh, cfg.cam);
      PoseScore ad = add_score(g.pose, p.pose, mesh);
      rows[f].push_back(Row{int(f), p.cls, p.score, v, iou.value, ad.value, ad.correct, iou.correct});
    }
  });
  for (int f = 0; f < manifest.num_frames; ++f) {
    for (const GtInstance& g : records[f].gt) acc[g.cls - 1].gt += 1;
    for (const Row& r : rows[f]) {
      Acc& a = acc[r.cls - 1];
      a.matched += 1;
      a.vss_sum += r.vss_v;
      a.iou_sum += r.iou_v;
      a.add_sum += r.add_v;
      a.iou_ok += r.iou_ok;
      a.add_ok += r.add_ok;
    }
  }
  for (size_t c = 0; c < acc.size(); ++c) {
    ClassSummary cs;
    cs.name = manifest.class_names[c];
    cs.gt_count = acc[c].gt;
    cs.matched = acc[c].matched;
    if (acc[c].matched > 0) {
      cs.mean_vss = acc[c].vss_sum / acc[c].matched;
      cs.mean_iou2d = acc[c].iou_sum / acc[c].matched;
      cs.mean_add = acc[c].add_sum / acc[c].matched;
      cs.iou2d_correct_rate = double(acc[c].iou_ok) / acc[c].matched;
      cs.add_correct_rate = double(acc[c].add_ok) / acc[c].matched;
    }
    summary.per_class.push_back(cs);
  }

  if (!cfg.metrics_dir.empty()) {
    std::filesystem::create_directories(cfg.metrics_dir);
    std::filesystem::path dir(cfg.metrics_dir);
    {
      json js{{"precision", summary.at_threshold.precision},
              {"recall", summary.at_threshold.recall},
              {"f1", summary.at_threshold.f1},
              {"tp", summary.at_threshold.tp},
              {"fp", summary.at_threshold.fp},
              {"fn", summary.at_threshold.fn},
              {"threshold", summary.at_threshold.threshold},
              {"ap", summary.ap},
              {"per_class", summary.per_class}};
      std::ofstream out(dir / "summary.json");
      if (!out) throw DataError("cannot write metrics summary");
      out << js.dump(2) << '\n';
    }
    {
      std::ofstream out(dir / "curve.csv");
      out << "threshold,precision,recall,f1,tp,fp,fn\n";
      for (int k = 0; k < 20; ++k) {
        DetectionPoint p = detection_point(records, k / 20.0);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.2f,%.6f,%.6f,%.6f,%d,%d,%d\n", p.threshold,
                      p.precision, p.recall, p.f1, p.tp, p.fp, p.fn);
        out << buf;
      }
    }
    {
      std::ofstream out(dir / "per_frame.csv");
      out << "frame,cls,score,vss,iou2d,iou2d_correct,add,add_correct\n";
      for (const auto& fr : rows)
        for (const Row& r : fr) {
          char buf[200];
          std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%d,%.6f,%d\n", r.frame, r.cls,
                        r.score, r.vss_v, r.iou_v, int(r.iou_ok), r.add_v, int(r.add_ok));
          out << buf;
        }
    }
  }
  return summary;
}

}  // namespace pose6d
