// End-to-end pipeline stages: config IO, provenance guards, stage wiring,
// determinism, and evaluation summaries on small synthetic runs.
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "pose6d/pipeline.hpp"
#include "pose6d/primitives.hpp"

using namespace pose6d;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Env {
  testutil::TempDir tmp;
  PipelineConfig cfg;
};

// Small single-model setup: house at a 320x240 camera, coarse view space,
// one instance per frame, zero detector noise unless a test overrides it.
void init_env(Env& e) {
  e.cfg.cam = testutil::test_cam(320, 240, 290.0);
  save_ply(make_house_mesh(), e.tmp.str("house.ply"));
  ModelConfig mc;
  mc.name = "house";
  mc.mesh_path = e.tmp.str("house.ply");
  e.cfg.models = {mc};
  e.cfg.viewspace.level = 1;
  e.cfg.viewspace.hemisphere = true;
  e.cfg.viewspace.inplane = InplaneRange{-45.0, 45.0, 15.0};
  e.cfg.tables_dir = e.tmp.str("tables");
  e.cfg.dataset_dir = e.tmp.str("data");
  e.cfg.results_path = e.tmp.str("results.json");
  e.cfg.metrics_dir = e.tmp.str("metrics");
  e.cfg.scene.min_instances = 1;
  e.cfg.scene.max_instances = 1;
  e.cfg.scene.z_min = 0.5;
  e.cfg.scene.z_max = 0.8;
  e.cfg.scene.center_margin = 0.3;
  e.cfg.scene.background_rects = 4;
  e.cfg.frames = 5;
  e.cfg.seed = 99;
}

std::string frame_stem(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", idx);
  return buf;
}

}  // namespace

TEST_CASE("pipeline config roundtrips through json", "[pipeline]") {
  Env e;
  init_env(e);
  PipelineConfig& cfg = e.cfg;
  cfg.canonical_z = 0.6;
  cfg.priors = default_prior_config(320, 240);
  cfg.v_parse = 2;
  cfg.r_parse = 4;
  cfg.detection_threshold = 0.35;
  cfg.nms_iou = 0.3;
  cfg.refine_mode = RefineMode::Both;
  cfg.refine.rounds = 12;
  cfg.refine.depth_gate_m = 0.07;
  cfg.detector = DetectorMode::External;
  cfg.scores_dir = e.tmp.str("scores");
  cfg.oracle.corner_sigma_px = 3.5;
  cfg.oracle.view_confusion = 0.25;
  cfg.scene.random_azimuth_spin = true;
  cfg.scene.brightness_jitter = 0.1;
  cfg.frames = 7;
  cfg.eval_max_occlusion = 0.7;
  cfg.seed = 42;
  cfg.threads = 2;

  json j = cfg;
  PipelineConfig back = j.get<PipelineConfig>();
  REQUIRE(json(back).dump() == j.dump());

  // File loading tolerates comments and reports each failure mode distinctly.
  std::string path = e.tmp.str("config.json");
  {
    std::ofstream out(path);
    out << "// tuned for tests\n" << j.dump(2) << '\n';
  }
  PipelineConfig loaded = load_pipeline_config(path);
  REQUIRE(json(loaded).dump() == j.dump());

  REQUIRE_THROWS_AS(load_pipeline_config(e.tmp.str("missing.json")), ConfigError);
  {
    std::ofstream out(e.tmp.str("broken.json"));
    out << "{ not json";
  }
  REQUIRE_THROWS_AS(load_pipeline_config(e.tmp.str("broken.json")), ConfigError);

  json no_models = j;
  no_models["models"] = json::array();
  REQUIRE_THROWS_AS(no_models.get<PipelineConfig>(), ConfigError);
  json bad_mode = j;
  bad_mode["refine_mode"] = "polish";
  REQUIRE_THROWS_AS(bad_mode.get<PipelineConfig>(), ConfigError);
  json bad_counts = j;
  bad_counts["threads"] = 0;
  REQUIRE_THROWS_AS(bad_counts.get<PipelineConfig>(), ConfigError);
  json bad_detector = j;
  bad_detector["detector"] = "magic";
  REQUIRE_THROWS_AS(bad_detector.get<PipelineConfig>(), ConfigError);
}

TEST_CASE("canonical tables guard their provenance", "[pipeline]") {
  Env e;
  init_env(e);

  REQUIRE_THROWS_WITH(load_context(e.cfg, true), ContainsSubstring("canonical"));

  precompute_tables(e.cfg);
  REQUIRE(std::filesystem::exists(e.tmp.path() / "tables" / "house_table.json"));

  PipelineContext ctx = load_context(e.cfg, true);
  REQUIRE(ctx.tables.size() == 1);
  REQUIRE(ctx.tables[0].n_views == int(ctx.base_vs.views.size()));
  REQUIRE(ctx.tables[0].n_inplane == int(ctx.base_vs.inplane_bins.size()));

  PipelineConfig other_cam = e.cfg;
  other_cam.cam.fx += 5.0;
  REQUIRE_THROWS_WITH(load_context(other_cam, true), ContainsSubstring("different camera"));

  PipelineConfig other_space = e.cfg;
  other_space.viewspace.level = 2;
  REQUIRE_THROWS_WITH(load_context(other_space, true), ContainsSubstring("view space"));

  {
    std::ofstream out(e.tmp.path() / "tables" / "house_table.json");
    out << "{ \"truncated\": tru";
  }
  REQUIRE_THROWS_AS(load_context(e.cfg, true), DataError);
}

TEST_CASE("dataset stage guards its inputs", "[pipeline]") {
  Env e;
  init_env(e);

  PipelineConfig no_dir = e.cfg;
  no_dir.dataset_dir = "";
  REQUIRE_THROWS_AS(generate_dataset(no_dir), ConfigError);

  generate_dataset(e.cfg);
  DatasetManifest manifest = load_manifest(e.cfg.dataset_dir);
  REQUIRE(manifest.num_frames == e.cfg.frames);
  REQUIRE(manifest.class_names == std::vector<std::string>{"house"});
  for (int f = 0; f < e.cfg.frames; ++f)
    REQUIRE(std::filesystem::exists(e.tmp.path() / "data" / "frames" / (frame_stem(f) + ".ppm")));

  // A config pointed at a dataset rendered with another camera must refuse.
  PipelineConfig other_cam = e.cfg;
  other_cam.cam.cx += 1.0;
  REQUIRE_THROWS_WITH(evaluate(other_cam), ContainsSubstring("different camera"));
}

TEST_CASE("zero-noise pipeline recovers ground truth cells", "[pipeline]") {
  Env e;
  init_env(e);
  e.cfg.v_parse = 1;
  e.cfg.r_parse = 1;
  e.cfg.refine_mode = RefineMode::None;
  e.cfg.frames = 6;

  precompute_tables(e.cfg);
  generate_dataset(e.cfg);
  RunResults results = run_pipeline(e.cfg);
  REQUIRE(int(results.frames.size()) == e.cfg.frames);
  REQUIRE(results.refine_mode == "none");

  for (int f = 0; f < e.cfg.frames; ++f) {
    SynthFrame frame = load_frame(e.cfg.dataset_dir, f);
    REQUIRE(frame.annotations.size() == 1);
    const Annotation& gt = frame.annotations[0];
    REQUIRE(results.frames[f].detections.size() == 1);
    const DetectionResult& det = results.frames[f].detections[0];

    // Zero corner noise reproduces the annotation box bit for bit, so the
    // parsed cell must be the ground-truth cell and the lift must land
    // within the discretization error of the view space.
    REQUIRE(det.cls == gt.cls);
    REQUIRE(det.box.x0 == gt.box.x0);
    REQUIRE(det.box.y0 == gt.box.y0);
    REQUIRE(det.box.x1 == gt.box.x1);
    REQUIRE(det.box.y1 == gt.box.y1);
    REQUIRE(det.view_id == gt.view_id);
    REQUIRE(det.inplane_id == gt.inplane_id);
    REQUIRE_FALSE(det.refined);
    REQUIRE(std::abs(det.pose.t.z() - gt.pose.t.z()) / gt.pose.t.z() < 0.06);
    REQUIRE((det.pose.t - gt.pose.t).norm() < 0.06);
    // The in-plane angle is continuous within its bin: at a 15 degree step
    // the lifted rotation is off by at most half a bin.
    REQUIRE(rotation_angle(det.pose.q, gt.pose.q) < 7.6 * M_PI / 180.0);
    REQUIRE(det.verify > 0.5);
  }
}

TEST_CASE("pipeline reruns are deterministic and thread-invariant", "[pipeline]") {
  Env e;
  init_env(e);
  e.cfg.refine_mode = RefineMode::None;
  e.cfg.scene.max_instances = 2;
  e.cfg.oracle.corner_sigma_px = 2.0;
  e.cfg.oracle.view_confusion = 0.3;
  e.cfg.oracle.fp_rate = 0.3;

  precompute_tables(e.cfg);
  generate_dataset(e.cfg);

  RunResults r1 = run_pipeline(e.cfg);
  RunResults r2 = run_pipeline(e.cfg);
  REQUIRE(json(r1).dump() == json(r2).dump());

  PipelineConfig threaded = e.cfg;
  threaded.threads = 3;
  RunResults r3 = run_pipeline(threaded);
  REQUIRE(json(r3).dump() == json(r1).dump());

  // The results file holds the same payload the call returned.
  std::ifstream in(e.cfg.results_path);
  REQUIRE(in.good());
  RunResults from_disk = json::parse(in).get<RunResults>();
  REQUIRE(json(from_disk).dump() == json(r1).dump());

  PipelineConfig reseeded = e.cfg;
  reseeded.seed += 1;
  RunResults r4 = run_pipeline(reseeded);
  REQUIRE(json(r4).dump() != json(r1).dump());
}

TEST_CASE("pipeline composes its stages exactly", "[pipeline]") {
  Env e;
  init_env(e);
  e.cfg.v_parse = 2;
  e.cfg.r_parse = 3;
  e.cfg.refine_mode = RefineMode::Edges;
  e.cfg.refine.rounds = 4;
  e.cfg.refine.max_inner_iters = 2;
  e.cfg.scene.max_instances = 2;
  e.cfg.oracle.corner_sigma_px = 3.0;
  e.cfg.oracle.view_confusion = 0.4;
  e.cfg.oracle.fp_rate = 0.5;
  e.cfg.frames = 4;

  precompute_tables(e.cfg);
  generate_dataset(e.cfg);
  RunResults results = run_pipeline(e.cfg);

  // Re-run the same stages by hand; every field must match bit for bit.
  PipelineContext ctx = load_context(e.cfg, true);
  for (int f = 0; f < e.cfg.frames; ++f) {
    SynthFrame frame = load_frame(e.cfg.dataset_dir, f);
    std::vector<Detection> dets =
        oracle_detector(frame.annotations, ctx.valid_ids, ctx.base_vs, e.cfg.cam, e.cfg.oracle,
                        derive_seed(e.cfg.seed, 2, f));
    std::vector<Detection> kept;
    for (Detection& d : dets)
      if (d.score >= e.cfg.detection_threshold && d.box.diagonal() >= 2.0 && d.cls >= 1 &&
          d.cls <= int(ctx.models.size()))
        kept.push_back(std::move(d));
    kept = nms(std::move(kept), e.cfg.nms_iou);
    EdgeMap edges = scene_edges(frame.image);

    REQUIRE(results.frames[f].detections.size() == kept.size());
    for (size_t k = 0; k < kept.size(); ++k) {
      const Detection& det = kept[k];
      const TriMesh& mesh = ctx.models[det.cls - 1].mesh;
      HypothesisPool pool = build_pool(det, ctx.base_vs, ctx.tables[det.cls - 1], e.cfg.cam,
                                       e.cfg.v_parse, e.cfg.r_parse, &ctx.valid_ids[det.cls - 1]);
      std::vector<Pose> poses(pool.hypotheses.size());
      std::vector<double> scores(pool.hypotheses.size());
      std::vector<bool> applied(pool.hypotheses.size());
      std::vector<double> residual(pool.hypotheses.size());
      for (size_t h = 0; h < pool.hypotheses.size(); ++h) {
        RefineResult r =
            refine_edges(pool.hypotheses[h].pose, mesh, edges, e.cfg.cam, e.cfg.refine);
        poses[h] = r.pose;
        applied[h] = r.applied;
        residual[h] = r.residual;
        scores[h] = verify_contour(r.pose, mesh, edges, e.cfg.cam);
      }
      int best = select_best(scores);

      const DetectionResult& got = results.frames[f].detections[k];
      REQUIRE(got.cls == det.cls);
      REQUIRE(got.score == det.score);
      REQUIRE(got.box.x0 == det.box.x0);
      REQUIRE(got.box.y1 == det.box.y1);
      REQUIRE(got.view_id == pool.hypotheses[best].view_id);
      REQUIRE(got.inplane_id == pool.hypotheses[best].inplane_id);
      REQUIRE(got.pose.q.coeffs() == poses[best].q.coeffs());
      REQUIRE(got.pose.t == poses[best].t);
      REQUIRE(got.verify == scores[best]);
      REQUIRE(got.refined == applied[best]);
      REQUIRE(got.residual == residual[best]);
    }
  }
}

TEST_CASE("external detector scores drive the same parse path", "[pipeline]") {
  Env e;
  init_env(e);
  e.cfg.v_parse = 1;
  e.cfg.r_parse = 1;
  e.cfg.refine_mode = RefineMode::None;
  e.cfg.detector = DetectorMode::External;
  e.cfg.frames = 3;

  precompute_tables(e.cfg);
  generate_dataset(e.cfg);

  REQUIRE_THROWS_AS(run_pipeline(e.cfg), ConfigError);  // scores_dir unset
  e.cfg.scores_dir = e.tmp.str("scores");
  std::filesystem::create_directories(e.cfg.scores_dir);

  PipelineContext ctx = load_context(e.cfg, true);
  PriorConfig prior_cfg = default_prior_config(e.cfg.cam.width, e.cfg.cam.height);
  std::vector<Box> priors = generate_priors(prior_cfg);

  ScoreLayout layout;
  layout.num_priors = int(priors.size());
  layout.num_classes = 2;
  layout.num_views = int(ctx.base_vs.views.size());
  layout.num_inplane = int(ctx.base_vs.inplane_bins.size());

  // One-hot tensors: background everywhere except the best prior for the
  // single ground-truth instance, which carries its box offsets and cell.
  for (int f = 0; f < e.cfg.frames; ++f) {
    SynthFrame frame = load_frame(e.cfg.dataset_dir, f);
    REQUIRE(frame.annotations.size() == 1);
    const Annotation& gt = frame.annotations[0];
    int best = 0;
    double best_iou = -1.0;
    for (size_t p = 0; p < priors.size(); ++p) {
      double iou = box_iou(priors[p], gt.box);
      if (iou > best_iou) {
        best_iou = iou;
        best = int(p);
      }
    }
    ScoreTensor t = ScoreTensor::zeros(layout);
    for (int p = 0; p < layout.num_priors; ++p) t.class_logits(p)[0] = 8.0;
    t.class_logits(best)[0] = 0.0;
    t.class_logits(best)[1] = 8.0;
    auto off = encode_box(priors[best], gt.box);
    std::copy(off.begin(), off.end(), t.record(best));
    t.view_logits(best)[gt.view_id] = 6.0;
    t.inplane_logits(best)[gt.inplane_id] = 6.0;
    save_scores(t, (std::filesystem::path(e.cfg.scores_dir) / frame_stem(f)).string());
  }

  RunResults results = run_pipeline(e.cfg);
  for (int f = 0; f < e.cfg.frames; ++f) {
    SynthFrame frame = load_frame(e.cfg.dataset_dir, f);
    const Annotation& gt = frame.annotations[0];
    REQUIRE(results.frames[f].detections.size() == 1);
    const DetectionResult& det = results.frames[f].detections[0];
    REQUIRE(det.cls == 1);
    REQUIRE(det.score > 0.99);
    REQUIRE(det.box.x0 == Approx(gt.box.x0).margin(1e-6));
    REQUIRE(det.box.y0 == Approx(gt.box.y0).margin(1e-6));
    REQUIRE(det.box.x1 == Approx(gt.box.x1).margin(1e-6));
    REQUIRE(det.box.y1 == Approx(gt.box.y1).margin(1e-6));
    REQUIRE(det.view_id == gt.view_id);
    REQUIRE(det.inplane_id == gt.inplane_id);
  }
}

TEST_CASE("evaluate summarizes a perfect run", "[pipeline]") {
  Env e;
  init_env(e);
  e.cfg.refine_mode = RefineMode::Icp;
  e.cfg.refine.rounds = 8;
  e.cfg.refine.depth_gate_m = 0.05;
  e.cfg.frames = 6;

  precompute_tables(e.cfg);
  generate_dataset(e.cfg);
  run_pipeline(e.cfg);
  EvalSummary summary = evaluate(e.cfg);

  REQUIRE(summary.at_threshold.tp == 6);
  REQUIRE(summary.at_threshold.fp == 0);
  REQUIRE(summary.at_threshold.fn == 0);
  REQUIRE(summary.at_threshold.precision == 1.0);
  REQUIRE(summary.at_threshold.recall == 1.0);
  REQUIRE(summary.at_threshold.f1 == 1.0);
  REQUIRE(summary.ap == Approx(1.0).margin(1e-12));
  REQUIRE(summary.per_class.size() == 1);
  const ClassSummary& cs = summary.per_class[0];
  REQUIRE(cs.name == "house");
  REQUIRE(cs.gt_count == 6);
  REQUIRE(cs.matched == 6);
  REQUIRE(cs.mean_vss > 0.85);
  REQUIRE(cs.mean_iou2d > 0.85);
  REQUIRE(cs.iou2d_correct_rate == 1.0);
  REQUIRE(cs.add_correct_rate == 1.0);

  REQUIRE(std::filesystem::exists(e.tmp.path() / "metrics" / "summary.json"));
  {
    std::ifstream in(e.tmp.path() / "metrics" / "summary.json");
    json js = json::parse(in);
    REQUIRE(js.at("ap").get<double>() == Approx(summary.ap));
    REQUIRE(js.at("per_class").size() == 1);
  }
  {
    std::ifstream in(e.tmp.path() / "metrics" / "curve.csv");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    REQUIRE(lines == 21);  // header + one row per threshold
  }

  // An all-empty results file scores zero recall but keeps the gt counts.
  RunResults empty;
  empty.class_names = {"house"};
  empty.refine_mode = "none";
  empty.frames.resize(e.cfg.frames);
  {
    std::ofstream out(e.cfg.results_path);
    out << json(empty).dump() << '\n';
  }
  EvalSummary blank = evaluate(e.cfg);
  REQUIRE(blank.at_threshold.recall == 0.0);
  REQUIRE(blank.at_threshold.f1 == 0.0);
  REQUIRE(blank.ap == 0.0);
  REQUIRE(blank.per_class[0].gt_count == 6);
  REQUIRE(blank.per_class[0].matched == 0);
  REQUIRE(blank.per_class[0].add_correct_rate == 0.0);

  // Structural failures are data errors, not silent zeros.
  empty.frames.resize(e.cfg.frames - 1);
  {
    std::ofstream out(e.cfg.results_path);
    out << json(empty).dump() << '\n';
  }
  REQUIRE_THROWS_AS(evaluate(e.cfg), DataError);
  std::filesystem::remove(e.cfg.results_path);
  REQUIRE_THROWS_AS(evaluate(e.cfg), DataError);
}
