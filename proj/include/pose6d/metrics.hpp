// Detection and pose-error metrics: greedy matched precision/recall/F1 and
// AP over score thresholds, 2D projection IoU, visual surface similarity
// (rendered-mask IoU) and average distance of model points (ADD).
#pragma once

#include "pose6d/raster.hpp"

namespace pose6d {

struct PredInstance {
  int cls = 1;
  double score = 0;
  Box box;
  Pose pose;
};

struct GtInstance {
  int cls = 1;
  Box box;
  Pose pose;
};

struct EvalRecord {
  std::vector<GtInstance> gt;
  std::vector<PredInstance> pred;
};

// Greedy per-frame matching: predictions in descending score order (stable)
// claim the highest-IoU unmatched ground truth of the same class with
// IoU > iou_threshold. Returns per-prediction matched gt index (-1 = FP).
inline std::vector<int> greedy_match(const EvalRecord& rec, double iou_threshold = 0.5) {
  std::vector<int> order(rec.pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rec.pred[a].score > rec.pred[b].score; });
  std::vector<int> match(rec.pred.size(), -1);
  std::vector<bool> taken(rec.gt.size(), false);
  for (int i : order) {
    int best = -1;
    double best_iou = iou_threshold;
    for (size_t g = 0; g < rec.gt.size(); ++g) {
      if (taken[g] || rec.gt[g].cls != rec.pred[i].cls) continue;
      double iou = box_iou(rec.pred[i].box, rec.gt[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best = int(g);
      }
    }
    if (best >= 0) {
      match[i] = best;
      taken[best] = true;
    }
  }
  return match;
}

struct DetectionPoint {
  double threshold = 0;
  double precision = 1, recall = 0, f1 = 0;
  int tp = 0, fp = 0, fn = 0;
};

inline DetectionPoint detection_point(const std::vector<EvalRecord>& records,
                                      double score_threshold, double iou_threshold = 0.5) {
  DetectionPoint p;
  p.threshold = score_threshold;
  for (const EvalRecord& rec : records) {
    EvalRecord kept;
    kept.gt = rec.gt;
    for (const PredInstance& pr : rec.pred)
      if (pr.score >= score_threshold) kept.pred.push_back(pr);
    std::vector<int> match = greedy_match(kept, iou_threshold);
    int tp = 0;
    for (int m : match)
      if (m >= 0) ++tp;
    p.tp += tp;
    p.fp += int(kept.pred.size()) - tp;
    p.fn += int(kept.gt.size()) - tp;
  }
  p.precision = (p.tp + p.fp) > 0 ? double(p.tp) / (p.tp + p.fp) : 1.0;  // no predictions: P = 1
  p.recall = (p.tp + p.fn) > 0 ? double(p.tp) / (p.tp + p.fn) : 1.0;
  p.f1 = (p.precision + p.recall) > 0 ? 2 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
  return p;
}

inline std::vector<DetectionPoint> detection_curve(const std::vector<EvalRecord>& records,
                                                   const std::vector<double>& thresholds,
                                                   double iou_threshold = 0.5) {
  std::vector<DetectionPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back(detection_point(records, t, iou_threshold));
  return out;
}

// Step-rule AP over the unique prediction scores as thresholds:
// AP = sum_i (R_i - R_{i-1}) * P_i with points ordered by increasing recall.
inline double average_precision(const std::vector<EvalRecord>& records,
                                double iou_threshold = 0.5) {
  std::vector<double> scores;
  for (const EvalRecord& rec : records)
    for (const PredInstance& p : rec.pred) scores.push_back(p.score);
  if (scores.empty()) return 0.0;
  std::sort(scores.begin(), scores.end(), std::greater<>());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  double ap = 0.0, prev_recall = 0.0;
  for (double s : scores) {
    DetectionPoint p = detection_point(records, s, iou_threshold);
    if (p.recall > prev_recall) {
      ap += (p.recall - prev_recall) * p.precision;
      prev_recall = p.recall;
    }
  }
  return ap;
}

inline double mask_iou(const Image<uint8_t>& a, const Image<uint8_t>& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("mask_iou: size mismatch");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    bool pa = a.px[i] != 0, pb = b.px[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

struct PoseScore {
  double value = 0;
  bool correct = false;
};

// IoU of the tight boxes of the two rendered masks; correct above 0.5.
inline PoseScore pose_iou2d(const Pose& gt, const Pose& est, const TriMesh& mesh,
                            const CameraIntrinsics& cam) {
  auto bg = tight_mask_box(render(mesh, gt, cam).mask);
  auto be = tight_mask_box(render(mesh, est, cam).mask);
  if (!bg || !be) return {0.0, false};
  double iou = box_iou(*bg, *be);
  return {iou, iou > 0.5};
}

// Visual surface similarity: IoU of the rendered masks.
inline double vss(const Pose& gt, const Pose& est, const TriMesh& mesh,
                  const CameraIntrinsics& cam) {
  return mask_iou(render(mesh, gt, cam).mask, render(mesh, est, cam).mask);
}

// Average distance of model vertices between the two poses; correct below
// threshold_frac * mesh diameter.
inline PoseScore add_score(const Pose& gt, const Pose& est, const TriMesh& mesh,
                           double threshold_frac = 0.1) {
  if (mesh.vertices.empty()) throw std::invalid_argument("add_score: empty mesh");
  double sum = 0.0;
  for (const Vec3& v : mesh.vertices) sum += (gt(v) - est(v)).norm();
  double value = sum / double(mesh.vertices.size());
  return {value, value < threshold_frac * mesh.diameter};
}

}  // namespace pose6d
