// From 2D detections to 6D pose hypotheses: score-tensor parsing, greedy NMS,
// projective lifting against the canonical render table, and pose pooling
// over the top view / in-plane candidates.
#pragma once

#include "pose6d/anchors.hpp"
#include "pose6d/raster.hpp"

namespace pose6d {

struct Detection {
  int cls = 1;        // foreground class, 1-based
  double score = 0;   // class confidence
  Box box;
  std::vector<double> view_scores;     // over the (base) view space
  std::vector<double> inplane_scores;  // over the in-plane bins
};

namespace detail {

inline std::vector<double> softmax(const double* logits, int n) {
  double m = logits[0];
  for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double sum = 0.0;
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (int i = 0; i < n; ++i) p[i] /= sum;
  return p;
}

}  // namespace detail

// Thresholded per-prior parse of a prediction tensor into detections with
// decoded, image-clamped boxes and softmaxed view / in-plane scores.
inline std::vector<Detection> parse_detections(const ScoreTensor& pred,
                                               const std::vector<Box>& priors,
                                               double score_threshold, int image_w, int image_h) {
  if (int(priors.size()) != pred.layout.num_priors)
    throw std::invalid_argument("parse_detections: priors/tensor size mismatch");
  if (pred.layout.num_classes < 2)
    throw std::invalid_argument("parse_detections: tensor has no foreground classes");
  std::vector<Detection> out;
  for (int i = 0; i < pred.layout.num_priors; ++i) {
    auto cls_p = detail::softmax(pred.class_logits(i), pred.layout.num_classes);
    int best = 1;
    for (int c = 2; c < pred.layout.num_classes; ++c)
      if (cls_p[c] > cls_p[best]) best = c;
    if (cls_p[best] < score_threshold) continue;
    const double* off = pred.record(i);
    Box box = clamp_box(decode_box(priors[i], {off[0], off[1], off[2], off[3]}), image_w, image_h);
    if (!box.valid()) continue;
    Detection d;
    d.cls = best;
    d.score = cls_p[best];
    d.box = box;
    d.view_scores = detail::softmax(pred.view_logits(i), pred.layout.num_views);
    d.inplane_scores = detail::softmax(pred.inplane_logits(i), pred.layout.num_inplane);
    out.push_back(std::move(d));
  }
  return out;
}

// Greedy per-class non-maximum suppression. Detections are visited in
// descending score order (stable for equal scores); survivors suppress
// same-class boxes with IoU above the threshold.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = 0.45) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("nms: iou threshold outside [0, 1]");
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<Detection> out;
  for (size_t a = 0; a < order.size(); ++a) {
    int i = order[a];
    if (suppressed[i]) continue;
    out.push_back(dets[i]);
    for (size_t b = a + 1; b < order.size(); ++b) {
      int j = order[b];
      if (suppressed[j] || dets[j].cls != dets[i].cls) continue;
      if (box_iou(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = true;
    }
  }
  return out;
}

// Lifts a 2D box and discrete rotation cell to a 6D pose: depth from the
// ratio of canonical to observed box diagonals, centroid from the offset
// recorded at canonical distance, rotation from the cell itself.
inline Pose lift(const Box& box, int view_id, int inplane_id, const ViewSpace& vs,
                 const CanonicalTable& table, const CameraIntrinsics& cam) {
  double ls = box.diagonal();
  if (!(ls >= 2.0)) throw std::domain_error("lift: degenerate detection box");
  const CanonicalEntry& e = table.entry(view_id, inplane_id);
  double z = e.diag / ls * table.canonical_z;
  Vec2 centroid = Vec2(box.center_x(), box.center_y()) + e.offset * (ls / e.diag);
  return Pose(view_rotation(vs.views[view_id], vs.inplane_bins[inplane_id]),
              backproject(centroid, z, cam));
}

struct Hypothesis {
  Pose pose;
  int view_id = -1;
  int inplane_id = -1;
  double score = 0;  // view score * in-plane score
};

struct HypothesisPool {
  Detection detection;
  std::vector<Hypothesis> hypotheses;  // descending score, stable ties
};

namespace detail {

// Indices of the top-k scores, descending, ties by lower index. `subset`
// optionally restricts candidates.
inline std::vector<int> top_k(const std::vector<double>& scores, int k,
                              const std::vector<int>* subset) {
  std::vector<int> ids;
  if (subset) {
    ids = *subset;
  } else {
    ids.resize(scores.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (int(ids.size()) > k) ids.resize(k);
  return ids;
}

}  // namespace detail

// Lifts the v_parse top-scoring views crossed with the r_parse top in-plane
// bins. When valid_view_ids is given (objects with symmetry), views outside
// it are never parsed. Hypotheses are ordered by score product descending,
// ties by (view id, in-plane id).
inline HypothesisPool build_pool(const Detection& det, const ViewSpace& vs,
                                 const CanonicalTable& table, const CameraIntrinsics& cam,
                                 int v_parse = 3, int r_parse = 3,
                                 const std::vector<int>* valid_view_ids = nullptr) {
  if (v_parse < 1 || r_parse < 1) throw std::invalid_argument("build_pool: parse counts must be >= 1");
  if (det.view_scores.size() != vs.views.size() ||
      det.inplane_scores.size() != vs.inplane_bins.size())
    throw std::invalid_argument("build_pool: detection score sizes do not match the view space");
  if (!(det.box.diagonal() >= 2.0)) throw std::domain_error("build_pool: degenerate detection box");

  std::vector<int> views = detail::top_k(det.view_scores, v_parse, valid_view_ids);
  std::vector<int> bins = detail::top_k(det.inplane_scores, r_parse, nullptr);

  HypothesisPool pool;
  pool.detection = det;
  for (int v : views) {
    for (int b : bins) {
      Hypothesis h;
      h.view_id = v;
      h.inplane_id = b;
      h.score = det.view_scores[v] * det.inplane_scores[b];
      h.pose = lift(det.box, v, b, vs, table, cam);
      pool.hypotheses.push_back(std::move(h));
    }
  }
  std::sort(pool.hypotheses.begin(), pool.hypotheses.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.view_id != b.view_id) return a.view_id < b.view_id;
    return a.inplane_id < b.inplane_id;
  });
  return pool;
}

}  // namespace pose6d
