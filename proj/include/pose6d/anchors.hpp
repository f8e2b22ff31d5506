// Prior (anchor) boxes over feature-map grids, ground-truth matching with
// hard-negative mining, box encoding, and the multibox training loss over
// (box offsets, class, viewpoint, in-plane) prediction records.
#pragma once

#include <numeric>

#include "pose6d/geometry.hpp"

namespace pose6d {

// One prior shape: side = scale * min(image_w, image_h), then stretched to
// width side*sqrt(aspect), height side/sqrt(aspect).
struct PriorShape {
  double scale = 0.1;
  double aspect = 1.0;
};

struct PriorGrid {
  int grid_w = 0, grid_h = 0;
  std::vector<PriorShape> shapes;
};

struct PriorConfig {
  int image_w = 0, image_h = 0;
  std::vector<PriorGrid> grids;

  int total_boxes() const {
    int n = 0;
    for (const auto& g : grids) n += g.grid_w * g.grid_h * int(g.shapes.size());
    return n;
  }
};

// Six grids from stride-2 downsampling of a 299-ish input, three aspect
// ratios per cell; scale grows linearly with grid coarseness.
inline PriorConfig default_prior_config(int image_w, int image_h) {
  PriorConfig cfg;
  cfg.image_w = image_w;
  cfg.image_h = image_h;
  const int sides[6] = {71, 35, 17, 9, 5, 3};
  for (int k = 0; k < 6; ++k) {
    PriorGrid g;
    g.grid_w = g.grid_h = sides[k];
    double s = 0.1 + 0.16 * k;
    g.shapes = {{s, 1.0}, {s, 2.0}, {s, 0.5}};
    cfg.grids.push_back(g);
  }
  return cfg;
}

inline void validate(const PriorConfig& cfg) {
  if (cfg.image_w <= 0 || cfg.image_h <= 0) throw ConfigError("prior config: bad image size");
  if (cfg.grids.empty()) throw ConfigError("prior config: no grids");
  for (const auto& g : cfg.grids) {
    if (g.grid_w <= 0 || g.grid_h <= 0) throw ConfigError("prior config: bad grid size");
    if (g.shapes.empty()) throw ConfigError("prior config: grid without shapes");
    for (const auto& s : g.shapes)
      if (!(s.scale > 0) || !(s.aspect > 0)) throw ConfigError("prior config: bad shape");
  }
}

// Priors in deterministic order: grid-major, then row-major cells, then
// shapes. Boxes are clamped to the image.
inline std::vector<Box> generate_priors(const PriorConfig& cfg) {
  validate(cfg);
  std::vector<Box> priors;
  priors.reserve(cfg.total_boxes());
  double base = std::min(cfg.image_w, cfg.image_h);
  for (const auto& g : cfg.grids) {
    for (int gy = 0; gy < g.grid_h; ++gy) {
      for (int gx = 0; gx < g.grid_w; ++gx) {
        double cx = (gx + 0.5) / g.grid_w * cfg.image_w;
        double cy = (gy + 0.5) / g.grid_h * cfg.image_h;
        for (const auto& s : g.shapes) {
          double side = s.scale * base;
          double w = side * std::sqrt(s.aspect);
          double h = side / std::sqrt(s.aspect);
          priors.push_back(clamp_box(Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2},
                                     cfg.image_w, cfg.image_h));
        }
      }
    }
  }
  return priors;
}

// SSD-style offsets: center deltas normalized by prior size, log size ratios.
inline std::array<double, 4> encode_box(const Box& prior, const Box& gt) {
  if (!prior.valid() || !gt.valid()) throw std::domain_error("encode_box: degenerate box");
  return {(gt.center_x() - prior.center_x()) / prior.width(),
          (gt.center_y() - prior.center_y()) / prior.height(),
          std::log(gt.width() / prior.width()),
          std::log(gt.height() / prior.height())};
}

inline Box decode_box(const Box& prior, const std::array<double, 4>& off) {
  if (!prior.valid()) throw std::domain_error("decode_box: degenerate prior");
  double cx = prior.center_x() + off[0] * prior.width();
  double cy = prior.center_y() + off[1] * prior.height();
  double w = prior.width() * std::exp(off[2]);
  double h = prior.height() * std::exp(off[3]);
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

struct GtBox {
  Box box;
  int cls = 1;  // foreground classes are 1-based; 0 is background
  int view_id = 0;
  int inplane_id = 0;
};

struct PriorTarget {
  bool positive = false;
  int gt_index = -1;
  int cls = 0;
  int view_id = -1;
  int inplane_id = -1;
  std::array<double, 4> offsets = {0, 0, 0, 0};
};

struct TrainingTargets {
  std::vector<PriorTarget> per_prior;
  std::vector<int> positives;  // ascending prior ids
};

// Two-pass matching: every prior overlapping a ground-truth box with
// IoU > 0.5 becomes positive for its best ground truth, then each ground
// truth forces its single best prior positive. Ties go to the lowest index.
inline TrainingTargets match_priors(const std::vector<Box>& priors, const std::vector<GtBox>& gts) {
  TrainingTargets out;
  out.per_prior.resize(priors.size());
  if (gts.empty()) return out;
  for (const auto& g : gts)
    if (!g.box.valid()) throw std::domain_error("match_priors: degenerate ground-truth box");

  for (size_t i = 0; i < priors.size(); ++i) {
    int best_gt = -1;
    double best_iou = 0.5;
    for (size_t g = 0; g < gts.size(); ++g) {
      double iou = box_iou(priors[i], gts[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = int(g);
      }
    }
    if (best_gt >= 0) {
      out.per_prior[i].positive = true;
      out.per_prior[i].gt_index = best_gt;
    }
  }
  for (size_t g = 0; g < gts.size(); ++g) {
    int best_prior = -1;
    double best_iou = -1.0;
    for (size_t i = 0; i < priors.size(); ++i) {
      double iou = box_iou(priors[i], gts[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best_prior = int(i);
      }
    }
    if (best_prior >= 0 && best_iou > 0.0) {
      out.per_prior[best_prior].positive = true;
      out.per_prior[best_prior].gt_index = int(g);
    }
  }
  for (size_t i = 0; i < priors.size(); ++i) {
    auto& t = out.per_prior[i];
    if (!t.positive) continue;
    const GtBox& g = gts[t.gt_index];
    t.cls = g.cls;
    t.view_id = g.view_id;
    t.inplane_id = g.inplane_id;
    t.offsets = encode_box(priors[i], g.box);
    out.positives.push_back(int(i));
  }
  return out;
}

// Flat prediction tensor, prior-major; per-prior record layout:
// [4 box offsets | C+1 class logits | V view logits | R in-plane logits].
struct ScoreLayout {
  int num_priors = 0;
  int num_classes = 0;  // including background at index 0
  int num_views = 0;
  int num_inplane = 0;

  int record_size() const { return 4 + num_classes + num_views + num_inplane; }
  size_t total() const { return size_t(num_priors) * record_size(); }
  size_t offset_of(int prior) const { return size_t(prior) * record_size(); }
};

struct ScoreTensor {
  ScoreLayout layout;
  std::vector<double> data;

  static ScoreTensor zeros(const ScoreLayout& l) {
    ScoreTensor t;
    t.layout = l;
    t.data.assign(l.total(), 0.0);
    return t;
  }

  double* record(int prior) { return data.data() + layout.offset_of(prior); }
  const double* record(int prior) const { return data.data() + layout.offset_of(prior); }
  double* class_logits(int prior) { return record(prior) + 4; }
  const double* class_logits(int prior) const { return record(prior) + 4; }
  double* view_logits(int prior) { return record(prior) + 4 + layout.num_classes; }
  const double* view_logits(int prior) const { return record(prior) + 4 + layout.num_classes; }
  double* inplane_logits(int prior) {
    return record(prior) + 4 + layout.num_classes + layout.num_views;
  }
  const double* inplane_logits(int prior) const {
    return record(prior) + 4 + layout.num_classes + layout.num_views;
  }
};

inline void save_scores(const ScoreTensor& t, const std::string& base_path) {
  json header = {{"num_priors", t.layout.num_priors},
                 {"num_classes", t.layout.num_classes},
                 {"num_views", t.layout.num_views},
                 {"num_inplane", t.layout.num_inplane},
                 {"dtype", "float64"},
                 {"layout", "prior-major: 4 offsets, class, view, inplane"}};
  std::ofstream jh(base_path + ".json");
  if (!jh) throw DataError("cannot write " + base_path + ".json");
  jh << header.dump(2) << '\n';
  std::ofstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot write " + base_path + ".bin");
  bin.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  if (!bin) throw DataError("failed writing " + base_path + ".bin");
}

inline ScoreTensor load_scores(const std::string& base_path) {
  std::ifstream jh(base_path + ".json");
  if (!jh) throw DataError("cannot open " + base_path + ".json");
  json header = json::parse(jh, nullptr, true, true);
  ScoreLayout l;
  l.num_priors = header.at("num_priors").get<int>();
  l.num_classes = header.at("num_classes").get<int>();
  l.num_views = header.at("num_views").get<int>();
  l.num_inplane = header.at("num_inplane").get<int>();
  if (header.at("dtype").get<std::string>() != "float64")
    throw DataError("score tensor dtype must be float64: " + base_path);
  if (l.num_priors <= 0 || l.num_classes < 2 || l.num_views <= 0 || l.num_inplane <= 0)
    throw DataError("score tensor header has invalid dimensions: " + base_path);
  ScoreTensor t = ScoreTensor::zeros(l);
  std::ifstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot open " + base_path + ".bin");
  bin.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * sizeof(double));
  if (size_t(bin.gcount()) != t.data.size() * sizeof(double))
    throw DataError("score tensor truncated: " + base_path);
  return t;
}

namespace detail {

// Softmax cross-entropy with logits; accumulates d(loss)/d(logit) into grad.
inline double cross_entropy(const double* logits, int n, int target, double weight,
                            double* grad) {
  double m = logits[0];
  for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - m);
  double lse = m + std::log(sum);
  if (grad) {
    for (int i = 0; i < n; ++i) {
      double p = std::exp(logits[i] - m) / sum;
      grad[i] += weight * (p - (i == target ? 1.0 : 0.0));
    }
  }
  return weight * (lse - logits[target]);
}

inline double smooth_l1(double d, double transition, double weight, double* grad) {
  double a = std::abs(d);
  if (grad) {
    double g = a < transition ? d / transition : (d > 0 ? 1.0 : -1.0);
    *grad += weight * g;
  }
  return weight * (a < transition ? 0.5 * d * d / transition : a - 0.5 * transition);
}

}  // namespace detail

struct LossWeights {
  double alpha = 1.5;   // box fit
  double beta = 2.5;    // viewpoint
  double gamma = 1.5;   // in-plane
  double smooth_l1_transition = 1.0;
};

struct LossResult {
  double total = 0;
  double class_pos = 0, class_neg = 0, fit = 0, view = 0, inplane = 0;
  std::vector<double> grad;  // same layout as the prediction tensor
};

// Hardest non-positive priors by maximum foreground softmax probability,
// capped at ratio * |positives|; ties resolve to the lower prior id.
inline std::vector<int> select_hard_negatives(const ScoreTensor& pred,
                                              const TrainingTargets& targets, int ratio = 2) {
  if (int(targets.per_prior.size()) != pred.layout.num_priors)
    throw std::invalid_argument("select_hard_negatives: targets/tensor size mismatch");
  if (ratio < 0) throw std::invalid_argument("select_hard_negatives: negative ratio");
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < pred.layout.num_priors; ++i) {
    if (targets.per_prior[i].positive) continue;
    const double* logits = pred.class_logits(i);
    int n = pred.layout.num_classes;
    double m = logits[0];
    for (int c = 1; c < n; ++c) m = std::max(m, logits[c]);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) sum += std::exp(logits[c] - m);
    double best_fg = 0.0;
    for (int c = 1; c < n; ++c) best_fg = std::max(best_fg, std::exp(logits[c] - m) / sum);
    cand.emplace_back(best_fg, i);
  }
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  size_t keep = std::min(cand.size(), size_t(ratio) * targets.positives.size());
  std::vector<int> out;
  out.reserve(keep);
  for (size_t k = 0; k < keep; ++k) out.push_back(cand[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

// Per-image training loss (a sum, not a mean):
//   sum over negatives of class cross-entropy (background target)
// + sum over positives of class cross-entropy
//                      + alpha * smooth-L1 on the 4 box offsets
//                      + beta  * view cross-entropy
//                      + gamma * in-plane cross-entropy.
inline LossResult multibox_loss(const ScoreTensor& pred, const TrainingTargets& targets,
                                const std::vector<int>& negatives, const LossWeights& w = {}) {
  const ScoreLayout& l = pred.layout;
  if (int(targets.per_prior.size()) != l.num_priors)
    throw std::invalid_argument("multibox_loss: targets/tensor size mismatch");
  LossResult res;
  res.grad.assign(l.total(), 0.0);

  for (int i : negatives) {
    if (i < 0 || i >= l.num_priors) throw std::invalid_argument("multibox_loss: negative id out of range");
    if (targets.per_prior[i].positive)
      throw std::invalid_argument("multibox_loss: prior is both positive and negative");
    res.class_neg += detail::cross_entropy(pred.class_logits(i), l.num_classes, 0, 1.0,
                                           res.grad.data() + l.offset_of(i) + 4);
  }
  for (int i : targets.positives) {
    const PriorTarget& t = targets.per_prior[i];
    if (t.cls < 1 || t.cls >= l.num_classes || t.view_id < 0 || t.view_id >= l.num_views ||
        t.inplane_id < 0 || t.inplane_id >= l.num_inplane)
      throw std::invalid_argument("multibox_loss: target ids out of tensor range");
    double* g = res.grad.data() + l.offset_of(i);
    res.class_pos += detail::cross_entropy(pred.class_logits(i), l.num_classes, t.cls, 1.0, g + 4);
    const double* off = pred.record(i);
    for (int k = 0; k < 4; ++k)
      res.fit += detail::smooth_l1(off[k] - t.offsets[k], w.smooth_l1_transition, w.alpha, g + k);
    res.view += detail::cross_entropy(pred.view_logits(i), l.num_views, t.view_id, w.beta,
                                      g + 4 + l.num_classes);
    res.inplane += detail::cross_entropy(pred.inplane_logits(i), l.num_inplane, t.inplane_id,
                                         w.gamma, g + 4 + l.num_classes + l.num_views);
  }
  res.total = res.class_neg + res.class_pos + res.fit + res.view + res.inplane;
  return res;
}

inline void to_json(json& j, const PriorShape& s) { j = json{{"scale", s.scale}, {"aspect", s.aspect}}; }
inline void from_json(const json& j, PriorShape& s) {
  s.scale = j.at("scale").get<double>();
  s.aspect = j.at("aspect").get<double>();
}
inline void to_json(json& j, const PriorGrid& g) {
  j = json{{"grid_w", g.grid_w}, {"grid_h", g.grid_h}, {"shapes", g.shapes}};
}
inline void from_json(const json& j, PriorGrid& g) {
  g.grid_w = j.at("grid_w").get<int>();
  g.grid_h = j.at("grid_h").get<int>();
  g.shapes = j.at("shapes").get<std::vector<PriorShape>>();
}
inline void to_json(json& j, const PriorConfig& c) {
  j = json{{"image_w", c.image_w}, {"image_h", c.image_h}, {"grids", c.grids}};
}
inline void from_json(const json& j, PriorConfig& c) {
  c.image_w = j.at("image_w").get<int>();
  c.image_h = j.at("image_h").get<int>();
  c.grids = j.at("grids").get<std::vector<PriorGrid>>();
  validate(c);
}

}  // namespace pose6d
