#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tubekit/config.hpp"
#include "tubekit/detection.hpp"

namespace tubekit {

struct ClassEval {
  int gt = 0;
  int tp = 0;
  int fp = 0;
  double ap = 0.0;
};

struct EvalReport {
  double matching_iou = 0.5;
  double mean_ap = 0.0;
  std::map<int, ClassEval> per_class;   // classes with >= 1 ground truth
  std::vector<int> skipped_classes;     // detected classes without any ground truth

  std::string to_json() const;
  std::string to_table() const;  // fixed-width text table
};

// Affine map of scores onto [0,1] within the scope; a degenerate scope
// (all scores equal) maps to 0.5.
std::vector<ClipDetections> minmax_normalize(std::vector<ClipDetections> clips, MinMaxScope scope);

// Pool detections from all sources per frame and reduce with per-class NMS.
std::vector<ClipDetections> combine(const std::vector<std::vector<ClipDetections>>& sources,
                                    double nms_iou);

// Average scores across sources: per (clip, frame, class), boxes are greedily
// clustered by IOU >= match_iou (highest score seeds a cluster, at most one box
// per other source joins it); the cluster keeps the seed box with the mean score.
// Unmatched boxes keep their own score.
std::vector<ClipDetections> average_sources(const std::vector<std::vector<ClipDetections>>& sources,
                                            double match_iou);

struct NamedSource {
  std::string id;
  std::vector<ClipDetections> clips;
};

struct GreedyAverageResult {
  std::vector<std::string> selected;
  std::vector<ClipDetections> averaged;
  std::vector<double> ap_trace;  // mean AP after each accepted step
};

// Greedy score averaging: start from the best single source by eval_fn, keep
// adding the source that maximizes it, stop when improvement < epsilon.
GreedyAverageResult greedy_average(
    const std::vector<NamedSource>& sources, double match_iou, double epsilon,
    const std::function<double(const std::vector<ClipDetections>&)>& eval_fn);

// Per-class all-points interpolated average precision with greedy score-ordered
// matching (best IOU >= matching_iou wins, each ground truth matched once).
// Classes without ground truth are excluded from the mean and flagged.
EvalReport mean_ap(const std::vector<ClipDetections>& dets,
                   const std::vector<GroundTruthRecord>& gt, double matching_iou);

struct CorLocReport {
  long frames = 0;     // annotated frames evaluated
  long localized = 0;  // frames whose top detection hits a target-class box
  double ratio = 0.0;
};

// Per annotated frame keep only the maximum-score detection and count it correct
// iff it overlaps a target-class ground-truth box with IOU > 0.5.
CorLocReport corloc(const std::vector<ClipDetections>& dets,
                    const std::vector<GroundTruthRecord>& gt,
                    const std::map<std::string, int>& target_class_per_clip);

// Majority ground-truth class per clip (ties to the smaller id); the default
// target map when the caller has none.
std::map<std::string, int> derive_targets(const std::vector<GroundTruthRecord>& gt);

}  // namespace tubekit
