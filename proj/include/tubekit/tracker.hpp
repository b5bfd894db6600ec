#pragma once

#include <optional>
#include <vector>

#include "tubekit/config.hpp"
#include "tubekit/detection.hpp"
#include "tubekit/flow.hpp"

namespace tubekit {

struct TubeletNode {
  int frame = 0;
  BBox box;
  double score = 0.0;
  bool snapped = false;  // node coincides with a still-image detection

  friend bool operator==(const TubeletNode&, const TubeletNode&) = default;
};

// Ordered per-frame box/score sequence for one class; one node per frame, no gaps.
struct Tubelet {
  std::string clip_id;
  int class_id = 0;
  std::vector<TubeletNode> nodes;
  size_t anchor_index = 0;  // position of the anchor node in `nodes`

  int first_frame() const { return nodes.front().frame; }
  int last_frame() const { return nodes.back().frame; }
  const TubeletNode& anchor() const { return nodes[anchor_index]; }

  friend bool operator==(const Tubelet&, const Tubelet&) = default;
};

struct TrackParams {
  double stop_conf = 0.1;   // stop a direction when confidence falls below this
  double decay = 0.5;       // confidence decay per un-snapped step
  double snap_iou = 0.5;    // overlap needed to snap to a detection
  double anchor_min_score = 0.5;
  double anchor_suppress_iou = 0.3;

  static TrackParams from_config(const PipelineConfig& cfg) {
    return {cfg.track_stop_conf, cfg.track_decay, cfg.snap_iou, cfg.anchor_min_score,
            cfg.anchor_suppress_iou};
  }
};

// Highest-score candidate whose IOU with every same-frame node of the existing
// tubelets stays at or below suppress_iou; nullopt when all are suppressed.
// `remaining` must be sorted by descending score.
std::optional<Detection> select_anchor(const std::vector<Detection>& remaining,
                                       const std::vector<Tubelet>& existing,
                                       double suppress_iou);

// Track bidirectionally from the anchor: shift by mean flow each step, snap to
// the best-overlapping same-class detection when one reaches snap_iou, otherwise
// decay confidence; a direction stops at the clip boundary or when confidence
// falls below stop_conf (the below-threshold step is not included).
Tubelet track(const Detection& anchor, const ClipDetections& clip, const FlowSource& flows,
              const TrackParams& params);

// Iterated anchor-selection / tracking / suppression, independently per class.
// Tubelets are returned ordered by (class, anchor score descending).
std::vector<Tubelet> build_tubelets(const ClipDetections& clip, const FlowSource& flows,
                                    const TrackParams& params);

}  // namespace tubekit
