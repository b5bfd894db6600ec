#pragma once

#include "tubekit/detection.hpp"
#include "tubekit/flow.hpp"

namespace tubekit {

enum class PropagationMode { motion_guided, duplicate };

struct PropagationPlan {
  int window = 7;  // odd; reach per side is (window-1)/2
  PropagationMode mode = PropagationMode::motion_guided;

  int reach() const { return (window - 1) / 2; }
};

struct PropagationStats {
  long propagated = 0;         // copies that landed on a target frame
  long dropped_degenerate = 0; // copies lost to clamping or empty flow samples
};

// Copy every input detection to the frames within the plan's reach, shifted by
// the composed per-step mean flows (duplicate mode: zero shift), then clean each
// target frame with per-class NMS at nms_iou. Original detections survive
// bit-exact unless that NMS drops them for an equal-or-higher-scoring box.
// Propagated copies never seed further propagation.
ClipDetections propagate(const ClipDetections& clip, const FlowSource& flows,
                         const PropagationPlan& plan, double nms_iou,
                         PropagationStats* stats = nullptr);

// Fill frames skipped by a stride-sampled detector. Same-class box pairs on
// consecutive processed frames with IOU > match_iou are linearly interpolated
// (coordinates and scores); unmatched boxes are held to the gap midpoint.
ClipDetections interpolate_stride(const ClipDetections& clip, int stride, double match_iou);

// One backward/forward step displacement for a box sitting on `frame`.
// Backward steps prefer the backward field and fall back to the negated forward
// mean; nullopt when the box samples no pixel center.
std::optional<std::pair<double, double>> step_flow(const FlowSource& flows, int frame,
                                                   int num_frames, bool forward, const BBox& box);

}  // namespace tubekit
