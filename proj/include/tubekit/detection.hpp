#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tubekit/geometry.hpp"

namespace tubekit {

// One scored, classed bounding box on one frame of one clip.
struct Detection {
  int frame = 0;
  int class_id = 0;
  double score = 0.0;
  BBox box;
  std::string source_id;  // producing model, empty when unknown

  // In-memory provenance for propagated/interpolated copies; never serialized.
  bool propagated = false;
  int src_frame = -1;
  int src_offset = 0;

  friend bool operator==(const Detection& a, const Detection& b) {
    return a.frame == b.frame && a.class_id == b.class_id && a.score == b.score &&
           a.box == b.box && a.source_id == b.source_id;
  }
};

// Canonical detection order: (frame, class, -score), coordinates as final tie-break.
inline bool canonical_less(const Detection& a, const Detection& b) {
  if (a.frame != b.frame) return a.frame < b.frame;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.score != b.score) return a.score > b.score;
  if (!(a.box == b.box)) return box_less(a.box, b.box);
  return a.source_id < b.source_id;
}

// All detections of one clip, frame-sorted, plus clip geometry.
struct ClipDetections {
  std::string clip_id;
  int num_frames = 1;
  int width = 1;
  int height = 1;
  std::vector<Detection> detections;  // kept in canonical order

  void sort_canonical();
  // Detections of one frame as [begin, end) indices into `detections`.
  std::pair<size_t, size_t> frame_range(int frame) const;
  std::vector<Detection> frame_detections(int frame) const;
};

struct GroundTruthRecord {
  std::string clip_id;
  int frame = 0;
  int class_id = 0;
  int track_id = 0;
  BBox box;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

// Greedy per-class NMS over detections of a single frame. Ties in the descending
// score order are broken by (class, frame, x0, y0) so output is deterministic.
// Kept detections are the input records untouched. Mixed-frame input is rejected.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh);

// Box intersected with the frame rectangle; nullopt when degenerate after clamping.
std::optional<Detection> clamp_to_frame(const Detection& d, double width, double height);

}  // namespace tubekit
