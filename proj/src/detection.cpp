#include "tubekit/detection.hpp"

#include <algorithm>

namespace tubekit {

void ClipDetections::sort_canonical() {
  std::stable_sort(detections.begin(), detections.end(), canonical_less);
}

std::pair<size_t, size_t> ClipDetections::frame_range(int frame) const {
  auto lo = std::lower_bound(detections.begin(), detections.end(), frame,
                             [](const Detection& d, int f) { return d.frame < f; });
  auto hi = std::upper_bound(detections.begin(), detections.end(), frame,
                             [](int f, const Detection& d) { return f < d.frame; });
  return {static_cast<size_t>(lo - detections.begin()), static_cast<size_t>(hi - detections.begin())};
}

std::vector<Detection> ClipDetections::frame_detections(int frame) const {
  auto [lo, hi] = frame_range(frame);
  return {detections.begin() + lo, detections.begin() + hi};
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  if (iou_thresh <= 0.0 || iou_thresh > 1.0) {
    throw ValidationError("nms: iou_thresh must be in (0,1], got " + std::to_string(iou_thresh));
  }
  if (dets.empty()) return {};
  const int frame = dets.front().frame;
  for (const Detection& d : dets) {
    if (d.frame != frame) {
      throw DataError("nms: mixed-frame input (frames " + std::to_string(frame) + " and " +
                      std::to_string(d.frame) + ")");
    }
  }

  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t ia, size_t ib) {
    const Detection& a = dets[ia];
    const Detection& b = dets[ib];
    if (a.score != b.score) return a.score > b.score;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.frame != b.frame) return a.frame < b.frame;
    return box_less(a.box, b.box);
  });

  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (size_t idx : order) {
    const Detection& cand = dets[idx];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == cand.class_id && iou(k.box, cand.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::optional<Detection> clamp_to_frame(const Detection& d, double width, double height) {
  if (width <= 0.0 || height <= 0.0) {
    throw ValidationError("clamp_to_frame: non-positive frame dimensions");
  }
  auto clamped = clamp_box(d.box, width, height);
  if (!clamped) return std::nullopt;
  Detection out = d;
  out.box = *clamped;
  return out;
}

}  // namespace tubekit
