#include "tubekit/tracker.hpp"

#include <algorithm>
#include <map>

#include "tubekit/errors.hpp"
#include "tubekit/mgp.hpp"

namespace tubekit {

std::optional<Detection> select_anchor(const std::vector<Detection>& remaining,
                                       const std::vector<Tubelet>& existing, double suppress_iou) {
  for (const Detection& cand : remaining) {
    bool suppressed = false;
    for (const Tubelet& t : existing) {
      if (cand.frame < t.first_frame() || cand.frame > t.last_frame()) continue;
      const TubeletNode& node = t.nodes[cand.frame - t.first_frame()];
      if (iou(cand.box, node.box) > suppress_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) return cand;
  }
  return std::nullopt;
}

namespace {

// Best same-class detection at `frame` overlapping `box` with IOU >= snap_iou;
// canonical order breaks exact overlap ties.
const Detection* best_snap(const ClipDetections& clip, int frame, int class_id, const BBox& box,
                           double snap_iou) {
  const Detection* best = nullptr;
  double best_ov = 0.0;
  for (const Detection& d : clip.detections) {
    if (d.frame != frame || d.class_id != class_id) continue;
    const double ov = iou(box, d.box);
    if (ov < snap_iou) continue;
    if (!best || ov > best_ov || (ov == best_ov && canonical_less(d, *best))) {
      best = &d;
      best_ov = ov;
    }
  }
  return best;
}

// Walk one direction from the anchor, appending nodes until the confidence or
// the clip runs out.
void walk(const ClipDetections& clip, const FlowSource& flows, const Detection& anchor,
          const TrackParams& params, int dir, std::vector<TubeletNode>* out) {
  const BBox frame_rect{0.0, 0.0, static_cast<double>(clip.width),
                        static_cast<double>(clip.height)};
  BBox cur = anchor.box;
  double conf = anchor.score;
  int frame = anchor.frame;
  while (true) {
    const int next = frame + dir;
    if (next < 0 || next >= clip.num_frames) break;
    if (intersection_area(cur, frame_rect) <= 0.0) break;
    auto shift = step_flow(flows, frame, clip.num_frames, dir > 0, cur);
    if (!shift) break;
    BBox moved = cur.shifted(shift->first, shift->second);

    TubeletNode node;
    node.frame = next;
    if (const Detection* snap = best_snap(clip, next, anchor.class_id, moved, params.snap_iou)) {
      node.box = snap->box;
      node.score = snap->score;
      node.snapped = true;
    } else {
      node.box = moved;
      node.score = conf * params.decay;
      node.snapped = false;
    }
    if (node.score < params.stop_conf) break;
    out->push_back(node);
    cur = node.box;
    conf = node.score;
    frame = next;
  }
}

}  // namespace

Tubelet track(const Detection& anchor, const ClipDetections& clip, const FlowSource& flows,
              const TrackParams& params) {
  if (std::find(clip.detections.begin(), clip.detections.end(), anchor) ==
      clip.detections.end()) {
    throw ValidationError("track: anchor is not a detection of the clip");
  }

  std::vector<TubeletNode> back;
  walk(clip, flows, anchor, params, -1, &back);
  std::reverse(back.begin(), back.end());

  Tubelet t;
  t.clip_id = clip.clip_id;
  t.class_id = anchor.class_id;
  t.nodes = std::move(back);
  t.anchor_index = t.nodes.size();
  t.nodes.push_back({anchor.frame, anchor.box, anchor.score, true});
  walk(clip, flows, anchor, params, +1, &t.nodes);
  return t;
}

std::vector<Tubelet> build_tubelets(const ClipDetections& clip, const FlowSource& flows,
                                    const TrackParams& params) {
  std::map<int, std::vector<Detection>> candidates;
  for (const Detection& d : clip.detections) {
    if (d.score >= params.anchor_min_score) candidates[d.class_id].push_back(d);
  }

  std::vector<Tubelet> out;
  for (auto& [class_id, remaining] : candidates) {
    std::stable_sort(remaining.begin(), remaining.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      return canonical_less(a, b);
    });
    std::vector<Tubelet> tubelets;
    while (!remaining.empty()) {
      auto anchor = select_anchor(remaining, tubelets, params.anchor_suppress_iou);
      if (!anchor) break;
      tubelets.push_back(track(*anchor, clip, flows, params));
      remaining.erase(std::find(remaining.begin(), remaining.end(), *anchor));
    }
    out.insert(out.end(), tubelets.begin(), tubelets.end());
  }
  return out;
}

}  // namespace tubekit
