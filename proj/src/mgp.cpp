#include "tubekit/mgp.hpp"

#include <algorithm>
#include <map>

#include "tubekit/errors.hpp"

namespace tubekit {

std::optional<std::pair<double, double>> step_flow(const FlowSource& flows, int frame,
                                                   int num_frames, bool forward, const BBox& box) {
  if (forward) {
    const FlowField* f = flows.forward(frame);
    if (!f) {
      throw DataError("missing forward flow for transition " + std::to_string(frame) + " -> " +
                      std::to_string(frame + 1));
    }
    return mean_flow(*f, box);
  }
  if (const FlowField* b = flows.backward(frame)) {
    return mean_flow(*b, box);
  }
  // No backward field: negate the mean of the frame's own forward flow. The last
  // frame has no forward transition, so it borrows the final one.
  const int fwd_frame = std::min(frame, num_frames - 2);
  const FlowField* f = fwd_frame >= 0 ? flows.forward(fwd_frame) : nullptr;
  if (!f) {
    throw DataError("missing flow for backward step from frame " + std::to_string(frame));
  }
  auto m = mean_flow(*f, box);
  if (!m) return std::nullopt;
  return std::make_pair(-m->first, -m->second);
}

ClipDetections propagate(const ClipDetections& clip, const FlowSource& flows,
                         const PropagationPlan& plan, double nms_iou, PropagationStats* stats) {
  if (plan.window < 1 || plan.window % 2 == 0) {
    throw ValidationError("propagate: window must be odd and >= 1");
  }
  PropagationStats local;
  PropagationStats& st = stats ? *stats : local;

  if (plan.window == 1) return clip;

  const double fw = clip.width;
  const double fh = clip.height;
  const BBox frame_rect{0.0, 0.0, fw, fh};
  const bool motion = plan.mode == PropagationMode::motion_guided;

  std::vector<Detection> copies;
  for (const Detection& d : clip.detections) {
    for (int dir : {+1, -1}) {
      BBox cur = d.box;
      int cf = d.frame;
      for (int k = 1; k <= plan.reach(); ++k) {
        const int next = cf + dir;
        if (next < 0 || next >= clip.num_frames) break;
        if (motion) {
          if (intersection_area(cur, frame_rect) <= 0.0) {
            ++st.dropped_degenerate;
            break;
          }
          auto shift = step_flow(flows, cf, clip.num_frames, dir > 0, cur);
          if (!shift) {
            ++st.dropped_degenerate;
            break;
          }
          cur = cur.shifted(shift->first, shift->second);
        }
        cf = next;
        // The copy is clamped to the frame; composition continues from the
        // unclamped box so a partial exit does not distort later steps.
        auto clamped = clamp_box(cur, fw, fh);
        if (!clamped) {
          ++st.dropped_degenerate;
          break;
        }
        Detection copy = d;
        copy.frame = cf;
        copy.box = *clamped;
        copy.propagated = true;
        copy.src_frame = d.frame;
        copy.src_offset = dir * k;
        copies.push_back(std::move(copy));
        ++st.propagated;
      }
    }
  }

  std::stable_sort(copies.begin(), copies.end(), [](const Detection& a, const Detection& b) {
    if (a.frame != b.frame) return a.frame < b.frame;
    if (a.src_frame != b.src_frame) return a.src_frame < b.src_frame;
    if (a.src_offset != b.src_offset) return a.src_offset < b.src_offset;
    return canonical_less(a, b);
  });

  std::map<int, std::vector<Detection>> by_frame;
  for (const Detection& c : copies) by_frame[c.frame].push_back(c);

  ClipDetections out;
  out.clip_id = clip.clip_id;
  out.num_frames = clip.num_frames;
  out.width = clip.width;
  out.height = clip.height;
  for (int f = 0; f < clip.num_frames; ++f) {
    std::vector<Detection> frame_dets = clip.frame_detections(f);
    auto it = by_frame.find(f);
    if (it == by_frame.end()) {
      // No copies landed here; the frame passes through untouched.
      out.detections.insert(out.detections.end(), frame_dets.begin(), frame_dets.end());
      continue;
    }
    frame_dets.insert(frame_dets.end(), it->second.begin(), it->second.end());
    std::vector<Detection> kept = nms(frame_dets, nms_iou);
    std::stable_sort(kept.begin(), kept.end(), canonical_less);
    out.detections.insert(out.detections.end(), kept.begin(), kept.end());
  }
  return out;
}

namespace {

// lerp of box corners and score at fraction alpha from a to b
Detection lerp_detection(const Detection& a, const Detection& b, double alpha, int frame) {
  Detection out = a;
  out.frame = frame;
  out.box = {a.box.x0 + alpha * (b.box.x0 - a.box.x0), a.box.y0 + alpha * (b.box.y0 - a.box.y0),
             a.box.x1 + alpha * (b.box.x1 - a.box.x1), a.box.y1 + alpha * (b.box.y1 - a.box.y1)};
  out.score = a.score + alpha * (b.score - a.score);
  out.propagated = true;
  out.src_frame = a.frame;
  out.src_offset = frame - a.frame;
  return out;
}

}  // namespace

ClipDetections interpolate_stride(const ClipDetections& clip, int stride, double match_iou) {
  if (stride < 1) throw ValidationError("interpolate_stride: stride must be >= 1");
  if (stride == 1) return clip;
  for (const Detection& d : clip.detections) {
    if (d.frame % stride != 0) {
      throw DataError("interpolate_stride: detection on unsampled frame " +
                      std::to_string(d.frame) + " (stride " + std::to_string(stride) + ")");
    }
  }

  ClipDetections out = clip;
  for (int f = 0; f + stride < clip.num_frames; f += stride) {
    const std::vector<Detection> a_dets = clip.frame_detections(f);
    const std::vector<Detection> b_dets = clip.frame_detections(f + stride);
    if (a_dets.empty() && b_dets.empty()) continue;

    // Candidate pairs ranked by overlap; each detection joins at most one pair.
    struct Pair {
      double overlap;
      size_t ia, ib;
    };
    std::vector<Pair> pairs;
    for (size_t i = 0; i < a_dets.size(); ++i) {
      for (size_t j = 0; j < b_dets.size(); ++j) {
        if (a_dets[i].class_id != b_dets[j].class_id) continue;
        const double ov = iou(a_dets[i].box, b_dets[j].box);
        if (ov > match_iou) pairs.push_back({ov, i, j});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) {
      if (p.overlap != q.overlap) return p.overlap > q.overlap;
      if (p.ia != q.ia) return p.ia < q.ia;
      return p.ib < q.ib;
    });

    std::vector<bool> a_used(a_dets.size(), false), b_used(b_dets.size(), false);
    for (const Pair& p : pairs) {
      if (a_used[p.ia] || b_used[p.ib]) continue;
      a_used[p.ia] = true;
      b_used[p.ib] = true;
      for (int k = 1; k < stride; ++k) {
        const double alpha = static_cast<double>(k) / stride;
        out.detections.push_back(lerp_detection(a_dets[p.ia], b_dets[p.ib], alpha, f + k));
      }
    }
    // Unmatched boxes are held to the gap midpoint (ties at even strides go to
    // the earlier frame).
    const int mid = stride / 2;
    for (size_t i = 0; i < a_dets.size(); ++i) {
      if (a_used[i]) continue;
      for (int k = 1; k <= mid; ++k) {
        Detection copy = a_dets[i];
        copy.frame = f + k;
        copy.propagated = true;
        copy.src_frame = f;
        copy.src_offset = k;
        out.detections.push_back(std::move(copy));
      }
    }
    for (size_t j = 0; j < b_dets.size(); ++j) {
      if (b_used[j]) continue;
      for (int k = mid + 1; k < stride; ++k) {
        Detection copy = b_dets[j];
        copy.frame = f + k;
        copy.propagated = true;
        copy.src_frame = f + stride;
        copy.src_offset = k - stride;
        out.detections.push_back(std::move(copy));
      }
    }
  }
  out.sort_canonical();
  return out;
}

}  // namespace tubekit
