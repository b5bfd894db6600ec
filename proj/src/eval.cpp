#include "tubekit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <json.hpp>

#include "tubekit/errors.hpp"

namespace tubekit {

namespace {

// Shared geometry for a clip id appearing in several sources: the widest view wins.
std::map<std::string, ClipDetections> merged_shells(
    const std::vector<std::vector<ClipDetections>>& sources) {
  std::map<std::string, ClipDetections> shells;
  for (const auto& source : sources) {
    for (const ClipDetections& clip : source) {
      auto it = shells.find(clip.clip_id);
      if (it == shells.end()) {
        ClipDetections shell;
        shell.clip_id = clip.clip_id;
        shell.num_frames = clip.num_frames;
        shell.width = clip.width;
        shell.height = clip.height;
        shells.emplace(clip.clip_id, std::move(shell));
      } else {
        it->second.num_frames = std::max(it->second.num_frames, clip.num_frames);
        it->second.width = std::max(it->second.width, clip.width);
        it->second.height = std::max(it->second.height, clip.height);
      }
    }
  }
  return shells;
}

}  // namespace

std::vector<ClipDetections> minmax_normalize(std::vector<ClipDetections> clips,
                                             MinMaxScope scope) {
  auto remap = [](std::vector<ClipDetections*> group) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    size_t n = 0;
    for (ClipDetections* c : group) {
      for (const Detection& d : c->detections) {
        lo = std::min(lo, d.score);
        hi = std::max(hi, d.score);
        ++n;
      }
    }
    if (n == 0) return;  // nothing to normalize
    for (ClipDetections* c : group) {
      for (Detection& d : c->detections) {
        d.score = hi == lo ? 0.5 : (d.score - lo) / (hi - lo);
      }
      c->sort_canonical();
    }
  };

  if (scope == MinMaxScope::global) {
    std::vector<ClipDetections*> all;
    for (ClipDetections& c : clips) all.push_back(&c);
    remap(all);
  } else {
    for (ClipDetections& c : clips) remap({&c});
  }
  return clips;
}

std::vector<ClipDetections> combine(const std::vector<std::vector<ClipDetections>>& sources,
                                    double nms_iou) {
  std::map<std::string, ClipDetections> shells = merged_shells(sources);
  for (const auto& source : sources) {
    for (const ClipDetections& clip : source) {
      ClipDetections& shell = shells[clip.clip_id];
      shell.detections.insert(shell.detections.end(), clip.detections.begin(),
                              clip.detections.end());
    }
  }
  std::vector<ClipDetections> out;
  out.reserve(shells.size());
  for (auto& [id, clip] : shells) {
    clip.sort_canonical();
    ClipDetections reduced = clip;
    reduced.detections.clear();
    for (int f = 0; f < clip.num_frames; ++f) {
      std::vector<Detection> frame = clip.frame_detections(f);
      if (frame.empty()) continue;
      std::vector<Detection> kept = nms(frame, nms_iou);
      std::stable_sort(kept.begin(), kept.end(), canonical_less);
      reduced.detections.insert(reduced.detections.end(), kept.begin(), kept.end());
    }
    out.push_back(std::move(reduced));
  }
  return out;
}

std::vector<ClipDetections> average_sources(
    const std::vector<std::vector<ClipDetections>>& sources, double match_iou) {
  if (match_iou <= 0.0 || match_iou > 1.0) {
    throw ValidationError("average_sources: match threshold must be in (0,1]");
  }
  std::map<std::string, ClipDetections> shells = merged_shells(sources);

  struct Entry {
    size_t source;
    Detection det;
    bool used = false;
  };
  // All entries of one clip, bucketed by (frame, class).
  std::map<std::string, std::map<std::pair<int, int>, std::vector<Entry>>> buckets;
  for (size_t s = 0; s < sources.size(); ++s) {
    for (const ClipDetections& clip : sources[s]) {
      auto& clip_buckets = buckets[clip.clip_id];
      for (const Detection& d : clip.detections) {
        clip_buckets[{d.frame, d.class_id}].push_back({s, d});
      }
    }
  }

  std::vector<ClipDetections> out;
  out.reserve(shells.size());
  for (auto& [clip_id, shell] : shells) {
    for (auto& [key, entries] : buckets[clip_id]) {
      std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.det.score != b.det.score) return a.det.score > b.det.score;
        if (!(a.det.box == b.det.box)) return box_less(a.det.box, b.det.box);
        return a.source < b.source;
      });
      for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].used) continue;
        entries[i].used = true;
        double sum = entries[i].det.score;
        int count = 1;
        // One partner per other source, the best-overlapping unused one.
        for (size_t s = 0; s < sources.size(); ++s) {
          if (s == entries[i].source) continue;
          int best = -1;
          double best_ov = 0.0;
          for (size_t j = 0; j < entries.size(); ++j) {
            if (entries[j].used || entries[j].source != s) continue;
            const double ov = iou(entries[i].det.box, entries[j].det.box);
            if (ov < match_iou || ov < best_ov) continue;
            if (ov > best_ov || best < 0) {
              best = static_cast<int>(j);
              best_ov = ov;
            }
          }
          if (best >= 0) {
            entries[best].used = true;
            sum += entries[best].det.score;
            ++count;
          }
        }
        Detection merged = entries[i].det;
        merged.score = sum / count;
        shell.detections.push_back(std::move(merged));
      }
    }
    shell.sort_canonical();
    out.push_back(std::move(shell));
  }
  return out;
}

GreedyAverageResult greedy_average(
    const std::vector<NamedSource>& sources, double match_iou, double epsilon,
    const std::function<double(const std::vector<ClipDetections>&)>& eval_fn) {
  if (sources.empty()) throw ValidationError("greedy_average: no sources");

  std::vector<bool> taken(sources.size(), false);
  GreedyAverageResult result;

  size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < sources.size(); ++i) {
    const double score = eval_fn(average_sources({sources[i].clips}, match_iou));
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  taken[best] = true;
  result.selected.push_back(sources[best].id);
  result.ap_trace.push_back(best_score);

  std::vector<std::vector<ClipDetections>> chosen{sources[best].clips};
  result.averaged = average_sources(chosen, match_iou);

  while (true) {
    int next = -1;
    double next_score = -std::numeric_limits<double>::infinity();
    std::vector<ClipDetections> next_avg;
    for (size_t i = 0; i < sources.size(); ++i) {
      if (taken[i]) continue;
      std::vector<std::vector<ClipDetections>> trial = chosen;
      trial.push_back(sources[i].clips);
      std::vector<ClipDetections> avg = average_sources(trial, match_iou);
      const double score = eval_fn(avg);
      if (score > next_score) {
        next_score = score;
        next = static_cast<int>(i);
        next_avg = std::move(avg);
      }
    }
    if (next < 0 || next_score - best_score < epsilon) break;
    taken[next] = true;
    chosen.push_back(sources[next].clips);
    result.selected.push_back(sources[next].id);
    result.ap_trace.push_back(next_score);
    result.averaged = std::move(next_avg);
    best_score = next_score;
  }
  return result;
}

namespace {

// All-points interpolated area under the precision/recall sequence.
double interpolated_ap(const std::vector<double>& recall, const std::vector<double>& precision) {
  std::vector<double> mrec{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  std::vector<double> mpre{0.0};
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  for (size_t i = mpre.size() - 1; i > 0; --i) {
    mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  }
  double ap = 0.0;
  for (size_t i = 1; i < mrec.size(); ++i) {
    ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

}  // namespace

EvalReport mean_ap(const std::vector<ClipDetections>& dets,
                   const std::vector<GroundTruthRecord>& gt, double matching_iou) {
  if (matching_iou <= 0.0 || matching_iou > 1.0) {
    throw ValidationError("mean_ap: matching iou must be in (0,1]");
  }

  struct GtBox {
    BBox box;
    bool matched = false;
  };
  // (clip, frame) → boxes, per class.
  std::map<int, std::map<std::pair<std::string, int>, std::vector<GtBox>>> gt_by_class;
  std::map<int, int> gt_counts;
  for (const GroundTruthRecord& g : gt) {
    gt_by_class[g.class_id][{g.clip_id, g.frame}].push_back({g.box});
    ++gt_counts[g.class_id];
  }

  struct Scored {
    const std::string* clip_id;
    const Detection* det;
  };
  std::map<int, std::vector<Scored>> det_by_class;
  for (const ClipDetections& clip : dets) {
    for (const Detection& d : clip.detections) {
      det_by_class[d.class_id].push_back({&clip.clip_id, &d});
    }
  }

  EvalReport report;
  report.matching_iou = matching_iou;
  double ap_sum = 0.0;
  for (auto& [class_id, count] : gt_counts) {
    auto& frames = gt_by_class[class_id];
    std::vector<Scored> scored;
    if (auto it = det_by_class.find(class_id); it != det_by_class.end()) scored = it->second;
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      if (a.det->score != b.det->score) return a.det->score > b.det->score;
      if (*a.clip_id != *b.clip_id) return *a.clip_id < *b.clip_id;
      return canonical_less(*a.det, *b.det);
    });

    ClassEval ce;
    ce.gt = count;
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (const Scored& s : scored) {
      GtBox* best = nullptr;
      double best_ov = 0.0;
      auto fit = frames.find({*s.clip_id, s.det->frame});
      if (fit != frames.end()) {
        for (GtBox& g : fit->second) {
          if (g.matched) continue;
          const double ov = iou(s.det->box, g.box);
          if (ov < matching_iou || ov < best_ov) continue;
          if (ov > best_ov || !best) {
            best = &g;
            best_ov = ov;
          }
        }
      }
      if (best) {
        best->matched = true;
        ++tp;
      } else {
        ++fp;
      }
      recall.push_back(static_cast<double>(tp) / count);
      precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    ce.tp = tp;
    ce.fp = fp;
    ce.ap = scored.empty() ? 0.0 : interpolated_ap(recall, precision);
    ap_sum += ce.ap;
    report.per_class[class_id] = ce;
  }
  report.mean_ap = report.per_class.empty() ? 0.0 : ap_sum / report.per_class.size();

  std::set<int> skipped;
  for (const auto& [class_id, scored] : det_by_class) {
    if (!gt_counts.count(class_id)) skipped.insert(class_id);
  }
  report.skipped_classes.assign(skipped.begin(), skipped.end());
  return report;
}

CorLocReport corloc(const std::vector<ClipDetections>& dets,
                    const std::vector<GroundTruthRecord>& gt,
                    const std::map<std::string, int>& target_class_per_clip) {
  // Annotated frames: those carrying at least one target-class box for their clip.
  std::map<std::pair<std::string, int>, std::vector<BBox>> target_boxes;
  for (const GroundTruthRecord& g : gt) {
    auto it = target_class_per_clip.find(g.clip_id);
    if (it == target_class_per_clip.end()) {
      throw DataError("corloc: no target class for clip '" + g.clip_id + "'");
    }
    if (g.class_id == it->second) target_boxes[{g.clip_id, g.frame}].push_back(g.box);
  }

  std::map<std::string, const ClipDetections*> by_clip;
  for (const ClipDetections& c : dets) by_clip[c.clip_id] = &c;

  CorLocReport report;
  for (const auto& [key, boxes] : target_boxes) {
    ++report.frames;
    auto cit = by_clip.find(key.first);
    if (cit == by_clip.end()) continue;
    const Detection* top = nullptr;
    for (const Detection& d : cit->second->detections) {
      if (d.frame != key.second) continue;
      if (!top || d.score > top->score || (d.score == top->score && canonical_less(d, *top))) {
        top = &d;
      }
    }
    if (!top) continue;
    for (const BBox& b : boxes) {
      if (iou(top->box, b) > 0.5) {
        ++report.localized;
        break;
      }
    }
  }
  report.ratio = report.frames == 0 ? 0.0 : static_cast<double>(report.localized) / report.frames;
  return report;
}

std::map<std::string, int> derive_targets(const std::vector<GroundTruthRecord>& gt) {
  std::map<std::string, std::map<int, int>> counts;
  for (const GroundTruthRecord& g : gt) ++counts[g.clip_id][g.class_id];
  std::map<std::string, int> targets;
  for (const auto& [clip_id, per_class] : counts) {
    int best_class = -1, best_count = -1;
    for (const auto& [class_id, n] : per_class) {
      if (n > best_count) {
        best_count = n;
        best_class = class_id;
      }
    }
    targets[clip_id] = best_class;
  }
  return targets;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["matching_iou"] = matching_iou;
  j["mean_ap"] = mean_ap;
  j["classes"] = nlohmann::json::array();
  for (const auto& [class_id, ce] : per_class) {
    j["classes"].push_back({{"class", class_id},
                            {"gt", ce.gt},
                            {"tp", ce.tp},
                            {"fp", ce.fp},
                            {"ap", ce.ap}});
  }
  j["skipped_classes"] = skipped_classes;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-8s %8s %8s %8s %10s\n", "class", "gt", "tp", "fp", "ap");
  out += line;
  for (const auto& [class_id, ce] : per_class) {
    std::snprintf(line, sizeof(line), "%-8d %8d %8d %8d %10.4f\n", class_id, ce.gt, ce.tp, ce.fp,
                  ce.ap);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-8s %8s %8s %8s %10.4f\n", "mean", "", "", "", mean_ap);
  out += line;
  if (!skipped_classes.empty()) {
    out += "no ground truth (excluded):";
    for (int c : skipped_classes) {
      std::snprintf(line, sizeof(line), " %d", c);
      out += line;
    }
    out += "\n";
  }
  return out;
}

}  // namespace tubekit
