#include "tubekit/mcs.hpp"

#include <algorithm>
#include <cmath>

#include "tubekit/errors.hpp"

namespace tubekit {

HighConfidenceSet select_high_confidence(const ClipDetections& clip, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ValidationError("select_high_confidence: ratio must be in (0,1], got " +
                          std::to_string(ratio));
  }
  HighConfidenceSet high;
  high.clip_id = clip.clip_id;
  if (clip.detections.empty()) return high;

  std::vector<double> scores;
  scores.reserve(clip.detections.size());
  for (const Detection& d : clip.detections) scores.push_back(d.score);
  std::sort(scores.begin(), scores.end(), std::greater<>());

  const auto total = static_cast<double>(scores.size());
  high.cutoff_rank = std::max(1, static_cast<int>(std::ceil(ratio * total)));
  // Everything tied with the cutoff score is included, so the selection does not
  // depend on how the sort ordered equal scores.
  const double cutoff_score = scores[high.cutoff_rank - 1];
  for (const Detection& d : clip.detections) {
    if (d.score >= cutoff_score) high.classes.insert(d.class_id);
  }
  return high;
}

ClipDetections suppress(const ClipDetections& clip, const HighConfidenceSet& high,
                        double penalty) {
  if (penalty < 0.0) throw ValidationError("suppress: penalty must be >= 0");
  ClipDetections out = clip;
  for (Detection& d : out.detections) {
    if (!high.classes.count(d.class_id)) d.score -= penalty;
  }
  out.sort_canonical();
  return out;
}

ClipDetections apply_mcs(const ClipDetections& clip, double ratio, double penalty) {
  return suppress(clip, select_high_confidence(clip, ratio), penalty);
}

}  // namespace tubekit
