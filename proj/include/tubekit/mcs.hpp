#pragma once

#include <set>

#include "tubekit/detection.hpp"

namespace tubekit {

// Classes appearing among a clip's top-ranked detection scores.
struct HighConfidenceSet {
  std::string clip_id;
  std::set<int> classes;
  int cutoff_rank = 0;  // number of top boxes considered, max(1, ceil(ratio * total))
};

// Rank every detection of the clip by score (descending) and collect the classes
// of the top cutoff_rank entries. Detections tied with the cutoff score are all
// included, so the result does not depend on sort order among ties.
HighConfidenceSet select_high_confidence(const ClipDetections& clip, double ratio);

// Subtract `penalty` from the score of every detection whose class is not in
// `high`. High-confidence detections are returned bit-identical; scores may go
// negative (no clamping, which would destroy within-class ordering).
ClipDetections suppress(const ClipDetections& clip, const HighConfidenceSet& high, double penalty);

// select + suppress in one step.
ClipDetections apply_mcs(const ClipDetections& clip, double ratio, double penalty);

}  // namespace tubekit
