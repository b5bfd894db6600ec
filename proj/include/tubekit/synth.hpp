#pragma once

#include <string>
#include <vector>

#include "tubekit/detection.hpp"
#include "tubekit/flow.hpp"

namespace tubekit {

// Two-parameter score model: mean and standard deviation, sampled normal and
// clamped to [0,1].
struct ScoreModel {
  double mean = 0.8;
  double stddev = 0.05;
};

struct BurstSpec {
  int count_per_clip = 0;   // high-score wrong-class runs injected per clip
  int length = 3;           // frames per run
  ScoreModel score{0.9, 0.03};
};

// Fully deterministic given `seed`; every random draw comes from SplitMix64
// substreams so identical specs reproduce identical fixtures byte for byte.
struct SynthSpec {
  int num_clips = 4;
  int frames_per_clip = 30;
  int width = 192;
  int height = 128;
  int num_classes = 4;
  int objects_per_clip = 2;
  double min_size = 12.0, max_size = 24.0;   // object box side lengths, px
  double min_speed = 0.5, max_speed = 2.0;   // px per frame, random direction
  double motion_jitter = 0.0;                // per-step velocity noise sigma
  double pan_x = 0.0, pan_y = 0.0;           // constant camera-pan flow
  double miss_prob = 0.0;                    // i.i.d. per object-frame
  ScoreModel true_score{1.0, 0.0};
  ScoreModel false_score{0.3, 0.1};
  double box_jitter = 0.0;                   // detection box shift sigma, px
  double fp_per_frame = 0.0;                 // expected random false positives
  BurstSpec burst;
  uint64_t seed = 1;

  void validate() const;
};

SynthSpec parse_synth_spec(const std::string& json_text, const std::string& origin = "<spec>");
SynthSpec read_synth_spec(const std::string& path);

struct SynthClip {
  ClipDetections detections;
  std::vector<GroundTruthRecord> ground_truth;
  std::vector<FlowField> forward_flows;   // transitions 0..T-2
  std::vector<FlowField> backward_flows;  // transitions for frames 1..T-1
};

struct SynthOutput {
  std::vector<ClipDetections> clips;
  std::vector<GroundTruthRecord> ground_truth;
  std::vector<SynthClip> full;  // per-clip payload including flows
};

// Generate one clip (index selects the deterministic substream).
SynthClip generate_clip(const SynthSpec& spec, int clip_index);

// Generate the whole fixture set in memory.
SynthOutput generate(const SynthSpec& spec);

// Write detections, ground truth, flow directory and a manifest under out_dir.
void write_fixtures(const SynthSpec& spec, const std::string& out_dir);

struct GridSearchResult {
  double ratio = 0.0;
  double penalty = 0.0;
  double mean_ap = 0.0;
};

// Exhaustive (ratio, penalty) sweep maximizing mean AP; ties resolve to the
// lexicographically smallest pair.
GridSearchResult grid_search_mcs(const std::vector<ClipDetections>& clips,
                                 const std::vector<GroundTruthRecord>& gt,
                                 const std::vector<double>& ratios,
                                 const std::vector<double>& penalties, double matching_iou);

}  // namespace tubekit
