#pragma once

#include <array>
#include <string>

namespace tubekit {

enum class MinMaxScope { global, per_clip };

// Pipeline knobs. Defaults follow the operating point the toolkit targets:
// MCS ratio 0.0003 / penalty 0.4, 7-frame propagation window, 0.5 NMS IOU,
// tracker stop confidence 0.1 and anchor suppression IOU 0.3.
struct PipelineConfig {
  double mcs_ratio = 0.0003;
  double mcs_penalty = 0.4;
  int mgp_window = 7;
  double nms_iou = 0.5;
  double track_stop_conf = 0.1;
  double anchor_suppress_iou = 0.3;
  double maxpool_iou = 0.5;
  int topk_k = 5;
  std::array<double, 2> positive_range{0.5, 1.0};
  std::array<double, 2> negative_range{0.0, 0.5};
  int frame_stride = 1;
  int num_classes = 30;

  // Secondary knobs referenced by the tracker / fusion contracts.
  double track_decay = 0.5;       // confidence decay per un-snapped tracking step
  double anchor_min_score = 0.5;  // anchor candidates below this are exhausted
  double snap_iou = 0.5;          // tracker snap overlap
  double fusion_epsilon = 0.001;  // greedy averaging stop threshold
  double eval_iou = 0.5;          // mean-AP matching overlap
  MinMaxScope minmax_scope = MinMaxScope::global;

  void validate() const;  // throws ValidationError
};

// Parse a single JSON object; missing keys take defaults, unknown keys are errors.
PipelineConfig parse_config(const std::string& json_text, const std::string& origin = "<config>");
PipelineConfig read_config(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace tubekit
