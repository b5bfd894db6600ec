#include "tubekit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tubekit/errors.hpp"

namespace tubekit {

using nlohmann::json;

namespace {

void check_ratio(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(std::string("config: ") + name + " must be in [0,1], got " +
                          std::to_string(v));
  }
}

std::array<double, 2> parse_range(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(std::string("config: ") + name + " must be a [lo, hi] number pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(mcs_ratio > 0.0 && mcs_ratio <= 1.0)) {
    throw ValidationError("config: mcs_ratio must be in (0,1], got " + std::to_string(mcs_ratio));
  }
  if (mcs_penalty < 0.0) throw ValidationError("config: mcs_penalty must be >= 0");
  if (mgp_window < 1 || mgp_window % 2 == 0) {
    throw ValidationError("config: mgp_window must be odd and >= 1, got " +
                          std::to_string(mgp_window));
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) {
    throw ValidationError("config: nms_iou must be in (0,1]");
  }
  check_ratio(track_stop_conf, "track_stop_conf");
  check_ratio(anchor_suppress_iou, "anchor_suppress_iou");
  check_ratio(maxpool_iou, "maxpool_iou");
  check_ratio(snap_iou, "snap_iou");
  check_ratio(anchor_min_score, "anchor_min_score");
  if (!(eval_iou > 0.0 && eval_iou <= 1.0)) {
    throw ValidationError("config: eval_iou must be in (0,1]");
  }
  if (topk_k < 1) throw ValidationError("config: topk_k must be >= 1");
  if (frame_stride < 1) throw ValidationError("config: frame_stride must be >= 1");
  if (num_classes < 1) throw ValidationError("config: num_classes must be >= 1");
  if (!(track_decay > 0.0 && track_decay < 1.0)) {
    throw ValidationError("config: track_decay must be in (0,1)");
  }
  if (fusion_epsilon < 0.0) throw ValidationError("config: fusion_epsilon must be >= 0");

  for (const auto* r : {&positive_range, &negative_range}) {
    check_ratio((*r)[0], "range endpoint");
    check_ratio((*r)[1], "range endpoint");
    if (!((*r)[0] < (*r)[1])) {
      throw ValidationError("config: score range must satisfy lo < hi");
    }
  }
  // Disjoint except possibly the shared endpoint.
  const double overlap = std::min(positive_range[1], negative_range[1]) -
                         std::max(positive_range[0], negative_range[0]);
  if (overlap > 0.0) {
    throw ValidationError("config: positive_range and negative_range must be disjoint");
  }
}

PipelineConfig parse_config(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(origin, 1, "<document>", e.what());
  }
  if (!j.is_object()) throw ParseError(origin, 1, "<document>", "config must be a JSON object");

  PipelineConfig cfg;
  static const std::set<std::string> known = {
      "mcs_ratio",       "mcs_penalty",    "mgp_window",     "nms_iou",
      "track_stop_conf", "anchor_suppress_iou", "maxpool_iou", "topk_k",
      "positive_range",  "negative_range", "frame_stride",   "num_classes",
      "track_decay",     "anchor_min_score", "snap_iou",     "fusion_epsilon",
      "eval_iou",        "minmax_scope"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw ValidationError("config: unknown key '" + key + "' in " + origin);
    }
    try {
      if (key == "mcs_ratio") cfg.mcs_ratio = value.get<double>();
      else if (key == "mcs_penalty") cfg.mcs_penalty = value.get<double>();
      else if (key == "mgp_window") cfg.mgp_window = value.get<int>();
      else if (key == "nms_iou") cfg.nms_iou = value.get<double>();
      else if (key == "track_stop_conf") cfg.track_stop_conf = value.get<double>();
      else if (key == "anchor_suppress_iou") cfg.anchor_suppress_iou = value.get<double>();
      else if (key == "maxpool_iou") cfg.maxpool_iou = value.get<double>();
      else if (key == "topk_k") cfg.topk_k = value.get<int>();
      else if (key == "positive_range") cfg.positive_range = parse_range(value, "positive_range");
      else if (key == "negative_range") cfg.negative_range = parse_range(value, "negative_range");
      else if (key == "frame_stride") cfg.frame_stride = value.get<int>();
      else if (key == "num_classes") cfg.num_classes = value.get<int>();
      else if (key == "track_decay") cfg.track_decay = value.get<double>();
      else if (key == "anchor_min_score") cfg.anchor_min_score = value.get<double>();
      else if (key == "snap_iou") cfg.snap_iou = value.get<double>();
      else if (key == "fusion_epsilon") cfg.fusion_epsilon = value.get<double>();
      else if (key == "eval_iou") cfg.eval_iou = value.get<double>();
      else if (key == "minmax_scope") {
        const std::string scope = value.get<std::string>();
        if (scope == "global") cfg.minmax_scope = MinMaxScope::global;
        else if (scope == "per_clip") cfg.minmax_scope = MinMaxScope::per_clip;
        else throw ValidationError("config: minmax_scope must be 'global' or 'per_clip'");
      }
    } catch (const json::exception& e) {
      throw ParseError(origin, 1, key, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string config_to_json(const PipelineConfig& cfg) {
  json j;
  j["mcs_ratio"] = cfg.mcs_ratio;
  j["mcs_penalty"] = cfg.mcs_penalty;
  j["mgp_window"] = cfg.mgp_window;
  j["nms_iou"] = cfg.nms_iou;
  j["track_stop_conf"] = cfg.track_stop_conf;
  j["anchor_suppress_iou"] = cfg.anchor_suppress_iou;
  j["maxpool_iou"] = cfg.maxpool_iou;
  j["topk_k"] = cfg.topk_k;
  j["positive_range"] = cfg.positive_range;
  j["negative_range"] = cfg.negative_range;
  j["frame_stride"] = cfg.frame_stride;
  j["num_classes"] = cfg.num_classes;
  j["track_decay"] = cfg.track_decay;
  j["anchor_min_score"] = cfg.anchor_min_score;
  j["snap_iou"] = cfg.snap_iou;
  j["fusion_epsilon"] = cfg.fusion_epsilon;
  j["eval_iou"] = cfg.eval_iou;
  j["minmax_scope"] = cfg.minmax_scope == MinMaxScope::global ? "global" : "per_clip";
  return j.dump();
}

}  // namespace tubekit
